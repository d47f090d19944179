#include "zubov/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace zubov {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& s, const std::string& where) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError(where + ": bad number '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return in;
}

json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd M(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != n)
      throw FormatError("matrix must be square");
    for (Eigen::Index k = 0; k < n; ++k)
      M(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  return M;
}

}  // namespace

// ---------------------------------------------------------------------------

void write_dataset_csv(const std::string& path, const std::vector<ValueSample>& samples,
                       const json& config, double wall_seconds) {
  auto out = open_out(path);
  out << "# config: " << config.dump() << "\n";
  out << "# wall_seconds: " << format_double(wall_seconds) << "\n";
  const std::size_t n = samples.empty() ? 0 : samples[0].x.size();
  for (std::size_t i = 0; i < n; ++i) out << "x" << i + 1 << ",";
  out << "v_hat,w_hat,converged\n";
  for (const auto& s : samples) {
    for (double v : s.x) out << format_double(v) << ",";
    out << format_double(s.v_hat) << "," << format_double(s.w_hat) << ","
        << (s.converged ? 1 : 0) << "\n";
  }
}

DatasetFile read_dataset_csv(const std::string& path) {
  auto in = open_in(path);
  DatasetFile file;
  std::string line;
  std::size_t n = 0;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# config: ", 0) == 0) {
      file.config = json::parse(line.substr(10));
      continue;
    }
    if (line.rfind("# wall_seconds: ", 0) == 0) {
      file.wall_seconds = parse_double(line.substr(16), path);
      continue;
    }
    if (line[0] == '#') continue;
    const auto cells = split(line, ',');
    const std::string where = path + ":" + std::to_string(lineno);
    if (!header) {
      if (cells.size() < 4 || cells[cells.size() - 3] != "v_hat" ||
          cells[cells.size() - 2] != "w_hat" || cells.back() != "converged")
        throw FormatError(where + ": expected header x1..xn,v_hat,w_hat,converged");
      n = cells.size() - 3;
      for (std::size_t i = 0; i < n; ++i)
        if (cells[i] != "x" + std::to_string(i + 1)) throw FormatError(where + ": bad header");
      header = true;
      continue;
    }
    if (cells.size() != n + 3) throw FormatError(where + ": wrong number of columns");
    ValueSample s;
    for (std::size_t i = 0; i < n; ++i) s.x.push_back(parse_double(cells[i], where));
    s.v_hat = parse_double(cells[n], where);
    s.w_hat = parse_double(cells[n + 1], where);
    if (cells[n + 2] != "0" && cells[n + 2] != "1")
      throw FormatError(where + ": converged must be 0 or 1");
    s.converged = cells[n + 2] == "1";
    file.samples.push_back(std::move(s));
  }
  if (!header) throw FormatError(path + ": missing header");
  return file;
}

// ---------------------------------------------------------------------------

json network_to_json(const Mlp& net, const TrainConfig& cfg, const json& config) {
  json j;
  j["version"] = kNetworkFormatVersion;
  j["activation"] = "tanh";
  j["alpha"] = cfg.alpha;
  j["psi_form"] = to_string(cfg.psi_form);
  j["layer_sizes"] = net.layer_sizes();
  json layers = json::array();
  for (std::size_t l = 0; l < net.num_affine(); ++l) {
    const auto w = net.weights(l);
    const auto b = net.bias(l);
    layers.push_back({{"w", std::vector<double>(w.begin(), w.end())},
                      {"b", std::vector<double>(b.begin(), b.end())}});
  }
  j["layers"] = layers;
  j["config"] = config;
  return j;
}

NetworkFile network_from_json(const json& j) {
  try {
    if (!j.contains("version") || j.at("version").get<int>() != kNetworkFormatVersion)
      throw FormatError("unsupported network file version");
    if (j.at("activation").get<std::string>() != "tanh")
      throw FormatError("unsupported activation '" + j.at("activation").get<std::string>() + "'");
    NetworkFile f;
    f.alpha = j.at("alpha").get<double>();
    f.psi_form = beta_form_from_string(j.at("psi_form").get<std::string>());
    f.net = Mlp(j.at("layer_sizes").get<std::vector<std::size_t>>());
    const auto& layers = j.at("layers");
    if (layers.size() != f.net.num_affine()) throw FormatError("layer count mismatch");
    for (std::size_t l = 0; l < f.net.num_affine(); ++l) {
      const auto w = layers[l].at("w").get<std::vector<double>>();
      const auto b = layers[l].at("b").get<std::vector<double>>();
      auto W = f.net.weights(l);
      auto B = f.net.bias(l);
      if (w.size() != W.size() || b.size() != B.size()) throw FormatError("layer shape mismatch");
      std::copy(w.begin(), w.end(), W.begin());
      std::copy(b.begin(), b.end(), B.begin());
    }
    if (!f.net.all_finite()) throw FormatError("network parameters must be finite");
    if (j.contains("config")) f.config = j.at("config");
    return f;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed network file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("malformed network file: ") + e.what());
  }
}

void save_network(const std::string& path, const Mlp& net, const TrainConfig& cfg,
                  const json& config) {
  write_json(path, network_to_json(net, cfg, config));
}

NetworkFile load_network(const std::string& path) { return network_from_json(read_json(path)); }

// ---------------------------------------------------------------------------

void write_train_record_csv(const std::string& path, const TrainRecord& rec, const json& config) {
  auto out = open_out(path);
  out << "# config: " << config.dump() << "\n";
  out << "# stop_reason: " << rec.stop_reason << "\n";
  out << "# epochs_run: " << rec.epochs_run << "\n";
  out << "# wall_seconds: " << format_double(rec.wall_seconds) << "\n";
  out << "epoch,total,residual,boundary,data\n";
  for (const auto& e : rec.epochs)
    out << e.epoch << "," << format_double(e.loss.total) << "," << format_double(e.loss.residual)
        << "," << format_double(e.loss.boundary) << "," << format_double(e.loss.data) << "\n";
}

TrainRecordFile read_train_record_csv(const std::string& path) {
  auto in = open_in(path);
  TrainRecordFile f;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# config: ", 0) == 0) {
      f.config = json::parse(line.substr(10));
    } else if (line.rfind("# stop_reason: ", 0) == 0) {
      f.record.stop_reason = line.substr(15);
    } else if (line.rfind("# epochs_run: ", 0) == 0) {
      f.record.epochs_run = static_cast<std::size_t>(parse_double(line.substr(14), path));
    } else if (line.rfind("# wall_seconds: ", 0) == 0) {
      f.record.wall_seconds = parse_double(line.substr(16), path);
    } else if (line[0] == '#') {
      continue;
    } else if (!header) {
      if (line != "epoch,total,residual,boundary,data") throw FormatError(path + ": bad header");
      header = true;
    } else {
      const auto c = split(line, ',');
      if (c.size() != 5) throw FormatError(path + ": wrong number of columns");
      EpochLoss e;
      e.epoch = static_cast<std::size_t>(parse_double(c[0], path));
      e.loss = {parse_double(c[1], path), parse_double(c[2], path), parse_double(c[3], path),
                parse_double(c[4], path)};
      f.record.epochs.push_back(e);
    }
  }
  if (!header) throw FormatError(path + ": missing header");
  return f;
}

// ---------------------------------------------------------------------------

json outcome_to_json(const VerifyOutcome& o, const std::string& condition) {
  json j;
  j["condition"] = condition;
  j["outcome"] = to_string(o.kind);
  j["boxes_explored"] = o.boxes_explored;
  j["wall_seconds"] = o.wall_seconds;
  j["delta"] = o.delta;
  if (o.kind == VerifyOutcome::Kind::Falsified) {
    j["witness"] = o.witness;
    j["margin"] = o.margin;
  }
  if (o.kind == VerifyOutcome::Kind::Unknown || o.kind == VerifyOutcome::Kind::BudgetExhausted) {
    json box = json::array();
    for (const auto& iv : o.box.intervals()) box.push_back({iv.lo, iv.hi});
    j["box"] = box;
  }
  return j;
}

json local_certificate_to_json(const LocalCertificate& cert) {
  json j;
  j["kind"] = "local";
  j["P"] = matrix_to_json(cert.P);
  j["Q"] = matrix_to_json(cert.Q);
  j["r"] = cert.r;
  j["c"] = cert.c;
  j["certified"] = cert.certified();
  j["result"] = outcome_to_json(cert.outcome, "x^T P x <= c => 2 sup_t |P Dg(t x)| <= r");
  return j;
}

LocalCertificate local_certificate_from_json(const json& j) {
  try {
    LocalCertificate cert;
    cert.P = matrix_from_json(j.at("P"));
    cert.Q = matrix_from_json(j.at("Q"));
    cert.r = j.at("r").get<double>();
    cert.c = j.at("c").get<double>();
    const auto kind = j.at("result").at("outcome").get<std::string>();
    if (kind == "certified")
      cert.outcome.kind = VerifyOutcome::Kind::Certified;
    else if (kind == "falsified")
      cert.outcome.kind = VerifyOutcome::Kind::Falsified;
    else if (kind == "unknown")
      cert.outcome.kind = VerifyOutcome::Kind::Unknown;
    else if (kind == "budget_exhausted")
      cert.outcome.kind = VerifyOutcome::Kind::BudgetExhausted;
    else
      throw FormatError("unknown outcome '" + kind + "'");
    cert.outcome.boxes_explored = j.at("result").value("boxes_explored", std::size_t{0});
    cert.outcome.wall_seconds = j.at("result").value("wall_seconds", 0.0);
    return cert;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed local certificate: ") + e.what());
  }
}

json roa_certificate_to_json(const RoaCertificate& cert) {
  json j;
  j["kind"] = "roa";
  j["c1"] = cert.c1;
  j["c2"] = cert.c2;
  j["epsilon"] = cert.epsilon;
  j["certified"] = cert.certified();
  j["failing"] = cert.failing;
  j["wall_seconds"] = cert.wall_seconds;
  j["conditions"] = {outcome_to_json(cert.decrease, "c1 <= W_N <= c2 => dW_N/dt <= -epsilon"),
                     outcome_to_json(cert.inner, "W_N <= c1 => x^T P x <= c"),
                     outcome_to_json(cert.boundary, "W_N > c2 on every face of X")};
  j["local"] = local_certificate_to_json(cert.local);
  return j;
}

void write_json(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace zubov

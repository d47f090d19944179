// zubov: data generation, training, verification and reporting pipeline.
//
// Exit codes: 0 ok, 1 configuration error, 2 runtime failure,
// 3 verification falsified, 4 verification unknown or out of budget.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "zubov/config.hpp"
#include "zubov/io.hpp"
#include "zubov/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace zubov;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;
constexpr int kFalsified = 3;
constexpr int kUnknown = 4;

struct Common {
  std::string config_path;
  std::string system;
  std::string grid;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "run configuration (JSON)");
  app->add_option("--system", c.system, "builtin system: cubic1d, reversed_vdp, poly2d");
  app->add_option("--grid", c.grid, "lattice counts, e.g. 300x300");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--threads", c.threads, "worker cap (0 = all cores)");
  app->add_option("--out", c.out, "output file");
}

RunConfig resolve_config(const Common& c) {
  json j = json::object();
  if (!c.config_path.empty()) j = to_json(load_run_config(c.config_path));
  if (!c.system.empty()) {
    j["system"] = c.system;
    if (c.grid.empty() && j.contains("grid")) j.erase("grid");
  }
  if (c.seed) j["seed"] = *c.seed;
  if (c.threads) j["threads"] = *c.threads;
  RunConfig cfg = parse_run_config(j);
  if (!c.grid.empty()) {
    cfg.grid = parse_grid(c.grid, cfg.system.resolve().dim);
    cfg.validate();
  }
  return cfg;
}

std::string output_path(const Common& c, const RunConfig& cfg, const std::string& fallback) {
  if (!c.out.empty()) return c.out;
  fs::create_directories(cfg.output_dir);
  return (fs::path(cfg.output_dir) / fallback).string();
}

Eigen::MatrixXd q_matrix(const RunConfig& cfg, std::size_t n) {
  if (cfg.verify.Q.empty()) return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n),
                                                             static_cast<Eigen::Index>(n));
  Eigen::MatrixXd Q(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cfg.verify.Q[i][j];
  return Q;
}

int outcome_code(const VerifyOutcome& o) {
  switch (o.kind) {
    case VerifyOutcome::Kind::Certified:
      return kOk;
    case VerifyOutcome::Kind::Falsified:
      return kFalsified;
    default:
      return kUnknown;
  }
}

BnbOptions bnb_options(const RunConfig& cfg) { return {cfg.verify.delta, cfg.verify.budget}; }

/// Local certificate from the configured r and c (or the largest
/// certifiable c when c is not set).
LocalCertificate compute_local(const SystemDef& sys, const RunConfig& cfg) {
  const auto lin = linearize(sys);
  const Eigen::MatrixXd Q = q_matrix(cfg, sys.dim);
  const auto lyap = solve_lyapunov(lin.A, Q);
  if (!lyap.positive_definite)
    throw std::runtime_error("linearisation is not Hurwitz; no quadratic local certificate");
  if (cfg.verify.c) return verify_local(sys, lyap.P, Q, cfg.verify.r, *cfg.verify.c, bnb_options(cfg));
  return find_max_local_c(sys, lyap.P, Q, cfg.verify.r, bnb_options(cfg));
}

void print_outcome(const std::string& what, const VerifyOutcome& o) {
  std::cout << what << ": " << to_string(o.kind) << " (" << o.boxes_explored << " boxes, "
            << o.wall_seconds << " s)";
  if (o.kind == VerifyOutcome::Kind::Falsified) {
    std::cout << " witness";
    for (double v : o.witness) std::cout << " " << format_double(v);
  } else if (o.kind == VerifyOutcome::Kind::Unknown ||
             o.kind == VerifyOutcome::Kind::BudgetExhausted) {
    std::cout << " at " << o.box.to_string();
  }
  std::cout << "\n";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& c) {
  const RunConfig cfg = resolve_config(c);
  const SystemDef sys = cfg.system.resolve();
  const auto t0 = std::chrono::steady_clock::now();
  const auto samples = gen_dataset(sys, cfg.grid, cfg.integrator, cfg.train.beta(), cfg.threads);
  const double secs = seconds_since(t0);
  const auto path = output_path(c, cfg, "data.csv");
  write_dataset_csv(path, samples, to_json(cfg), secs);
  std::size_t conv = 0;
  for (const auto& s : samples) conv += s.converged ? 1 : 0;
  std::cout << "wrote " << samples.size() << " samples (" << conv << " converged) to " << path
            << " in " << secs << " s\n";
  return kOk;
}

int cmd_train(const Common& c, const std::string& data_path, const std::string& local_path,
              const std::string& record_path) {
  const RunConfig cfg = resolve_config(c);
  const SystemDef sys = cfg.system.resolve();
  const auto data = read_dataset_csv(data_path);
  if (!data.samples.empty() && data.samples[0].x.size() != sys.dim)
    throw ConfigError("dataset dimension does not match the system");

  std::optional<LocalBand> band;
  if (!local_path.empty()) {
    const auto local = local_certificate_from_json(read_json(local_path));
    if (!local.certified()) throw ConfigError("local certificate '" + local_path + "' is not certified");
    band = LocalBand{local.P, local.c};
  }
  const Dataset ds = assemble_dataset(data.samples, cfg.data, cfg.train.beta(), cfg.seed);
  Xoshiro256 rng(cfg.seed);
  Mlp net = Mlp::glorot(cfg.layer_sizes(), rng);
  const ZubovLoss loss(sys, cfg.train, band);
  const auto rec = train(net, ds, loss);

  const json embedded = to_json(cfg);
  const auto net_path = output_path(c, cfg, "net.json");
  save_network(net_path, net, cfg.train, embedded);
  const auto rec_out = record_path.empty()
                           ? (fs::path(net_path).parent_path() / "train_record.csv").string()
                           : record_path;
  write_train_record_csv(rec_out, rec, embedded);
  const double final_loss = rec.epochs.empty() ? 0.0 : rec.epochs.back().loss.total;
  std::cout << "trained " << net.param_count() << " parameters for " << rec.epochs_run
            << " epochs (" << rec.stop_reason << "), final loss " << final_loss << ", "
            << rec.wall_seconds << " s\nwrote " << net_path << " and " << rec_out << "\n";
  return kOk;
}

int cmd_verify_local(const Common& c, std::optional<double> r, std::optional<double> level,
                     std::optional<double> delta, std::optional<std::size_t> budget) {
  RunConfig cfg = resolve_config(c);
  if (r) cfg.verify.r = *r;
  if (level) cfg.verify.c = *level;
  if (delta) cfg.verify.delta = *delta;
  if (budget) cfg.verify.budget = *budget;
  cfg.validate();
  const SystemDef sys = cfg.system.resolve();
  const auto cert = compute_local(sys, cfg);
  json j = local_certificate_to_json(cert);
  j["config"] = to_json(cfg);
  const auto path = output_path(c, cfg, "local.json");
  write_json(path, j);
  std::cout << "c = " << format_double(cert.c) << "\n";
  print_outcome("local", cert.outcome);
  return outcome_code(cert.outcome);
}

int cmd_verify_roa(const Common& c, const std::string& net_path, const std::string& local_path,
                   std::optional<double> c1, std::optional<double> c2,
                   std::optional<double> epsilon, std::optional<double> delta,
                   std::optional<std::size_t> budget, const std::string& reference,
                   const std::string& smt_dir) {
  RunConfig cfg = resolve_config(c);
  if (epsilon) cfg.verify.epsilon = *epsilon;
  if (delta) cfg.verify.delta = *delta;
  if (budget) cfg.verify.budget = *budget;
  cfg.validate();
  if (c1.has_value() != c2.has_value()) throw ConfigError("--c1 and --c2 go together");
  const SystemDef sys = cfg.system.resolve();
  const auto nf = load_network(net_path);

  LocalCertificate local;
  if (!local_path.empty()) {
    local = local_certificate_from_json(read_json(local_path));
  } else {
    local = compute_local(sys, cfg);
  }
  if (!local.certified()) {
    print_outcome("local", local.outcome);
    return outcome_code(local.outcome);
  }

  RoaCertificate cert;
  if (c1) {
    cert = verify_roa(nf.net, sys, local, *c1, *c2, cfg.verify.epsilon, bnb_options(cfg));
  } else {
    cert = find_max_level(nf.net, sys, local, cfg.verify.epsilon, bnb_options(cfg));
  }
  json j = roa_certificate_to_json(cert);
  j["config"] = to_json(cfg);
  j["network"] = net_path;
  if (!reference.empty()) {
    const auto ref = read_dataset_csv(reference);
    j["volume_percent"] = volume_fraction(nf.net, cert.c2, ref.samples);
  }
  const auto path = output_path(c, cfg, "roa.json");
  write_json(path, j);

  if (!smt_dir.empty()) {
    fs::create_directories(smt_dir);
    const auto rc = roa_conditions(nf.net, sys, local, cert.c1, cert.c2, cfg.verify.epsilon);
    std::ofstream(fs::path(smt_dir) / "decrease.smt2") << export_smt2(rc.decrease, sys.domain);
    std::ofstream(fs::path(smt_dir) / "inner.smt2") << export_smt2(rc.inner, sys.domain);
    for (std::size_t k = 0; k < rc.boundary.size(); ++k)
      std::ofstream(fs::path(smt_dir) / ("boundary_" + std::to_string(k + 1) + ".smt2"))
          << export_smt2(rc.boundary[k], rc.faces[k]);
  }

  std::cout << "c1 = " << format_double(cert.c1) << ", c2 = " << format_double(cert.c2)
            << ", local c = " << format_double(local.c) << "\n";
  print_outcome("decrease", cert.decrease);
  print_outcome("inner", cert.inner);
  print_outcome("boundary", cert.boundary);
  if (j.contains("volume_percent")) std::cout << "volume % = " << j["volume_percent"] << "\n";
  if (cert.certified()) return kOk;
  for (const auto* o : {&cert.decrease, &cert.inner, &cert.boundary})
    if (o->kind == VerifyOutcome::Kind::Falsified) return kFalsified;
  return kUnknown;
}

int cmd_report(const Common& c, const std::string& net_path, const std::string& data_path,
               const std::string& record_path, const std::string& roa_path) {
  const auto nf = load_network(net_path);
  const auto& sizes = nf.net.layer_sizes();
  json row;
  row["layers"] = nf.net.hidden_layers();
  row["width"] = nf.net.hidden_layers() ? sizes[1] : 0;
  row["params"] = dense_param_count(sizes);
  if (!data_path.empty()) row["data_gen_seconds"] = read_dataset_csv(data_path).wall_seconds;
  if (!record_path.empty()) {
    const auto rec = read_train_record_csv(record_path);
    row["training_seconds"] = rec.record.wall_seconds;
    row["epochs"] = rec.record.epochs_run;
    row["final_loss"] = rec.record.epochs.empty() ? 0.0 : rec.record.epochs.back().loss.total;
  }
  if (!roa_path.empty()) {
    const auto roa = read_json(roa_path);
    row["verification_seconds"] = roa.at("wall_seconds");
    row["verified_c2"] = roa.at("certified").get<bool>() ? roa.at("c2") : json(nullptr);
    if (roa.contains("volume_percent")) {
      row["volume_percent"] = roa.at("volume_percent");
    } else if (!data_path.empty() && roa.at("certified").get<bool>()) {
      row["volume_percent"] =
          volume_fraction(nf.net, roa.at("c2").get<double>(), read_dataset_csv(data_path).samples);
    }
  }
  json j;
  j["row"] = row;
  j["config"] = nf.config;
  if (!c.out.empty()) write_json(c.out, j);

  auto cell = [&](const char* key) -> std::string {
    if (!row.contains(key) || row[key].is_null()) return "-";
    return row[key].is_number_float() ? format_double(row[key].get<double>()) : row[key].dump();
  };
  std::cout << "layers,width,params,data_gen_s,training_s,epochs,final_loss,verification_s,"
               "verified_c2,volume_percent\n";
  std::cout << cell("layers") << "," << cell("width") << "," << cell("params") << ","
            << cell("data_gen_seconds") << "," << cell("training_seconds") << "," << cell("epochs")
            << "," << cell("final_loss") << "," << cell("verification_seconds") << ","
            << cell("verified_c2") << "," << cell("volume_percent") << "\n";
  return kOk;
}

int cmd_grid(const Common& c, const std::string& net_path) {
  const auto nf = load_network(net_path);
  Common cc = c;
  // the network file carries its own resolved configuration
  RunConfig cfg = nf.config.is_null() ? resolve_config(cc) : parse_run_config(nf.config);
  if (!c.system.empty()) cfg.system = SystemSpec{c.system, {}, {}};
  const SystemDef sys = cfg.system.resolve();
  if (sys.dim != nf.net.input_dim()) throw ConfigError("network does not match the system");
  const auto grid = c.grid.empty() ? cfg.grid : parse_grid(c.grid, sys.dim);
  const auto pts = lattice(sys.domain, grid);
  const auto path = output_path(c, cfg, "grid.csv");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (std::size_t i = 0; i < sys.dim; ++i) out << "x" << i + 1 << ",";
  out << "W\n";
  for (const auto& p : pts) {
    for (double v : p) out << format_double(v) << ",";
    out << format_double(nf.net.forward(p)) << "\n";
  }
  std::cout << "wrote " << pts.size() << " grid values to " << path << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zubov neural Lyapunov functions: train and certify regions of attraction"};
  app.require_subcommand(1);

  Common gen_c, train_c, local_c, roa_c, report_c, grid_c;

  auto* gen = app.add_subcommand("gen-data", "simulate V on a lattice and write a dataset CSV");
  add_common(gen, gen_c);

  auto* tr = app.add_subcommand("train", "train W_N and write network JSON + loss record");
  add_common(tr, train_c);
  std::string train_data, train_local, train_record;
  tr->add_option("--data", train_data, "dataset CSV from gen-data")->required();
  tr->add_option("--local", train_local, "local certificate JSON enabling the band loss");
  tr->add_option("--record", train_record, "loss record CSV path");

  auto* vl = app.add_subcommand("verify-local", "certify a quadratic local region of attraction");
  add_common(vl, local_c);
  std::optional<double> vl_r, vl_c, vl_delta;
  std::optional<std::size_t> vl_budget;
  vl->add_option("--r", vl_r, "r < lambda_min(Q)");
  vl->add_option("--c", vl_c, "level of x^T P x (searched when omitted)");
  vl->add_option("--delta", vl_delta, "box width below which search stops");
  vl->add_option("--budget", vl_budget, "maximum boxes");

  auto* vr = app.add_subcommand("verify-roa", "certify a sublevel set of W_N");
  add_common(vr, roa_c);
  std::string roa_net, roa_local, roa_reference, roa_smt;
  std::optional<double> roa_c1, roa_c2, roa_eps, roa_delta;
  std::optional<std::size_t> roa_budget;
  vr->add_option("--net", roa_net, "network JSON")->required();
  vr->add_option("--local", roa_local, "local certificate JSON (computed when omitted)");
  vr->add_option("--c1", roa_c1, "inner level (searched with c2 when omitted)");
  vr->add_option("--c2", roa_c2, "outer level");
  vr->add_option("--epsilon", roa_eps, "required decrease rate");
  vr->add_option("--delta", roa_delta, "box width below which search stops");
  vr->add_option("--budget", roa_budget, "maximum boxes per condition");
  vr->add_option("--reference", roa_reference, "dataset CSV for the volume percentage");
  vr->add_option("--smt2-dir", roa_smt, "also export the conditions as SMT-LIB scripts");

  auto* rp = app.add_subcommand("report", "print a summary row for one trained network");
  add_common(rp, report_c);
  std::string rp_net, rp_data, rp_record, rp_roa;
  rp->add_option("--net", rp_net, "network JSON")->required();
  rp->add_option("--data", rp_data, "dataset CSV");
  rp->add_option("--record", rp_record, "loss record CSV");
  rp->add_option("--roa", rp_roa, "certificate JSON from verify-roa");

  auto* gr = app.add_subcommand("grid", "write W_N on a lattice as CSV");
  add_common(gr, grid_c);
  std::string grid_net;
  gr->add_option("--net", grid_net, "network JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_c);
    if (tr->parsed()) return cmd_train(train_c, train_data, train_local, train_record);
    if (vl->parsed()) return cmd_verify_local(local_c, vl_r, vl_c, vl_delta, vl_budget);
    if (vr->parsed())
      return cmd_verify_roa(roa_c, roa_net, roa_local, roa_c1, roa_c2, roa_eps, roa_delta,
                            roa_budget, roa_reference, roa_smt);
    if (rp->parsed()) return cmd_report(report_c, rp_net, rp_data, rp_record, rp_roa);
    if (gr->parsed()) return cmd_grid(grid_c, grid_net);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kConfigError;
  } catch (const UnknownSystem& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const RNotBelowLambdaMin& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NoCertifiableC& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kFalsified;
  } catch (const NoCertifiableLevel& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kFalsified;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}

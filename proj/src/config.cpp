#include "zubov/config.hpp"

#include <charconv>
#include <fstream>
#include <set>

namespace zubov {

using nlohmann::json;

namespace {

/// Reads the keys of one JSON object and rejects the ones nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (const json* v = find(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception&) {
        throw ConfigError(where_ + "." + key + ": wrong type");
      }
    }
  }

  template <class T>
  void get(const std::string& key, std::optional<T>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      T tmp{};
      get(key, tmp);
      out = tmp;
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

ExteriorSource exterior_from_string(const std::string& s) {
  if (s == "none") return ExteriorSource::None;
  if (s == "pairs") return ExteriorSource::Pairs;
  if (s == "all") return ExteriorSource::All;
  throw ConfigError("data.exterior must be one of none, pairs, all");
}

std::string to_string(ExteriorSource s) {
  switch (s) {
    case ExteriorSource::None:
      return "none";
    case ExteriorSource::Pairs:
      return "pairs";
    case ExteriorSource::All:
      return "all";
  }
  return "pairs";
}

}  // namespace

SystemDef SystemSpec::resolve() const {
  if (field.empty()) {
    SystemDef sys = builtin(name);
    if (!domain.empty()) {
      if (domain.size() != sys.dim) throw ConfigError("system.domain has wrong dimension");
      std::vector<Interval> d;
      for (auto [lo, hi] : domain) d.emplace_back(lo, hi);
      sys.domain = Box(d);
      sys.validate();
    }
    return sys;
  }
  return make_system(name, field, domain);
}

void RunConfig::validate() const {
  SystemDef sys;
  try {
    sys = system.resolve();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("system: ") + e.what());
  }
  require(grid.size() == sys.dim, "grid needs one count per state dimension");
  for (auto g : grid) require(g >= 2, "grid counts must be >= 2");
  try {
    integrator.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  require(!hidden.empty(), "train.hidden needs at least one layer");
  for (auto h : hidden) require(h >= 1, "train.hidden widths must be >= 1");
  require(data.data_fraction >= 0.0 && data.data_fraction <= 1.0,
          "data.data_fraction must be in [0, 1]");
  require(verify.r > 0, "verify.r must be positive");
  if (!verify.Q.empty()) {
    require(verify.Q.size() == sys.dim, "verify.Q has wrong dimension");
    for (const auto& row : verify.Q) require(row.size() == sys.dim, "verify.Q has wrong dimension");
  }
  if (verify.c) require(*verify.c > 0, "verify.c must be positive");
  require(verify.epsilon > 0, "verify.epsilon must be positive");
  require(verify.delta > 0, "verify.delta must be positive");
  require(verify.budget >= 1, "verify.budget must be >= 1");
  if (train.c1_local && train.c2_local)
    require(*train.c1_local > 0 && *train.c1_local <= *train.c2_local,
            "train.c1_local must be positive and not above train.c2_local");
}

std::vector<std::size_t> RunConfig::layer_sizes() const {
  std::vector<std::size_t> s{system.resolve().dim};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(1);
  return s;
}

RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  ObjectReader top(j, "config");

  if (const json* s = top.find("system")) {
    if (s->is_string()) {
      cfg.system.name = s->get<std::string>();
    } else {
      ObjectReader r(*s, "system");
      r.get("name", cfg.system.name);
      r.get("field", cfg.system.field);
      r.get("domain", cfg.system.domain);
      r.finish();
    }
  }
  top.get("grid", cfg.grid);
  if (!j.contains("grid")) {
    try {
      cfg.grid.assign(cfg.system.resolve().dim, 150);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("system: ") + e.what());
    }
  }
  if (const json* ij = top.find("integrator")) {
    ObjectReader r(*ij, "integrator");
    auto& c = cfg.integrator;
    r.get("rtol", c.rtol);
    r.get("atol", c.atol);
    r.get("h_max", c.h_max);
    r.get("t_max", c.t_max);
    r.get("stop_radius", c.stop_radius);
    r.get("value_cap", c.value_cap);
    r.finish();
  }
  if (const json* tj = top.find("train")) {
    ObjectReader r(*tj, "train");
    auto& t = cfg.train;
    r.get("hidden", cfg.hidden);
    r.get("alpha", t.alpha);
    std::string form = to_string(t.psi_form);
    r.get("psi_form", form);
    try {
      t.psi_form = beta_form_from_string(form);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("train.psi_form: ") + e.what());
    }
    r.get("batch", t.batch);
    r.get("lr", t.lr);
    r.get("max_epochs", t.max_epochs);
    r.get("loss_threshold", t.loss_threshold);
    r.get("lambda_r", t.lambda_r);
    r.get("lambda_b", t.lambda_b);
    r.get("lambda_d", t.lambda_d);
    r.get("c1_local", t.c1_local);
    r.get("c2_local", t.c2_local);
    r.get("use_local_band", t.use_local_band);
    r.finish();
  }
  if (const json* dj = top.find("data")) {
    ObjectReader r(*dj, "data");
    r.get("data_fraction", cfg.data.data_fraction);
    r.get("all_pairs", cfg.data.all_pairs);
    std::string ext = to_string(cfg.data.exterior);
    r.get("exterior", ext);
    cfg.data.exterior = exterior_from_string(ext);
    r.get("collocate_on_samples", cfg.data.collocate_on_samples);
    r.finish();
  }
  if (const json* vj = top.find("verify")) {
    ObjectReader r(*vj, "verify");
    auto& v = cfg.verify;
    r.get("r", v.r);
    r.get("Q", v.Q);
    r.get("c", v.c);
    r.get("epsilon", v.epsilon);
    r.get("delta", v.delta);
    r.get("budget", v.budget);
    r.finish();
  }
  top.get("output_dir", cfg.output_dir);
  top.get("seed", cfg.seed);
  top.get("threads", cfg.threads);
  top.finish();

  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& cfg) {
  json j;
  if (cfg.system.field.empty() && cfg.system.domain.empty()) {
    j["system"] = cfg.system.name;
  } else {
    j["system"] = {{"name", cfg.system.name}, {"field", cfg.system.field},
                   {"domain", cfg.system.domain}};
  }
  j["grid"] = cfg.grid;
  const auto& ic = cfg.integrator;
  j["integrator"] = {{"rtol", ic.rtol},         {"atol", ic.atol},
                     {"h_max", ic.h_max},       {"t_max", ic.t_max},
                     {"stop_radius", ic.stop_radius}, {"value_cap", ic.value_cap}};
  const auto& t = cfg.train;
  json tj = {{"hidden", cfg.hidden},
             {"alpha", t.alpha},
             {"psi_form", to_string(t.psi_form)},
             {"batch", t.batch},
             {"lr", t.lr},
             {"max_epochs", t.max_epochs},
             {"loss_threshold", t.loss_threshold},
             {"lambda_r", t.lambda_r},
             {"lambda_b", t.lambda_b},
             {"lambda_d", t.lambda_d},
             {"use_local_band", t.use_local_band}};
  tj["c1_local"] = t.c1_local ? json(*t.c1_local) : json(nullptr);
  tj["c2_local"] = t.c2_local ? json(*t.c2_local) : json(nullptr);
  j["train"] = tj;
  j["data"] = {{"data_fraction", cfg.data.data_fraction},
               {"all_pairs", cfg.data.all_pairs},
               {"exterior", to_string(cfg.data.exterior)},
               {"collocate_on_samples", cfg.data.collocate_on_samples}};
  const auto& v = cfg.verify;
  json vj = {{"r", v.r},
             {"Q", v.Q},
             {"epsilon", v.epsilon},
             {"delta", v.delta},
             {"budget", v.budget}};
  vj["c"] = v.c ? json(*v.c) : json(nullptr);
  j["verify"] = vj;
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  return j;
}

std::vector<std::size_t> parse_grid(const std::string& s, std::size_t dim) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t end = std::min(s.find('x', pos), s.size());
    std::size_t v = 0;
    const auto res = std::from_chars(s.data() + pos, s.data() + end, v);
    if (res.ec != std::errc() || res.ptr != s.data() + end)
      throw ConfigError("grid '" + s + "' must look like 300x300");
    out.push_back(v);
    pos = end + 1;
  }
  if (out.size() == 1 && dim > 1) out.assign(dim, out[0]);
  if (out.size() != dim)
    throw ConfigError("grid '" + s + "' needs " + std::to_string(dim) + " counts");
  for (auto g : out)
    if (g < 2) throw ConfigError("grid counts must be >= 2");
  return out;
}

}  // namespace zubov

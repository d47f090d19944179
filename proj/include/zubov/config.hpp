#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "zubov/dynamics.hpp"
#include "zubov/net.hpp"
#include "zubov/ode.hpp"

namespace zubov {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Either a builtin name or an inline field definition.
struct SystemSpec {
  std::string name = "reversed_vdp";
  std::vector<std::string> field;                     // empty for builtins
  std::vector<std::pair<double, double>> domain;      // empty: builtin domain

  SystemDef resolve() const;
};

struct VerifySettings {
  double r = 0.9999;
  std::vector<std::vector<double>> Q;  // empty: identity
  std::optional<double> c;             // local level; searched when absent
  double epsilon = 1e-4;
  double delta = 1e-3;
  std::size_t budget = 5'000'000;
};

struct RunConfig {
  SystemSpec system;
  std::vector<std::size_t> grid{150, 150};
  IntegratorConfig integrator;
  std::vector<std::size_t> hidden{10, 10, 10};
  TrainConfig train;
  DatasetOptions data;
  VerifySettings verify;
  std::string output_dir = ".";
  std::uint64_t seed = 0;
  unsigned threads = 0;

  /// Range checks on every field; throws ConfigError.
  void validate() const;
  /// (n, hidden..., 1) for the configured system.
  std::vector<std::size_t> layer_sizes() const;
};

/// Strict parse: unknown keys and out-of-range values throw ConfigError.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

/// "300x300" or "300" (repeated to `dim` axes).
std::vector<std::size_t> parse_grid(const std::string& s, std::size_t dim);

}  // namespace zubov

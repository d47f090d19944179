#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "zubov/net.hpp"
#include "zubov/ode.hpp"
#include "zubov/verify.hpp"

namespace zubov {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset CSV: "# config: <json>" and "# wall_seconds: <t>" lines, then the
/// header x1..xn,v_hat,w_hat,converged. Non-converged rows carry v_hat "inf".
struct DatasetFile {
  std::vector<ValueSample> samples;
  nlohmann::json config;
  double wall_seconds = 0.0;
};

void write_dataset_csv(const std::string& path, const std::vector<ValueSample>& samples,
                       const nlohmann::json& config, double wall_seconds);
DatasetFile read_dataset_csv(const std::string& path);

/// Network JSON: {version, activation, alpha, psi_form, layer_sizes,
/// layers: [{w, b}], config}. Readers reject any other version.
struct NetworkFile {
  Mlp net;
  double alpha = 0.1;
  BetaForm psi_form = BetaForm::Tanh;
  nlohmann::json config;
};

inline constexpr int kNetworkFormatVersion = 1;

nlohmann::json network_to_json(const Mlp& net, const TrainConfig& cfg,
                               const nlohmann::json& config);
NetworkFile network_from_json(const nlohmann::json& j);
void save_network(const std::string& path, const Mlp& net, const TrainConfig& cfg,
                  const nlohmann::json& config);
NetworkFile load_network(const std::string& path);

/// epoch,total,residual,boundary,data with config, stop reason, epoch count
/// and wall time as comment lines.
void write_train_record_csv(const std::string& path, const TrainRecord& rec,
                            const nlohmann::json& config);

struct TrainRecordFile {
  TrainRecord record;
  nlohmann::json config;
};
TrainRecordFile read_train_record_csv(const std::string& path);

nlohmann::json outcome_to_json(const VerifyOutcome& o, const std::string& condition);
nlohmann::json local_certificate_to_json(const LocalCertificate& cert);
LocalCertificate local_certificate_from_json(const nlohmann::json& j);
nlohmann::json roa_certificate_to_json(const RoaCertificate& cert);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

/// Shortest round-trip decimal text for a double ("inf" for +infinity).
std::string format_double(double v);

}  // namespace zubov

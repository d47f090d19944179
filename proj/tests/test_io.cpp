#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "zubov/config.hpp"
#include "zubov/io.hpp"

using namespace zubov;
using nlohmann::json;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "zubov_test_io";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST(Config, Defaults) {
  const auto cfg = parse_run_config(json::object());
  EXPECT_EQ(cfg.system.name, "reversed_vdp");
  EXPECT_EQ(cfg.grid, (std::vector<std::size_t>{150, 150}));
  EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{10, 10, 10}));
  EXPECT_EQ(cfg.layer_sizes(), (std::vector<std::size_t>{2, 10, 10, 10, 1}));
  EXPECT_EQ(cfg.train.alpha, 0.1);
  EXPECT_EQ(cfg.train.psi_form, BetaForm::Tanh);
  EXPECT_EQ(cfg.train.batch, 32u);
  EXPECT_EQ(cfg.verify.r, 0.9999);
  EXPECT_EQ(cfg.verify.epsilon, 1e-4);
  EXPECT_EQ(cfg.verify.delta, 1e-3);
  EXPECT_EQ(cfg.verify.budget, 5000000u);
  EXPECT_EQ(cfg.integrator.value_cap, 200.0);
}

TEST(Config, FullDocument) {
  const json j = json::parse(R"({
    "system": "cubic1d",
    "grid": [501],
    "integrator": {"rtol": 1e-7, "t_max": 100},
    "train": {"hidden": [10, 10], "alpha": 2, "psi_form": "exp", "batch": 16,
              "max_epochs": 50, "lambda_d": 0, "use_local_band": false},
    "data": {"data_fraction": 0.5, "exterior": "none"},
    "verify": {"r": 0.5, "c": 0.1, "delta": 1e-4, "budget": 1000},
    "output_dir": "out", "seed": 7, "threads": 2
  })");
  const auto cfg = parse_run_config(j);
  EXPECT_EQ(cfg.system.resolve().dim, 1u);
  EXPECT_EQ(cfg.grid, std::vector<std::size_t>{501});
  EXPECT_EQ(cfg.integrator.rtol, 1e-7);
  EXPECT_EQ(cfg.integrator.t_max, 100.0);
  EXPECT_EQ(cfg.layer_sizes(), (std::vector<std::size_t>{1, 10, 10, 1}));
  EXPECT_EQ(cfg.train.psi_form, BetaForm::Exp);
  EXPECT_EQ(cfg.train.alpha, 2.0);
  EXPECT_EQ(cfg.train.seed, 7u);
  EXPECT_FALSE(cfg.train.use_local_band);
  EXPECT_EQ(cfg.data.exterior, ExteriorSource::None);
  EXPECT_EQ(cfg.verify.c, 0.1);
  EXPECT_EQ(cfg.verify.budget, 1000u);
  EXPECT_EQ(cfg.threads, 2u);

  // the serialised form parses back to the same document
  EXPECT_EQ(to_json(parse_run_config(to_json(cfg))), to_json(cfg));
}

TEST(Config, InlineSystem) {
  const json j = json::parse(R"({
    "system": {"name": "damped", "field": ["x2", "-x1 - x2"], "domain": [[-2, 2], [-1, 1]]}
  })");
  const auto cfg = parse_run_config(j);
  const auto sys = cfg.system.resolve();
  EXPECT_EQ(sys.name, "damped");
  EXPECT_EQ(sys.dim, 2u);
  EXPECT_EQ(sys.domain[0].lo, -2.0);
  EXPECT_EQ(cfg.grid, (std::vector<std::size_t>{150, 150}));
}

TEST(Config, StrictSchema) {
  for (const char* bad : {
           R"({"sytem": "cubic1d"})",
           R"({"train": {"alpah": 1}})",
           R"({"system": "nope"})",
           R"({"grid": [1, 5]})",
           R"({"grid": [10]})",
           R"({"train": {"batch": 0}})",
           R"({"train": {"lr": -1}})",
           R"({"train": {"psi_form": "relu"}})",
           R"({"train": {"hidden": []}})",
           R"({"data": {"exterior": "some"}})",
           R"({"data": {"data_fraction": 2}})",
           R"({"verify": {"epsilon": 0}})",
           R"({"verify": {"delta": -1}})",
           R"({"integrator": {"stop_radius": 2}})",
           R"({"seed": "seven"})",
           R"({"system": {"name": "x", "field": ["x1 +"], "domain": [[-1, 1]]}})",
           R"({"system": {"name": "x", "field": ["-x1"], "domain": [[-1, 1], [0, 1]]}})",
           R"([1, 2])",
       }) {
    EXPECT_THROW(parse_run_config(json::parse(bad)), ConfigError) << bad;
  }
}

TEST(Config, LoadFromFile) {
  const auto path = temp_path("run.json");
  std::ofstream(path) << R"({"system": "poly2d", "seed": 3})";
  const auto cfg = load_run_config(path);
  EXPECT_EQ(cfg.system.name, "poly2d");
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_THROW(load_run_config(temp_path("missing.json")), ConfigError);
  std::ofstream(temp_path("broken.json")) << "{";
  EXPECT_THROW(load_run_config(temp_path("broken.json")), ConfigError);
}

TEST(Config, Grid) {
  EXPECT_EQ(parse_grid("300x300", 2), (std::vector<std::size_t>{300, 300}));
  EXPECT_EQ(parse_grid("40x20", 2), (std::vector<std::size_t>{40, 20}));
  EXPECT_EQ(parse_grid("300", 2), (std::vector<std::size_t>{300, 300}));
  EXPECT_EQ(parse_grid("9", 1), std::vector<std::size_t>{9});
  EXPECT_THROW(parse_grid("3x3x3", 2), ConfigError);
  EXPECT_THROW(parse_grid("axb", 2), ConfigError);
  EXPECT_THROW(parse_grid("1x5", 2), ConfigError);
}

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(INFINITY), "inf");
  Xoshiro256 rng(61);
  for (int k = 0; k < 1000; ++k) {
    const double v = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform(-20, 20));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(DatasetCsv, RoundTrip) {
  const auto sys = builtin("reversed_vdp");
  const auto data = gen_dataset(sys, {6, 6}, {}, {BetaForm::Tanh, 0.1}, 1);
  const json cfg = {{"seed", 4}};
  const auto path = temp_path("data.csv");
  write_dataset_csv(path, data, cfg, 1.25);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# config: ", 0), 0u);
  std::getline(in, line);
  EXPECT_EQ(line, "# wall_seconds: 1.25");
  std::getline(in, line);
  EXPECT_EQ(line, "x1,x2,v_hat,w_hat,converged");

  const auto back = read_dataset_csv(path);
  EXPECT_EQ(back.config, cfg);
  EXPECT_EQ(back.wall_seconds, 1.25);
  ASSERT_EQ(back.samples.size(), data.size());
  bool saw_inf = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back.samples[i].x, data[i].x);
    EXPECT_EQ(back.samples[i].v_hat, data[i].v_hat);
    EXPECT_EQ(back.samples[i].w_hat, data[i].w_hat);
    EXPECT_EQ(back.samples[i].converged, data[i].converged);
    saw_inf |= std::isinf(data[i].v_hat);
  }
  EXPECT_TRUE(saw_inf);
}

TEST(DatasetCsv, RejectsMalformedFiles) {
  const auto path = temp_path("bad.csv");
  std::ofstream(path) << "x1,v_hat,w_hat,converged\n0.5,abc,0.1,1\n";
  EXPECT_THROW(read_dataset_csv(path), FormatError);
  std::ofstream(path) << "x1,v_hat,w_hat,converged\n0.5,0.1\n";
  EXPECT_THROW(read_dataset_csv(path), FormatError);
  std::ofstream(path) << "a,b\n";
  EXPECT_THROW(read_dataset_csv(path), FormatError);
  EXPECT_THROW(read_dataset_csv(temp_path("absent.csv")), FormatError);
}

TEST(NetworkJson, RoundTripIsExact) {
  Xoshiro256 rng(62);
  const Mlp net = testutil::random_net(rng, {2, 7, 5, 1});
  TrainConfig tc;
  tc.alpha = 0.37;
  tc.psi_form = BetaForm::Exp;
  const json cfg = {{"seed", 9}};
  const auto path = temp_path("net.json");
  save_network(path, net, tc, cfg);
  const auto back = load_network(path);
  EXPECT_EQ(back.alpha, 0.37);
  EXPECT_EQ(back.psi_form, BetaForm::Exp);
  EXPECT_EQ(back.config, cfg);
  EXPECT_EQ(back.net.layer_sizes(), net.layer_sizes());
  EXPECT_TRUE(std::equal(net.params().begin(), net.params().end(), back.net.params().begin()));

  json j = read_json(path);
  EXPECT_EQ(j["version"], 1);
  EXPECT_EQ(j["activation"], "tanh");
  EXPECT_EQ(j["layers"].size(), 3u);
  EXPECT_EQ(j["layers"][0]["w"].size(), 14u);
  j["version"] = 2;
  EXPECT_THROW(network_from_json(j), FormatError);
  j["version"] = 1;
  j["activation"] = "relu";
  EXPECT_THROW(network_from_json(j), FormatError);
  j["activation"] = "tanh";
  j["layers"][1]["b"] = json::array({1, 2});
  EXPECT_THROW(network_from_json(j), FormatError);
}

TEST(TrainRecordCsv, RoundTrip) {
  TrainRecord rec;
  rec.stop_reason = "max_epochs";
  rec.epochs_run = 2;
  rec.wall_seconds = 3.5;
  rec.epochs.push_back({1, {0.5, 0.25, 0.125, 0.125}});
  rec.epochs.push_back({2, {0.1, 0.05, 0.025, 0.025}});
  const auto path = temp_path("record.csv");
  write_train_record_csv(path, rec, json{{"seed", 1}});
  const auto back = read_train_record_csv(path);
  EXPECT_EQ(back.record.stop_reason, "max_epochs");
  EXPECT_EQ(back.record.epochs_run, 2u);
  EXPECT_EQ(back.record.wall_seconds, 3.5);
  ASSERT_EQ(back.record.epochs.size(), 2u);
  EXPECT_EQ(back.record.epochs[1].loss.total, 0.1);
  EXPECT_EQ(back.record.epochs[1].loss.data, 0.025);
  EXPECT_EQ(back.config, (json{{"seed", 1}}));
}

TEST(CertificateJson, LocalRoundTrip) {
  LocalCertificate cert;
  cert.P = Eigen::MatrixXd::Identity(2, 2) * 1.5;
  cert.Q = Eigen::MatrixXd::Identity(2, 2);
  cert.r = 0.9999;
  cert.c = 0.29;
  cert.outcome.kind = VerifyOutcome::Kind::Certified;
  cert.outcome.boxes_explored = 123;
  cert.outcome.delta = 1e-3;
  const json j = local_certificate_to_json(cert);
  EXPECT_EQ(j["certified"], true);
  EXPECT_EQ(j["result"]["outcome"], "certified");
  EXPECT_EQ(j["result"]["boxes_explored"], 123);
  const auto back = local_certificate_from_json(j);
  EXPECT_EQ(back.P, cert.P);
  EXPECT_EQ(back.c, 0.29);
  EXPECT_TRUE(back.certified());
}

TEST(CertificateJson, OutcomeFields) {
  VerifyOutcome f;
  f.kind = VerifyOutcome::Kind::Falsified;
  f.witness = {0.5, -1.0};
  f.margin = 0.01;
  const json jf = outcome_to_json(f, "cond");
  EXPECT_EQ(jf["condition"], "cond");
  EXPECT_EQ(jf["outcome"], "falsified");
  EXPECT_EQ(jf["witness"], (json{0.5, -1.0}));
  VerifyOutcome u;
  u.kind = VerifyOutcome::Kind::Unknown;
  u.box = Box{Interval(0.0, 1e-3)};
  u.delta = 1e-3;
  const json ju = outcome_to_json(u, "cond");
  EXPECT_EQ(ju["outcome"], "unknown");
  EXPECT_TRUE(ju.contains("box"));
  EXPECT_EQ(ju["delta"], 1e-3);
}

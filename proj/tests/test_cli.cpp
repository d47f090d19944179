#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "zubov/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace zubov;

namespace {

const fs::path kTmp = ZUBOV_TEST_TMP;

std::string tmp(const std::string& name) {
  fs::create_directories(kTmp);
  return (kTmp / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::string& args) {
  const auto out = tmp("stdout.txt");
  const auto err = tmp("stderr.txt");
  const std::string cmd =
      std::string("\"") + ZUBOV_CLI_PATH + "\" " + args + " >\"" + out + "\" 2>\"" + err + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char ch : text) n += ch == '\n' ? 1 : 0;
  return n;
}

const char* kSmallRun = R"({
  "system": "reversed_vdp",
  "grid": [20, 20],
  "data": {"data_fraction": 0.05},
  "train": {"hidden": [10, 10], "max_epochs": 3}
})";

}  // namespace

TEST(Cli, GenDataFullGrid) {
  const auto path = tmp("vdp300.csv");
  const auto r = run("gen-data --system reversed_vdp --grid 300x300 --out " + path);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto data = read_dataset_csv(path);
  EXPECT_EQ(data.samples.size(), 90000u);
  EXPECT_EQ(data.config.at("system"), "reversed_vdp");
  EXPECT_EQ(data.config.at("grid"), json::array({300, 300}));
  EXPECT_GT(data.wall_seconds, 0.0);
}

TEST(Cli, EmbeddedConfigReproducesDataset) {
  const auto first = tmp("small_a.csv");
  ASSERT_EQ(run("gen-data --system cubic1d --grid 41 --seed 3 --out " + first).code, 0);
  const auto data = read_dataset_csv(first);
  const auto cfg = tmp("embedded.json");
  spit(cfg, data.config.dump());
  const auto second = tmp("small_b.csv");
  ASSERT_EQ(run("gen-data --config " + cfg + " --out " + second).code, 0);
  const auto again = read_dataset_csv(second);
  EXPECT_EQ(again.config, data.config);
  ASSERT_EQ(again.samples.size(), data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    EXPECT_EQ(again.samples[i].x, data.samples[i].x);
    EXPECT_EQ(again.samples[i].w_hat, data.samples[i].w_hat);
  }
}

TEST(Cli, TrainIsDeterministic) {
  const auto cfg = tmp("run.json");
  spit(cfg, kSmallRun);
  const auto data = tmp("train_data.csv");
  ASSERT_EQ(run("gen-data --config " + cfg + " --out " + data).code, 0);
  const auto a = tmp("net_a.json");
  const auto b = tmp("net_b.json");
  auto r = run("train --config " + cfg + " --seed 7 --data " + data + " --out " + a +
               " --record " + tmp("rec_a.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("train --config " + cfg + " --seed 7 --data " + data + " --out " + b + " --record " +
          tmp("rec_b.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(a), slurp(b));
  const auto nf = load_network(a);
  EXPECT_EQ(nf.config.at("seed"), 7);
  EXPECT_EQ(nf.config.at("train").at("hidden"), json::array({10, 10}));
  const auto rec = read_train_record_csv(tmp("rec_a.csv"));
  EXPECT_EQ(rec.record.epochs_run, 3u);
  EXPECT_EQ(rec.config, nf.config);

  r = run("train --config " + cfg + " --seed 8 --data " + data + " --out " + tmp("net_c.json") +
          " --record " + tmp("rec_c.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(a), slurp(tmp("net_c.json")));
}

TEST(Cli, ReportRow) {
  const auto cfg = tmp("run_report.json");
  spit(cfg, kSmallRun);
  const auto data = tmp("report_data.csv");
  const auto net = tmp("report_net.json");
  const auto rec = tmp("report_rec.csv");
  ASSERT_EQ(run("gen-data --config " + cfg + " --out " + data).code, 0);
  ASSERT_EQ(run("train --config " + cfg + " --data " + data + " --out " + net + " --record " + rec)
                .code,
            0);
  const auto out = tmp("report.json");
  const auto r = run("report --net " + net + " --data " + data + " --record " + rec + " --out " + out);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json(out);
  EXPECT_EQ(j.at("row").at("layers"), 2);
  EXPECT_EQ(j.at("row").at("width"), 10);
  EXPECT_EQ(j.at("row").at("params"), 151);
  EXPECT_EQ(j.at("row").at("epochs"), 3);
  EXPECT_EQ(j.at("config").at("system"), "reversed_vdp");
  EXPECT_NE(r.out.find("\n2,10,151,"), std::string::npos) << r.out;
}

TEST(Cli, GridCsv) {
  const auto cfg = tmp("run_grid.json");
  spit(cfg, kSmallRun);
  const auto data = tmp("grid_data.csv");
  const auto net = tmp("grid_net.json");
  ASSERT_EQ(run("gen-data --config " + cfg + " --out " + data).code, 0);
  ASSERT_EQ(run("train --config " + cfg + " --data " + data + " --out " + net + " --record " +
                tmp("grid_rec.csv"))
                .code,
            0);
  const auto out = tmp("grid.csv");
  const auto r = run("grid --net " + net + " --grid 7x5 --out " + out);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = slurp(out);
  EXPECT_EQ(text.rfind("x1,x2,W\n", 0), 0u);
  EXPECT_EQ(count_lines(text), 36u);
  const auto nf = load_network(net);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    double x1 = 0, x2 = 0, w = 0;
    char c1 = 0, c2 = 0;
    std::istringstream row(line);
    row >> x1 >> c1 >> x2 >> c2 >> w;
    ASSERT_EQ(c1, ',');
    ASSERT_EQ(c2, ',');
    EXPECT_EQ(w, nf.net.forward(std::vector<double>{x1, x2}));
  }
}

TEST(Cli, VerifyLocalCertifiesVanDerPol) {
  const auto out = tmp("local.json");
  const auto r = run("verify-local --system reversed_vdp --r 0.9999 --c 0.29 --out " + out);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json(out);
  EXPECT_TRUE(j.at("certified").get<bool>());
  EXPECT_EQ(j.at("c"), 0.29);
  EXPECT_EQ(j.at("config").at("system"), "reversed_vdp");
  EXPECT_NE(r.out.find("certified"), std::string::npos);
}

TEST(Cli, VerifyLocalFalsifiedExitsThree) {
  const auto r = run("verify-local --system reversed_vdp --r 0.9999 --c 0.5 --out " +
                     tmp("local_bad.json"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("witness"), std::string::npos);
}

TEST(Cli, BudgetExhaustionExitsFour) {
  const auto r = run("verify-local --system reversed_vdp --r 0.9999 --c 0.29 --budget 5 --out " +
                     tmp("local_budget.json"));
  EXPECT_EQ(r.code, 4);
}

TEST(Cli, VerifyRoaWritesArtifacts) {
  const auto cfg = tmp("run_roa.json");
  spit(cfg, kSmallRun);
  const auto data = tmp("roa_data.csv");
  const auto net = tmp("roa_net.json");
  ASSERT_EQ(run("gen-data --config " + cfg + " --out " + data).code, 0);
  ASSERT_EQ(run("train --config " + cfg + " --data " + data + " --out " + net + " --record " +
                tmp("roa_rec.csv"))
                .code,
            0);
  const auto local = tmp("roa_local.json");
  ASSERT_EQ(run("verify-local --config " + cfg + " --r 0.9999 --c 0.29 --out " + local).code, 0);
  // a 3-epoch net may or may not certify; check the exit-code contract and artifacts
  const auto out = tmp("roa.json");
  const auto smt = tmp("smt");
  const auto r = run("verify-roa --config " + cfg + " --net " + net + " --local " + local +
                     " --reference " + data + " --smt2-dir " + smt + " --out " + out);
  ASSERT_TRUE(r.code == 0 || r.code == 3 || r.code == 4) << r.err;
  if (r.code == 3 && !fs::exists(out)) return;
  const auto j = read_json(out);
  EXPECT_EQ(j.at("certified").get<bool>(), r.code == 0);
  EXPECT_EQ(j.at("config").at("system"), "reversed_vdp");
  EXPECT_TRUE(fs::exists(fs::path(smt) / "decrease.smt2"));
  EXPECT_TRUE(fs::exists(fs::path(smt) / "inner.smt2"));
  for (int k = 1; k <= 4; ++k)
    EXPECT_TRUE(fs::exists(fs::path(smt) / ("boundary_" + std::to_string(k) + ".smt2")));
}

TEST(Cli, ConfigErrorsExitOne) {
  const auto bad = tmp("bad.json");
  spit(bad, R"({"system": "reversed_vdp", "colour": "blue"})");
  auto r = run("gen-data --config " + bad);
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(run("gen-data --system lorenz --grid 3x3 --out " + tmp("x.csv")).code, 1);
  EXPECT_EQ(run("gen-data --config " + tmp("absent.json")).code, 1);
  EXPECT_EQ(run("verify-local --system reversed_vdp --r 1.5 --c 0.1 --out " + tmp("x.json")).code, 1);
  EXPECT_EQ(run("train --system reversed_vdp --data " + tmp("absent.csv")).code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("").code, 1);
}

TEST(Cli, RuntimeFailureExitsTwo) {
  const auto cfg = tmp("unstable.json");
  spit(cfg, R"({"system": {"name": "unstable", "field": ["x1 + x2", "x2"],
                "domain": [[-1, 1], [-1, 1]]}})");
  const auto r = run("verify-local --config " + cfg + " --c 0.1 --out " + tmp("u.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

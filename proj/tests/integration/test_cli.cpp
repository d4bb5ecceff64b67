#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(QHPRICE_EXE) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }
void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("qhprice_cli_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// 40 days, 30 of them training; a reduced model list and slot set keep it quick
fs::path simulate(const fs::path& dir, const std::vector<std::string>& models,
                  const std::vector<int>& qh = {1, 40, 80}) {
  EXPECT_EQ(run("simulate --out " + quote(dir) + " --days 40 --train-days 30 --seed 3"), 0);
  const fs::path cfg_path = dir / "config.json";
  json cfg = read_json(cfg_path);
  cfg["models"] = models;
  cfg["quarter_hours"] = qh;
  cfg["estimator"]["grid_size"] = 100;
  write_json(cfg_path, cfg);
  return cfg_path;
}

}  // namespace

TEST(Cli, EndToEndRunWritesAllOutputs) {
  TempDir tmp;
  const fs::path cfg = simulate(tmp.path(), {"Naive_EXAA", "Expert_EN"}, {});
  json c = read_json(cfg);
  c["estimator"].erase("grid_size");
  write_json(cfg, c);

  const auto t0 = std::chrono::steady_clock::now();
  ASSERT_EQ(run("-c " + quote(cfg) + " run"), 0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 60.0);

  const fs::path out = tmp.path() / "out";
  EXPECT_TRUE(fs::exists(out / "dataset" / "manifest.json"));
  EXPECT_EQ(first_line(out / "backtest" / "panel.csv").substr(0, 4), "date");
  // 10 test days x 96 slots x 2 targets x 2 models
  EXPECT_EQ(line_count(out / "backtest" / "panel.csv"), 1u + 10 * 96 * 2 * 2);
  EXPECT_EQ(first_line(out / "evaluation" / "metrics.csv"), "model,target,rmse,mae,n");
  for (const char* f : {"metrics_qh.csv", "dm.csv", "dacc.csv", "pt.csv", "summary.json"}) {
    EXPECT_TRUE(fs::exists(out / "evaluation" / f)) << f;
  }
  for (const char* f : {"ledger.csv", "summary.csv", "ttest.csv", "sharpe_test.csv", "savings.json"}) {
    EXPECT_TRUE(fs::exists(out / "portfolio" / f)) << f;
  }
  const std::string ledger = slurp(out / "portfolio" / "ledger.csv");
  EXPECT_NE(ledger.find("Base_Buy"), std::string::npos);
  EXPECT_NE(ledger.find("MeanVar_Sell"), std::string::npos);
}

TEST(Cli, RerunIsIdentical) {
  TempDir a, b;
  const fs::path ca = simulate(a.path(), {"Naive_EXAA", "Expert_EN"});
  const fs::path cb = simulate(b.path(), {"Naive_EXAA", "Expert_EN"});
  ASSERT_EQ(run("-c " + quote(ca) + " run"), 0);
  ASSERT_EQ(run("-c " + quote(cb) + " -j 2 run"), 0);
  EXPECT_EQ(slurp(a.path() / "out/backtest/panel.csv"), slurp(b.path() / "out/backtest/panel.csv"));
  EXPECT_EQ(read_json(a.path() / "out/backtest/manifest.json")["config_hash"],
            read_json(b.path() / "out/backtest/manifest.json")["config_hash"]);
  EXPECT_EQ(slurp(a.path() / "out/evaluation/metrics.csv"), slurp(b.path() / "out/evaluation/metrics.csv"));
}

TEST(Cli, ResumeSkipsCompletedDays) {
  TempDir tmp;
  const fs::path cfg = simulate(tmp.path(), {"Naive_EXAA", "Expert_LM"});
  ASSERT_EQ(run("-c " + quote(cfg) + " ingest"), 0);
  ASSERT_EQ(run("-c " + quote(cfg) + " backtest"), 0);
  const fs::path bt = tmp.path() / "out" / "backtest";
  const std::string full = slurp(bt / "panel.csv");

  // pretend the run stopped after four days
  std::vector<std::string> days;
  {
    std::ifstream in(bt / "checkpoint" / "days.txt");
    for (std::string line; std::getline(in, line);) days.push_back(line);
  }
  ASSERT_EQ(days.size(), 10u);
  {
    std::ofstream out(bt / "checkpoint" / "days.txt");
    for (int i = 0; i < 4; ++i) out << days[i] << "\n";
  }
  fs::remove(bt / "panel.csv");
  ASSERT_EQ(run("-c " + quote(cfg) + " backtest"), 0);
  EXPECT_EQ(read_json(bt / "manifest.json")["resumed_days"], 4);
  EXPECT_EQ(slurp(bt / "panel.csv"), full);

  // changed settings without --fresh
  json c = read_json(cfg);
  c["estimator"]["alpha"] = 0.7;
  write_json(cfg, c);
  EXPECT_EQ(run("-c " + quote(cfg) + " backtest"), 1);
  EXPECT_EQ(run("-c " + quote(cfg) + " backtest --fresh"), 0);
  EXPECT_EQ(read_json(bt / "manifest.json")["resumed_days"], 0);
}

TEST(Cli, RefitIntervalReducesFits) {
  TempDir tmp;
  const fs::path cfg = simulate(tmp.path(), {"Naive_EXAA", "Expert_LM"});
  ASSERT_EQ(run("-c " + quote(cfg) + " ingest"), 0);
  ASSERT_EQ(run("-c " + quote(cfg) + " backtest --fresh"), 0);
  const fs::path bt = tmp.path() / "out" / "backtest";
  const auto daily = read_json(bt / "manifest.json")["fits"].get<long>();
  const std::string header = first_line(bt / "panel.csv");
  const auto rows = line_count(bt / "panel.csv");
  ASSERT_EQ(run("-c " + quote(cfg) + " backtest --fresh --refit-every 7"), 0);
  const auto weekly = read_json(bt / "manifest.json")["fits"].get<long>();
  // 3 slots x 2 targets: 10 refits daily, 2 weekly
  EXPECT_EQ(daily, 3 * 2 * 10);
  EXPECT_EQ(weekly, 3 * 2 * 2);
  EXPECT_EQ(first_line(bt / "panel.csv"), header);
  EXPECT_EQ(line_count(bt / "panel.csv"), rows);
}

TEST(Cli, ExitCodes) {
  TempDir tmp;
  const fs::path cfg = simulate(tmp.path(), {"Naive_EXAA"});
  json c = read_json(cfg);
  c["bogus_key"] = 1;
  write_json(tmp.path() / "bad.json", c);
  EXPECT_EQ(run("-c " + quote(tmp.path() / "bad.json") + " ingest"), 1);

  c = read_json(cfg);
  c["models"] = {"Expert_XGB"};
  write_json(tmp.path() / "bad_model.json", c);
  EXPECT_EQ(run("-c " + quote(tmp.path() / "bad_model.json") + " ingest"), 1);

  c = read_json(cfg);
  c["data"]["series"]["EXAA_QH"]["path"] = "data/nowhere.csv";
  write_json(tmp.path() / "missing.json", c);
  EXPECT_EQ(run("-c " + quote(tmp.path() / "missing.json") + " ingest"), 2);

  EXPECT_EQ(run("--no-such-flag"), 1);
  // an unreadable config is a configuration error
  EXPECT_EQ(run("-c " + quote(tmp.path() / "absent.json") + " ingest"), 1);
}

TEST(Cli, OutputDirPriority) {
  TempDir tmp;
  const fs::path cfg = simulate(tmp.path(), {"Naive_EXAA"});
  const fs::path env_dir = tmp.path() / "from_env";
  const fs::path flag_dir = tmp.path() / "from_flag";
  const std::string env = "QHPRICE_OUTPUT_DIR=" + quote(env_dir);

  ASSERT_EQ(run("-c " + quote(cfg) + " ingest", env), 0);
  EXPECT_TRUE(fs::exists(env_dir / "dataset" / "manifest.json"));
  EXPECT_FALSE(fs::exists(tmp.path() / "out"));

  ASSERT_EQ(run("-c " + quote(cfg) + " -o " + quote(flag_dir) + " ingest", env), 0);
  EXPECT_TRUE(fs::exists(flag_dir / "dataset" / "manifest.json"));

  ASSERT_EQ(run("-c " + quote(cfg) + " ingest"), 0);
  EXPECT_TRUE(fs::exists(tmp.path() / "out" / "dataset" / "manifest.json"));
}

TEST(Cli, PortfolioVolumeZero) {
  TempDir tmp;
  const fs::path cfg = simulate(tmp.path(), {"Naive_EXAA", "Expert_LM"});
  json c = read_json(cfg);
  c["portfolio"]["source_model"] = "Expert_LM";
  write_json(cfg, c);
  ASSERT_EQ(run("-c " + quote(cfg) + " run"), 0);
  ASSERT_EQ(run("-c " + quote(cfg) + " portfolio --volume 0"), 0);

  const fs::path ledger = tmp.path() / "out" / "portfolio" / "ledger.csv";
  std::ifstream in(ledger);
  std::string header;
  std::getline(in, header);
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    for (std::string col; std::getline(ss, col, ',');) cols.push_back(col);
  }
  const auto it = std::find(cols.begin(), cols.end(), "cashflow_eur");
  ASSERT_NE(it, cols.end()) << header;
  const auto idx = static_cast<std::size_t>(it - cols.begin());
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line); ++rows) {
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t i = 0; i <= idx; ++i) std::getline(ss, cell, ',');
    EXPECT_EQ(std::stod(cell), 0.0) << line;
  }
  EXPECT_GT(rows, 0u);
}

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cli/commands.hpp"
#include "qhprice/error.hpp"

namespace fs = std::filesystem;
using namespace qhprice;
using nlohmann::json;

namespace {

struct Overrides {
  std::string config;
  std::string output_dir;
  int jobs = 0;
  int refit_every = 0;
  bool audit = false;
  bool fresh = false;
  double volume = -1.0;
  double gamma = 0.0;
};

cli::RunConfig build_config(const Overrides& o) {
  json doc = cli::default_config();
  fs::path base = fs::current_path();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) fail(ErrorKind::Config, "cannot open config " + o.config);
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, o.config + ": " + e.what());
    }
    base = fs::absolute(o.config).parent_path();
  }
  if (o.jobs > 0) doc["jobs"] = o.jobs;
  if (o.refit_every > 0) doc["plan"]["refit_every"] = o.refit_every;
  if (o.audit) doc["audit"] = true;
  if (o.volume >= 0.0) doc["portfolio"]["volume_mw"] = o.volume;
  if (o.gamma > 0.0) doc["portfolio"]["gamma"] = o.gamma;
  // Output directory: flag, then environment, then config.
  if (!o.output_dir.empty()) {
    doc["output_dir"] = fs::absolute(o.output_dir).string();
  } else if (const char* env = std::getenv(cli::kOutputDirEnv); env && *env) {
    doc["output_dir"] = fs::absolute(env).string();
  }
  return cli::parse_config(doc, base);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quarter-hourly electricity price forecasting and venue selection"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("-c,--config", o.config, "JSON run configuration");
  app.add_option("-o,--output-dir", o.output_dir, "Output directory (overrides config and $QHPRICE_OUTPUT_DIR)");
  app.add_option("-j,--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* ingest = app.add_subcommand("ingest", "Validate source files and write the dataset");
  auto* backtest = app.add_subcommand("backtest", "Rolling out-of-sample forecasts");
  backtest->add_option("--refit-every", o.refit_every, "Refit interval in days")->check(CLI::PositiveNumber);
  backtest->add_flag("--audit", o.audit, "Check every feature read against the decision time");
  backtest->add_flag("--fresh", o.fresh, "Discard any checkpoint");
  auto* evaluate = app.add_subcommand("evaluate", "Error metrics and forecast comparison tests");
  auto* portfolio = app.add_subcommand("portfolio", "Trading strategies and accounting");
  portfolio->add_option("--volume", o.volume, "Position per quarter-hour in MW")->check(CLI::NonNegativeNumber);
  portfolio->add_option("--gamma", o.gamma, "Risk aversion")->check(CLI::PositiveNumber);
  auto* run = app.add_subcommand("run", "ingest, backtest, evaluate and portfolio in sequence");
  run->add_option("--refit-every", o.refit_every, "Refit interval in days")->check(CLI::PositiveNumber);
  run->add_flag("--fresh", o.fresh, "Discard any checkpoint");

  cli::SimulateRequest sim;
  std::string sim_kind = "realistic";
  std::string sim_start = format_date(sim.data.start);
  std::string sim_out;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic dataset and a matching config");
  simulate->add_option("--out", sim_out, "Target directory")->required();
  simulate->add_option("--kind", sim_kind, "realistic or linear")->check(CLI::IsMember({"realistic", "linear"}));
  simulate->add_option("--days", sim.data.days, "Number of days")->check(CLI::Range(8, 100000));
  simulate->add_option("--seed", sim.data.seed, "Random seed");
  simulate->add_option("--start", sim_start, "First day (YYYY-MM-DD)");
  simulate->add_option("--train-days", sim.train_days, "Initial training window length");
  simulate->add_option("--missing-days", sim.data.missing_days, "Day offsets with no AUQH data");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::Config);
  }

  try {
    if (simulate->parsed()) {
      sim.data.kind = sim_kind == "linear" ? SyntheticKind::Linear : SyntheticKind::Realistic;
      sim.data.start = parse_date(sim_start);
      if (!sim.data.missing_days.empty()) sim.data.missing_markets = {Market::EpexQhAuction};
      sim.out_dir = sim_out;
      cli::cmd_simulate(sim, std::cerr);
      return 0;
    }
    const cli::RunConfig config = build_config(o);
    if (ingest->parsed() || run->parsed()) cli::cmd_ingest(config, std::cerr);
    if (backtest->parsed() || run->parsed()) cli::cmd_backtest(config, o.fresh, std::cerr);
    if (evaluate->parsed() || run->parsed()) cli::cmd_evaluate(config, std::cerr);
    if (portfolio->parsed() || run->parsed()) cli::cmd_portfolio(config, std::cerr);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(ErrorKind::Data);
  }
  return 0;
}

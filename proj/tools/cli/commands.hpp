#pragma once

#include <filesystem>
#include <ostream>

#include "cli/config.hpp"
#include "qhprice/synthetic.hpp"

namespace qhprice::cli {

/// Reads the configured sources, validates them and writes the dataset
/// directory (one long CSV per series plus manifest.json).
void cmd_ingest(const RunConfig& config, std::ostream& log);

/// Rolling backtest. Resumes from the checkpoint in <output>/backtest unless
/// `fresh` is set.
void cmd_backtest(const RunConfig& config, bool fresh, std::ostream& log);

/// Error metrics, DM, DAcc and PT tables from the panel.
void cmd_evaluate(const RunConfig& config, std::ostream& log);

/// Strategy ledgers, Table-4-style summary, t and Sharpe tests, savings.
void cmd_portfolio(const RunConfig& config, std::ostream& log);

struct SimulateRequest {
  SyntheticOptions data;
  int train_days = 0;  // 0: two thirds of the days
  std::filesystem::path out_dir;
};

/// Writes synthetic source files and a ready-to-run config.json.
void cmd_simulate(const SimulateRequest& request, std::ostream& log);

}  // namespace qhprice::cli

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qhprice/backtest.hpp"
#include "qhprice/market_data.hpp"

namespace qhprice::cli {

inline constexpr const char* kOutputDirEnv = "QHPRICE_OUTPUT_DIR";

struct SeriesSource {
  std::filesystem::path path;
  CsvSchema schema = CsvSchema::Long;
};

struct PortfolioConfig {
  double gamma = 2.0;
  double volume_mw = 50.0;
  /// Forecast model behind Base/MeanVar; the enriched variant is "<source>_EXAA".
  std::string source_model = "Expert_EN";
  /// 0: same length as the training window.
  int moment_window_days = 0;
};

struct EvaluationConfig {
  int dm_lag = 4;
  int dm_p = 1;
  double level = 0.05;
  /// Empty: every model against every other model.
  std::vector<std::pair<std::string, std::string>> dm_pairs;
};

struct RunConfig {
  std::map<Market, SeriesSource> series;
  /// Wide files, each providing several series.
  std::vector<std::filesystem::path> wide_files;
  std::filesystem::path dataset_dir;  // default <output_dir>/dataset
  BacktestOptions backtest;
  PortfolioConfig portfolio;
  EvaluationConfig evaluation;
  std::filesystem::path output_dir = "qhprice_out";
  nlohmann::json raw;  // the document after overrides, for hashing

  std::filesystem::path resolved_dataset_dir() const;
};

/// Parses a config document; relative paths resolve against `base_dir`.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 over the canonical dump, ignoring keys that do not change results.
std::uint64_t config_hash(const nlohmann::json& doc);
std::string hex(std::uint64_t v);

/// Default document, also used as a template by `qhprice simulate`.
nlohmann::json default_config();

}  // namespace qhprice::cli

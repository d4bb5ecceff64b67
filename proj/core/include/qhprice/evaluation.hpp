#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qhprice/backtest.hpp"

namespace qhprice {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double level = 0.05;
  /// Variance estimate was zero or undefined; statistic and p-value are conventions.
  bool degenerate = false;
  nlohmann::json detail = nlohmann::json::object();

  bool reject() const { return p_value < level; }
};

struct ErrorMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t n = 0;
};

/// Raw-scale RMSE and MAE over the records. Throws Error(Data) when empty.
ErrorMetrics error_metrics(std::span<const ForecastRecord> records);
double rmse(const ForecastPanel& panel, std::string_view model, Target target);
double mae(const ForecastPanel& panel, std::string_view model, Target target);
/// Keyed by 1-based quarter-hour.
std::map<int, ErrorMetrics> per_qh_metrics(std::span<const ForecastRecord> records);

/// |e1|^p - |e2|^p per observation.
std::vector<double> loss_differential(std::span<const double> e1, std::span<const double> e2, int p = 1);

/// Bartlett-kernel long-run variance of `x` around its mean, truncation `lag`.
double bartlett_long_run_variance(std::span<const double> x, int lag);

/// Diebold-Mariano on a loss differential. Positive statistic: first model worse.
/// detail holds "p_greater" (first worse) and "p_less" one-sided p-values.
TestResult dm_test(std::span<const double> loss_diff, int lag = 4, double level = 0.05);

/// Per-qh DM test over days on matched (date, qh) rows of two models.
std::map<int, TestResult> dm_test(const ForecastPanel& panel, std::string_view m1, std::string_view m2,
                                  Target target, int p = 1, int lag = 4, double level = 0.05);

/// Direction of the intraday VWAP relative to the QH auction, per slot.
struct DirectionSeries {
  std::vector<Date> dates;
  std::vector<int> qhs;
  std::vector<int> predicted;  // +1 ID above auction, -1 below, 0 tie
  std::vector<int> realized;
};

/// Pairs AUQH and ID forecasts of `model` slot by slot.
DirectionSeries directions(const ForecastPanel& panel, std::string_view model);

struct DirectionalAccuracy {
  double overall = 0.0;
  std::map<int, double> per_qh;  // qh with at least one untied slot
  std::size_t hits = 0;
  std::size_t evaluated = 0;
  std::size_t ties = 0;
};

/// Share of untied slots whose predicted ordering matches the realized one.
DirectionalAccuracy dacc(const DirectionSeries& series);
DirectionalAccuracy dacc(const ForecastPanel& panel, std::string_view model);

/// Pesaran-Timmermann test on binary directions; one-sided p-value.
TestResult pt_test(std::span<const int> predicted_up, std::span<const int> realized_up, double level = 0.05);

/// Welch two-sample t test, two-sided.
TestResult mean_ttest(std::span<const double> a, std::span<const double> b, double level = 0.05);

enum class SdConvention { Population, Sample };

double sharpe(std::span<const double> prices, SdConvention sd = SdConvention::Population);

/// Ledoit-Wolf style HAC test of equal Sharpe ratios; two-sided p-value.
TestResult sharpe_equality_pairwise(std::span<const double> a, std::span<const double> b, double level = 0.05);

nlohmann::json to_json(const TestResult& r);

}  // namespace qhprice

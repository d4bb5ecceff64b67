#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qhprice/estimators.hpp"
#include "qhprice/features.hpp"

namespace qhprice {

enum class WindowPolicy { Sliding, Expanding };
std::string_view to_string(WindowPolicy p);
WindowPolicy window_policy_from_string(std::string_view text);

inline constexpr int kMinWindowDays = 30;

struct RollingPlan {
  DateRange initial_train{make_date(2015, 10, 8), make_date(2016, 10, 6)};
  DateRange test_range{make_date(2016, 10, 7), make_date(2018, 5, 31)};
  int refit_every = 1;
  WindowPolicy window_policy = WindowPolicy::Sliding;

  /// Throws Error(Config) on inconsistent ranges or a window under 30 days.
  void validate() const;
  /// First day of the refit block containing `day`.
  Date anchor_for(Date day) const;
  /// Training window used for a fit anchored at `anchor`.
  DateRange window_for(Date anchor) const;
};

/// A forecasting model as named in panels: "Naive_EXAA" or
/// "<Expert|Full>_<LM|EN>[_EXAA]".
struct ModelSpec {
  ModelKind kind = ModelKind::EN;
  FeatureSet features = FeatureSet::Expert;
  bool exaa_enriched = false;

  std::string id() const;
  FeatureSetKind feature_kind(Target target) const { return {features, exaa_enriched, target}; }
  static ModelSpec parse(std::string_view id);
  bool operator==(const ModelSpec&) const = default;
};

struct ForecastRecord {
  Date date;
  int qh = 1;  // 1-based
  Target target = Target::QhAuction;
  std::string model;
  double prediction = 0.0;  // EUR/MWh
  double realized = 0.0;    // EUR/MWh
  double prediction_transformed = 0.0;
};

struct SkipRecord {
  Date date;
  Target target = Target::QhAuction;
  std::string model;
  std::string reason;
};

/// Rows ordered by (date, target, model, qh).
struct ForecastPanel {
  std::vector<ForecastRecord> records;
  std::vector<SkipRecord> skips;

  void sort();
  std::vector<std::string> models() const;
  std::vector<Target> targets() const;
  /// Records for one (model, target) in panel order.
  std::vector<ForecastRecord> select(std::string_view model, Target target) const;
};

struct AuditReport {
  std::size_t reads = 0;
  std::size_t violations = 0;
  std::vector<std::string> examples;  // first few violations
};

struct BacktestOptions {
  RollingPlan plan;
  std::vector<ModelSpec> models;
  std::vector<Target> targets{Target::QhAuction, Target::IdVwap};
  TransformMode transform_mode = TransformMode::TrainingOnly;
  double mlog_c = kDefaultMlogC;
  EnOptions en;
  /// 1-based quarter-hours to forecast; empty means all 96.
  std::vector<int> quarter_hours;
  int jobs = 1;
  /// Record every feature read and check it against the decision time.
  bool audit = false;
};

struct FitRecord {
  Date anchor;
  Target target;
  std::string model;
  FittedModel fitted;
};

struct BacktestHooks {
  /// Days already completed by an interrupted run; not recomputed.
  std::set<Date> completed_days;
  /// Called once per finished test day with that day's rows, in day order.
  std::function<void(Date, const std::vector<ForecastRecord>&, const std::vector<SkipRecord>&)> on_day;
  /// Called for every fitted LM/EN model.
  std::function<void(const FitRecord&)> on_fit;
};

struct BacktestResult {
  ForecastPanel panel;
  AuditReport audit;
  std::size_t fits = 0;
  double seconds = 0.0;
};

BacktestResult run_backtest(const Dataset& dataset, const BacktestOptions& options,
                            const BacktestHooks& hooks = {});

void write_panel_csv(const ForecastPanel& panel, std::ostream& out);
void export_panel(const ForecastPanel& panel, const std::string& path);
ForecastPanel read_panel_csv(std::istream& in, const std::string& source = "<panel>");
ForecastPanel load_panel(const std::string& path);

nlohmann::json skips_to_json(const std::vector<SkipRecord>& skips);
std::vector<SkipRecord> skips_from_json(const nlohmann::json& j);

}  // namespace qhprice

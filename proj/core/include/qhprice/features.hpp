#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qhprice/market_data.hpp"
#include "qhprice/transform.hpp"

namespace qhprice {

enum class Target { QhAuction, IdVwap };
enum class FeatureSet { Expert, Full };

Market target_market(Target t);
std::string_view to_string(Target t);
Target target_from_string(std::string_view text);
std::string_view to_string(FeatureSet f);
FeatureSet feature_set_from_string(std::string_view text);

struct FeatureSetKind {
  FeatureSet kind = FeatureSet::Expert;
  bool exaa_enriched = true;
  Target target = Target::QhAuction;

  /// "Expert" / "Expert_EXAA" style prefix used in model ids.
  std::string label() const;
  bool operator==(const FeatureSetKind&) const = default;
};

/// Quarter-hours whose designs carry PV columns.
inline constexpr int kPvFirstQh = 29;
inline constexpr int kPvLastQh = 76;
inline constexpr int kPcaComponents = 3;

/// Delay, in minutes, between midnight of a delivery day and the moment its
/// value for `source` is public. Negative: published the day before.
int publication_offset_minutes(Market source);
/// Trading decisions for day d are taken at d−1 15:00.
inline constexpr int kDecisionOffsetMinutes = -24 * 60 + 15 * 60;

struct FeatureColumn {
  std::string name;
  /// Market read by the column; empty for calendar dummies.
  std::optional<Market> source;
  /// Delivery-day lag of the value read, relative to the row's day.
  int day_lag = 0;
  bool dummy = false;
};

/// True iff the column's value for day d is public by d−1 15:00.
/// Throws Error(Data) for a source without a publication rule (REBAP).
bool decision_time_guard(Target target, const FeatureColumn& column);
bool decision_time_guard(Market source, int day_lag);

struct DesignMatrix {
  int qh = 1;  // 1-based
  FeatureSetKind kind;
  std::vector<Date> days;
  std::vector<FeatureColumn> columns;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;

  std::vector<std::string> names() const;
  /// Non-dummy columns that are constant over the rows.
  std::vector<std::string> constant_columns() const;
};

struct PcaFactors {
  Eigen::MatrixXd loadings;  // 96 × k, orthonormal columns
  Eigen::VectorXd mean;      // column means of the fitted day vectors
  Eigen::VectorXd eigenvalues;
  int k = 0;
  std::vector<std::string> warnings;

  Eigen::VectorXd scores(std::span<const double> day) const;
  double explained_variance_ratio() const;
};

/// Top-k principal components of centered day vectors (one row per day).
/// Each loading column's largest-magnitude entry is made positive.
PcaFactors pca_fit(const Eigen::MatrixXd& day_vectors, int k = kPcaComponents);

/// Index of the history row nearest to `target` in Euclidean distance;
/// ties go to the latest row.
int similar_load_day(const Eigen::MatrixXd& history, std::span<const double> target);

/// One value consumed while building a design row.
struct FeatureRead {
  const FeatureColumn* column;
  Date row_day;
  Date delivery_day;
};
using ReadObserver = std::function<void(const FeatureRead&)>;

/// Design-matrix factory for one training window. Transform specs and PCA
/// factors are fitted once per window; designs for every quarter-hour and
/// feature set share them. Immutable after construction.
class FeatureBuilder {
 public:
  struct Options {
    TransformMode mode = TransformMode::TrainingOnly;
    double c = kDefaultMlogC;
  };

  FeatureBuilder(const Dataset& dataset, const DateRange& training_window, Options options);

  const Dataset& dataset() const { return *dataset_; }
  const DateRange& training_window() const { return window_; }
  const TransformSpec& spec(Market m) const;
  const std::map<Market, TransformSpec>& specs() const { return specs_; }
  const PcaFactors& pca(Market m) const;

  /// Transformed value of `m` at (day index, 0-based slot).
  double transformed(Market m, int day_index, int slot) const;

  /// Ordered column enumeration for a feature set and 1-based quarter-hour.
  std::vector<FeatureColumn> columns(const FeatureSetKind& kind, int qh) const;

  /// Training rows: window days with lag-7 history and no missing input day.
  std::vector<Date> training_days(const FeatureSetKind& kind) const;

  DesignMatrix design(const FeatureSetKind& kind, int qh, const ReadObserver* observer = nullptr) const;
  Eigen::VectorXd row(const FeatureSetKind& kind, int qh, Date day,
                      const ReadObserver* observer = nullptr) const;

  /// Day index chosen as the similar-load day for `day`.
  int similar_day_index(int day_index) const;

  /// Markets a feature set reads.
  static std::vector<Market> required_markets(const FeatureSetKind& kind);
  /// True when no required series is missing on the day (all slots imputed).
  bool day_usable(const FeatureSetKind& kind, int day_index) const;

 private:
  struct Column;
  std::vector<Column> plan(const FeatureSetKind& kind, int qh) const;
  void fill_row(const std::vector<Column>& cols, int day_index, double* out, const ReadObserver* observer) const;
  void require(const FeatureSetKind& kind) const;

  const Dataset* dataset_;
  DateRange window_;
  int window_first_ = 0;
  int window_last_ = 0;
  int candidate_origin_ = 0;
  std::map<Market, TransformSpec> specs_;
  std::map<Market, Eigen::MatrixXd> grids_;  // days × 96, transformed
  std::map<Market, PcaFactors> pca_;
  std::map<Market, Eigen::MatrixXd> pca_scores_;  // days × k
  std::map<Market, std::vector<double>> day_min_, day_max_;
  std::vector<int> similar_;  // per day index, -1 when no candidate
};

/// Convenience: fits transforms on `window` and returns the design for `qh`.
DesignMatrix build_design(const Dataset& dataset, const FeatureSetKind& kind, int qh,
                          const DateRange& window, TransformMode mode = TransformMode::TrainingOnly);

void write_design_csv(const DesignMatrix& design, std::ostream& out);
nlohmann::json column_manifest(const DesignMatrix& design);

}  // namespace qhprice

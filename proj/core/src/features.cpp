#include "qhprice/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>

#include "qhprice/csv.hpp"
#include "qhprice/error.hpp"

namespace qhprice {

namespace {

constexpr std::array<const char*, 8> kWeekdayNames = {"", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};

std::string short_name(Market m) {
  switch (m) {
    case Market::ExaaQh: return "EXAA";
    case Market::EpexDaH: return "DA";
    case Market::EpexQhAuction: return "AUQH";
    case Market::EpexQhIdVwap: return "IDQH";
    case Market::LoadFcst: return "LOAD";
    case Market::WindFcst: return "WIND";
    case Market::PvFcst: return "PV";
    case Market::Rebap: return "REBAP";
  }
  return "?";
}

// Sources whose daily 96-vector feeds PCA or raw-price blocks.
constexpr Market kDaySources[] = {Market::ExaaQh, Market::EpexDaH, Market::EpexQhAuction,
                                  Market::EpexQhIdVwap};

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

// Latest day in [first, last] whose load profile is closest to `target`.
int nearest_load_day(const QhSeries& load, int target, int first, int last) {
  int best = -1;
  double best_distance = std::numeric_limits<double>::infinity();
  const auto target_day = load.day(target);
  for (int s = first; s <= last; ++s) {
    const double dist = squared_distance(load.day(s), target_day);
    if (dist <= best_distance) {
      best_distance = dist;
      best = s;
    }
  }
  return best;
}

}  // namespace

Market target_market(Target t) {
  return t == Target::QhAuction ? Market::EpexQhAuction : Market::EpexQhIdVwap;
}

std::string_view to_string(Target t) { return to_string(target_market(t)); }

Target target_from_string(std::string_view text) {
  if (text == "EPEX_QH_AUCTION" || text == "AUQH") return Target::QhAuction;
  if (text == "EPEX_QH_ID_VWAP" || text == "IDQH") return Target::IdVwap;
  fail(ErrorKind::Config, "unknown target '" + std::string(text) + "'");
}

std::string_view to_string(FeatureSet f) { return f == FeatureSet::Expert ? "Expert" : "Full"; }

FeatureSet feature_set_from_string(std::string_view text) {
  if (text == "Expert") return FeatureSet::Expert;
  if (text == "Full") return FeatureSet::Full;
  fail(ErrorKind::Config, "unknown feature set '" + std::string(text) + "'");
}

std::string FeatureSetKind::label() const {
  return std::string(to_string(kind)) + (exaa_enriched ? "_EXAA" : "");
}

int publication_offset_minutes(Market source) {
  constexpr int kDayBefore = -24 * 60;
  switch (source) {
    case Market::ExaaQh: return kDayBefore + 10 * 60 + 20;
    case Market::EpexDaH: return kDayBefore + 12 * 60 + 42;
    case Market::EpexQhAuction: return kDayBefore + 14 * 60 + 40;
    case Market::LoadFcst: return kDayBefore + 10 * 60;
    case Market::WindFcst:
    case Market::PvFcst: return kDayBefore + 8 * 60;
    // Continuous trading settles during delivery; a delivery day's VWAP is
    // treated as known once that day has begun.
    case Market::EpexQhIdVwap: return 0;
    case Market::Rebap: break;
  }
  fail(ErrorKind::Data, "no publication rule for series " + std::string(to_string(source)));
}

bool decision_time_guard(Market source, int day_lag) {
  return -day_lag * 24 * 60 + publication_offset_minutes(source) <= kDecisionOffsetMinutes;
}

bool decision_time_guard(Target, const FeatureColumn& column) {
  if (!column.source) return true;
  return decision_time_guard(*column.source, column.day_lag);
}

std::vector<std::string> DesignMatrix::names() const {
  std::vector<std::string> out;
  out.reserve(columns.size());
  for (const auto& c : columns) out.push_back(c.name);
  return out;
}

std::vector<std::string> DesignMatrix::constant_columns() const {
  std::vector<std::string> out;
  if (x.rows() == 0) return out;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (columns[static_cast<std::size_t>(j)].dummy) continue;
    if ((x.col(j).array() == x(0, j)).all()) out.push_back(columns[static_cast<std::size_t>(j)].name);
  }
  return out;
}

// --- PCA ---------------------------------------------------------------------

Eigen::VectorXd PcaFactors::scores(std::span<const double> day) const {
  const Eigen::Map<const Eigen::VectorXd> v(day.data(), static_cast<Eigen::Index>(day.size()));
  return loadings.transpose() * (v - mean);
}

double PcaFactors::explained_variance_ratio() const {
  const double total = eigenvalues.sum();
  if (!(total > 0.0) || k == 0) return 0.0;
  return eigenvalues.head(k).sum() / total;
}

PcaFactors pca_fit(const Eigen::MatrixXd& day_vectors, int k) {
  const Eigen::Index n = day_vectors.rows();
  if (k < 1) fail(ErrorKind::Config, "PCA needs k >= 1");
  if (n < k + 1) {
    fail(ErrorKind::Data, "PCA needs at least " + std::to_string(k + 1) + " days, got " + std::to_string(n));
  }
  if (!day_vectors.allFinite()) fail(ErrorKind::Numerical, "PCA input contains non-finite values");

  PcaFactors out;
  out.mean = day_vectors.colwise().mean().transpose();
  const Eigen::MatrixXd centered = day_vectors.rowwise() - out.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) fail(ErrorKind::Numerical, "PCA eigendecomposition failed");

  // Eigen sorts ascending; reverse to descending.
  const Eigen::VectorXd ascending = solver.eigenvalues();
  const Eigen::Index dim = ascending.size();
  out.eigenvalues = ascending.reverse().cwiseMax(0.0);
  const double total = out.eigenvalues.sum();
  const double tolerance = 1e-10 * total;

  int rank = 0;
  while (rank < k && rank < dim && total > 0.0 && out.eigenvalues(rank) > tolerance) ++rank;
  out.k = rank;
  out.loadings.resize(dim, rank);
  for (int c = 0; c < rank; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(dim - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.loadings.col(c) = v;
  }
  if (rank < k) {
    out.warnings.push_back("rank " + std::to_string(rank) + " below requested " + std::to_string(k) +
                           " components");
  }
  return out;
}

int similar_load_day(const Eigen::MatrixXd& history, std::span<const double> target) {
  if (history.rows() == 0) fail(ErrorKind::Data, "similar-load-day search over an empty history");
  if (history.cols() != static_cast<Eigen::Index>(target.size())) {
    fail(ErrorKind::Data, "similar-load-day profile length mismatch");
  }
  const Eigen::Map<const Eigen::RowVectorXd> t(target.data(), static_cast<Eigen::Index>(target.size()));
  int best = 0;
  double best_distance = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < history.rows(); ++r) {
    const double dist = (history.row(r) - t).squaredNorm();
    if (dist <= best_distance) {
      best_distance = dist;
      best = static_cast<int>(r);
    }
  }
  return best;
}

// --- FeatureBuilder ------------------------------------------------------------

struct FeatureBuilder::Column {
  enum class Op { Value, DayMin, DayMax, Pca, Dummy, Similar };
  FeatureColumn meta;
  Op op = Op::Value;
  Market market = Market::ExaaQh;
  int lag = 0;
  int slot = 0;
  int component = 0;
  int weekday = 0;
};

FeatureBuilder::FeatureBuilder(const Dataset& dataset, const DateRange& training_window, Options options)
    : dataset_(&dataset), window_(training_window) {
  const auto first = dataset.index_of(training_window.first);
  const auto last = dataset.index_of(training_window.last);
  if (training_window.empty() || !first || !last) {
    fail(ErrorKind::Data, "training window " + format_date(training_window.first) + ".." +
                              format_date(training_window.last) + " not inside dataset range");
  }
  window_first_ = *first;
  window_last_ = *last;
  candidate_origin_ = std::max(0, window_first_ - 7);

  const DateRange fit_window =
      options.mode == TransformMode::FullPeriod ? dataset.range() : training_window;
  for (Market m : dataset.markets()) {
    if (m == Market::Rebap) continue;
    const QhSeries& s = dataset.series(m);
    const SlotRange slots = m == Market::PvFcst ? SlotRange{kPvFirstQh - 1, kPvLastQh - 1} : SlotRange{};
    const TransformSpec spec = fit_spec(s, fit_window, options.mode, options.c, slots);
    Eigen::MatrixXd grid(s.day_count(), kSlotsPerDay);
    for (int d = 0; d < s.day_count(); ++d) {
      for (int q = 0; q < kSlotsPerDay; ++q) grid(d, q) = forward(s.value(d, q), spec);
    }
    if (!grid.allFinite()) {
      fail(ErrorKind::Numerical, std::string(to_string(m)) + ": transform produced non-finite values");
    }
    specs_.emplace(m, spec);
    grids_.emplace(m, std::move(grid));
  }

  for (Market m : kDaySources) {
    const auto it = grids_.find(m);
    if (it == grids_.end()) continue;
    const Eigen::MatrixXd& grid = it->second;
    PcaFactors factors = pca_fit(grid.middleRows(window_first_, window_last_ - window_first_ + 1), kPcaComponents);
    Eigen::MatrixXd scores(grid.rows(), factors.k);
    if (factors.k > 0) {
      scores = (grid.rowwise() - factors.mean.transpose()) * factors.loadings;
    }
    pca_scores_.emplace(m, std::move(scores));
    pca_.emplace(m, std::move(factors));
  }

  for (Market m : {Market::EpexQhAuction, Market::EpexQhIdVwap}) {
    const auto it = grids_.find(m);
    if (it == grids_.end()) continue;
    std::vector<double> lo(static_cast<std::size_t>(it->second.rows()));
    std::vector<double> hi(lo.size());
    for (Eigen::Index d = 0; d < it->second.rows(); ++d) {
      lo[static_cast<std::size_t>(d)] = it->second.row(d).minCoeff();
      hi[static_cast<std::size_t>(d)] = it->second.row(d).maxCoeff();
    }
    day_min_.emplace(m, std::move(lo));
    day_max_.emplace(m, std::move(hi));
  }

  similar_.assign(static_cast<std::size_t>(dataset.day_count()), -1);
  if (dataset.has(Market::LoadFcst)) {
    const QhSeries& load = dataset.series(Market::LoadFcst);
    for (int t = window_first_; t <= window_last_; ++t) {
      if (t > candidate_origin_) similar_[static_cast<std::size_t>(t)] = nearest_load_day(load, t, candidate_origin_, t - 1);
    }
  }
}

const TransformSpec& FeatureBuilder::spec(Market m) const {
  const auto it = specs_.find(m);
  if (it == specs_.end()) fail(ErrorKind::Data, "no transform for series " + std::string(to_string(m)));
  return it->second;
}

const PcaFactors& FeatureBuilder::pca(Market m) const {
  const auto it = pca_.find(m);
  if (it == pca_.end()) fail(ErrorKind::Data, "no PCA factors for series " + std::string(to_string(m)));
  return it->second;
}

double FeatureBuilder::transformed(Market m, int day_index, int slot) const {
  const auto it = grids_.find(m);
  if (it == grids_.end()) fail(ErrorKind::Data, "dataset has no series " + std::string(to_string(m)));
  return it->second(day_index, slot);
}

int FeatureBuilder::similar_day_index(int day_index) const {
  if (day_index >= window_first_ && day_index <= window_last_) {
    return similar_[static_cast<std::size_t>(day_index)];
  }
  if (day_index <= candidate_origin_ || !dataset_->has(Market::LoadFcst)) return -1;
  return nearest_load_day(dataset_->series(Market::LoadFcst), day_index, candidate_origin_, day_index - 1);
}

std::vector<Market> FeatureBuilder::required_markets(const FeatureSetKind& kind) {
  std::vector<Market> out = {target_market(kind.target), Market::ExaaQh,  Market::EpexDaH,
                             Market::LoadFcst,           Market::WindFcst, Market::PvFcst};
  if (kind.target == Target::IdVwap) out.push_back(Market::EpexQhAuction);
  return out;
}

void FeatureBuilder::require(const FeatureSetKind& kind) const {
  for (Market m : required_markets(kind)) {
    if (!dataset_->has(m)) {
      fail(ErrorKind::Data, kind.label() + " design for " + std::string(to_string(kind.target)) +
                                " requires series " + std::string(to_string(m)));
    }
  }
}

bool FeatureBuilder::day_usable(const FeatureSetKind& kind, int day_index) const {
  for (Market m : required_markets(kind)) {
    if (dataset_->series(m).day_missing(day_index)) return false;
  }
  return true;
}

std::vector<FeatureBuilder::Column> FeatureBuilder::plan(const FeatureSetKind& kind, int qh) const {
  if (qh < 1 || qh > kSlotsPerDay) fail(ErrorKind::Config, "quarter-hour must be in 1..96");
  require(kind);
  const int q = qh - 1;
  const int ramp = qh > 4 ? q - 4 : q;
  const bool full = kind.kind == FeatureSet::Full;
  const Market target = target_market(kind.target);
  const std::string tname = short_name(target);

  std::vector<Column> cols;
  auto value = [&](Market m, int lag, int slot, std::string name) {
    Column c;
    c.meta = {std::move(name), m, lag, false};
    c.op = Column::Op::Value;
    c.market = m;
    c.lag = lag;
    c.slot = slot;
    cols.push_back(std::move(c));
  };
  auto lag_set = [&](bool with_zero) {
    std::vector<int> lags;
    if (with_zero) lags.push_back(0);
    if (full) {
      for (int l = 1; l <= 7; ++l) lags.push_back(l);
    } else {
      lags.insert(lags.end(), {1, 2, 7});
    }
    return lags;
  };

  for (int lag : lag_set(false)) value(target, lag, q, tname + "_lag" + std::to_string(lag));
  if (kind.target == Target::IdVwap) value(Market::EpexQhAuction, 0, q, "AUQH_lag0");
  value(Market::WindFcst, 0, q, "WIND_qh");
  value(Market::WindFcst, 0, ramp, "WIND_qh-4");
  if (qh >= kPvFirstQh && qh <= kPvLastQh) {
    value(Market::PvFcst, 0, q, "PV_qh");
    value(Market::PvFcst, 0, ramp, "PV_qh-4");
  }
  for (int lag : lag_set(true)) value(Market::EpexDaH, lag, q, "DA_lag" + std::to_string(lag));
  for (int lag : lag_set(kind.exaa_enriched)) value(Market::ExaaQh, lag, q, "EXAA_lag" + std::to_string(lag));
  for (auto op : {Column::Op::DayMin, Column::Op::DayMax}) {
    Column c;
    c.meta = {tname + (op == Column::Op::DayMin ? "_min_prev" : "_max_prev"), target, 1, false};
    c.op = op;
    c.market = target;
    c.lag = 1;
    cols.push_back(std::move(c));
  }
  value(Market::LoadFcst, 0, q, "LOAD_qh");
  value(Market::LoadFcst, 0, ramp, "LOAD_qh-4");

  // Day-vector blocks: (source, day lag).
  std::vector<std::pair<Market, int>> blocks;
  if (kind.exaa_enriched) blocks.emplace_back(Market::ExaaQh, 0);
  blocks.emplace_back(Market::EpexDaH, 0);
  if (kind.target == Target::QhAuction) {
    blocks.emplace_back(Market::EpexQhAuction, 1);
  } else {
    blocks.emplace_back(Market::EpexQhAuction, 0);
    blocks.emplace_back(Market::EpexQhIdVwap, 1);
  }
  for (const auto& [m, lag] : blocks) {
    const std::string prefix = short_name(m) + "_d" + std::to_string(lag);
    if (!full) {
      for (int i = 0; i < kPcaComponents; ++i) {
        Column c;
        c.meta = {prefix + "_pca" + std::to_string(i + 1), m, lag, false};
        c.op = Column::Op::Pca;
        c.market = m;
        c.lag = lag;
        c.component = i;
        cols.push_back(std::move(c));
      }
    } else if (is_hourly_native(m)) {
      for (int h = 0; h < kHoursPerDay; ++h) value(m, lag, 4 * h, prefix + "_h" + std::to_string(h + 1));
    } else {
      for (int s = 0; s < kSlotsPerDay; ++s) value(m, lag, s, prefix + "_qh" + std::to_string(s + 1));
    }
  }

  const std::vector<int> weekdays = full ? std::vector<int>{1, 2, 3, 4, 5, 6, 7} : std::vector<int>{1, 6, 7};
  for (int wd : weekdays) {
    Column c;
    c.meta = {std::string("DOW_") + kWeekdayNames[static_cast<std::size_t>(wd)], std::nullopt, 0, true};
    c.op = Column::Op::Dummy;
    c.weekday = wd;
    cols.push_back(std::move(c));
  }

  Column similar;
  similar.meta = {"SIMILAR_" + tname, target, 1, false};
  similar.op = Column::Op::Similar;
  similar.market = target;
  similar.slot = q;
  cols.push_back(std::move(similar));
  return cols;
}

std::vector<FeatureColumn> FeatureBuilder::columns(const FeatureSetKind& kind, int qh) const {
  std::vector<FeatureColumn> out;
  for (auto& c : plan(kind, qh)) out.push_back(std::move(c.meta));
  return out;
}

std::vector<Date> FeatureBuilder::training_days(const FeatureSetKind& kind) const {
  require(kind);
  std::vector<Date> out;
  for (int t = std::max(window_first_, 7); t <= window_last_; ++t) {
    if (similar_[static_cast<std::size_t>(t)] < 0 || !day_usable(kind, t)) continue;
    out.push_back(dataset_->date_at(t));
  }
  return out;
}

void FeatureBuilder::fill_row(const std::vector<Column>& cols, int t, double* out,
                              const ReadObserver* observer) const {
  const Date row_day = dataset_->date_at(t);
  int similar = -2;  // lazily resolved
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const Column& c = cols[j];
    int read_day = t - c.lag;
    switch (c.op) {
      case Column::Op::Value:
        out[j] = grids_.at(c.market)(read_day, c.slot);
        break;
      case Column::Op::DayMin:
        out[j] = day_min_.at(c.market)[static_cast<std::size_t>(read_day)];
        break;
      case Column::Op::DayMax:
        out[j] = day_max_.at(c.market)[static_cast<std::size_t>(read_day)];
        break;
      case Column::Op::Pca: {
        const Eigen::MatrixXd& scores = pca_scores_.at(c.market);
        out[j] = c.component < scores.cols() ? scores(read_day, c.component) : 0.0;
        break;
      }
      case Column::Op::Dummy:
        out[j] = iso_weekday(row_day) == c.weekday ? 1.0 : 0.0;
        continue;
      case Column::Op::Similar:
        if (similar == -2) similar = similar_day_index(t);
        if (similar < 0) {
          fail(ErrorKind::Data, "no similar-load-day candidate before " + format_date(row_day));
        }
        read_day = similar;
        out[j] = grids_.at(c.market)(read_day, c.slot);
        break;
    }
    if (observer) (*observer)(FeatureRead{&c.meta, row_day, dataset_->date_at(read_day)});
  }
}

DesignMatrix FeatureBuilder::design(const FeatureSetKind& kind, int qh, const ReadObserver* observer) const {
  const std::vector<Column> cols = plan(kind, qh);
  DesignMatrix out;
  out.qh = qh;
  out.kind = kind;
  out.days = training_days(kind);
  for (const auto& c : cols) out.columns.push_back(c.meta);
  const auto n = static_cast<Eigen::Index>(out.days.size());
  const auto p = static_cast<Eigen::Index>(cols.size());
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x(n, p);
  out.y.resize(n);
  const Eigen::MatrixXd& target = grids_.at(target_market(kind.target));
  for (Eigen::Index r = 0; r < n; ++r) {
    const int t = *dataset_->index_of(out.days[static_cast<std::size_t>(r)]);
    fill_row(cols, t, x.row(r).data(), observer);
    out.y(r) = target(t, qh - 1);
  }
  out.x = x;
  return out;
}

Eigen::VectorXd FeatureBuilder::row(const FeatureSetKind& kind, int qh, Date day, const ReadObserver* observer) const {
  const std::vector<Column> cols = plan(kind, qh);
  const auto t = dataset_->index_of(day);
  if (!t || *t < 7) {
    fail(ErrorKind::Data, "no lag-7 history for " + format_date(day));
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(cols.size()));
  fill_row(cols, *t, out.data(), observer);
  return out;
}

DesignMatrix build_design(const Dataset& dataset, const FeatureSetKind& kind, int qh, const DateRange& window,
                          TransformMode mode) {
  const FeatureBuilder builder(dataset, window, {mode, kDefaultMlogC});
  return builder.design(kind, qh);
}

void write_design_csv(const DesignMatrix& design, std::ostream& out) {
  out << "date,y";
  for (const auto& c : design.columns) out << ',' << c.name;
  out << '\n';
  for (Eigen::Index r = 0; r < design.x.rows(); ++r) {
    out << format_date(design.days[static_cast<std::size_t>(r)]) << ',' << csv::format_double(design.y(r));
    for (Eigen::Index j = 0; j < design.x.cols(); ++j) out << ',' << csv::format_double(design.x(r, j));
    out << '\n';
  }
}

nlohmann::json column_manifest(const DesignMatrix& design) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : design.columns) {
    cols.push_back({{"name", c.name},
                    {"source", c.source ? std::string(to_string(*c.source)) : std::string("calendar")},
                    {"day_lag", c.day_lag},
                    {"dummy", c.dummy}});
  }
  return {{"qh", design.qh},
          {"feature_set", design.kind.label()},
          {"target", std::string(to_string(design.kind.target))},
          {"columns", std::move(cols)}};
}

}  // namespace qhprice

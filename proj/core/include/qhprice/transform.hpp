#pragma once

#include <span>

#include <nlohmann/json.hpp>

#include "qhprice/market_data.hpp"

namespace qhprice {

/// Where median/MAD are estimated. `Identity` disables the transform.
enum class TransformMode { FullPeriod, TrainingOnly, Identity };

std::string_view to_string(TransformMode mode);
TransformMode transform_mode_from_string(std::string_view text);

inline constexpr double kDefaultMlogC = 1.0 / 3.0;

/// Median/MAD normalization constants plus the mlog parameter for one series.
struct TransformSpec {
  Market market = Market::ExaaQh;
  double median = 0.0;
  double mad = 1.0;
  double c = kDefaultMlogC;
  DateRange fit_window{};
  TransformMode mode = TransformMode::TrainingOnly;
};

struct RobustScale {
  double median;
  double mad;  // unscaled median absolute deviation
};

double median_of(std::vector<double> values);
RobustScale robust_scale(std::span<const double> values);

/// 0-based inclusive slot range of each day that enters the fit.
struct SlotRange {
  int first = 0;
  int last = kSlotsPerDay - 1;
};

/// Estimates median and MAD over every value of `series` inside `window`
/// (restricted to `slots` of each day).
/// Throws Error(Numerical) for a constant window (MAD = 0).
TransformSpec fit_spec(const QhSeries& series, const DateRange& window, TransformMode mode,
                       double c = kDefaultMlogC, SlotRange slots = {});

double normalize(double x, const TransformSpec& spec);
double denormalize(double z, const TransformSpec& spec);

/// sgn(z)·[log(|z| + 1/c) + log c], evaluated as sgn(z)·log1p(c|z|).
double mlog(double z, double c);
/// sgn(y)·(e^|y| − 1)/c, evaluated with expm1.
double mlog_inverse(double y, double c);

/// normalize followed by mlog; the identity when spec.mode is Identity.
double forward(double x, const TransformSpec& spec);
double inverse(double y, const TransformSpec& spec);

QhSeries apply_pipeline(const QhSeries& series, const TransformSpec& spec);
QhSeries invert_pipeline(const QhSeries& series, const TransformSpec& spec);

nlohmann::json to_json(const TransformSpec& spec);
TransformSpec transform_spec_from_json(const nlohmann::json& j);

}  // namespace qhprice

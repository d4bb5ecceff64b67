#include "qhprice/transform.hpp"

#include <algorithm>
#include <cmath>

#include "qhprice/error.hpp"

namespace qhprice {

namespace {

double sgn(double v) { return (v > 0.0) - (v < 0.0); }

void check_c(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) fail(ErrorKind::Config, "mlog parameter c must be > 0");
}

QhSeries map_series(const QhSeries& series, const TransformSpec& spec, double (*fn)(double, const TransformSpec&)) {
  if (series.market() != spec.market) {
    fail(ErrorKind::Data, "transform fitted on " + std::string(to_string(spec.market)) +
                              " applied to " + std::string(to_string(series.market())));
  }
  QhSeries out(series.market(), series.start_date(), series.day_count(), series.slots_per_day());
  for (int d = 0; d < series.day_count(); ++d) {
    for (int s = 0; s < series.slots_per_day(); ++s) {
      out.set(d, s, fn(series.value(d, s), spec), series.is_gap(d, s));
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(TransformMode mode) {
  switch (mode) {
    case TransformMode::FullPeriod: return "full_period";
    case TransformMode::TrainingOnly: return "training_only";
    case TransformMode::Identity: return "identity";
  }
  return "?";
}

TransformMode transform_mode_from_string(std::string_view text) {
  if (text == "full_period") return TransformMode::FullPeriod;
  if (text == "training_only") return TransformMode::TrainingOnly;
  if (text == "identity") return TransformMode::Identity;
  fail(ErrorKind::Config, "unknown transform mode '" + std::string(text) + "'");
}

double median_of(std::vector<double> values) {
  if (values.empty()) fail(ErrorKind::Data, "median of an empty sample");
  const auto n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

RobustScale robust_scale(std::span<const double> values) {
  std::vector<double> buf(values.begin(), values.end());
  const double med = median_of(buf);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = std::abs(values[i] - med);
  return {med, median_of(std::move(buf))};
}

TransformSpec fit_spec(const QhSeries& series, const DateRange& window, TransformMode mode, double c,
                       SlotRange slots) {
  check_c(c);
  TransformSpec spec;
  spec.market = series.market();
  spec.c = c;
  spec.fit_window = window;
  spec.mode = mode;
  if (mode == TransformMode::Identity) return spec;
  if (window.empty()) fail(ErrorKind::Data, "empty transform fit window");
  const auto first = series.index_of(window.first);
  const auto last = series.index_of(window.last);
  if (!first || !last) {
    fail(ErrorKind::Data, std::string(to_string(series.market())) + " does not cover fit window " +
                              format_date(window.first) + ".." + format_date(window.last));
  }
  const int spd = series.slots_per_day();
  const int slot_first = std::max(0, slots.first);
  const int slot_last = std::min(spd - 1, slots.last);
  if (slot_last < slot_first) fail(ErrorKind::Data, "empty slot range for transform fit");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(*last - *first + 1) *
                 static_cast<std::size_t>(slot_last - slot_first + 1));
  for (int d = *first; d <= *last; ++d) {
    const auto day = series.day(d);
    values.insert(values.end(), day.begin() + slot_first, day.begin() + slot_last + 1);
  }
  const RobustScale scale = robust_scale(values);
  if (!(scale.mad > 0.0)) {
    fail(ErrorKind::Numerical,
         std::string(to_string(series.market())) + ": constant series (MAD = 0) in fit window");
  }
  spec.median = scale.median;
  spec.mad = scale.mad;
  return spec;
}

double normalize(double x, const TransformSpec& spec) { return (x - spec.median) / spec.mad; }
double denormalize(double z, const TransformSpec& spec) { return z * spec.mad + spec.median; }

double mlog(double z, double c) { return sgn(z) * std::log1p(c * std::abs(z)); }
double mlog_inverse(double y, double c) { return sgn(y) * std::expm1(std::abs(y)) / c; }

double forward(double x, const TransformSpec& spec) {
  if (spec.mode == TransformMode::Identity) return x;
  return mlog(normalize(x, spec), spec.c);
}

double inverse(double y, const TransformSpec& spec) {
  if (spec.mode == TransformMode::Identity) return y;
  return denormalize(mlog_inverse(y, spec.c), spec);
}

QhSeries apply_pipeline(const QhSeries& series, const TransformSpec& spec) {
  return map_series(series, spec, &forward);
}

QhSeries invert_pipeline(const QhSeries& series, const TransformSpec& spec) {
  return map_series(series, spec, &inverse);
}

nlohmann::json to_json(const TransformSpec& spec) {
  return {{"series", std::string(to_string(spec.market))},
          {"median", spec.median},
          {"mad", spec.mad},
          {"c", spec.c},
          {"window", {format_date(spec.fit_window.first), format_date(spec.fit_window.last)}},
          {"mode", std::string(to_string(spec.mode))}};
}

TransformSpec transform_spec_from_json(const nlohmann::json& j) {
  TransformSpec spec;
  spec.market = market_from_string(j.at("series").get<std::string>());
  spec.median = j.at("median").get<double>();
  spec.mad = j.at("mad").get<double>();
  spec.c = j.at("c").get<double>();
  spec.fit_window = {parse_date(j.at("window").at(0).get<std::string>()),
                     parse_date(j.at("window").at(1).get<std::string>())};
  spec.mode = transform_mode_from_string(j.at("mode").get<std::string>());
  check_c(spec.c);
  if (spec.mode != TransformMode::Identity && !(spec.mad > 0.0)) {
    fail(ErrorKind::Data, "transform spec with non-positive MAD");
  }
  return spec;
}

}  // namespace qhprice

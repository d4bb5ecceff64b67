#pragma once

#include <cstdint>
#include <vector>

#include "qhprice/market_data.hpp"

namespace qhprice {

enum class SyntheticKind {
  /// Daily and weekly price shapes, wind/PV/load driven, all eight series.
  Realistic,
  /// AUQH = a*DA + b*WIND + c*LOAD + weekday effects + N(0, noise_sd^2);
  /// EXAA and ID are the noiseless signal plus N(0, proxy_sd^2). Load, wind
  /// and PV are rescaled to unit size and prices center on zero.
  Linear,
};

struct SyntheticOptions {
  SyntheticKind kind = SyntheticKind::Realistic;
  Date start = make_date(2016, 1, 4);
  int days = 120;
  std::uint64_t seed = 1;
  double noise_sd = 2.0;
  double proxy_sd = 1.0;
  /// Days (0-based offsets) whose values are dropped for every series in `missing_markets`.
  std::vector<int> missing_days;
  std::vector<Market> missing_markets;
};

Dataset simulate_dataset(const SyntheticOptions& options);

/// Coefficients of the linear generator.
struct LinearDgp {
  static constexpr double kDa = 0.8;
  static constexpr double kWind = -1.5;
  static constexpr double kLoad = 1.2;
  static constexpr double kMon = 1.5;
  static constexpr double kSat = -3.0;
  static constexpr double kSun = -5.0;
};

}  // namespace qhprice

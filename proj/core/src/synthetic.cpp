#include "qhprice/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "qhprice/error.hpp"

namespace qhprice {

namespace {

struct Drivers {
  std::vector<double> load;  // days*96
  std::vector<double> wind;  // hourly, broadcast
  std::vector<double> pv;    // hourly, broadcast
};

double daily_shape(int slot) {
  const double h = slot / 4.0;
  return 6.0 * std::sin((h - 6.0) / 24.0 * 2.0 * std::numbers::pi) + 4.0 * std::exp(-std::pow((h - 19.0) / 2.0, 2.0));
}

Drivers make_drivers(const SyntheticOptions& o, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  const auto n = static_cast<std::size_t>(o.days) * kSlotsPerDay;
  Drivers d;
  d.load.resize(n);
  d.wind.resize(n);
  d.pv.resize(n);
  double wind_level = 8000.0;
  for (int day = 0; day < o.days; ++day) {
    const unsigned wd = iso_weekday(o.start + std::chrono::days{day});
    const double weekday_factor = wd == 7 ? 0.8 : (wd == 6 ? 0.88 : 1.0);
    const double season = 1.0 + 0.1 * std::cos(2.0 * std::numbers::pi * day / 365.0);
    const double cloud = std::clamp(0.6 + 0.25 * z(rng), 0.05, 1.0);
    const double load_noise = 800.0 * z(rng);
    for (int h = 0; h < kHoursPerDay; ++h) {
      wind_level = std::clamp(wind_level + 0.9 * (8000.0 - wind_level) * 0.05 + 900.0 * z(rng), 200.0, 30000.0);
      const double sun = std::max(0.0, std::sin((h + 0.5 - 7.0) / 12.0 * std::numbers::pi));
      const double pv = (h + 1 >= 8 && h + 1 <= 19) ? 15000.0 * cloud * sun : 0.0;
      for (int k = 0; k < 4; ++k) {
        const std::size_t i = static_cast<std::size_t>(day) * kSlotsPerDay + static_cast<std::size_t>(4 * h + k);
        d.wind[i] = std::round(wind_level);
        d.pv[i] = std::round(pv);
      }
    }
    for (int s = 0; s < kSlotsPerDay; ++s) {
      const std::size_t i = static_cast<std::size_t>(day) * kSlotsPerDay + static_cast<std::size_t>(s);
      const double base = 55000.0 + 9000.0 * std::sin((s / 4.0 - 7.0) / 24.0 * 2.0 * std::numbers::pi);
      d.load[i] = std::round(season * weekday_factor * base + load_noise + 300.0 * z(rng));
    }
  }
  return d;
}

QhSeries series_from(Market m, const SyntheticOptions& o, const std::vector<double>& values) {
  QhSeries s(m, o.start, o.days);
  for (int d = 0; d < o.days; ++d) {
    for (int q = 0; q < kSlotsPerDay; ++q) {
      s.set(d, q, values[static_cast<std::size_t>(d) * kSlotsPerDay + static_cast<std::size_t>(q)], false);
    }
  }
  return s;
}

std::vector<double> hourly_mean(const std::vector<double>& values) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); i += 4) {
    const double m = (values[i] + values[i + 1] + values[i + 2] + values[i + 3]) / 4.0;
    for (std::size_t k = 0; k < 4; ++k) out[i + k] = m;
  }
  return out;
}

}  // namespace

Dataset simulate_dataset(const SyntheticOptions& o) {
  if (o.days < 8) fail(ErrorKind::Config, "synthetic dataset needs at least 8 days");
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const Drivers drv = make_drivers(o, rng);
  const auto n = drv.load.size();

  std::vector<double> da(n), auqh(n), id(n), exaa(n), rebap(n);
  std::vector<double> load = drv.load, wind = drv.wind, pv = drv.pv;
  if (o.kind == SyntheticKind::Linear) {
    // Unit-scale drivers, so the generator is linear in the columns a model
    // sees without any transform.
    for (std::size_t i = 0; i < n; ++i) {
      load[i] = (drv.load[i] - 55000.0) / 5000.0;
      wind[i] = (drv.wind[i] - 8000.0) / 3000.0;
      pv[i] = drv.pv[i] / 5000.0;
    }
    std::vector<double> da_q(n);
    double level = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % kSlotsPerDay == 0) level = 0.7 * level + z(rng);
      da_q[i] = level + daily_shape(static_cast<int>(i % kSlotsPerDay)) / 6.0 + z(rng);
    }
    da = hourly_mean(da_q);
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned wd = iso_weekday(o.start + std::chrono::days{static_cast<int>(i / kSlotsPerDay)});
      double signal = LinearDgp::kDa * da[i] + LinearDgp::kWind * wind[i] + LinearDgp::kLoad * load[i];
      if (wd == 1) signal += LinearDgp::kMon;
      if (wd == 6) signal += LinearDgp::kSat;
      if (wd == 7) signal += LinearDgp::kSun;
      auqh[i] = signal + o.noise_sd * z(rng);
      exaa[i] = signal + o.proxy_sd * z(rng);
      id[i] = signal + o.proxy_sd * z(rng);
      rebap[i] = signal + 10.0 * z(rng);
    }
  } else {
    double level = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int slot = static_cast<int>(i % kSlotsPerDay);
      if (slot == 0) level = 0.8 * level + 3.0 * z(rng);
      const double residual = (drv.load[i] - 55000.0) / 1000.0 - drv.wind[i] / 1500.0 - drv.pv[i] / 2000.0;
      const double fundamental = 38.0 + level + daily_shape(slot) + 1.2 * residual;
      // Quarter-hour sawtooth inside each hour from ramping schedules.
      const double saw = 3.0 * (1.5 - slot % 4) / 1.5;
      da[i] = fundamental + 1.5 * z(rng);
      auqh[i] = fundamental + saw + 2.5 * z(rng);
      exaa[i] = fundamental + 0.8 * saw + 2.5 * z(rng);
      id[i] = auqh[i] + 3.0 * z(rng);
      const double spike = z(rng);
      rebap[i] = fundamental + 15.0 * z(rng) + (spike > 2.8 ? 200.0 * spike : 0.0);
    }
    da = hourly_mean(da);
  }
  for (auto* v : {&da, &auqh, &id, &exaa, &rebap}) {
    for (double& x : *v) x = std::round(x * 100.0) / 100.0;
  }

  std::vector<QhSeries> list;
  list.push_back(series_from(Market::ExaaQh, o, exaa));
  list.push_back(series_from(Market::EpexDaH, o, da));
  list.push_back(series_from(Market::EpexQhAuction, o, auqh));
  list.push_back(series_from(Market::EpexQhIdVwap, o, id));
  list.push_back(series_from(Market::LoadFcst, o, load));
  list.push_back(series_from(Market::WindFcst, o, wind));
  list.push_back(series_from(Market::PvFcst, o, pv));
  list.push_back(series_from(Market::Rebap, o, rebap));

  for (auto& s : list) {
    const bool drop = std::find(o.missing_markets.begin(), o.missing_markets.end(), s.market()) !=
                      o.missing_markets.end();
    if (!drop || o.missing_days.empty()) continue;
    for (int d : o.missing_days) {
      if (d < 0 || d >= o.days) fail(ErrorKind::Config, "missing day offset outside the synthetic range");
      for (int q = 0; q < kSlotsPerDay; ++q) s.set(d, q, std::numeric_limits<double>::quiet_NaN(), true);
    }
    s = impute_gaps(std::move(s));
  }
  return assemble(std::move(list));
}

}  // namespace qhprice

#include "qhprice/evaluation.hpp"

#include <cmath>
#include <limits>
#include <tuple>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "qhprice/error.hpp"

namespace qhprice {

namespace {

constexpr std::size_t kMinObservations = 30;
constexpr double kInf = std::numeric_limits<double>::infinity();

double normal_cdf(double z) {
  if (z == kInf) return 1.0;
  if (z == -kInf) return 0.0;
  return boost::math::cdf(boost::math::normal(), z);
}

double two_sided_normal(double z) { return std::min(1.0, 2.0 * (1.0 - normal_cdf(std::abs(z)))); }

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sum_sq_dev(std::span<const double> x, double mean) {
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s;
}

void require_observations(std::size_t n, std::size_t min, const char* what) {
  if (n < min) {
    fail(ErrorKind::Data, std::string(what) + ": insufficient observations (" + std::to_string(n) + " < " +
                              std::to_string(min) + ")");
  }
}

// Key for matching slots across models.
using SlotKey = std::tuple<Date, int>;

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

ErrorMetrics error_metrics(std::span<const ForecastRecord> records) {
  if (records.empty()) fail(ErrorKind::Data, "error metrics over zero evaluated slots");
  ErrorMetrics m;
  double sq = 0.0;
  double abs = 0.0;
  for (const auto& r : records) {
    const double e = r.prediction - r.realized;
    sq += e * e;
    abs += std::abs(e);
  }
  m.n = records.size();
  m.rmse = std::sqrt(sq / static_cast<double>(m.n));
  m.mae = abs / static_cast<double>(m.n);
  return m;
}

double rmse(const ForecastPanel& panel, std::string_view model, Target target) {
  return error_metrics(panel.select(model, target)).rmse;
}

double mae(const ForecastPanel& panel, std::string_view model, Target target) {
  return error_metrics(panel.select(model, target)).mae;
}

std::map<int, ErrorMetrics> per_qh_metrics(std::span<const ForecastRecord> records) {
  std::map<int, std::vector<ForecastRecord>> by_qh;
  for (const auto& r : records) by_qh[r.qh].push_back(r);
  std::map<int, ErrorMetrics> out;
  for (const auto& [qh, rows] : by_qh) out[qh] = error_metrics(rows);
  return out;
}

std::vector<double> loss_differential(std::span<const double> e1, std::span<const double> e2, int p) {
  if (e1.size() != e2.size()) fail(ErrorKind::Data, "loss differential of series with different lengths");
  if (p != 1 && p != 2) fail(ErrorKind::Config, "loss exponent must be 1 or 2");
  std::vector<double> out(e1.size());
  for (std::size_t i = 0; i < e1.size(); ++i) {
    out[i] = p == 1 ? std::abs(e1[i]) - std::abs(e2[i]) : e1[i] * e1[i] - e2[i] * e2[i];
  }
  return out;
}

double bartlett_long_run_variance(std::span<const double> x, int lag) {
  const std::size_t n = x.size();
  if (n == 0) fail(ErrorKind::Data, "long-run variance of an empty series");
  if (lag < 0) fail(ErrorKind::Config, "negative truncation lag");
  const double mean = mean_of(x);
  auto autocov = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t t = k; t < n; ++t) s += (x[t] - mean) * (x[t - k] - mean);
    return s / static_cast<double>(n);
  };
  double lrv = autocov(0);
  for (int k = 1; k <= lag && static_cast<std::size_t>(k) < n; ++k) {
    lrv += 2.0 * (1.0 - static_cast<double>(k) / (lag + 1)) * autocov(static_cast<std::size_t>(k));
  }
  return lrv;
}

TestResult dm_test(std::span<const double> loss_diff, int lag, double level) {
  require_observations(loss_diff.size(), kMinObservations, "Diebold-Mariano test");
  TestResult r;
  r.level = level;
  const double n = static_cast<double>(loss_diff.size());
  const double mean = mean_of(loss_diff);
  const double lrv = bartlett_long_run_variance(loss_diff, lag);
  r.detail = {{"lag", lag}, {"n", loss_diff.size()}, {"mean_loss_differential", mean}};
  if (!(lrv > 0.0)) {
    r.degenerate = true;
    r.statistic = mean == 0.0 ? 0.0 : std::copysign(kInf, mean);
  } else {
    r.statistic = mean / std::sqrt(lrv / n);
  }
  r.p_value = r.statistic == 0.0 ? 1.0 : two_sided_normal(r.statistic);
  r.detail["p_greater"] = 1.0 - normal_cdf(r.statistic);
  r.detail["p_less"] = normal_cdf(r.statistic);
  return r;
}

std::map<int, TestResult> dm_test(const ForecastPanel& panel, std::string_view m1, std::string_view m2, Target target,
                                  int p, int lag, double level) {
  std::map<int, std::map<Date, std::pair<double, double>>> errors;  // qh -> date -> (e1, e2)
  std::map<SlotKey, double> first;
  for (const auto& r : panel.records) {
    if (r.target == target && r.model == m1) first[{r.date, r.qh}] = r.prediction - r.realized;
  }
  for (const auto& r : panel.records) {
    if (r.target != target || r.model != m2) continue;
    const auto it = first.find({r.date, r.qh});
    if (it != first.end()) errors[r.qh][r.date] = {it->second, r.prediction - r.realized};
  }
  if (errors.empty()) {
    fail(ErrorKind::Data, "no matched slots for " + std::string(m1) + " vs " + std::string(m2));
  }
  std::map<int, TestResult> out;
  for (const auto& [qh, by_day] : errors) {
    std::vector<double> e1;
    std::vector<double> e2;
    for (const auto& [day, pair] : by_day) {
      e1.push_back(pair.first);
      e2.push_back(pair.second);
    }
    TestResult r = dm_test(loss_differential(e1, e2, p), lag, level);
    r.detail["p"] = p;
    r.detail["qh"] = qh;
    out[qh] = std::move(r);
  }
  return out;
}

DirectionSeries directions(const ForecastPanel& panel, std::string_view model) {
  std::map<SlotKey, std::pair<double, double>> auction;
  for (const auto& r : panel.records) {
    if (r.model == model && r.target == Target::QhAuction) auction[{r.date, r.qh}] = {r.prediction, r.realized};
  }
  DirectionSeries out;
  for (const auto& r : panel.records) {
    if (r.model != model || r.target != Target::IdVwap) continue;
    const auto it = auction.find({r.date, r.qh});
    if (it == auction.end()) continue;
    out.dates.push_back(r.date);
    out.qhs.push_back(r.qh);
    out.predicted.push_back(sign_of(r.prediction - it->second.first));
    out.realized.push_back(sign_of(r.realized - it->second.second));
  }
  if (out.dates.empty()) {
    fail(ErrorKind::Data, "model " + std::string(model) + " has no slots with forecasts for both venues");
  }
  return out;
}

DirectionalAccuracy dacc(const DirectionSeries& series) {
  DirectionalAccuracy out;
  std::map<int, std::pair<std::size_t, std::size_t>> per_qh;  // hits, evaluated
  for (std::size_t i = 0; i < series.predicted.size(); ++i) {
    if (series.predicted[i] == 0 || series.realized[i] == 0) {
      ++out.ties;
      continue;
    }
    const bool hit = series.predicted[i] == series.realized[i];
    auto& cell = per_qh[series.qhs[i]];
    cell.first += hit ? 1 : 0;
    ++cell.second;
    out.hits += hit ? 1 : 0;
    ++out.evaluated;
  }
  if (out.evaluated == 0) fail(ErrorKind::Data, "directional accuracy: every slot is tied");
  out.overall = static_cast<double>(out.hits) / static_cast<double>(out.evaluated);
  for (const auto& [qh, cell] : per_qh) {
    out.per_qh[qh] = static_cast<double>(cell.first) / static_cast<double>(cell.second);
  }
  return out;
}

DirectionalAccuracy dacc(const ForecastPanel& panel, std::string_view model) { return dacc(directions(panel, model)); }

TestResult pt_test(std::span<const int> predicted_up, std::span<const int> realized_up, double level) {
  if (predicted_up.size() != realized_up.size()) fail(ErrorKind::Data, "direction series differ in length");
  require_observations(predicted_up.size(), kMinObservations, "Pesaran-Timmermann test");
  const double n = static_cast<double>(predicted_up.size());
  double hits = 0.0;
  double px = 0.0;
  double py = 0.0;
  for (std::size_t i = 0; i < predicted_up.size(); ++i) {
    const bool x = predicted_up[i] != 0;
    const bool y = realized_up[i] != 0;
    hits += x == y ? 1.0 : 0.0;
    px += x ? 1.0 : 0.0;
    py += y ? 1.0 : 0.0;
  }
  const double p_hat = hits / n;
  px /= n;
  py /= n;
  const double p_star = px * py + (1.0 - px) * (1.0 - py);
  const double v_hat = p_star * (1.0 - p_star) / n;
  const double v_star = (2.0 * py - 1.0) * (2.0 * py - 1.0) * px * (1.0 - px) / n +
                        (2.0 * px - 1.0) * (2.0 * px - 1.0) * py * (1.0 - py) / n +
                        4.0 * px * py * (1.0 - px) * (1.0 - py) / (n * n);
  TestResult r;
  r.level = level;
  r.detail = {{"hit_rate", p_hat}, {"expected_hit_rate", p_star}, {"p_predicted_up", px},
              {"p_realized_up", py},  {"n", predicted_up.size()},   {"sides", 1}};
  const double var = v_hat - v_star;
  if (!(var > 0.0)) {
    r.degenerate = true;
    r.statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  r.statistic = (p_hat - p_star) / std::sqrt(var);
  r.p_value = 1.0 - normal_cdf(r.statistic);
  return r;
}

TestResult mean_ttest(std::span<const double> a, std::span<const double> b, double level) {
  require_observations(std::min(a.size(), b.size()), kMinObservations, "mean t-test");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  const double va = sum_sq_dev(a, ma) / (na - 1.0);
  const double vb = sum_sq_dev(b, mb) / (nb - 1.0);
  const double se2 = va / na + vb / nb;
  TestResult r;
  r.level = level;
  r.detail = {{"mean_a", ma}, {"mean_b", mb}, {"sides", 2}};
  if (!(se2 > 0.0)) {
    r.degenerate = true;
    r.statistic = ma == mb ? 0.0 : std::copysign(kInf, ma - mb);
    r.p_value = ma == mb ? 1.0 : 0.0;
    return r;
  }
  const double df = se2 * se2 / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
  r.statistic = (ma - mb) / std::sqrt(se2);
  r.detail["df"] = df;
  if (r.statistic == 0.0) {
    r.p_value = 1.0;
  } else {
    const boost::math::students_t dist(df);
    r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.statistic))));
  }
  return r;
}

double sharpe(std::span<const double> prices, SdConvention sd) {
  if (prices.size() < 2) fail(ErrorKind::Data, "Sharpe ratio needs at least two prices");
  const double m = mean_of(prices);
  const double denom = static_cast<double>(prices.size()) - (sd == SdConvention::Sample ? 1.0 : 0.0);
  const double s = std::sqrt(sum_sq_dev(prices, m) / denom);
  if (!(s > 0.0)) fail(ErrorKind::Numerical, "Sharpe ratio undefined for zero standard deviation");
  return m / s;
}

TestResult sharpe_equality_pairwise(std::span<const double> a, std::span<const double> b, double level) {
  if (a.size() != b.size()) fail(ErrorKind::Data, "Sharpe test needs matched series");
  require_observations(a.size(), 100, "Sharpe equality test");
  TestResult r;
  r.level = level;
  const std::size_t n = a.size();
  const auto lag = static_cast<int>(std::floor(std::cbrt(static_cast<double>(n))));
  r.detail = {{"lag", lag}, {"n", n}, {"sides", 2}};
  if (std::equal(a.begin(), a.end(), b.begin())) {
    r.degenerate = true;
    return r;
  }
  double mu_a = 0.0, mu_b = 0.0, g_a = 0.0, g_b = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    mu_a += a[t];
    mu_b += b[t];
    g_a += a[t] * a[t];
    g_b += b[t] * b[t];
  }
  const double nd = static_cast<double>(n);
  mu_a /= nd;
  mu_b /= nd;
  g_a /= nd;
  g_b /= nd;
  const double var_a = g_a - mu_a * mu_a;
  const double var_b = g_b - mu_b * mu_b;
  if (!(var_a > 0.0) || !(var_b > 0.0)) {
    r.degenerate = true;
    return r;
  }
  const double sr_a = mu_a / std::sqrt(var_a);
  const double sr_b = mu_b / std::sqrt(var_b);
  r.detail["sharpe_a"] = sr_a;
  r.detail["sharpe_b"] = sr_b;

  Eigen::MatrixXd v(static_cast<Eigen::Index>(n), 4);
  for (std::size_t t = 0; t < n; ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    v(i, 0) = a[t] - mu_a;
    v(i, 1) = b[t] - mu_b;
    v(i, 2) = a[t] * a[t] - g_a;
    v(i, 3) = b[t] * b[t] - g_b;
  }
  Eigen::Matrix4d psi = v.transpose() * v / nd;
  for (int j = 1; j <= lag; ++j) {
    const auto rows = static_cast<Eigen::Index>(n) - j;
    const Eigen::Matrix4d gamma = v.bottomRows(rows).transpose() * v.topRows(rows) / nd;
    psi += (1.0 - static_cast<double>(j) / (lag + 1)) * (gamma + gamma.transpose());
  }
  const Eigen::Vector4d grad(g_a / std::pow(var_a, 1.5), -g_b / std::pow(var_b, 1.5),
                             -mu_a / (2.0 * std::pow(var_a, 1.5)), mu_b / (2.0 * std::pow(var_b, 1.5)));
  const double se2 = grad.dot(psi * grad) / nd;
  if (!(se2 > 0.0)) {
    r.degenerate = true;
    return r;
  }
  r.statistic = (sr_a - sr_b) / std::sqrt(se2);
  r.p_value = two_sided_normal(r.statistic);
  return r;
}

nlohmann::json to_json(const TestResult& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(v > 0 ? "inf" : "-inf"); };
  return {{"statistic", num(r.statistic)},
          {"p_value", r.p_value},
          {"level", r.level},
          {"reject", r.reject()},
          {"degenerate", r.degenerate},
          {"detail", r.detail}};
}

}  // namespace qhprice

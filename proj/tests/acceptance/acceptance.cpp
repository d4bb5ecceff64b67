// Acceptance run: one PASS/FAIL line per criterion.
// Tier 2 (--tier2) needs QHPRICE_REFERENCE_DATA pointing at an ingested dataset.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "qhprice/backtest.hpp"
#include "qhprice/error.hpp"
#include "qhprice/estimators.hpp"
#include "qhprice/evaluation.hpp"
#include "qhprice/portfolio.hpp"
#include "qhprice/synthetic.hpp"
#include "qhprice/transform.hpp"

using namespace qhprice;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "failed: " + what;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

int failures = 0;

void run(int id, const std::string& title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.note(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0 && secs > budget_s) {
    o.pass = false;
    o.note("runtime " + fmt(secs, 3) + " s over budget " + fmt(budget_s, 3) + " s");
  }
  if (!o.pass) ++failures;
  std::printf("criterion %d: %s  %s (%.2f s)%s%s\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), secs,
              o.detail.empty() ? "" : "  ", o.detail.c_str());
  std::fflush(stdout);
}

Eigen::MatrixXd gaussian(int n, int p, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// --- shared panels -------------------------------------------------------------

struct Recovery {
  ForecastPanel panel;
  double en_rmse = 0.0;
  double naive_rmse = 0.0;
};

Recovery& recovery() {
  static Recovery r = [] {
    SyntheticOptions s;
    s.kind = SyntheticKind::Linear;
    s.days = 200;
    s.seed = 2024;
    s.noise_sd = 2.0;
    s.proxy_sd = 1.0;
    const Dataset d = simulate_dataset(s);
    BacktestOptions o;
    o.plan.initial_train = {d.date_at(0), d.date_at(149)};
    o.plan.test_range = {d.date_at(150), d.date_at(199)};
    o.plan.refit_every = 5;
    o.models = {ModelSpec::parse("Naive_EXAA"), ModelSpec::parse("Expert_EN")};
    o.targets = {Target::QhAuction};
    o.transform_mode = TransformMode::Identity;
    Recovery out;
    out.panel = run_backtest(d, o).panel;
    out.en_rmse = error_metrics(out.panel.select("Expert_EN", Target::QhAuction)).rmse;
    out.naive_rmse = error_metrics(out.panel.select("Naive_EXAA", Target::QhAuction)).rmse;
    return out;
  }();
  return r;
}

struct Market2 {
  Dataset data;
  ForecastPanel panel;
};

// Realistic two-venue panel from a short rolling OLS backtest.
Market2& two_venue() {
  static Market2 m = [] {
    SyntheticOptions s;
    s.days = 75;
    s.seed = 99;
    Market2 out;
    out.data = simulate_dataset(s);
    BacktestOptions o;
    o.plan.initial_train = {out.data.date_at(0), out.data.date_at(44)};
    o.plan.test_range = {out.data.date_at(45), out.data.date_at(74)};
    o.plan.refit_every = 10;
    o.models = {ModelSpec::parse("Naive_EXAA"), ModelSpec::parse("Expert_LM"), ModelSpec::parse("Expert_LM_EXAA")};
    out.panel = run_backtest(out.data, o).panel;
    return out;
  }();
  return m;
}

// --- criteria -------------------------------------------------------------------

Outcome criterion1() {
  Outcome o;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (double c : {1.0 / 3.0, 1.0, 2.0}) {
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double z = u(rng);
      worst = std::max(worst, std::abs(z - mlog_inverse(mlog(z, c), c)));
    }
    o.check(worst < 1e-12, "c=" + fmt(c) + " max error " + fmt(worst));
    o.note("c=" + fmt(c, 3) + " max|dz|=" + fmt(worst, 3));
  }
  return o;
}

Outcome criterion2() {
  Outcome o;
  std::mt19937_64 rng(2);
  EnOptions tight;
  tight.tolerance = 1e-13;
  {
    const Eigen::MatrixXd x = gaussian(200, 10, rng);
    const Eigen::VectorXd y = x * Eigen::VectorXd::LinSpaced(10, -2, 2) + gaussian(200, 1, rng).col(0);
    const double diff = (fit_en(x, y, 0.0, tight) - solve_ols(x, y).beta).lpNorm<Eigen::Infinity>();
    o.check(diff < 1e-6, "lambda=0 vs OLS " + fmt(diff));
    o.note("(a) |EN0-OLS|=" + fmt(diff, 3));
    const double lm = lambda_max(x, y, 0.5);
    const bool zero = fit_en(x, y, lm).isZero(0.0) && fit_en(x, y, 3 * lm).isZero(0.0);
    o.check(zero, "lambda>=lambda_max not exactly zero");
    o.note(std::string("(b) zero at lambda_max: ") + (zero ? "yes" : "no"));
    const LambdaGrid grid = LambdaGrid::exponential(lm, 0.001, 50);
    const auto path = fit_en_path(x, y, grid);
    double worst = 0.0;
    for (std::size_t i = 0; i < path.size(); ++i) {
      // x_j'r/n against lambda[(1-a)b + a sgn(b)] on the objective's scale
      const Eigen::VectorXd g = x.transpose() * (y - x * path[i]) / 200.0;
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        const double b = path[i](j);
        const double l = grid.values[i];
        const double v = b != 0.0 ? std::abs(g(j) - l * (0.5 * b + 0.5 * (b > 0 ? 1 : -1)))
                                  : std::max(0.0, std::abs(g(j)) - 0.5 * l);
        worst = std::max(worst, v);
      }
    }
    o.check(worst < 1e-5, "KKT residual " + fmt(worst));
    o.note("(c) max KKT residual=" + fmt(worst, 3));
  }
  {
    const Eigen::MatrixXd x = gaussian(80, 3, rng);
    const Eigen::VectorXd y = x * Eigen::Vector3d(1.2, -0.6, 0.08) + 0.7 * gaussian(80, 1, rng).col(0);
    const double lm = lambda_max(x, y, 0.5);
    const LambdaGrid grid = LambdaGrid::exponential(lm, 0.001, 40);
    const auto path = fit_en_path(x, y, grid);
    double worst = 0.0;
    for (std::size_t k : {std::size_t{5}, std::size_t{20}, std::size_t{39}}) {
      // zooming grid search over the convex objective
      Eigen::Vector3d centre = Eigen::Vector3d::Zero();
      double half = 4.0;
      for (int round = 0; round < 32; ++round) {
        double best = INFINITY;
        Eigen::Vector3d arg = centre;
        for (int i = -8; i <= 8; ++i)
          for (int j = -8; j <= 8; ++j)
            for (int m = -8; m <= 8; ++m) {
              Eigen::Vector3d b = centre + half / 8.0 * Eigen::Vector3d(i, j, m);
              for (int a = 0; a < 3; ++a)
                if (std::abs(b(a)) < half / 16.0) b(a) = 0.0;
              const double f = en_objective(x, y, b, grid.values[k], 0.5);
              if (f < best) {
                best = f;
                arg = b;
              }
            }
        centre = arg;
        half *= 0.5;
      }
      worst = std::max(worst, (path[k] - centre).lpNorm<Eigen::Infinity>());
    }
    o.check(worst < 1e-4, "brute force gap " + fmt(worst));
    o.note("(d) |path-bruteforce|=" + fmt(worst, 3));
  }
  return o;
}

Outcome criterion3() {
  Outcome o;
  const Recovery& r = recovery();
  o.check(r.en_rmse >= 2.0 && r.en_rmse <= 2.3, "EN RMSE " + fmt(r.en_rmse) + " outside [2.0, 2.3]");
  o.check(r.naive_rmse > r.en_rmse, "Naive RMSE not above EN");
  o.note("EN RMSE=" + fmt(r.en_rmse, 4) + " Naive RMSE=" + fmt(r.naive_rmse, 4) + " slots=" +
         std::to_string(r.panel.select("Expert_EN", Target::QhAuction).size()));
  return o;
}

Outcome criterion4() {
  Outcome o;
  const int reps = 1000;
  std::mt19937_64 rng(4);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> n;
  int pt = 0, lw = 0;
  for (int k = 0; k < reps; ++k) {
    std::vector<int> a(500), b(500);
    for (int i = 0; i < 500; ++i) {
      a[static_cast<std::size_t>(i)] = coin(rng);
      b[static_cast<std::size_t>(i)] = coin(rng);
    }
    pt += pt_test(a, b).reject() ? 1 : 0;
    std::vector<double> x(500), y(500);
    for (int i = 0; i < 500; ++i) {
      x[static_cast<std::size_t>(i)] = 0.5 + n(rng);
      y[static_cast<std::size_t>(i)] = 1.0 + 2.0 * n(rng);
    }
    lw += sharpe_equality_pairwise(x, y).reject() ? 1 : 0;
  }
  const double pt_rate = pt / static_cast<double>(reps);
  const double lw_rate = lw / static_cast<double>(reps);
  o.check(std::abs(pt_rate - 0.05) <= 0.02, "PT size " + fmt(pt_rate));
  o.check(std::abs(lw_rate - 0.05) <= 0.02, "Sharpe test size " + fmt(lw_rate));

  bool exact = true;
  for (int k = 0; k < 20; ++k) {
    std::vector<double> e1(200), e2(200);
    for (std::size_t i = 0; i < 200; ++i) {
      e1[i] = n(rng) * 2;
      e2[i] = n(rng) + (k % 2 ? 0.3 : -0.3);
    }
    const TestResult ab = dm_test(loss_differential(e1, e2));
    const TestResult ba = dm_test(loss_differential(e2, e1));
    exact = exact && ab.statistic == -ba.statistic && ab.p_value == ba.p_value;
    exact = exact && (ab.statistic > 0) == (mean(loss_differential(e1, e2)) > 0);
    const TestResult same = dm_test(loss_differential(e1, e1));
    exact = exact && same.statistic == 0.0 && same.p_value == 1.0;
  }
  o.check(exact, "DM sign/antisymmetry");
  o.note("PT size=" + fmt(pt_rate, 3) + " Sharpe size=" + fmt(lw_rate, 3) + " DM exact=" + (exact ? "yes" : "no"));
  return o;
}

Outcome criterion5() {
  Outcome o;
  const Market2& m = two_venue();
  const SlotBook book = SlotBook::build(m.panel, &m.data);
  std::size_t checked = 0, interior = 0;
  double worst_cf = 0.0;
  for (const char* src : {"Expert_LM_EXAA", "Expert_LM"}) {
    const auto pb = perfect_strategy(book, Side::Buy);
    const auto ps = perfect_strategy(book, Side::Sell);
    const auto bb = base_strategy(book, src, Side::Buy);
    const auto bs = base_strategy(book, src, Side::Sell);
    for (std::size_t i = 0; i < book.size(); ++i) {
      o.check(pb.entries[i].price <= bb.entries[i].price, "Perfect_Buy > Base_Buy");
      o.check(ps.entries[i].price >= bs.entries[i].price, "Perfect_Sell < Base_Sell");
      ++checked;
    }
  }
  const auto& fc = book.forecasts.at("Expert_LM_EXAA");
  for (Side side : {Side::Buy, Side::Sell}) {
    const StrategyLedger mv = meanvar_strategy(book, m.data, "Expert_LM_EXAA", side, 45);
    for (std::size_t i = 0; i < mv.entries.size(); ++i) {
      const LedgerEntry& e = mv.entries[i];
      const double w1 = 1.0 - e.w2;
      o.check(e.w2 >= 0.0 && e.w2 <= 1.0 && w1 >= 0.0 && w1 + e.w2 == 1.0, "weight outside [0,1]");
      if (e.w2 > 0.0 && e.w2 < 1.0) {
        ++interior;
        const Moments mo = rolling_moments(m.data.series(Market::EpexQhAuction), m.data.series(Market::EpexQhIdVwap),
                                           e.slot.date, e.slot.qh, 45);
        const MeanVarInputs in{fc.first[i], fc.second[i], mo.var1, mo.var2, mo.cov, kDefaultGamma};
        worst_cf = std::max(worst_cf, std::abs(e.w2 - *meanvar_closed_form(in, side)));
      }
    }
  }
  const MeanVarInputs hand{30, 34, 4, 16, 2, 2};
  const double w = meanvar_weight(hand, Side::Sell);
  worst_cf = std::max(worst_cf, std::abs(w - 0.25));
  o.check(worst_cf < 1e-8, "closed-form gap " + fmt(worst_cf));
  o.note("slots=" + std::to_string(checked) + " interior weights=" + std::to_string(interior) +
         " max|w-w*|=" + fmt(worst_cf, 3) + " hand case w=" + fmt(w, 10));
  return o;
}

Outcome criterion6() {
  Outcome o;
  StrategyLedger bench{"bench", Side::Buy, {}, {}};
  StrategyLedger strat{"strat", Side::Buy, {}, {}};
  for (int t = 0; t < 601; ++t) {
    for (int q = 1; q <= 96; ++q) {
      const SlotKey k{make_date(2016, 10, 7) + std::chrono::days{t}, q};
      const double p = 30.0 + (q % 9);
      bench.entries.push_back({k, Venue::Auction, 0.0, p + 0.75, 50, 0});
      strat.entries.push_back({k, Venue::Intraday, 1.0, p, 50, 0});
    }
  }
  const double d50 = account_delta(strat, bench, 50);
  const double expected = 0.75 * 601 * 96 * 50 * 0.25;
  o.check(std::abs(d50 - 540900.0) < 1e-6 && expected == 540900.0, "delta " + fmt(d50, 12));
  bool linear = true;
  for (double v : {0.0, 1.0, 25.0, 100.0, 333.0}) {
    linear = linear && std::abs(account_delta(strat, bench, v) - d50 * v / 50.0) < 1e-6;
  }
  o.check(linear, "delta not linear in volume");
  o.note("delta=" + fmt(d50, 12) + " EUR");
  return o;
}

Outcome criterion7() {
  Outcome o;
  const Market2& m = two_venue();
  ForecastPanel perfect = m.panel;
  for (auto& r : perfect.records) r.prediction = r.realized;
  const DirectionalAccuracy one = dacc(perfect, "Expert_LM_EXAA");
  o.check(one.overall == 1.0, "perfect DAcc " + fmt(one.overall));
  const SlotBook book = SlotBook::build(m.panel, &m.data);
  bool equal = true;
  std::string vals;
  // the naive model forecasts both venues with one price, so it never picks a side
  for (const char* model : {"Expert_LM_EXAA", "Expert_LM"}) {
    const DirectionalAccuracy ev = dacc(m.panel, model);
    for (Side side : {Side::Buy, Side::Sell}) {
      const DirectionalAccuracy pf = base_choice_accuracy(book, model, side);
      equal = equal && pf.overall == ev.overall;
    }
    vals += std::string(model) + "=" + fmt(ev.overall, 6) + " ";
  }
  o.check(equal, "Base venue accuracy differs from DAcc");
  o.note("perfect=" + fmt(one.overall) + " " + vals);
  return o;
}

Outcome criterion8() {
  Outcome o;
  std::vector<const ForecastPanel*> panels{&recovery().panel, &two_venue().panel};
  ForecastPanel noisy = two_venue().panel;
  std::mt19937_64 rng(8);
  std::student_t_distribution<double> heavy(3.0);
  for (auto& r : noisy.records) r.prediction = r.realized + 5 * heavy(rng);
  panels.push_back(&noisy);
  double worst = 0.0;
  int pairs = 0;
  for (const ForecastPanel* p : panels) {
    for (const auto& model : p->models()) {
      for (Target t : p->targets()) {
        const auto rows = p->select(model, t);
        if (rows.empty()) continue;
        const ErrorMetrics all = error_metrics(rows);
        o.check(all.rmse >= all.mae, model + " RMSE < MAE");
        double weighted = 0.0;
        std::size_t n = 0;
        for (const auto& [qh, e] : per_qh_metrics(rows)) {
          o.check(e.rmse >= e.mae, model + " qh RMSE < MAE");
          weighted += e.rmse * e.rmse * static_cast<double>(e.n);
          n += e.n;
        }
        const double rel = std::abs(weighted / static_cast<double>(n) - all.rmse * all.rmse) / (all.rmse * all.rmse);
        worst = std::max(worst, rel);
        ++pairs;
      }
    }
  }
  o.check(worst < 1e-12, "RMSE decomposition relative gap " + fmt(worst));
  o.note(std::to_string(pairs) + " model/target panels, max relative gap " + fmt(worst, 3));
  return o;
}

// --- tier 2 ---------------------------------------------------------------------

int tier2() {
  const char* dir = std::getenv("QHPRICE_REFERENCE_DATA");
  if (!dir || !*dir) {
    std::printf("tier 2 skipped: QHPRICE_REFERENCE_DATA not set\n");
    return 77;
  }
  int refit = 7;
  if (const char* r = std::getenv("QHPRICE_REFIT_EVERY")) refit = std::max(1, std::atoi(r));
  const Dataset data = load_dataset(dir);
  BacktestOptions o;
  o.plan.refit_every = refit;
  o.transform_mode = TransformMode::FullPeriod;
  o.models = {ModelSpec::parse("Naive_EXAA"), ModelSpec::parse("Expert_LM_EXAA"), ModelSpec::parse("Expert_EN"),
              ModelSpec::parse("Expert_EN_EXAA")};
  if (const char* j = std::getenv("QHPRICE_JOBS")) o.jobs = std::max(1, std::atoi(j));
  const auto t0 = std::chrono::steady_clock::now();
  const BacktestResult result = run_backtest(data, o);
  std::printf("tier 2 backtest: refit_every=%d, %.0f s, %zu rows, %zu skips\n", refit,
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(),
              result.panel.records.size(), result.panel.skips.size());
  const ForecastPanel& panel = result.panel;
  const SlotBook book = SlotBook::build(panel, &data);

  run(9, "naive and perfect average prices on the reference dataset", 0, [&] {
    Outcome out;
    const std::vector<std::pair<std::string, std::pair<StrategyLedger, double>>> rows{
        {"Naive_EXAA", {naive_strategy(book, Venue::Exaa), 34.95}},
        {"Naive_AUQH", {naive_strategy(book, Venue::Auction), 34.66}},
        {"Naive_IDQH", {naive_strategy(book, Venue::Intraday), 34.81}},
        {"Perfect_Buy", {perfect_strategy(book, Side::Buy), 30.74}},
        {"Perfect_Sell", {perfect_strategy(book, Side::Sell), 38.73}},
    };
    for (const auto& [name, pair] : rows) {
      const double avg = mean(pair.first.prices());
      out.check(std::abs(avg - pair.second) <= 0.20, name + " " + fmt(avg, 5) + " vs " + fmt(pair.second, 4));
      out.note(name + "=" + fmt(avg, 5));
    }
    return out;
  });
  run(10, "EXAA-enriched Base ordering and high/low spread", 0, [&] {
    Outcome out;
    const double buy = mean(base_strategy(book, "Expert_EN", Side::Buy).prices());
    const double sell = mean(base_strategy(book, "Expert_EN", Side::Sell).prices());
    const double buy_x = mean(base_strategy(book, "Expert_EN_EXAA", Side::Buy).prices());
    const double sell_x = mean(base_strategy(book, "Expert_EN_EXAA", Side::Sell).prices());
    out.check(buy_x <= buy, "Base_Buy_EXAA above Base_Buy");
    out.check(sell_x >= sell, "Base_Sell_EXAA below Base_Sell");
    const double spread = sell_x - buy_x;
    out.check(std::abs(spread - 0.76) <= 0.15, "spread " + fmt(spread, 4));
    out.note("Base_Buy=" + fmt(buy, 5) + " Base_Buy_EXAA=" + fmt(buy_x, 5) + " Base_Sell=" + fmt(sell, 5) +
             " Base_Sell_EXAA=" + fmt(sell_x, 5) + " spread=" + fmt(spread, 4));
    return out;
  });
  run(11, "model ordering on QH auction RMSE", 0, [&] {
    Outcome out;
    const double en = rmse(panel, "Expert_EN_EXAA", Target::QhAuction);
    const double lm = rmse(panel, "Expert_LM_EXAA", Target::QhAuction);
    const double naive = rmse(panel, "Naive_EXAA", Target::QhAuction);
    out.check(en < lm && lm < naive, "ordering EN < LM < Naive");
    out.check(en <= 0.85 * naive, "EN improvement " + fmt(1 - en / naive, 3));
    out.note("EN=" + fmt(en, 5) + " LM=" + fmt(lm, 5) + " Naive=" + fmt(naive, 5));
    return out;
  });
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1 && std::strcmp(argv[1], "--tier2") == 0) {
    try {
      return tier2();
    } catch (const std::exception& e) {
      std::printf("tier 2 error: %s\n", e.what());
      return 1;
    }
  }
  run(1, "mlog roundtrip on 10,000 values for c in {1/3, 1, 2}", 1.0, criterion1);
  run(2, "elastic-net correctness (OLS limit, lambda_max, KKT, brute force)", 30.0, criterion2);
  run(3, "backtest recovery on a linear DGP", 120.0, criterion3);
  run(4, "PT and Sharpe test size, DM antisymmetry", 120.0, criterion4);
  run(5, "portfolio sandwich and mean-variance weights", 0, criterion5);
  run(6, "accounting identity 540,900 EUR and volume linearity", 0, criterion6);
  run(7, "DAcc consistency between evaluation and Base venue choice", 0, criterion7);
  run(8, "RMSE >= MAE and per-qh decomposition", 0, criterion8);
  std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}

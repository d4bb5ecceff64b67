#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "qhprice/backtest.hpp"
#include "qhprice/error.hpp"
#include "qhprice/evaluation.hpp"
#include "qhprice/synthetic.hpp"

using namespace qhprice;
using std::chrono::days;

namespace {

RollingPlan small_plan(const Dataset& d, int train_days, int test_days, int refit = 1) {
  RollingPlan p;
  p.initial_train = {d.date_at(0), d.date_at(train_days - 1)};
  p.test_range = {d.date_at(train_days), d.date_at(train_days + test_days - 1)};
  p.refit_every = refit;
  return p;
}

const Dataset& realistic() {
  static const Dataset d = [] {
    SyntheticOptions o;
    o.days = 50;
    o.seed = 21;
    return simulate_dataset(o);
  }();
  return d;
}

std::string panel_text(const ForecastPanel& p) {
  std::ostringstream out;
  write_panel_csv(p, out);
  return out.str();
}

}  // namespace

TEST(RollingPlan, DefaultsAndValidation) {
  RollingPlan p;
  EXPECT_EQ(p.initial_train.first, make_date(2015, 10, 8));
  EXPECT_EQ(p.initial_train.last, make_date(2016, 10, 6));
  EXPECT_EQ(p.test_range.first, make_date(2016, 10, 7));
  EXPECT_EQ(p.test_range.last, make_date(2018, 5, 31));
  EXPECT_EQ(p.window_policy, WindowPolicy::Sliding);
  EXPECT_NO_THROW(p.validate());
  RollingPlan bad = p;
  bad.initial_train.last = make_date(2016, 10, 7);
  EXPECT_THROW(bad.validate(), Error);
  bad = p;
  bad.initial_train = {make_date(2016, 9, 10), make_date(2016, 10, 6)};
  EXPECT_THROW(bad.validate(), Error);
  bad = p;
  bad.refit_every = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(RollingPlan, WindowsAndAnchors) {
  RollingPlan p;
  p.refit_every = 7;
  EXPECT_EQ(p.anchor_for(make_date(2016, 10, 7)), make_date(2016, 10, 7));
  EXPECT_EQ(p.anchor_for(make_date(2016, 10, 13)), make_date(2016, 10, 7));
  EXPECT_EQ(p.anchor_for(make_date(2016, 10, 14)), make_date(2016, 10, 14));
  EXPECT_THROW(p.anchor_for(make_date(2016, 10, 6)), Error);
  const int length = p.initial_train.days();
  for (int k = 0; k < 600; k += 37) {
    const Date a = p.test_range.first + days{k};
    const DateRange w = p.window_for(a);
    EXPECT_EQ(w.days(), length);
    EXPECT_EQ(w.last, a - days{1});
  }
  p.window_policy = WindowPolicy::Expanding;
  const DateRange w = p.window_for(make_date(2017, 1, 1));
  EXPECT_EQ(w.first, p.initial_train.first);
  EXPECT_EQ(w.last, make_date(2016, 12, 31));
}

TEST(ModelSpec, Ids) {
  for (const char* id : {"Naive_EXAA", "Expert_LM", "Expert_EN", "Expert_EN_EXAA", "Full_LM_EXAA", "Full_EN"}) {
    EXPECT_EQ(ModelSpec::parse(id).id(), id);
  }
  EXPECT_TRUE(ModelSpec::parse("Full_EN_EXAA").exaa_enriched);
  EXPECT_THROW(ModelSpec::parse("Expert"), Error);
  EXPECT_THROW(ModelSpec::parse("Expert_EN_FOO"), Error);
  EXPECT_THROW(ModelSpec::parse("Other_EN"), Error);
}

TEST(Backtest, CountsRows) {
  const Dataset& d = realistic();
  BacktestOptions o;
  o.plan = small_plan(d, 40, 2, 2);
  o.models = {ModelSpec::parse("Naive_EXAA"), ModelSpec::parse("Expert_LM")};
  o.targets = {Target::QhAuction};
  const BacktestResult r = run_backtest(d, o);
  EXPECT_EQ(r.panel.records.size(), 2u * 2u * 96u);
  EXPECT_TRUE(r.panel.skips.empty());
  EXPECT_EQ(r.fits, 96u);
  for (const auto& rec : r.panel.records) {
    EXPECT_TRUE(std::isfinite(rec.prediction));
    EXPECT_EQ(rec.realized, d.series(Market::EpexQhAuction).at(rec.date, rec.qh - 1));
  }
}

TEST(Backtest, NaiveIsExactWhenTargetEqualsExaa) {
  SyntheticOptions s;
  s.kind = SyntheticKind::Linear;
  s.days = 40;
  s.noise_sd = 0.0;
  s.proxy_sd = 0.0;
  const Dataset d = simulate_dataset(s);
  BacktestOptions o;
  o.plan = small_plan(d, 32, 5);
  o.models = {ModelSpec::parse("Naive_EXAA")};
  o.targets = {Target::QhAuction};
  const BacktestResult r = run_backtest(d, o);
  ASSERT_EQ(r.panel.records.size(), 5u * 96u);
  for (const auto& rec : r.panel.records) EXPECT_EQ(rec.prediction, rec.realized);
}

TEST(Backtest, LinearDgpElasticNetBeatsNoisyProxy) {
  SyntheticOptions s;
  s.kind = SyntheticKind::Linear;
  s.days = 130;
  s.seed = 5;
  s.noise_sd = 2.0;
  s.proxy_sd = 2.0;
  const Dataset d = simulate_dataset(s);
  BacktestOptions o;
  o.plan = small_plan(d, 100, 30, 30);
  o.models = {ModelSpec::parse("Naive_EXAA"), ModelSpec::parse("Expert_EN")};
  o.targets = {Target::QhAuction};
  o.transform_mode = TransformMode::Identity;
  o.quarter_hours = {5, 30, 50, 80};
  o.en.grid_size = 200;
  const BacktestResult r = run_backtest(d, o);
  const double en = error_metrics(r.panel.select("Expert_EN", Target::QhAuction)).rmse;
  const double naive = error_metrics(r.panel.select("Naive_EXAA", Target::QhAuction)).rmse;
  EXPECT_NEAR(en, 2.0, 0.15 * 2.0);
  EXPECT_LT(en, naive);
}

TEST(Backtest, NoLookaheadAudit) {
  const Dataset& d = realistic();
  BacktestOptions o;
  o.plan = small_plan(d, 40, 2, 2);
  o.models = {ModelSpec::parse("Expert_LM_EXAA"), ModelSpec::parse("Full_LM_EXAA")};
  o.quarter_hours = {1, 40};
  o.audit = true;
  const BacktestResult r = run_backtest(d, o);
  EXPECT_GT(r.audit.reads, 0u);
  EXPECT_EQ(r.audit.violations, 0u);
}

TEST(Backtest, DeterministicAcrossRunsAndThreads) {
  const Dataset& d = realistic();
  BacktestOptions o;
  o.plan = small_plan(d, 40, 3, 3);
  o.models = {ModelSpec::parse("Expert_EN_EXAA")};
  o.quarter_hours = {10, 60};
  o.en.grid_size = 100;
  o.en.cv_mode = CvMode::Shuffled;
  o.en.seed = 77;
  const std::string a = panel_text(run_backtest(d, o).panel);
  o.jobs = 3;
  const std::string b = panel_text(run_backtest(d, o).panel);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, panel_text(run_backtest(d, o).panel));
}

TEST(Backtest, SkipsMissingDays) {
  SyntheticOptions s;
  s.days = 50;
  s.missing_days = {42};
  s.missing_markets = {Market::EpexQhAuction};
  const Dataset d = simulate_dataset(s);
  BacktestOptions o;
  o.plan = small_plan(d, 40, 4, 4);
  o.models = {ModelSpec::parse("Naive_EXAA"), ModelSpec::parse("Expert_LM")};
  o.targets = {Target::QhAuction};
  const BacktestResult r = run_backtest(d, o);
  EXPECT_EQ(r.panel.records.size(), 3u * 2u * 96u);
  ASSERT_EQ(r.panel.skips.size(), 2u);
  for (const auto& sk : r.panel.skips) {
    EXPECT_EQ(sk.date, d.date_at(42));
    EXPECT_FALSE(sk.reason.empty());
  }
  // every (day, model) has either 96 rows or a skip
  for (int t = 40; t < 44; ++t) {
    for (const char* m : {"Naive_EXAA", "Expert_LM"}) {
      const auto rows = std::count_if(r.panel.records.begin(), r.panel.records.end(), [&](const ForecastRecord& x) {
        return x.date == d.date_at(t) && x.model == m;
      });
      const auto skipped = std::count_if(r.panel.skips.begin(), r.panel.skips.end(), [&](const SkipRecord& x) {
        return x.date == d.date_at(t) && x.model == m;
      });
      EXPECT_TRUE((rows == 96 && skipped == 0) || (rows == 0 && skipped == 1)) << t << " " << m;
    }
  }
  const auto back = skips_from_json(skips_to_json(r.panel.skips));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].reason, r.panel.skips[0].reason);
}

TEST(Backtest, ShortWindowAborts) {
  const Dataset& d = realistic();
  BacktestOptions o;
  o.plan = small_plan(d, 20, 2);
  o.models = {ModelSpec::parse("Expert_LM")};
  try {
    run_backtest(d, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
  o.plan = small_plan(d, 40, 20);  // test range beyond data
  EXPECT_THROW(run_backtest(d, o), Error);
}

TEST(Backtest, HooksResumeAndReportDays) {
  const Dataset& d = realistic();
  BacktestOptions o;
  o.plan = small_plan(d, 40, 3);
  o.models = {ModelSpec::parse("Naive_EXAA")};
  BacktestHooks hooks;
  hooks.completed_days = {d.date_at(40)};
  std::vector<Date> seen;
  hooks.on_day = [&](Date day, const std::vector<ForecastRecord>& rows, const std::vector<SkipRecord>&) {
    seen.push_back(day);
    EXPECT_EQ(rows.size(), 2u * 96u);
  };
  const BacktestResult r = run_backtest(d, o, hooks);
  EXPECT_EQ(seen, (std::vector<Date>{d.date_at(41), d.date_at(42)}));
  EXPECT_EQ(r.panel.records.size(), 2u * 2u * 96u);
}

TEST(Panel, ExportIsDeterministicAndReadable) {
  const Dataset& d = realistic();
  BacktestOptions o;
  o.plan = small_plan(d, 40, 1);
  o.models = {ModelSpec::parse("Naive_EXAA"), ModelSpec::parse("Expert_LM")};
  const ForecastPanel p = run_backtest(d, o).panel;
  const std::string text = panel_text(p);
  EXPECT_EQ(text.substr(0, text.find('\n')), "date,qh,target,model,prediction,realized");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 2 * 2 * 96);
  std::istringstream in(text);
  const ForecastPanel back = read_panel_csv(in);
  ASSERT_EQ(back.records.size(), p.records.size());
  for (std::size_t i = 0; i < p.records.size(); ++i) {
    EXPECT_EQ(back.records[i].prediction, p.records[i].prediction);
    EXPECT_EQ(back.records[i].realized, p.records[i].realized);
    EXPECT_EQ(back.records[i].model, p.records[i].model);
  }
  EXPECT_EQ(panel_text(back), text);
  const auto rows = p.select("Expert_LM", Target::IdVwap);
  EXPECT_EQ(rows.size(), 96u);
  for (int q = 0; q < 96; ++q) EXPECT_EQ(rows[static_cast<std::size_t>(q)].qh, q + 1);
}

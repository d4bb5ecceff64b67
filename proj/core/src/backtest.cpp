#include "qhprice/backtest.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "qhprice/csv.hpp"
#include "qhprice/error.hpp"

namespace qhprice {

namespace {

// Runs fn(0..n-1) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string target_label(Target t) { return std::string(to_string(t)); }

[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context) {
  fail(e.kind(), context + ": " + e.what());
}

struct Cell {
  Target target;
  std::size_t model;  // index into options.models
  int qh;
};

bool record_less(const ForecastRecord& a, const ForecastRecord& b) {
  return std::tie(a.date, a.target, a.model, a.qh) < std::tie(b.date, b.target, b.model, b.qh);
}

}  // namespace

std::string_view to_string(WindowPolicy p) { return p == WindowPolicy::Sliding ? "sliding" : "expanding"; }

WindowPolicy window_policy_from_string(std::string_view text) {
  if (text == "sliding") return WindowPolicy::Sliding;
  if (text == "expanding") return WindowPolicy::Expanding;
  fail(ErrorKind::Config, "unknown window policy '" + std::string(text) + "'");
}

void RollingPlan::validate() const {
  if (initial_train.empty()) fail(ErrorKind::Config, "initial training range is empty");
  if (test_range.empty()) fail(ErrorKind::Config, "test range is empty");
  if (!(initial_train.last < test_range.first)) {
    fail(ErrorKind::Config, "training window must end before the first test day");
  }
  if (refit_every < 1) fail(ErrorKind::Config, "refit_every must be >= 1");
  if (initial_train.days() < kMinWindowDays) {
    fail(ErrorKind::Config, "training window of " + std::to_string(initial_train.days()) +
                                " days is shorter than " + std::to_string(kMinWindowDays));
  }
}

Date RollingPlan::anchor_for(Date day) const {
  const auto k = (day - test_range.first).count();
  if (k < 0) fail(ErrorKind::Config, format_date(day) + " precedes the test range");
  return test_range.first + std::chrono::days{k / refit_every * refit_every};
}

DateRange RollingPlan::window_for(Date anchor) const {
  const std::chrono::days shift = anchor - test_range.first;
  const Date first = window_policy == WindowPolicy::Sliding ? initial_train.first + shift : initial_train.first;
  return {first, initial_train.last + shift};
}

std::string ModelSpec::id() const {
  if (kind == ModelKind::NaiveEXAA) return "Naive_EXAA";
  return std::string(to_string(features)) + "_" + std::string(to_string(kind)) + (exaa_enriched ? "_EXAA" : "");
}

ModelSpec ModelSpec::parse(std::string_view id) {
  if (id == "Naive_EXAA") return {ModelKind::NaiveEXAA, FeatureSet::Expert, false};
  std::vector<std::string> parts;
  for (std::size_t start = 0;;) {
    const std::size_t pos = id.find('_', start);
    parts.emplace_back(id.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (parts.size() < 2 || parts.size() > 3 || (parts.size() == 3 && parts[2] != "EXAA")) {
    fail(ErrorKind::Config, "malformed model id '" + std::string(id) + "'");
  }
  ModelSpec spec;
  spec.features = feature_set_from_string(parts[0]);
  spec.kind = model_kind_from_string(parts[1]);
  if (spec.kind == ModelKind::NaiveEXAA) fail(ErrorKind::Config, "malformed model id '" + std::string(id) + "'");
  spec.exaa_enriched = parts.size() == 3;
  return spec;
}

void ForecastPanel::sort() {
  std::sort(records.begin(), records.end(), record_less);
  std::sort(skips.begin(), skips.end(), [](const SkipRecord& a, const SkipRecord& b) {
    return std::tie(a.date, a.target, a.model) < std::tie(b.date, b.target, b.model);
  });
}

std::vector<std::string> ForecastPanel::models() const {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.model);
  return {ids.begin(), ids.end()};
}

std::vector<Target> ForecastPanel::targets() const {
  std::set<Target> ts;
  for (const auto& r : records) ts.insert(r.target);
  return {ts.begin(), ts.end()};
}

std::vector<ForecastRecord> ForecastPanel::select(std::string_view model, Target target) const {
  std::vector<ForecastRecord> out;
  for (const auto& r : records) {
    if (r.target == target && r.model == model) out.push_back(r);
  }
  return out;
}

BacktestResult run_backtest(const Dataset& dataset, const BacktestOptions& options, const BacktestHooks& hooks) {
  const auto started = std::chrono::steady_clock::now();
  const RollingPlan& plan = options.plan;
  plan.validate();
  if (options.models.empty()) fail(ErrorKind::Config, "no models requested");
  if (options.targets.empty()) fail(ErrorKind::Config, "no targets requested");

  std::vector<int> qhs = options.quarter_hours;
  if (qhs.empty()) {
    for (int q = 1; q <= kSlotsPerDay; ++q) qhs.push_back(q);
  }
  for (int q : qhs) {
    if (q < 1 || q > kSlotsPerDay) fail(ErrorKind::Config, "quarter-hour " + std::to_string(q) + " outside 1..96");
  }

  // Inputs are checked before any fitting.
  for (const ModelSpec& m : options.models) {
    for (Target t : options.targets) {
      std::vector<Market> needed = {target_market(t), Market::ExaaQh};
      if (m.kind != ModelKind::NaiveEXAA) needed = FeatureBuilder::required_markets(m.feature_kind(t));
      for (Market mk : needed) {
        if (!dataset.has(mk)) {
          fail(ErrorKind::Data, "model " + m.id() + " for " + target_label(t) + " requires series " +
                                    std::string(to_string(mk)));
        }
      }
    }
  }
  const DateRange first_window = plan.window_for(plan.test_range.first);
  const DateRange last_window = plan.window_for(plan.anchor_for(plan.test_range.last));
  if (!dataset.range().contains(first_window.first) || !dataset.range().contains(plan.test_range.last)) {
    fail(ErrorKind::Data, "dataset " + format_date(dataset.range().first) + ".." + format_date(dataset.range().last) +
                              " does not cover the plan " + format_date(first_window.first) + ".." +
                              format_date(plan.test_range.last));
  }
  (void)last_window;

  std::vector<Cell> cells;
  for (Target t : options.targets) {
    for (std::size_t m = 0; m < options.models.size(); ++m) {
      if (options.models[m].kind == ModelKind::NaiveEXAA) continue;
      for (int q : qhs) cells.push_back({t, m, q});
    }
  }

  BacktestResult result;
  std::mutex audit_mutex;
  auto make_observer = [&](AuditReport& local) {
    return ReadObserver([&local](const FeatureRead& read) {
      ++local.reads;
      if (!read.column->source) return;
      const int lag = static_cast<int>((read.row_day - read.delivery_day).count());
      if (!decision_time_guard(*read.column->source, lag)) {
        ++local.violations;
        if (local.examples.size() < 5) {
          local.examples.push_back(read.column->name + " for " + format_date(read.row_day) + " read delivery day " +
                                   format_date(read.delivery_day));
        }
      }
    });
  };
  auto merge_audit = [&](const AuditReport& local) {
    std::lock_guard lock(audit_mutex);
    result.audit.reads += local.reads;
    result.audit.violations += local.violations;
    for (const auto& e : local.examples) {
      if (result.audit.examples.size() < 5) result.audit.examples.push_back(e);
    }
  };

  std::optional<Date> current_anchor;
  std::unique_ptr<FeatureBuilder> builder;
  std::vector<FittedModel> fitted(cells.size());

  for (Date d = plan.test_range.first; d <= plan.test_range.last; d += std::chrono::days{1}) {
    if (hooks.completed_days.count(d)) continue;
    const Date anchor = plan.anchor_for(d);
    if (!current_anchor || *current_anchor != anchor) {
      const DateRange window = plan.window_for(anchor);
      try {
        builder = std::make_unique<FeatureBuilder>(dataset, window,
                                                   FeatureBuilder::Options{options.transform_mode, options.mlog_c});
      } catch (const Error& e) {
        rethrow_with_context(e, "window " + format_date(window.first) + ".." + format_date(window.last));
      }
      parallel_for(cells.size(), options.jobs, [&](std::size_t i) {
        const Cell& cell = cells[i];
        const ModelSpec& spec = options.models[cell.model];
        AuditReport local;
        const ReadObserver observer = make_observer(local);
        try {
          const DesignMatrix design =
              builder->design(spec.feature_kind(cell.target), cell.qh, options.audit ? &observer : nullptr);
          fitted[i] = spec.kind == ModelKind::LM ? fit_ols(design) : fit_en_model(design, options.en);
        } catch (const Error& e) {
          rethrow_with_context(e, "fit anchored " + format_date(anchor) + " " + spec.id() + " " +
                                      target_label(cell.target) + " qh " + std::to_string(cell.qh));
        }
        if (options.audit) merge_audit(local);
      });
      current_anchor = anchor;
      result.fits += cells.size();
      if (hooks.on_fit) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
          hooks.on_fit({anchor, cells[i].target, options.models[cells[i].model].id(), fitted[i]});
        }
      }
    }

    const int t = *dataset.index_of(d);
    std::vector<ForecastRecord> day_records;
    std::vector<SkipRecord> day_skips;
    std::vector<char> usable(cells.size(), 1);
    for (Target target : options.targets) {
      const QhSeries& realized = dataset.series(target_market(target));
      const TransformSpec& target_spec = builder->spec(target_market(target));
      for (std::size_t m = 0; m < options.models.size(); ++m) {
        const ModelSpec& spec = options.models[m];
        std::string reason;
        if (realized.day_missing(t)) {
          reason = "no realized " + target_label(target) + " prices";
        } else if (spec.kind == ModelKind::NaiveEXAA) {
          if (dataset.series(Market::ExaaQh).day_missing(t)) reason = "no EXAA_QH prices";
        } else if (t < 7) {
          reason = "no lag-7 history";
        } else if (!builder->day_usable(spec.feature_kind(target), t)) {
          reason = "missing input series for " + spec.feature_kind(target).label();
        }
        if (!reason.empty()) {
          day_skips.push_back({d, target, spec.id(), reason});
          for (std::size_t i = 0; i < cells.size(); ++i) {
            if (cells[i].target == target && cells[i].model == m) usable[i] = 0;
          }
          continue;
        }
        if (spec.kind == ModelKind::NaiveEXAA) {
          for (int q : qhs) {
            const double p = naive_exaa(dataset, d, q);
            day_records.push_back({d, q, target, spec.id(), p, realized.value(t, q - 1), forward(p, target_spec)});
          }
        }
      }
    }

    std::vector<ForecastRecord> cell_records(cells.size());
    parallel_for(cells.size(), options.jobs, [&](std::size_t i) {
      if (!usable[i]) return;
      const Cell& cell = cells[i];
      const ModelSpec& spec = options.models[cell.model];
      AuditReport local;
      const ReadObserver observer = make_observer(local);
      try {
        const Eigen::VectorXd row =
            builder->row(spec.feature_kind(cell.target), cell.qh, d, options.audit ? &observer : nullptr);
        const double z = predict(fitted[i], row);
        const Market tm = target_market(cell.target);
        cell_records[i] = {d,
                           cell.qh,
                           cell.target,
                           spec.id(),
                           inverse(z, builder->spec(tm)),
                           dataset.series(tm).value(t, cell.qh - 1),
                           z};
      } catch (const Error& e) {
        rethrow_with_context(e, "predict " + format_date(d) + " " + spec.id() + " " + target_label(cell.target) +
                                    " qh " + std::to_string(cell.qh));
      }
      if (options.audit) merge_audit(local);
    });
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (usable[i]) day_records.push_back(std::move(cell_records[i]));
    }
    std::sort(day_records.begin(), day_records.end(), record_less);
    if (hooks.on_day) hooks.on_day(d, day_records, day_skips);
    result.panel.records.insert(result.panel.records.end(), day_records.begin(), day_records.end());
    result.panel.skips.insert(result.panel.skips.end(), day_skips.begin(), day_skips.end());
  }
  result.panel.sort();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

void write_panel_csv(const ForecastPanel& panel, std::ostream& out) {
  out << "date,qh,target,model,prediction,realized\n";
  for (const auto& r : panel.records) {
    out << format_date(r.date) << ',' << r.qh << ',' << to_string(r.target) << ',' << r.model << ','
        << csv::format_double(r.prediction) << ',' << csv::format_double(r.realized) << '\n';
  }
}

void export_panel(const ForecastPanel& panel, const std::string& path) {
  if (panel.records.empty()) fail(ErrorKind::Data, "refusing to export an empty panel to " + path);
  std::ostringstream out;
  write_panel_csv(panel, out);
  csv::write_text_file(path, out.str());
}

ForecastPanel read_panel_csv(std::istream& in, const std::string& source) {
  csv::LineReader reader(in);
  auto where = [&] { return source + ":" + std::to_string(reader.line_number()); };
  std::string line;
  if (!reader.next(line)) fail(ErrorKind::Parse, source + ": empty panel file");
  if (line != "date,qh,target,model,prediction,realized") {
    fail(ErrorKind::Schema, source + ": unexpected panel header '" + line + "'");
  }
  ForecastPanel panel;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto fields = csv::split(line);
    if (fields.size() != 6) fail(ErrorKind::Parse, where() + ": expected 6 fields");
    ForecastRecord r;
    try {
      r.date = parse_date(fields[0]);
    } catch (const Error&) {
      fail(ErrorKind::Parse, where() + ": bad date '" + std::string(fields[0]) + "'");
    }
    r.qh = csv::parse_int(fields[1], where());
    if (r.qh < 1 || r.qh > kSlotsPerDay) fail(ErrorKind::Parse, where() + ": qh outside 1..96");
    try {
      r.target = target_from_string(fields[2]);
    } catch (const Error&) {
      fail(ErrorKind::Parse, where() + ": unknown target '" + std::string(fields[2]) + "'");
    }
    r.model = std::string(fields[3]);
    const auto p = csv::parse_double(fields[4], where());
    const auto y = csv::parse_double(fields[5], where());
    if (!p || !y) fail(ErrorKind::Parse, where() + ": missing prediction or realized value");
    r.prediction = *p;
    r.realized = *y;
    r.prediction_transformed = std::numeric_limits<double>::quiet_NaN();
    panel.records.push_back(std::move(r));
  }
  panel.sort();
  return panel;
}

ForecastPanel load_panel(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open panel " + path);
  return read_panel_csv(in, path);
}

nlohmann::json skips_to_json(const std::vector<SkipRecord>& skips) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : skips) {
    out.push_back({{"date", format_date(s.date)},
                   {"target", target_label(s.target)},
                   {"model", s.model},
                   {"reason", s.reason}});
  }
  return out;
}

std::vector<SkipRecord> skips_from_json(const nlohmann::json& j) {
  std::vector<SkipRecord> out;
  try {
    for (const auto& s : j) {
      out.push_back({parse_date(s.at("date").get<std::string>()), target_from_string(s.at("target").get<std::string>()),
                     s.at("model").get<std::string>(), s.at("reason").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed skip log: ") + e.what());
  }
  return out;
}

}  // namespace qhprice

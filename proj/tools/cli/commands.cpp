#include "cli/commands.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "qhprice/csv.hpp"
#include "qhprice/error.hpp"
#include "qhprice/evaluation.hpp"
#include "qhprice/portfolio.hpp"

namespace qhprice::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCheckpointHeader = "date,qh,target,model,prediction,realized,prediction_transformed";

std::vector<Market> required_markets(const BacktestOptions& bt) {
  std::set<Market> out;
  for (const ModelSpec& m : bt.models) {
    for (Target t : bt.targets) {
      out.insert(target_market(t));
      out.insert(Market::ExaaQh);
      if (m.kind != ModelKind::NaiveEXAA) {
        for (Market mk : FeatureBuilder::required_markets(m.feature_kind(t))) out.insert(mk);
      }
    }
  }
  return {out.begin(), out.end()};
}

void write_json(const fs::path& path, const json& j) { csv::write_text_file(path, j.dump(2) + "\n"); }

std::string num(double v) { return csv::format_double(v); }

std::string checkpoint_row(const ForecastRecord& r) {
  std::ostringstream out;
  out << format_date(r.date) << ',' << r.qh << ',' << to_string(r.target) << ',' << r.model << ','
      << num(r.prediction) << ',' << num(r.realized) << ',' << num(r.prediction_transformed) << '\n';
  return out.str();
}

struct Checkpoint {
  fs::path dir;
  std::set<Date> days;
  std::vector<ForecastRecord> records;
  std::vector<SkipRecord> skips;
};

Checkpoint open_checkpoint(const fs::path& dir, const std::string& hash, bool fresh, std::ostream& log) {
  Checkpoint cp;
  cp.dir = dir;
  const fs::path meta = dir / "meta.json";
  if (fresh) fs::remove_all(dir);
  if (fs::exists(meta)) {
    const json m = json::parse(csv::read_text_file(meta));
    if (m.value("config_hash", "") != hash) {
      fail(ErrorKind::Config, "checkpoint in " + dir.string() + " belongs to a different config; rerun with --fresh");
    }
    std::ifstream days(dir / "days.txt");
    for (std::string line; std::getline(days, line);) {
      if (!line.empty()) cp.days.insert(parse_date(line));
    }
    std::ifstream rows(dir / "rows.csv");
    csv::LineReader reader(rows);
    std::string line;
    reader.next(line);
    while (reader.next(line)) {
      const auto f = csv::split(line);
      if (f.size() != 7) continue;  // torn final line
      const std::string ctx = (dir / "rows.csv").string() + ":" + std::to_string(reader.line_number());
      ForecastRecord r;
      r.date = parse_date(f[0]);
      if (!cp.days.count(r.date)) continue;
      r.qh = csv::parse_int(f[1], ctx);
      r.target = target_from_string(f[2]);
      r.model = std::string(f[3]);
      r.prediction = csv::parse_double(f[4], ctx).value();
      r.realized = csv::parse_double(f[5], ctx).value();
      r.prediction_transformed = csv::parse_double(f[6], ctx).value_or(std::numeric_limits<double>::quiet_NaN());
      cp.records.push_back(std::move(r));
    }
    std::ifstream skips(dir / "skips.jsonl");
    for (std::string l; std::getline(skips, l);) {
      if (l.empty()) continue;
      json j;
      try {
        j = json::parse(l);
      } catch (const json::exception&) {
        continue;
      }
      for (auto& s : skips_from_json(json::array({j}))) {
        if (cp.days.count(s.date)) cp.skips.push_back(std::move(s));
      }
    }
    // Keep only completed days so later appends never duplicate a day.
    std::string kept = std::string(kCheckpointHeader) + "\n";
    for (const auto& r : cp.records) kept += checkpoint_row(r);
    csv::write_text_file(dir / "rows.csv", kept);
    std::string kept_skips;
    for (const auto& j : skips_to_json(cp.skips)) kept_skips += j.dump() + "\n";
    csv::write_text_file(dir / "skips.jsonl", kept_skips);
    if (!cp.days.empty()) log << "resuming: " << cp.days.size() << " test days already completed\n";
  } else {
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_json(meta, {{"config_hash", hash}});
    csv::write_text_file(dir / "rows.csv", std::string(kCheckpointHeader) + "\n");
  }
  return cp;
}

std::vector<std::pair<std::string, std::string>> dm_pairs(const RunConfig& config, const std::vector<std::string>& models) {
  if (!config.evaluation.dm_pairs.empty()) return config.evaluation.dm_pairs;
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = i + 1; j < models.size(); ++j) out.emplace_back(models[i], models[j]);
  }
  return out;
}

/// Keeps only slots present in every ledger.
void align_ledgers(std::vector<StrategyLedger>& ledgers, std::ostream& log) {
  if (ledgers.empty()) return;
  std::set<SlotKey> common;
  for (const auto& e : ledgers.front().entries) common.insert(e.slot);
  for (const auto& l : ledgers) {
    std::set<SlotKey> mine;
    for (const auto& e : l.entries) {
      if (common.count(e.slot)) mine.insert(e.slot);
    }
    common = std::move(mine);
  }
  for (auto& l : ledgers) {
    const std::size_t before = l.entries.size();
    std::erase_if(l.entries, [&](const LedgerEntry& e) { return !common.count(e.slot); });
    if (l.entries.size() != before) {
      log << l.name << ": " << before - l.entries.size() << " slots dropped to match the common slot set\n";
    }
  }
  if (common.empty()) fail(ErrorKind::Data, "strategies share no common slot");
}

}  // namespace

void cmd_ingest(const RunConfig& config, std::ostream& log) {
  if (config.series.empty() && config.wide_files.empty()) {
    fail(ErrorKind::Config, "no data sources configured (data.series / data.wide)");
  }
  std::vector<QhSeries> list;
  std::set<Market> seen;
  auto add = [&](QhSeries s, const fs::path& from) {
    if (!seen.insert(s.market()).second) {
      fail(ErrorKind::Config, "series " + std::string(to_string(s.market())) + " supplied twice (" + from.string() + ")");
    }
    log << "read " << to_string(s.market()) << " from " << from.string() << ": " << s.day_count() << " days, "
        << s.gap_count() << " imputed slots\n";
    list.push_back(std::move(s));
  };
  for (const auto& [market, src] : config.series) {
    if (src.schema == CsvSchema::Wide) {
      std::ifstream in(src.path);
      if (!in) fail(ErrorKind::Io, "cannot open " + src.path.string());
      for (auto& s : read_wide_csv(in, src.path.string())) {
        if (s.market() == market) add(std::move(s), src.path);
      }
      if (!seen.count(market)) {
        fail(ErrorKind::Schema, src.path.string() + " has no column " + std::string(to_string(market)));
      }
    } else {
      add(ingest_csv(src.path, CsvSchema::Long, market), src.path);
    }
  }
  for (const auto& path : config.wide_files) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    for (auto& s : read_wide_csv(in, path.string())) add(std::move(s), path);
  }
  for (Market m : required_markets(config.backtest)) {
    if (!seen.count(m)) {
      fail(ErrorKind::Data, "series " + std::string(to_string(m)) + " is required by the configured models");
    }
  }
  const Dataset dataset = assemble(std::move(list));
  const fs::path dir = config.resolved_dataset_dir();
  save_dataset(dataset, dir);
  log << "dataset " << format_date(dataset.range().first) << ".." << format_date(dataset.range().last) << " ("
      << dataset.day_count() << " days) written to " << dir.string() << "\n";
}

void cmd_backtest(const RunConfig& config, bool fresh, std::ostream& log) {
  const Dataset dataset = load_dataset(config.resolved_dataset_dir());
  const std::string hash = hex(config_hash(config.raw));
  const fs::path out = config.output_dir / "backtest";
  Checkpoint cp = open_checkpoint(out / "checkpoint", hash, fresh, log);

  std::ofstream rows(cp.dir / "rows.csv", std::ios::app);
  std::ofstream days(cp.dir / "days.txt", std::ios::app);
  std::ofstream skips(cp.dir / "skips.jsonl", std::ios::app);
  std::ofstream models(out / "models.jsonl", fresh || cp.days.empty() ? std::ios::trunc : std::ios::app);
  if (!rows || !days || !skips || !models) fail(ErrorKind::Io, "cannot write checkpoint files in " + out.string());

  BacktestHooks hooks;
  hooks.completed_days = cp.days;
  hooks.on_day = [&](Date d, const std::vector<ForecastRecord>& recs, const std::vector<SkipRecord>& sk) {
    for (const auto& r : recs) rows << checkpoint_row(r);
    rows.flush();
    for (const auto& s : skips_to_json(sk)) skips << s.dump() << '\n';
    skips.flush();
    days << format_date(d) << '\n';
    days.flush();
    if (!rows || !days || !skips) fail(ErrorKind::Io, "checkpoint write failed for " + format_date(d));
  };
  hooks.on_fit = [&](const FitRecord& f) {
    json j = f.fitted.to_json();
    j["anchor"] = format_date(f.anchor);
    j["target"] = std::string(to_string(f.target));
    j["model"] = f.model;
    models << j.dump() << '\n';
  };

  log << "backtest " << format_date(config.backtest.plan.test_range.first) << ".."
      << format_date(config.backtest.plan.test_range.last) << ", " << config.backtest.models.size() << " models, "
      << config.backtest.jobs << " jobs\n";
  BacktestResult result = run_backtest(dataset, config.backtest, hooks);
  models.flush();

  ForecastPanel panel;
  panel.records = std::move(cp.records);
  panel.records.insert(panel.records.end(), result.panel.records.begin(), result.panel.records.end());
  panel.skips = std::move(cp.skips);
  panel.skips.insert(panel.skips.end(), result.panel.skips.begin(), result.panel.skips.end());
  panel.sort();
  export_panel(panel, (out / "panel.csv").string());

  const auto& plan = config.backtest.plan;
  json manifest = {
      {"config_hash", hash},
      {"dataset_range", {format_date(dataset.range().first), format_date(dataset.range().last)}},
      {"plan",
       {{"initial_train", {format_date(plan.initial_train.first), format_date(plan.initial_train.last)}},
        {"test_range", {format_date(plan.test_range.first), format_date(plan.test_range.last)}},
        {"refit_every", plan.refit_every},
        {"window_policy", std::string(to_string(plan.window_policy))}}},
      {"models", json::array()},
      {"evaluated_slots", panel.records.size()},
      {"skips", skips_to_json(panel.skips)},
      {"fits", result.fits},
      {"resumed_days", cp.days.size()},
      {"seconds", result.seconds},
  };
  for (const auto& m : config.backtest.models) manifest["models"].push_back(m.id());
  if (config.backtest.audit) {
    manifest["audit"] = {{"reads", result.audit.reads},
                         {"violations", result.audit.violations},
                         {"examples", result.audit.examples}};
  }
  write_json(out / "manifest.json", manifest);
  log << "panel: " << panel.records.size() << " rows, " << panel.skips.size() << " skip records, " << result.fits
      << " fits in " << result.seconds << " s\n";
  if (config.backtest.audit) {
    log << "audit: " << result.audit.reads << " feature reads, " << result.audit.violations << " violations\n";
    if (result.audit.violations > 0) {
      fail(ErrorKind::Integrity, "look-ahead audit found " + std::to_string(result.audit.violations) +
                                     " reads after the decision time, e.g. " + result.audit.examples.front());
    }
  }
}

void cmd_evaluate(const RunConfig& config, std::ostream& log) {
  const ForecastPanel panel = load_panel((config.output_dir / "backtest" / "panel.csv").string());
  const fs::path out = config.output_dir / "evaluation";
  const auto& ev = config.evaluation;
  json summary = {{"metrics", json::array()}, {"dm_skipped", json::array()}, {"pt", json::array()},
                  {"dacc", json::array()}};

  std::ostringstream metrics, metrics_qh;
  metrics << "model,target,rmse,mae,n\n";
  metrics_qh << "model,target,qh,rmse,mae,n\n";
  for (Target t : panel.targets()) {
    for (const auto& m : panel.models()) {
      const auto rows = panel.select(m, t);
      if (rows.empty()) continue;
      const ErrorMetrics e = error_metrics(rows);
      metrics << m << ',' << to_string(t) << ',' << num(e.rmse) << ',' << num(e.mae) << ',' << e.n << '\n';
      summary["metrics"].push_back({{"model", m}, {"target", std::string(to_string(t))}, {"rmse", e.rmse},
                                    {"mae", e.mae}, {"n", e.n}});
      for (const auto& [qh, q] : per_qh_metrics(rows)) {
        metrics_qh << m << ',' << to_string(t) << ',' << qh << ',' << num(q.rmse) << ',' << num(q.mae) << ','
                   << q.n << '\n';
      }
    }
  }
  csv::write_text_file(out / "metrics.csv", metrics.str());
  csv::write_text_file(out / "metrics_qh.csv", metrics_qh.str());

  std::ostringstream dm;
  dm << "target,model_1,model_2,qh,statistic,p_value,p_greater,p_less,degenerate\n";
  for (Target t : panel.targets()) {
    for (const auto& [m1, m2] : dm_pairs(config, panel.models())) {
      try {
        for (const auto& [qh, r] : dm_test(panel, m1, m2, t, ev.dm_p, ev.dm_lag, ev.level)) {
          dm << to_string(t) << ',' << m1 << ',' << m2 << ',' << qh << ',' << num(r.statistic) << ','
             << num(r.p_value) << ',' << num(r.detail["p_greater"].get<double>()) << ','
             << num(r.detail["p_less"].get<double>()) << ',' << (r.degenerate ? 1 : 0) << '\n';
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Data) throw;
        summary["dm_skipped"].push_back({{"target", std::string(to_string(t))}, {"models", {m1, m2}},
                                         {"reason", e.what()}});
        log << "DM " << m1 << " vs " << m2 << " (" << to_string(t) << ") skipped: " << e.what() << "\n";
      }
    }
  }
  csv::write_text_file(out / "dm.csv", dm.str());

  std::ostringstream dacc_csv, pt_csv;
  dacc_csv << "model,qh,dacc\n";
  pt_csv << "model,statistic,p_value,hit_rate,expected_hit_rate,n,degenerate\n";
  for (const auto& m : panel.models()) {
    DirectionSeries dirs;
    try {
      dirs = directions(panel, m);
    } catch (const Error& e) {
      continue;  // model forecasts a single venue
    }
    try {
      const DirectionalAccuracy acc = dacc(dirs);
      for (const auto& [qh, v] : acc.per_qh) dacc_csv << m << ',' << qh << ',' << num(v) << '\n';
      dacc_csv << m << ",all," << num(acc.overall) << '\n';
      summary["dacc"].push_back({{"model", m}, {"overall", acc.overall}, {"hits", acc.hits},
                                 {"evaluated", acc.evaluated}, {"ties_excluded", acc.ties}});
      std::vector<int> pred_up, real_up;
      for (std::size_t i = 0; i < dirs.predicted.size(); ++i) {
        if (dirs.predicted[i] == 0 || dirs.realized[i] == 0) continue;
        pred_up.push_back(dirs.predicted[i] > 0);
        real_up.push_back(dirs.realized[i] > 0);
      }
      const TestResult pt = pt_test(pred_up, real_up, ev.level);
      pt_csv << m << ',' << num(pt.statistic) << ',' << num(pt.p_value) << ','
             << num(pt.detail["hit_rate"].get<double>()) << ',' << num(pt.detail["expected_hit_rate"].get<double>())
             << ',' << pred_up.size() << ',' << (pt.degenerate ? 1 : 0) << '\n';
      json pj = to_json(pt);
      pj["model"] = m;
      summary["pt"].push_back(pj);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Data) throw;
      log << "directional tests for " << m << " skipped: " << e.what() << "\n";
    }
  }
  csv::write_text_file(out / "dacc.csv", dacc_csv.str());
  csv::write_text_file(out / "pt.csv", pt_csv.str());
  write_json(out / "summary.json", summary);
  log << "evaluation written to " << out.string() << "\n";
}

void cmd_portfolio(const RunConfig& config, std::ostream& log) {
  const ForecastPanel panel = load_panel((config.output_dir / "backtest" / "panel.csv").string());
  std::optional<Dataset> dataset;
  const fs::path ddir = config.resolved_dataset_dir();
  if (fs::exists(ddir / "manifest.json")) dataset = load_dataset(ddir);
  const SlotBook book = SlotBook::build(panel, dataset ? &*dataset : nullptr);
  const auto& pc = config.portfolio;
  const double vol = pc.volume_mw;

  std::vector<StrategyLedger> ledgers;
  std::vector<std::string> naive_names;
  for (Venue v : {Venue::Exaa, Venue::Auction, Venue::Intraday, Venue::Rebap}) {
    StrategyLedger l = naive_strategy(book, v, vol);
    if (l.entries.empty()) {
      log << l.name << " skipped: no prices\n";
      continue;
    }
    naive_names.push_back(l.name);
    ledgers.push_back(std::move(l));
  }
  ledgers.push_back(perfect_strategy(book, Side::Buy, vol));
  ledgers.push_back(perfect_strategy(book, Side::Sell, vol));

  const int window = pc.moment_window_days > 0 ? pc.moment_window_days : config.backtest.plan.initial_train.days();
  for (const std::string& source : {pc.source_model, pc.source_model + "_EXAA"}) {
    if (!book.forecasts.count(source)) {
      log << "no forecasts from " << source << "; its strategies are skipped\n";
      continue;
    }
    for (Side side : {Side::Buy, Side::Sell}) ledgers.push_back(base_strategy(book, source, side, vol));
    if (!dataset) {
      log << "mean-variance strategies need the dataset for rolling moments; skipped\n";
      continue;
    }
    for (Side side : {Side::Buy, Side::Sell}) {
      ledgers.push_back(meanvar_strategy(book, *dataset, source, side, window, pc.gamma, vol));
    }
  }
  align_ledgers(ledgers, log);

  std::vector<const StrategyLedger*> benchmarks;
  for (const auto& l : ledgers) {
    if (std::find(naive_names.begin(), naive_names.end(), l.name) != naive_names.end()) benchmarks.push_back(&l);
  }
  std::vector<AccountSummary> summaries;
  for (const auto& l : ledgers) summaries.push_back(account(l, benchmarks, vol));

  const fs::path out = config.output_dir / "portfolio";
  std::ostringstream ledger_csv, summary_csv;
  write_ledger_csv(ledgers, ledger_csv);
  write_summary_csv(summaries, summary_csv);
  csv::write_text_file(out / "ledger.csv", ledger_csv.str());
  csv::write_text_file(out / "summary.csv", summary_csv.str());

  std::ostringstream ttest, sharpe_csv;
  ttest << "strategy,benchmark,statistic,p_value,degenerate\n";
  sharpe_csv << "strategy,benchmark,statistic,p_value,degenerate\n";
  for (const auto& l : ledgers) {
    if (std::find(naive_names.begin(), naive_names.end(), l.name) != naive_names.end()) continue;
    for (const StrategyLedger* b : benchmarks) {
      const auto a = l.prices();
      const auto c = b->prices();
      try {
        const TestResult t = mean_ttest(a, c, config.evaluation.level);
        ttest << l.name << ',' << b->name << ',' << num(t.statistic) << ',' << num(t.p_value) << ','
              << (t.degenerate ? 1 : 0) << '\n';
        const TestResult s = sharpe_equality_pairwise(a, c, config.evaluation.level);
        sharpe_csv << l.name << ',' << b->name << ',' << num(s.statistic) << ',' << num(s.p_value) << ','
                   << (s.degenerate ? 1 : 0) << '\n';
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Data) throw;
        log << "tests " << l.name << " vs " << b->name << " skipped: " << e.what() << "\n";
      }
    }
  }
  csv::write_text_file(out / "ttest.csv", ttest.str());
  csv::write_text_file(out / "sharpe_test.csv", sharpe_csv.str());

  json savings = {{"volume_mw", vol}, {"slot_hours", kSlotHours}, {"strategies", json::array()}};
  for (const auto& s : summaries) savings["strategies"].push_back(to_json(s));
  write_json(out / "savings.json", savings);
  log << ledgers.size() << " strategies over " << (ledgers.empty() ? 0 : ledgers.front().entries.size())
      << " slots written to " << out.string() << "\n";
}

void cmd_simulate(const SimulateRequest& request, std::ostream& log) {
  if (request.out_dir.empty()) fail(ErrorKind::Config, "simulate needs an output directory");
  const Dataset dataset = simulate_dataset(request.data);
  const fs::path data_dir = request.out_dir / "data";
  save_dataset(dataset, data_dir);

  const int days = request.data.days;
  const int train = request.train_days > 0 ? request.train_days : days * 2 / 3;
  if (train >= days) fail(ErrorKind::Config, "training days must leave at least one test day");
  json cfg = default_config();
  cfg["data"]["series"] = json::object();
  for (Market m : dataset.markets()) {
    cfg["data"]["series"][std::string(to_string(m))] = {{"path", "data/" + std::string(to_string(m)) + ".csv"},
                                                        {"schema", "long"}};
  }
  const Date first = dataset.range().first;
  cfg["plan"]["initial_train"] = {format_date(first), format_date(first + std::chrono::days{train - 1})};
  cfg["plan"]["test_range"] = {format_date(first + std::chrono::days{train}), format_date(dataset.range().last)};
  cfg["models"] = {"Naive_EXAA", "Expert_LM", "Expert_EN", "Expert_EN_EXAA"};
  if (request.data.kind == SyntheticKind::Linear) cfg["transform"]["mode"] = "identity";
  cfg["output_dir"] = "out";
  write_json(request.out_dir / "config.json", cfg);
  log << "synthetic dataset (" << days << " days) and config written to " << request.out_dir.string() << "\n";
}

}  // namespace qhprice::cli

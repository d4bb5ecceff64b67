#include "cli/config.hpp"

#include <fstream>
#include <set>

#include "qhprice/error.hpp"

namespace qhprice::cli {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  fail(ErrorKind::Config, "config key '" + key + "': " + what);
}

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) bad(where, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) bad(where.empty() ? key : where + "." + key, "unknown key");
  }
}

template <class T>
T get(const json& obj, const std::string& key, const std::string& where, T fallback) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    bad(where + key, e.what());
  }
}

DateRange date_range(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2) bad(key, "expected [first, last]");
  try {
    return {parse_date(j[0].get<std::string>()), parse_date(j[1].get<std::string>())};
  } catch (const Error& e) {
    bad(key, e.what());
  } catch (const json::exception& e) {
    bad(key, e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <class F>
auto config_value(const std::string& key, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) bad(key, e.what());
    throw;
  }
}

}  // namespace

std::filesystem::path RunConfig::resolved_dataset_dir() const {
  return dataset_dir.empty() ? output_dir / "dataset" : dataset_dir;
}

json default_config() {
  return {
      {"data", {{"series", json::object()}, {"wide", json::array()}}},
      {"plan",
       {{"initial_train", {"2015-10-08", "2016-10-06"}},
        {"test_range", {"2016-10-07", "2018-05-31"}},
        {"refit_every", 1},
        {"window_policy", "sliding"}}},
      {"models", {"Naive_EXAA", "Expert_LM", "Expert_EN", "Expert_EN_EXAA", "Full_LM", "Full_EN", "Full_EN_EXAA"}},
      {"targets", {"EPEX_QH_AUCTION", "EPEX_QH_ID_VWAP"}},
      {"quarter_hours", json::array()},
      {"transform", {{"mode", "training_only"}, {"c", kDefaultMlogC}}},
      {"estimator",
       {{"alpha", kDefaultAlpha},
        {"lambda_min", kDefaultLambdaMin},
        {"grid_size", kDefaultGridSize},
        {"folds", 10},
        {"cv_mode", "contiguous"},
        {"seed", 0}}},
      {"evaluation", {{"dm_lag", 4}, {"dm_p", 1}, {"level", 0.05}, {"dm_pairs", json::array()}}},
      {"portfolio", {{"gamma", 2.0}, {"volume_mw", 50.0}, {"source_model", "Expert_EN"}, {"moment_window_days", 0}}},
      {"jobs", 1},
      {"audit", false},
      {"output_dir", "qhprice_out"},
  };
}

RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc, "",
             {"data", "dataset_dir", "plan", "models", "targets", "quarter_hours", "transform", "estimator",
              "evaluation", "portfolio", "jobs", "audit", "output_dir"});
  RunConfig cfg;
  cfg.raw = doc;

  if (const auto it = doc.find("data"); it != doc.end()) {
    check_keys(*it, "data", {"series", "wide"});
    if (const auto s = it->find("series"); s != it->end()) {
      if (!s->is_object()) bad("data.series", "expected an object");
      for (const auto& [name, entry] : s->items()) {
        const std::string key = "data.series." + name;
        const Market m = config_value(key, [&] {
          try {
            return market_from_string(name);
          } catch (const Error& e) {
            fail(ErrorKind::Config, e.what());
          }
        });
        SeriesSource src;
        if (entry.is_string()) {
          src.path = resolve(base_dir, entry.get<std::string>());
        } else {
          check_keys(entry, key, {"path", "schema"});
          src.path = resolve(base_dir, get<std::string>(entry, "path", key + ".", ""));
          const std::string schema = get<std::string>(entry, "schema", key + ".", "long");
          if (schema == "long") src.schema = CsvSchema::Long;
          else if (schema == "wide") src.schema = CsvSchema::Wide;
          else bad(key + ".schema", "expected 'long' or 'wide'");
        }
        cfg.series[m] = src;
      }
    }
    if (const auto w = it->find("wide"); w != it->end()) {
      for (const auto& p : *w) cfg.wide_files.push_back(resolve(base_dir, p.get<std::string>()));
    }
  }

  cfg.output_dir = resolve(base_dir, get<std::string>(doc, "output_dir", "", "qhprice_out"));
  if (const auto it = doc.find("dataset_dir"); it != doc.end()) {
    cfg.dataset_dir = resolve(base_dir, it->get<std::string>());
  }

  BacktestOptions& bt = cfg.backtest;
  if (const auto it = doc.find("plan"); it != doc.end()) {
    check_keys(*it, "plan", {"initial_train", "test_range", "refit_every", "window_policy"});
    if (it->contains("initial_train")) bt.plan.initial_train = date_range(it->at("initial_train"), "plan.initial_train");
    if (it->contains("test_range")) bt.plan.test_range = date_range(it->at("test_range"), "plan.test_range");
    bt.plan.refit_every = get<int>(*it, "refit_every", "plan.", 1);
    bt.plan.window_policy = config_value("plan.window_policy", [&] {
      return window_policy_from_string(get<std::string>(*it, "window_policy", "plan.", "sliding"));
    });
  }
  config_value("plan", [&] {
    bt.plan.validate();
    return 0;
  });

  bt.models.clear();
  const json models = doc.value("models", default_config()["models"]);
  for (const auto& m : models) {
    bt.models.push_back(config_value("models", [&] { return ModelSpec::parse(m.get<std::string>()); }));
  }
  if (bt.models.empty()) bad("models", "no models listed");

  bt.targets.clear();
  const json targets = doc.value("targets", default_config()["targets"]);
  for (const auto& t : targets) {
    bt.targets.push_back(config_value("targets", [&] { return target_from_string(t.get<std::string>()); }));
  }
  if (bt.targets.empty()) bad("targets", "no targets listed");

  bt.quarter_hours = get<std::vector<int>>(doc, "quarter_hours", "", {});
  for (int q : bt.quarter_hours) {
    if (q < 1 || q > kSlotsPerDay) bad("quarter_hours", "values must lie in 1..96");
  }

  if (const auto it = doc.find("transform"); it != doc.end()) {
    check_keys(*it, "transform", {"mode", "c"});
    bt.transform_mode = config_value("transform.mode", [&] {
      return transform_mode_from_string(get<std::string>(*it, "mode", "transform.", "training_only"));
    });
    bt.mlog_c = get<double>(*it, "c", "transform.", kDefaultMlogC);
    if (!(bt.mlog_c > 0.0)) bad("transform.c", "must be > 0");
  }

  if (const auto it = doc.find("estimator"); it != doc.end()) {
    check_keys(*it, "estimator", {"alpha", "lambda_min", "grid_size", "folds", "cv_mode", "seed"});
    bt.en.alpha = get<double>(*it, "alpha", "estimator.", kDefaultAlpha);
    bt.en.lambda_min = get<double>(*it, "lambda_min", "estimator.", kDefaultLambdaMin);
    bt.en.grid_size = get<int>(*it, "grid_size", "estimator.", kDefaultGridSize);
    bt.en.folds = get<int>(*it, "folds", "estimator.", 10);
    bt.en.cv_mode = config_value("estimator.cv_mode", [&] {
      return cv_mode_from_string(get<std::string>(*it, "cv_mode", "estimator.", "contiguous"));
    });
    bt.en.seed = get<std::uint64_t>(*it, "seed", "estimator.", 0);
    if (!(bt.en.alpha > 0.0 && bt.en.alpha <= 1.0)) bad("estimator.alpha", "must lie in (0, 1]");
    if (!(bt.en.lambda_min > 0.0)) bad("estimator.lambda_min", "must be > 0");
    if (bt.en.grid_size < 1) bad("estimator.grid_size", "must be >= 1");
    if (bt.en.folds < 2) bad("estimator.folds", "must be >= 2");
  }

  if (const auto it = doc.find("evaluation"); it != doc.end()) {
    check_keys(*it, "evaluation", {"dm_lag", "dm_p", "level", "dm_pairs"});
    cfg.evaluation.dm_lag = get<int>(*it, "dm_lag", "evaluation.", 4);
    cfg.evaluation.dm_p = get<int>(*it, "dm_p", "evaluation.", 1);
    cfg.evaluation.level = get<double>(*it, "level", "evaluation.", 0.05);
    if (cfg.evaluation.dm_lag < 0) bad("evaluation.dm_lag", "must be >= 0");
    if (cfg.evaluation.dm_p != 1 && cfg.evaluation.dm_p != 2) bad("evaluation.dm_p", "must be 1 or 2");
    if (!(cfg.evaluation.level > 0.0 && cfg.evaluation.level < 1.0)) bad("evaluation.level", "must lie in (0, 1)");
    if (const auto p = it->find("dm_pairs"); p != it->end()) {
      for (const auto& pair : *p) {
        if (!pair.is_array() || pair.size() != 2) bad("evaluation.dm_pairs", "expected [model, model] pairs");
        cfg.evaluation.dm_pairs.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
      }
    }
  }

  if (const auto it = doc.find("portfolio"); it != doc.end()) {
    check_keys(*it, "portfolio", {"gamma", "volume_mw", "source_model", "moment_window_days"});
    cfg.portfolio.gamma = get<double>(*it, "gamma", "portfolio.", 2.0);
    cfg.portfolio.volume_mw = get<double>(*it, "volume_mw", "portfolio.", 50.0);
    cfg.portfolio.source_model = get<std::string>(*it, "source_model", "portfolio.", "Expert_EN");
    cfg.portfolio.moment_window_days = get<int>(*it, "moment_window_days", "portfolio.", 0);
    if (!(cfg.portfolio.gamma > 0.0)) bad("portfolio.gamma", "must be > 0");
    if (!(cfg.portfolio.volume_mw >= 0.0)) bad("portfolio.volume_mw", "must be >= 0");
    if (cfg.portfolio.moment_window_days != 0 && cfg.portfolio.moment_window_days < kMinWindowDays) {
      bad("portfolio.moment_window_days", "must be 0 or at least 30");
    }
  }

  bt.jobs = get<int>(doc, "jobs", "", 1);
  if (bt.jobs < 1) bad("jobs", "must be >= 1");
  bt.audit = get<bool>(doc, "audit", "", false);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

std::uint64_t config_hash(const json& doc) {
  json canonical = doc;
  if (canonical.is_object()) {
    canonical.erase("output_dir");
    canonical.erase("jobs");
  }
  // nlohmann::json keeps object keys sorted, so dump() is canonical.
  const std::string text = canonical.dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
  return out;
}

}  // namespace qhprice::cli

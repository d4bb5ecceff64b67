#include "qhprice/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "qhprice/csv.hpp"
#include "qhprice/error.hpp"

namespace qhprice {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct SeriesLabel {
  Market market;
  std::optional<Unit> unit;
};

// "EXAA_QH" or "EXAA_QH[EUR/MWh]".
SeriesLabel parse_label(std::string_view text) {
  text = csv::trim(text);
  const std::size_t open = text.find('[');
  if (open == std::string_view::npos) return {market_from_string(text), std::nullopt};
  if (text.back() != ']') {
    fail(ErrorKind::Schema, "malformed series label '" + std::string(text) + "'");
  }
  return {market_from_string(text.substr(0, open)),
          unit_from_string(text.substr(open + 1, text.size() - open - 2))};
}

void check_unit(const SeriesLabel& label, const std::string& where) {
  if (label.unit && *label.unit != native_unit(label.market)) {
    fail(ErrorKind::Schema, where + ": unit " + std::string(to_string(*label.unit)) +
                                " does not match declared unit " +
                                std::string(to_string(native_unit(label.market))) + " of " +
                                std::string(to_string(label.market)));
  }
}

// Collapses a 96-slot grid of an hourly-native series to 24 slots. Every
// observed slot within an hour must agree.
QhSeries reduce_to_hourly(const QhSeries& qh, const std::string& source) {
  QhSeries hourly(qh.market(), qh.start_date(), qh.day_count(), kHoursPerDay);
  for (int d = 0; d < qh.day_count(); ++d) {
    for (int h = 0; h < kHoursPerDay; ++h) {
      double value = kNaN;
      bool gap = false;
      for (int k = 0; k < 4; ++k) {
        const int slot = 4 * h + k;
        gap = gap || qh.is_gap(d, slot);
        const double v = qh.value(d, slot);
        if (std::isnan(v)) continue;
        if (!std::isnan(value) && v != value) {
          fail(ErrorKind::Schema,
               source + ": hourly-native series " + std::string(to_string(qh.market())) +
                   " varies within hour " + std::to_string(h + 1) + " of " +
                   format_date(qh.start_date() + std::chrono::days{d}));
        }
        value = v;
      }
      hourly.set(d, h, value, gap || std::isnan(value));
    }
  }
  return hourly;
}

QhSeries finish(QhSeries grid, const std::string& source) {
  if (is_hourly_native(grid.market())) {
    if (grid.slots_per_day() == kSlotsPerDay) grid = reduce_to_hourly(grid, source);
    return broadcast_hourly(impute_gaps(std::move(grid))).series;
  }
  return impute_gaps(std::move(grid));
}

}  // namespace

std::string_view to_string(Market m) {
  switch (m) {
    case Market::ExaaQh: return "EXAA_QH";
    case Market::EpexDaH: return "EPEX_DA_H";
    case Market::EpexQhAuction: return "EPEX_QH_AUCTION";
    case Market::EpexQhIdVwap: return "EPEX_QH_ID_VWAP";
    case Market::LoadFcst: return "LOAD_FCST";
    case Market::WindFcst: return "WIND_FCST";
    case Market::PvFcst: return "PV_FCST";
    case Market::Rebap: return "REBAP";
  }
  return "?";
}

std::string_view to_string(Unit u) { return u == Unit::EurPerMwh ? "EUR/MWh" : "MW"; }

Market market_from_string(std::string_view name) {
  name = csv::trim(name);
  for (Market m : kAllMarkets) {
    if (to_string(m) == name) return m;
  }
  fail(ErrorKind::Schema, "unknown series id '" + std::string(name) + "'");
}

Unit unit_from_string(std::string_view name) {
  name = csv::trim(name);
  if (name == "EUR/MWh" || name == "EUR_PER_MWH") return Unit::EurPerMwh;
  if (name == "MW") return Unit::Mw;
  fail(ErrorKind::Schema, "unknown unit '" + std::string(name) + "'");
}

bool is_hourly_native(Market m) {
  return m == Market::EpexDaH || m == Market::WindFcst || m == Market::PvFcst;
}

Unit native_unit(Market m) {
  switch (m) {
    case Market::LoadFcst:
    case Market::WindFcst:
    case Market::PvFcst: return Unit::Mw;
    default: return Unit::EurPerMwh;
  }
}

// --- QhSeries ---------------------------------------------------------------

QhSeries::QhSeries(Market market, Date start, int day_count, int slots_per_day)
    : id_(SeriesId::of(market)),
      start_(start),
      day_count_(day_count),
      slots_per_day_(slots_per_day) {
  if (day_count < 0) fail(ErrorKind::Data, "negative day count");
  if (slots_per_day != kSlotsPerDay && slots_per_day != kHoursPerDay) {
    fail(ErrorKind::Schema, "slots per day must be 24 or 96");
  }
  const std::size_t n = static_cast<std::size_t>(day_count) * static_cast<std::size_t>(slots_per_day);
  values_.assign(n, kNaN);
  gap_.assign(n, 1);
}

void QhSeries::set(int day_index, int slot, double v, bool gap) {
  const std::size_t i = flat(day_index, slot);
  values_[i] = v;
  gap_[i] = gap ? 1 : 0;
}

std::span<const double> QhSeries::day(int day_index) const {
  return std::span<const double>(values_).subspan(flat(day_index, 0),
                                                  static_cast<std::size_t>(slots_per_day_));
}

std::optional<int> QhSeries::index_of(Date d) const {
  const auto offset = (d - start_).count();
  if (offset < 0 || offset >= day_count_) return std::nullopt;
  return static_cast<int>(offset);
}

double QhSeries::at(Date d, int slot) const {
  const auto idx = index_of(d);
  if (!idx) {
    fail(ErrorKind::Data, std::string(to_string(market())) + " has no value on " + format_date(d));
  }
  return value(*idx, slot);
}

bool QhSeries::day_missing(int day_index) const {
  for (int s = 0; s < slots_per_day_; ++s) {
    if (!is_gap(day_index, s)) return false;
  }
  return true;
}

std::size_t QhSeries::gap_count() const {
  return static_cast<std::size_t>(std::count(gap_.begin(), gap_.end(), std::uint8_t{1}));
}

QhSeries QhSeries::slice(const DateRange& range) const {
  const auto first = index_of(range.first);
  const auto last = index_of(range.last);
  if (!first || !last || *last < *first) {
    fail(ErrorKind::Data, "slice " + format_date(range.first) + ".." + format_date(range.last) +
                              " outside " + std::string(to_string(market())));
  }
  QhSeries out(market(), range.first, *last - *first + 1, slots_per_day_);
  const auto begin = flat(*first, 0);
  const auto end = flat(*last + 1, 0);
  std::copy(values_.begin() + static_cast<std::ptrdiff_t>(begin),
            values_.begin() + static_cast<std::ptrdiff_t>(end), out.values_.begin());
  std::copy(gap_.begin() + static_cast<std::ptrdiff_t>(begin),
            gap_.begin() + static_cast<std::ptrdiff_t>(end), out.gap_.begin());
  return out;
}

// --- ingestion ---------------------------------------------------------------

QhSeries read_long_csv(std::istream& in, Market market, const std::string& source) {
  csv::LineReader reader(in);
  std::string line;
  if (!reader.next(line)) fail(ErrorKind::Schema, source + ": empty file");
  {
    const auto header = csv::split(line);
    if (header.size() != 3 || csv::trim(header[0]) != "timestamp" ||
        csv::trim(header[1]) != "series" || csv::trim(header[2]) != "value") {
      fail(ErrorKind::Schema, source + ": expected header 'timestamp,series,value'");
    }
  }

  struct Row {
    Instant utc;
    LocalSlotTime local;
    double value;
    std::size_t line;
  };
  std::vector<Row> rows;
  while (reader.next(line)) {
    if (csv::trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(reader.line_number());
    const auto fields = csv::split(line);
    if (fields.size() != 3) fail(ErrorKind::Parse, where + ": expected 3 fields");
    Instant utc;
    try {
      utc = parse_timestamp(csv::trim(fields[0]));
    } catch (const Error& e) {
      fail(ErrorKind::Parse, where + ": " + e.what());
    }
    const SeriesLabel label = parse_label(fields[1]);
    if (label.market != market) {
      fail(ErrorKind::Schema, where + ": series " + std::string(to_string(label.market)) +
                                  " where " + std::string(to_string(market)) + " was expected");
    }
    check_unit(label, where);
    const auto value = csv::parse_double(fields[2], where);
    rows.push_back({utc, to_berlin(utc), value.value_or(kNaN), reader.line_number()});
  }
  if (rows.empty()) fail(ErrorKind::Data, source + ": no observations");

  const bool hourly = is_hourly_native(market) &&
                      std::all_of(rows.begin(), rows.end(),
                                  [](const Row& r) { return r.local.minute_of_day % 60 == 0; });
  const int spd = hourly ? kHoursPerDay : kSlotsPerDay;
  const int minutes_per_slot = hourly ? 60 : kMinutesPerSlot;
  for (const Row& r : rows) {
    if (r.local.minute_of_day % minutes_per_slot != 0) {
      fail(ErrorKind::Parse, source + ":" + std::to_string(r.line) +
                                 ": timestamp not aligned to a quarter-hour");
    }
  }

  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.utc < b.utc; });
  const Date start = rows.front().local.date;
  const Date end = rows.back().local.date;
  QhSeries grid(market, start, static_cast<int>((end - start).count()) + 1, spd);

  // Rows are sorted, so both raw observations of a local slot are adjacent
  // in local order only on the fall-back day; track them per slot instead.
  std::vector<int> seen(grid.size(), 0);
  std::vector<Instant> first_seen(grid.size());
  for (const Row& r : rows) {
    const int d = static_cast<int>((r.local.date - start).count());
    const int slot = r.local.minute_of_day / minutes_per_slot;
    const std::size_t i = static_cast<std::size_t>(d) * static_cast<std::size_t>(spd) +
                          static_cast<std::size_t>(slot);
    if (seen[i] == 0) {
      grid.set(d, slot, r.value, std::isnan(r.value));
      first_seen[i] = r.utc;
      seen[i] = 1;
      continue;
    }
    if (first_seen[i] == r.utc || seen[i] >= 2 || !is_fall_back_day(r.local.date)) {
      fail(ErrorKind::Integrity, source + ":" + std::to_string(r.line) + ": duplicate slot " +
                                     format_date(r.local.date) + " qh " +
                                     std::to_string(slot + 1));
    }
    // Duplicated fall-back hour: average the two raw observations.
    const double prior = grid.value(d, slot);
    double merged = r.value;
    if (!std::isnan(prior) && !std::isnan(r.value)) merged = 0.5 * (prior + r.value);
    else if (!std::isnan(prior)) merged = prior;
    grid.set(d, slot, merged, true);
    seen[i] = 2;
  }
  return finish(std::move(grid), source);
}

std::vector<QhSeries> read_wide_csv(std::istream& in, const std::string& source) {
  csv::LineReader reader(in);
  std::string line;
  if (!reader.next(line)) fail(ErrorKind::Schema, source + ": empty file");
  const auto header = csv::split(line);
  if (header.size() < 3 || csv::trim(header[0]) != "date" || csv::trim(header[1]) != "qh") {
    fail(ErrorKind::Schema, source + ": expected header 'date,qh,<series...>'");
  }
  std::vector<Market> markets;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const SeriesLabel label = parse_label(header[c]);
    check_unit(label, source + ":1");
    if (std::find(markets.begin(), markets.end(), label.market) != markets.end()) {
      fail(ErrorKind::Schema, source + ": duplicate column " + std::string(to_string(label.market)));
    }
    markets.push_back(label.market);
  }

  struct Row {
    Date date;
    int slot;
    std::vector<double> values;
    std::size_t line;
  };
  std::vector<Row> rows;
  while (reader.next(line)) {
    if (csv::trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(reader.line_number());
    const auto fields = csv::split(line);
    if (fields.size() != header.size()) {
      fail(ErrorKind::Parse, where + ": expected " + std::to_string(header.size()) + " fields");
    }
    Row row;
    try {
      row.date = parse_date(csv::trim(fields[0]));
    } catch (const Error& e) {
      fail(ErrorKind::Parse, where + ": " + e.what());
    }
    const int qh = csv::parse_int(fields[1], where);
    if (qh < 1 || qh > kSlotsPerDay) fail(ErrorKind::Parse, where + ": qh must be in 1..96");
    row.slot = qh - 1;
    for (std::size_t c = 2; c < fields.size(); ++c) {
      row.values.push_back(csv::parse_double(fields[c], where).value_or(kNaN));
    }
    row.line = reader.line_number();
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::Data, source + ": no observations");

  const auto [lo, hi] = std::minmax_element(
      rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
  const Date start = lo->date;
  const int days = static_cast<int>((hi->date - start).count()) + 1;

  std::vector<QhSeries> grids;
  for (Market m : markets) grids.emplace_back(m, start, days, kSlotsPerDay);
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(days) * kSlotsPerDay, 0);
  for (const Row& r : rows) {
    const int d = static_cast<int>((r.date - start).count());
    const std::size_t i = static_cast<std::size_t>(d) * kSlotsPerDay + static_cast<std::size_t>(r.slot);
    if (seen[i]) {
      fail(ErrorKind::Integrity, source + ":" + std::to_string(r.line) + ": duplicate slot " +
                                     format_date(r.date) + " qh " + std::to_string(r.slot + 1));
    }
    seen[i] = 1;
    for (std::size_t c = 0; c < markets.size(); ++c) {
      grids[c].set(d, r.slot, r.values[c], std::isnan(r.values[c]));
    }
  }
  std::vector<QhSeries> out;
  out.reserve(grids.size());
  for (auto& g : grids) out.push_back(finish(std::move(g), source));
  return out;
}

QhSeries ingest_csv(const std::filesystem::path& path, CsvSchema schema, Market market) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  if (schema == CsvSchema::Long) return read_long_csv(in, market, path.string());
  for (auto& s : read_wide_csv(in, path.string())) {
    if (s.market() == market) return std::move(s);
  }
  fail(ErrorKind::Schema,
       path.string() + ": no column for series " + std::string(to_string(market)));
}

BroadcastResult broadcast_hourly(const QhSeries& hourly) {
  if (hourly.slots_per_day() == kSlotsPerDay) return {hourly, true};
  if (hourly.day_count() == 0) {
    fail(ErrorKind::Data, std::string(to_string(hourly.market())) + ": no hourly values");
  }
  QhSeries out(hourly.market(), hourly.start_date(), hourly.day_count(), kSlotsPerDay);
  for (int d = 0; d < hourly.day_count(); ++d) {
    for (int h = 0; h < kHoursPerDay; ++h) {
      for (int k = 0; k < 4; ++k) out.set(d, 4 * h + k, hourly.value(d, h), hourly.is_gap(d, h));
    }
  }
  return {std::move(out), false};
}

QhSeries impute_gaps(QhSeries series) {
  auto& v = series.values_;
  const std::size_t n = v.size();
  std::size_t prev = n;  // index of the last observed value
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(v[i])) {
      series.gap_[i] = 1;
      continue;
    }
    if (prev == n) {
      for (std::size_t j = 0; j < i; ++j) v[j] = v[i];
    } else if (i > prev + 1) {
      const double step = (v[i] - v[prev]) / static_cast<double>(i - prev);
      for (std::size_t j = prev + 1; j < i; ++j) {
        v[j] = v[prev] + step * static_cast<double>(j - prev);
      }
    }
    prev = i;
    any = true;
  }
  if (!any) {
    fail(ErrorKind::Data, std::string(to_string(series.market())) + ": no observed values to impute from");
  }
  for (std::size_t j = prev + 1; j < n; ++j) v[j] = v[prev];
  return series;
}

void write_long_csv(const QhSeries& series, std::ostream& out) {
  out << "timestamp,series,value\n";
  const std::string name(to_string(series.market()));
  const int minutes_per_slot = series.slots_per_day() == kSlotsPerDay ? kMinutesPerSlot : 60;
  for (int d = 0; d < series.day_count(); ++d) {
    const Date date = series.start_date() + std::chrono::days{d};
    // An absent day stays absent in the file; its imputed values are not observations.
    const bool absent = series.day_missing(d);
    for (int s = 0; s < series.slots_per_day(); ++s) {
      const double v = series.value(d, s);
      const std::string text = absent || std::isnan(v) ? std::string() : csv::format_double(v);
      for (const Instant t : berlin_instants(date, s * minutes_per_slot)) {
        out << format_berlin_timestamp(t) << ',' << name << ',' << text << '\n';
      }
    }
  }
}

// --- Dataset -----------------------------------------------------------------

const QhSeries& Dataset::series(Market m) const {
  const auto it = series_.find(m);
  if (it == series_.end()) {
    fail(ErrorKind::Data, "dataset has no series " + std::string(to_string(m)));
  }
  return it->second;
}

std::vector<Market> Dataset::markets() const {
  std::vector<Market> out;
  for (const auto& [m, s] : series_) out.push_back(m);
  return out;
}

std::optional<int> Dataset::index_of(Date d) const {
  if (!range_.contains(d)) return std::nullopt;
  return static_cast<int>((d - range_.first).count());
}

Dataset assemble(std::vector<QhSeries> series_list) {
  if (series_list.empty()) fail(ErrorKind::Data, "cannot assemble an empty series list");
  DateRange common = series_list.front().range();
  std::set<Market> seen;
  for (const auto& s : series_list) {
    if (s.slots_per_day() != kSlotsPerDay) {
      fail(ErrorKind::Schema, std::string(to_string(s.market())) +
                                  ": hourly series must be broadcast before assembly");
    }
    if (!seen.insert(s.market()).second) {
      fail(ErrorKind::Data, "series " + std::string(to_string(s.market())) + " given twice");
    }
    common = intersect(common, s.range());
  }
  if (common.empty()) fail(ErrorKind::Data, "empty date intersection");
  if (common.days() < 8) {
    fail(ErrorKind::Data, "date intersection of " + std::to_string(common.days()) +
                              " days is shorter than the 8 days needed for lag-7 features");
  }
  Dataset out;
  out.range_ = common;
  for (auto& s : series_list) out.series_.emplace(s.market(), s.slice(common));
  return out;
}

nlohmann::json dataset_manifest(const Dataset& dataset) {
  nlohmann::json series = nlohmann::json::array();
  for (Market m : dataset.markets()) {
    const QhSeries& s = dataset.series(m);
    nlohmann::json imputed = nlohmann::json::array();
    for (int d = 0; d < s.day_count(); ++d) {
      for (int q = 0; q < kSlotsPerDay; ++q) {
        if (s.is_gap(d, q)) imputed.push_back({format_date(dataset.date_at(d)), q + 1});
      }
    }
    series.push_back({{"id", std::string(to_string(m))},
                      {"unit", std::string(to_string(native_unit(m)))},
                      {"hourly_native", is_hourly_native(m)},
                      {"file", std::string(to_string(m)) + ".csv"},
                      {"imputed_count", imputed.size()},
                      {"imputed", std::move(imputed)}});
  }
  return {{"format", "qhprice-dataset"},
          {"version", 1},
          {"date_range", {format_date(dataset.range().first), format_date(dataset.range().last)}},
          {"series", std::move(series)}};
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (Market m : dataset.markets()) {
    std::ostringstream out;
    write_long_csv(dataset.series(m), out);
    csv::write_text_file(dir / (std::string(to_string(m)) + ".csv"), out.str());
  }
  csv::write_text_file(dir / "manifest.json", dataset_manifest(dataset).dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(csv::read_text_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, (dir / "manifest.json").string() + ": " + e.what());
  }
  const DateRange range{parse_date(manifest.at("date_range").at(0).get<std::string>()),
                        parse_date(manifest.at("date_range").at(1).get<std::string>())};
  std::vector<QhSeries> list;
  for (const auto& entry : manifest.at("series")) {
    const Market m = market_from_string(entry.at("id").get<std::string>());
    QhSeries s = ingest_csv(dir / entry.at("file").get<std::string>(), CsvSchema::Long, m);
    for (const auto& slot : entry.at("imputed")) {
      const auto d = s.index_of(parse_date(slot.at(0).get<std::string>()));
      const int q = slot.at(1).get<int>() - 1;
      if (d && q >= 0 && q < kSlotsPerDay) s.set(*d, q, s.value(*d, q), true);
    }
    list.push_back(std::move(s));
  }
  Dataset assembled = assemble(std::move(list));
  if (!(assembled.range() == range)) {
    fail(ErrorKind::Integrity, dir.string() + ": series do not cover the manifest date range");
  }
  return assembled;
}

}  // namespace qhprice

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qhprice/calendar.hpp"

namespace qhprice {

enum class Market : std::uint8_t {
  ExaaQh,
  EpexDaH,
  EpexQhAuction,
  EpexQhIdVwap,
  LoadFcst,
  WindFcst,
  PvFcst,
  Rebap,
};

enum class Unit : std::uint8_t { EurPerMwh, Mw };

inline constexpr Market kAllMarkets[] = {
    Market::ExaaQh,   Market::EpexDaH,  Market::EpexQhAuction, Market::EpexQhIdVwap,
    Market::LoadFcst, Market::WindFcst, Market::PvFcst,        Market::Rebap,
};

std::string_view to_string(Market m);
std::string_view to_string(Unit u);
Market market_from_string(std::string_view name);
Unit unit_from_string(std::string_view name);

/// EPEX_DA_H, WIND_FCST and PV_FCST are published hourly.
bool is_hourly_native(Market m);
Unit native_unit(Market m);

struct SeriesId {
  Market market;
  Unit unit;

  static SeriesId of(Market m) { return {m, native_unit(m)}; }
  bool operator==(const SeriesId&) const = default;
};

/// One market's values on a day-major calendar grid. `slots_per_day` is 96
/// for quarter-hourly data and 24 only for hourly data before broadcasting.
/// A slot whose gap flag is set was imputed or DST-adjusted; a NaN value
/// marks a slot still awaiting imputation.
class QhSeries {
 public:
  QhSeries() = default;
  QhSeries(Market market, Date start, int day_count, int slots_per_day = kSlotsPerDay);

  Market market() const { return id_.market; }
  const SeriesId& id() const { return id_; }
  Date start_date() const { return start_; }
  Date end_date() const { return start_ + std::chrono::days{day_count_ - 1}; }
  DateRange range() const { return {start_date(), end_date()}; }
  int day_count() const { return day_count_; }
  int slots_per_day() const { return slots_per_day_; }
  std::size_t size() const { return values_.size(); }

  double value(int day_index, int slot) const { return values_[flat(day_index, slot)]; }
  bool is_gap(int day_index, int slot) const { return gap_[flat(day_index, slot)] != 0; }
  void set(int day_index, int slot, double v, bool gap = false);

  std::span<const double> values() const { return values_; }
  std::span<const std::uint8_t> gap_mask() const { return gap_; }
  std::span<const double> day(int day_index) const;

  /// Index of `d` within this series, or nullopt when outside the range.
  std::optional<int> index_of(Date d) const;
  /// Value at a calendar date; `slot` is 0-based.
  double at(Date d, int slot) const;
  /// True when every slot of the day was imputed (the day was absent).
  bool day_missing(int day_index) const;
  std::size_t gap_count() const;

  QhSeries slice(const DateRange& range) const;

  friend QhSeries impute_gaps(QhSeries series);

 private:
  std::size_t flat(int day_index, int slot) const {
    return static_cast<std::size_t>(day_index) * static_cast<std::size_t>(slots_per_day_) +
           static_cast<std::size_t>(slot);
  }

  SeriesId id_{Market::ExaaQh, Unit::EurPerMwh};
  Date start_{};
  int day_count_ = 0;
  int slots_per_day_ = kSlotsPerDay;
  std::vector<double> values_;
  std::vector<std::uint8_t> gap_;
};

enum class CsvSchema { Long, Wide };

/// Reads one series. Long files carry `timestamp,series,value` rows with
/// explicit UTC offsets; they are gridded on Europe/Berlin wall-clock days,
/// the fall-back hour is averaged per slot and remaining holes are imputed.
QhSeries ingest_csv(const std::filesystem::path& path, CsvSchema schema, Market market);
QhSeries read_long_csv(std::istream& in, Market market, const std::string& source = "<stream>");
/// All series columns of a wide `date,qh,<series...>` file.
std::vector<QhSeries> read_wide_csv(std::istream& in, const std::string& source = "<stream>");

struct BroadcastResult {
  QhSeries series;
  /// Set when the input was already quarter-hourly and returned unchanged.
  bool already_quarter_hourly = false;
};

BroadcastResult broadcast_hourly(const QhSeries& hourly);

/// Linear interpolation across NaN slots in slot order across days; leading
/// and trailing holes take the nearest value. Gap flags are kept.
QhSeries impute_gaps(QhSeries series);

void write_long_csv(const QhSeries& series, std::ostream& out);

/// Immutable collection of series over one common date range.
class Dataset {
 public:
  Dataset() = default;

  bool has(Market m) const { return series_.count(m) != 0; }
  const QhSeries& series(Market m) const;
  const DateRange& range() const { return range_; }
  int day_count() const { return range_.days(); }
  std::vector<Market> markets() const;
  /// Index of `d` relative to the first day of the range, or nullopt.
  std::optional<int> index_of(Date d) const;
  Date date_at(int index) const { return range_.first + std::chrono::days{index}; }

  friend Dataset assemble(std::vector<QhSeries> series_list);

 private:
  std::map<Market, QhSeries> series_;
  DateRange range_{};
};

/// Trims all series to their common date range. At least 8 days are required.
Dataset assemble(std::vector<QhSeries> series_list);

/// One long CSV per series plus `manifest.json`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);
nlohmann::json dataset_manifest(const Dataset& dataset);

}  // namespace qhprice

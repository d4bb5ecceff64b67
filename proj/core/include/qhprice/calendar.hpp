#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qhprice {

using Date = std::chrono::sys_days;
using Instant = std::chrono::sys_seconds;

inline constexpr int kSlotsPerDay = 96;
inline constexpr int kHoursPerDay = 24;
inline constexpr int kMinutesPerSlot = 15;

/// Inclusive calendar date range.
struct DateRange {
  Date first;
  Date last;

  int days() const { return static_cast<int>((last - first).count()) + 1; }
  bool empty() const { return last < first; }
  bool contains(Date d) const { return !(d < first) && !(last < d); }
  bool operator==(const DateRange&) const = default;
};

Date make_date(int year, unsigned month, unsigned day);
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// ISO weekday: Monday = 1 ... Sunday = 7.
int iso_weekday(Date d);

DateRange intersect(const DateRange& a, const DateRange& b);

/// Parses ISO-8601 `YYYY-MM-DD[T ]HH:MM[:SS[.fff]](Z|+HH:MM|-HH:MM)`.
/// Throws Error(Parse) on malformed input; an explicit offset is mandatory.
Instant parse_timestamp(std::string_view text);

/// Wall-clock position of an instant in Europe/Berlin (EU summer-time rule).
struct LocalSlotTime {
  Date date;
  int minute_of_day = 0;
  int utc_offset_minutes = 60;
};

int berlin_offset_minutes(Instant utc);
LocalSlotTime to_berlin(Instant utc);

/// UTC instants at which Berlin wall clock reads `date` + `minute_of_day`:
/// none inside the spring-forward gap, two inside the fall-back hour.
std::vector<Instant> berlin_instants(Date date, int minute_of_day);

/// Formats `utc` as Berlin local time with its offset, e.g.
/// 2017-10-29T02:15:00+01:00.
std::string format_berlin_timestamp(Instant utc);

bool is_spring_forward_day(Date d);
bool is_fall_back_day(Date d);

}  // namespace qhprice

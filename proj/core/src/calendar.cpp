#include "qhprice/calendar.hpp"

#include <charconv>
#include <cstdio>

#include "qhprice/error.hpp"

namespace qhprice {

namespace {

using namespace std::chrono;

bool parse_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > text.size()) return false;
  const char* begin = text.data() + pos;
  for (std::size_t i = 0; i < len; ++i) {
    if (begin[i] < '0' || begin[i] > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(begin, begin + len, out);
  return ec == std::errc() && ptr == begin + len;
}

[[noreturn]] void bad_timestamp(std::string_view text) {
  fail(ErrorKind::Parse, "malformed timestamp '" + std::string(text) + "'");
}

// Summer time runs from the last Sunday of March 01:00 UTC to the last
// Sunday of October 01:00 UTC.
Instant last_sunday_0100_utc(int y, unsigned m) {
  const sys_days month_end{year{y} / month{m} / std::chrono::last};
  const weekday wd{month_end};
  const sys_days sunday = month_end - days{wd.c_encoding()};
  return Instant{sunday} + hours{1};
}

}  // namespace

Date make_date(int y, unsigned m, unsigned d) {
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) {
    fail(ErrorKind::Parse, "invalid calendar date " + std::to_string(y) + "-" +
                               std::to_string(m) + "-" + std::to_string(d));
  }
  return sys_days{ymd};
}

Date parse_date(std::string_view text) {
  int y = 0, m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_int(text, 0, 4, y) ||
      !parse_int(text, 5, 2, m) || !parse_int(text, 8, 2, d)) {
    fail(ErrorKind::Parse, "malformed date '" + std::string(text) + "'");
  }
  return make_date(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

std::string format_date(Date d) {
  const year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int iso_weekday(Date d) { return static_cast<int>(weekday{d}.iso_encoding()); }

DateRange intersect(const DateRange& a, const DateRange& b) {
  return {std::max(a.first, b.first), std::min(a.last, b.last)};
}

Instant parse_timestamp(std::string_view text) {
  int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
  if (text.size() < 17 || text[4] != '-' || text[7] != '-' ||
      (text[10] != 'T' && text[10] != ' ') || text[13] != ':' || !parse_int(text, 0, 4, y) ||
      !parse_int(text, 5, 2, mo) || !parse_int(text, 8, 2, d) || !parse_int(text, 11, 2, hh) ||
      !parse_int(text, 14, 2, mm)) {
    bad_timestamp(text);
  }
  std::size_t pos = 16;
  if (pos < text.size() && text[pos] == ':') {
    if (!parse_int(text, pos + 1, 2, ss)) bad_timestamp(text);
    pos += 3;
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      const std::size_t start = pos;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
      if (pos == start) bad_timestamp(text);
    }
  }
  if (pos >= text.size()) bad_timestamp(text);  // offset is mandatory

  int offset_minutes = 0;
  if (text[pos] == 'Z') {
    if (pos + 1 != text.size()) bad_timestamp(text);
  } else if (text[pos] == '+' || text[pos] == '-') {
    int oh = 0, om = 0;
    if (!parse_int(text, pos + 1, 2, oh)) bad_timestamp(text);
    std::size_t next = pos + 3;
    if (next < text.size() && text[next] == ':') ++next;
    if (!parse_int(text, next, 2, om) || next + 2 != text.size()) bad_timestamp(text);
    offset_minutes = (oh * 60 + om) * (text[pos] == '-' ? -1 : 1);
  } else {
    bad_timestamp(text);
  }
  if (hh > 23 || mm > 59 || ss > 59) bad_timestamp(text);

  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) bad_timestamp(text);
  const Instant local = Instant{sys_days{ymd}} + hours{hh} + minutes{mm} + seconds{ss};
  return local - minutes{offset_minutes};
}

int berlin_offset_minutes(Instant utc) {
  const int y = static_cast<int>(year_month_day{floor<days>(utc)}.year());
  const Instant start = last_sunday_0100_utc(y, 3);
  const Instant end = last_sunday_0100_utc(y, 10);
  return (utc >= start && utc < end) ? 120 : 60;
}

LocalSlotTime to_berlin(Instant utc) {
  const int offset = berlin_offset_minutes(utc);
  const Instant local = utc + minutes{offset};
  const Date date = floor<days>(local);
  const auto minute = duration_cast<minutes>(local - Instant{date}).count();
  return {date, static_cast<int>(minute), offset};
}

std::vector<Instant> berlin_instants(Date date, int minute_of_day) {
  std::vector<Instant> out;
  const Instant local = Instant{date} + minutes{minute_of_day};
  for (int offset : {120, 60}) {
    const Instant candidate = local - minutes{offset};
    if (berlin_offset_minutes(candidate) == offset) out.push_back(candidate);
  }
  return out;
}

std::string format_berlin_timestamp(Instant utc) {
  const LocalSlotTime t = to_berlin(utc);
  const year_month_day ymd{t.date};
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:00+%02d:00",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), t.minute_of_day / 60, t.minute_of_day % 60,
                t.utc_offset_minutes / 60);
  return buf;
}

bool is_spring_forward_day(Date d) {
  const int y = static_cast<int>(year_month_day{d}.year());
  return floor<days>(last_sunday_0100_utc(y, 3)) == d;
}

bool is_fall_back_day(Date d) {
  const int y = static_cast<int>(year_month_day{d}.year());
  return floor<days>(last_sunday_0100_utc(y, 10)) == d;
}

}  // namespace qhprice

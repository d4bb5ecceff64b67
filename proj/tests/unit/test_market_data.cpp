#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "qhprice/error.hpp"
#include "qhprice/market_data.hpp"
#include "qhprice/synthetic.hpp"

using namespace qhprice;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string two(int v) { return (v < 10 ? "0" : "") + std::to_string(v); }

std::string stamp(const std::string& date, int minute, const std::string& offset) {
  return date + "T" + two(minute / 60) + ":" + two(minute % 60) + ":00" + offset;
}

// One regular winter day of quarter-hourly rows, value = slot index.
std::string winter_day(const std::string& series = "EXAA_QH") {
  std::string csv = "timestamp,series,value\n";
  for (int s = 0; s < 96; ++s) csv += stamp("2017-01-05", 15 * s, "+01:00") + "," + series + "," + std::to_string(s) + "\n";
  return csv;
}

QhSeries read(const std::string& text, Market m) {
  std::istringstream in(text);
  return read_long_csv(in, m, "test.csv");
}

QhSeries from_values(Market m, Date start, const std::vector<double>& v) {
  QhSeries s(m, start, static_cast<int>(v.size() / 96));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const bool gap = std::isnan(v[i]);
    s.set(static_cast<int>(i / 96), static_cast<int>(i % 96), v[i], gap);
  }
  return s;
}

}  // namespace

TEST(MarketData, SeriesIdsAndUnits) {
  EXPECT_TRUE(is_hourly_native(Market::EpexDaH));
  EXPECT_TRUE(is_hourly_native(Market::WindFcst));
  EXPECT_TRUE(is_hourly_native(Market::PvFcst));
  EXPECT_FALSE(is_hourly_native(Market::ExaaQh));
  EXPECT_FALSE(is_hourly_native(Market::LoadFcst));
  EXPECT_EQ(native_unit(Market::LoadFcst), Unit::Mw);
  EXPECT_EQ(native_unit(Market::Rebap), Unit::EurPerMwh);
  for (Market m : kAllMarkets) EXPECT_EQ(market_from_string(to_string(m)), m);
  EXPECT_THROW(market_from_string("NOPE"), Error);
}

TEST(MarketData, CompleteDay) {
  const QhSeries s = read(winter_day(), Market::ExaaQh);
  ASSERT_EQ(s.day_count(), 1);
  EXPECT_EQ(s.start_date(), make_date(2017, 1, 5));
  EXPECT_EQ(s.gap_count(), 0u);
  for (int q = 0; q < 96; ++q) EXPECT_EQ(s.value(0, q), q);
}

TEST(MarketData, FallBackDayAveragesDuplicateHour) {
  // 100 raw rows; local 02:00-02:45 appears under +02:00 (rows 8..11) and
  // +01:00 (rows 12..15).
  std::string csv = "timestamp,series,value\n";
  int row = 0;
  for (int m = 0; m < 180; m += 15, ++row) csv += stamp("2017-10-29", m, "+02:00") + ",EXAA_QH," + std::to_string(row) + "\n";
  for (int m = 120; m < 1440; m += 15, ++row) csv += stamp("2017-10-29", m, "+01:00") + ",EXAA_QH," + std::to_string(row) + "\n";
  ASSERT_EQ(row, 100);
  const QhSeries s = read(csv, Market::ExaaQh);
  ASSERT_EQ(s.day_count(), 1);
  for (int q = 0; q < 8; ++q) {
    EXPECT_EQ(s.value(0, q), q);
    EXPECT_FALSE(s.is_gap(0, q));
  }
  for (int q = 8; q < 12; ++q) {
    EXPECT_DOUBLE_EQ(s.value(0, q), (q + (q + 4)) / 2.0);
    EXPECT_TRUE(s.is_gap(0, q));
  }
  for (int q = 12; q < 96; ++q) EXPECT_EQ(s.value(0, q), q + 4);
  EXPECT_EQ(s.gap_count(), 4u);
}

TEST(MarketData, SpringForwardDayImputesMissingHour) {
  std::string csv = "timestamp,series,value\n";
  int rows = 0;
  for (int m = 0; m < 1440; m += 15) {
    if (m >= 120 && m < 180) continue;
    const std::string off = m < 120 ? "+01:00" : "+02:00";
    csv += stamp("2017-03-26", m, off) + ",EPEX_QH_AUCTION," + std::to_string(m / 15) + "\n";
    ++rows;
  }
  ASSERT_EQ(rows, 92);
  const QhSeries s = read(csv, Market::EpexQhAuction);
  EXPECT_EQ(s.gap_count(), 4u);
  for (int q = 8; q < 12; ++q) {
    EXPECT_TRUE(s.is_gap(0, q));
    EXPECT_DOUBLE_EQ(s.value(0, q), q);  // linear between 7 and 12
  }
}

TEST(MarketData, HourlyFileIsBroadcast) {
  std::string csv = "timestamp,series,value\n";
  for (int h = 0; h < 24; ++h) csv += stamp("2017-01-05", 60 * h, "+01:00") + ",EPEX_DA_H[EUR/MWh]," + std::to_string(40 + h) + "\n";
  const QhSeries s = read(csv, Market::EpexDaH);
  ASSERT_EQ(s.slots_per_day(), 96);
  for (int q = 0; q < 96; ++q) EXPECT_EQ(s.value(0, q), 40 + q / 4);
}

TEST(MarketData, IngestErrors) {
  std::string bad = "timestamp,series,value\n2017-01-05T00:00+01:00,EXAA_QH,1\nnot-a-time,EXAA_QH,2\n";
  try {
    read(bad, Market::ExaaQh);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  const std::string wrong_unit = "timestamp,series,value\n2017-01-05T00:00+01:00,EXAA_QH[MW],1\n";
  try {
    read(wrong_unit, Market::ExaaQh);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Schema);
  }
  std::string dup = winter_day();
  dup += stamp("2017-01-05", 30, "+01:00") + ",EXAA_QH,9\n";
  try {
    read(dup, Market::ExaaQh);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Integrity);
  }
}

TEST(MarketData, BroadcastHourly) {
  QhSeries hourly(Market::EpexDaH, make_date(2017, 1, 5), 1, 24);
  for (int h = 0; h < 24; ++h) hourly.set(0, h, h == 0 ? 42.0 : h, false);
  const BroadcastResult r = broadcast_hourly(hourly);
  EXPECT_FALSE(r.already_quarter_hourly);
  for (int q = 0; q < 4; ++q) EXPECT_EQ(r.series.value(0, q), 42.0);
  for (int q = 4; q < 96; ++q) EXPECT_EQ(r.series.value(0, q), q / 4);
  const BroadcastResult again = broadcast_hourly(r.series);
  EXPECT_TRUE(again.already_quarter_hourly);
  EXPECT_TRUE(std::equal(again.series.values().begin(), again.series.values().end(), r.series.values().begin()));
  QhSeries empty(Market::EpexDaH, make_date(2017, 1, 5), 0, 24);
  EXPECT_THROW(broadcast_hourly(empty), Error);
}

TEST(MarketData, ImputeGaps) {
  std::vector<double> v(96, 1.0);
  v[10] = 10;
  v[11] = kNaN;
  v[12] = 14;
  v[20] = 0;
  v[21] = v[22] = v[23] = kNaN;
  v[24] = 8;
  v[0] = kNaN;
  v[1] = 5;
  v[2] = 6;
  const QhSeries s = impute_gaps(from_values(Market::ExaaQh, make_date(2017, 1, 5), v));
  EXPECT_EQ(s.value(0, 11), 12.0);
  EXPECT_EQ(s.value(0, 21), 2.0);
  EXPECT_EQ(s.value(0, 22), 4.0);
  EXPECT_EQ(s.value(0, 23), 6.0);
  EXPECT_EQ(s.value(0, 0), 5.0);
  EXPECT_EQ(s.gap_count(), 5u);
  for (int q = 0; q < 96; ++q) {
    if (!s.is_gap(0, q)) EXPECT_EQ(s.value(0, q), v[static_cast<std::size_t>(q)]);
  }
  EXPECT_THROW(impute_gaps(from_values(Market::ExaaQh, make_date(2017, 1, 5), std::vector<double>(96, kNaN))), Error);
}

TEST(MarketData, ImputeAcrossDays) {
  std::vector<double> v(192, 3.0);
  v[95] = kNaN;
  v[96] = kNaN;
  v[94] = 0.0;
  v[97] = 3.0;
  const QhSeries s = impute_gaps(from_values(Market::ExaaQh, make_date(2017, 1, 5), v));
  EXPECT_DOUBLE_EQ(s.value(0, 95), 1.0);
  EXPECT_DOUBLE_EQ(s.value(1, 0), 2.0);
}

TEST(MarketData, Assemble) {
  auto series = [](Market m, Date first, Date last) {
    return from_values(m, first, std::vector<double>(static_cast<std::size_t>(96 * ((last - first).count() + 1)), 1.0));
  };
  const Dataset d = assemble({series(Market::ExaaQh, make_date(2017, 1, 1), make_date(2017, 1, 31)),
                              series(Market::EpexQhAuction, make_date(2017, 1, 10), make_date(2017, 2, 10))});
  EXPECT_EQ(d.range().first, make_date(2017, 1, 10));
  EXPECT_EQ(d.range().last, make_date(2017, 1, 31));
  EXPECT_EQ(d.series(Market::ExaaQh).day_count(), 22);
  EXPECT_EQ(d.series(Market::ExaaQh).start_date(), make_date(2017, 1, 10));
  try {
    assemble({series(Market::ExaaQh, make_date(2017, 1, 1), make_date(2017, 1, 31)),
              series(Market::EpexQhAuction, make_date(2017, 3, 1), make_date(2017, 3, 31))});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("empty date intersection"), std::string::npos);
  }
  EXPECT_THROW(assemble({series(Market::ExaaQh, make_date(2017, 1, 1), make_date(2017, 1, 7))}), Error);
}

TEST(MarketData, LongCsvRoundTripIsBitExact) {
  // Gap-free winter stretch with awkward decimals.
  std::vector<double> v(96 * 10);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(0.37 * i) * 123.456789 + 1e-9 * i;
  const QhSeries s = from_values(Market::EpexQhIdVwap, make_date(2017, 11, 6), v);
  std::ostringstream out;
  write_long_csv(s, out);
  const QhSeries back = read(out.str(), Market::EpexQhIdVwap);
  ASSERT_EQ(back.day_count(), 10);
  EXPECT_EQ(back.gap_count(), 0u);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(back.values()[i], v[i]);
}

TEST(MarketData, DatasetPersistence) {
  SyntheticOptions o;
  o.days = 20;
  o.start = make_date(2017, 10, 20);  // spans the fall-back day
  o.missing_days = {5};
  o.missing_markets = {Market::EpexQhAuction};
  const Dataset d = simulate_dataset(o);
  const auto dir = std::filesystem::temp_directory_path() / "qhprice_test_persist";
  std::filesystem::remove_all(dir);
  save_dataset(d, dir);
  const Dataset back = load_dataset(dir);
  EXPECT_EQ(back.range(), d.range());
  EXPECT_EQ(back.markets(), d.markets());
  EXPECT_TRUE(back.series(Market::EpexQhAuction).day_missing(5));
  const auto fall = *d.index_of(make_date(2017, 10, 29));
  for (Market m : d.markets()) {
    const QhSeries& a = d.series(m);
    const QhSeries& b = back.series(m);
    for (int t = 0; t < a.day_count(); ++t) {
      for (int q = 0; q < 96; ++q) {
        if (t == fall && q >= 8 && q < 12) continue;  // duplicate hour is averaged on reload
        ASSERT_EQ(a.value(t, q), b.value(t, q)) << to_string(m) << " day " << t << " slot " << q;
      }
    }
  }
  const nlohmann::json manifest = dataset_manifest(back);
  EXPECT_EQ(manifest.at("series").size(), 8u);
  std::filesystem::remove_all(dir);
}

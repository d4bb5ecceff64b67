#include "qhprice/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>

#include "qhprice/csv.hpp"
#include "qhprice/error.hpp"

namespace qhprice {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string default_name(const char* base, Side side, const std::string& source) {
  std::string name = std::string(base) + "_" + std::string(to_string(side));
  if (source.size() > 5 && source.compare(source.size() - 5, 5, "_EXAA") == 0) name += "_EXAA";
  return name;
}

const std::pair<std::vector<double>, std::vector<double>>& forecasts_of(const SlotBook& book, const std::string& model) {
  const auto it = book.forecasts.find(model);
  if (it == book.forecasts.end()) fail(ErrorKind::Data, "panel has no forecasts from model " + model);
  return it->second;
}

LedgerEntry entry(const SlotKey& slot, Venue venue, double w2, double price, double volume, Side side) {
  return {slot, venue, w2, price, volume, cashflow(price, volume, side)};
}

}  // namespace

std::string_view to_string(Side s) { return s == Side::Buy ? "Buy" : "Sell"; }

std::string_view to_string(Venue v) {
  switch (v) {
    case Venue::Exaa: return "EXAA_QH";
    case Venue::Auction: return "EPEX_QH_AUCTION";
    case Venue::Intraday: return "EPEX_QH_ID_VWAP";
    case Venue::Rebap: return "REBAP";
    case Venue::Mixed: return "MIXED";
  }
  return "?";
}

SlotBook SlotBook::build(const ForecastPanel& panel, const Dataset* dataset) {
  std::map<SlotKey, std::pair<double, double>> realized;
  std::map<SlotKey, double> exaa;
  for (const auto& r : panel.records) {
    auto& cell = realized.try_emplace({r.date, r.qh}, kNaN, kNaN).first->second;
    (r.target == Target::QhAuction ? cell.first : cell.second) = r.realized;
    if (r.model == "Naive_EXAA") exaa[{r.date, r.qh}] = r.prediction;
  }
  SlotBook book;
  for (const auto& [slot, pair] : realized) {
    if (std::isnan(pair.first) || std::isnan(pair.second)) continue;
    book.slots.push_back(slot);
    book.auction.push_back(pair.first);
    book.intraday.push_back(pair.second);
  }
  if (book.slots.empty()) fail(ErrorKind::Data, "panel has no slot with realized prices for both venues");

  std::map<SlotKey, std::size_t> index;
  for (std::size_t i = 0; i < book.slots.size(); ++i) index[book.slots[i]] = i;
  book.exaa.assign(book.size(), kNaN);
  book.rebap.assign(book.size(), kNaN);
  for (std::size_t i = 0; i < book.size(); ++i) {
    const SlotKey& s = book.slots[i];
    if (const auto it = exaa.find(s); it != exaa.end()) book.exaa[i] = it->second;
    if (!dataset) continue;
    const auto t = dataset->index_of(s.date);
    if (!t) continue;
    if (std::isnan(book.exaa[i]) && dataset->has(Market::ExaaQh) && !dataset->series(Market::ExaaQh).day_missing(*t)) {
      book.exaa[i] = dataset->series(Market::ExaaQh).value(*t, s.qh - 1);
    }
    if (dataset->has(Market::Rebap) && !dataset->series(Market::Rebap).day_missing(*t)) {
      book.rebap[i] = dataset->series(Market::Rebap).value(*t, s.qh - 1);
    }
  }
  for (const auto& r : panel.records) {
    if (r.model == "Naive_EXAA") continue;
    const auto it = index.find({r.date, r.qh});
    if (it == index.end()) continue;
    auto& fc = book.forecasts.try_emplace(r.model, std::vector<double>(book.size(), kNaN),
                                          std::vector<double>(book.size(), kNaN))
                   .first->second;
    (r.target == Target::QhAuction ? fc.first : fc.second)[it->second] = r.prediction;
  }
  return book;
}

std::vector<double> StrategyLedger::prices() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.price);
  return out;
}

double cashflow(double price, double volume_mw, Side side) {
  const double amount = price * volume_mw * kSlotHours;
  return side == Side::Buy ? -amount : amount;
}

StrategyLedger naive_strategy(const SlotBook& book, Venue venue, double volume_mw, Side side) {
  const std::vector<double>* prices = nullptr;
  const char* label = nullptr;
  switch (venue) {
    case Venue::Exaa: prices = &book.exaa; label = "Naive_EXAA"; break;
    case Venue::Auction: prices = &book.auction; label = "Naive_AUQH"; break;
    case Venue::Intraday: prices = &book.intraday; label = "Naive_IDQH"; break;
    case Venue::Rebap: prices = &book.rebap; label = "Naive_REBAP"; break;
    case Venue::Mixed: fail(ErrorKind::Config, "naive strategy needs a single venue");
  }
  StrategyLedger ledger{label, side, {}, {}};
  const double w2 = venue == Venue::Intraday ? 1.0 : 0.0;
  for (std::size_t i = 0; i < book.size(); ++i) {
    const double p = (*prices)[i];
    if (std::isnan(p)) {
      ledger.skipped.emplace_back(book.slots[i], "no realized " + std::string(to_string(venue)) + " price");
      continue;
    }
    ledger.entries.push_back(entry(book.slots[i], venue, w2, p, volume_mw, side));
  }
  return ledger;
}

StrategyLedger perfect_strategy(const SlotBook& book, Side side, double volume_mw) {
  StrategyLedger ledger{"Perfect_" + std::string(to_string(side)), side, {}, {}};
  for (std::size_t i = 0; i < book.size(); ++i) {
    const double a = book.auction[i];
    const double b = book.intraday[i];
    const bool pick_intraday = side == Side::Buy ? b < a : b > a;
    ledger.entries.push_back(entry(book.slots[i], pick_intraday ? Venue::Intraday : Venue::Auction,
                                   pick_intraday ? 1.0 : 0.0, pick_intraday ? b : a, volume_mw, side));
  }
  return ledger;
}

StrategyLedger base_strategy(const SlotBook& book, const std::string& source_model, Side side, double volume_mw,
                             const std::string& name) {
  const auto& [fa, fb] = forecasts_of(book, source_model);
  StrategyLedger ledger{name.empty() ? default_name("Base", side, source_model) : name, side, {}, {}};
  for (std::size_t i = 0; i < book.size(); ++i) {
    if (std::isnan(fa[i]) || std::isnan(fb[i])) {
      ledger.skipped.emplace_back(book.slots[i], "missing forecast from " + source_model);
      continue;
    }
    const bool pick_intraday = side == Side::Buy ? fb[i] < fa[i] : fb[i] > fa[i];
    ledger.entries.push_back(entry(book.slots[i], pick_intraday ? Venue::Intraday : Venue::Auction,
                                   pick_intraday ? 1.0 : 0.0, pick_intraday ? book.intraday[i] : book.auction[i],
                                   volume_mw, side));
  }
  return ledger;
}

double meanvar_objective(const MeanVarInputs& in, double w2, Side side) {
  const double w1 = 1.0 - w2;
  const double expected = in.mu1 + w2 * (in.mu2 - in.mu1);
  const double variance = w1 * w1 * in.var1 + w2 * w2 * in.var2 + 2.0 * w1 * w2 * in.cov;
  return side == Side::Sell ? expected - in.gamma / 2.0 * variance : expected + in.gamma / 2.0 * variance;
}

std::optional<double> meanvar_closed_form(const MeanVarInputs& in, Side side) {
  const double curvature = in.var1 - 2.0 * in.cov + in.var2;
  if (curvature == 0.0) return std::nullopt;
  const double drift = (side == Side::Sell ? 1.0 : -1.0) * (in.mu2 - in.mu1) / in.gamma;
  return (drift - (in.cov - in.var1)) / curvature;
}

double meanvar_weight(const MeanVarInputs& in, Side side) {
  if (!(in.gamma > 0.0)) fail(ErrorKind::Config, "risk aversion gamma must be > 0");
  if (in.var1 < 0.0 || in.var2 < 0.0) fail(ErrorKind::Data, "negative variance in mean-variance inputs");
  // Score to maximize, measured from w2 = 0 so that rounding stays small near the optimum.
  const double sign = side == Side::Sell ? 1.0 : -1.0;
  const double curvature = in.var1 - 2.0 * in.cov + in.var2;
  const double slope = 2.0 * (in.cov - in.var1);
  auto score = [&](double w) {
    return sign * w * (in.mu2 - in.mu1) - in.gamma / 2.0 * (w * slope + w * w * curvature);
  };

  const double f0 = score(0.0);
  const double f1 = score(1.0);
  if (curvature <= 0.0) return f1 > f0 ? 1.0 : 0.0;

  // score(b) - score(a) in factored form; differencing two scores loses
  // half the digits once the points are close to the optimum.
  auto gain = [&](double a, double b) {
    return (b - a) * (sign * (in.mu2 - in.mu1) - in.gamma / 2.0 * (slope + (a + b) * curvature));
  };
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0;
  double hi = 1.0;
  double x1 = hi - ratio * (hi - lo);
  double x2 = lo + ratio * (hi - lo);
  while (hi - lo > 1e-10) {
    if (gain(x1, x2) > 0.0) {
      lo = x1;
      x1 = x2;
      x2 = lo + ratio * (hi - lo);
    } else {
      hi = x2;
      x2 = x1;
      x1 = hi - ratio * (hi - lo);
    }
  }
  double w = 0.5 * (lo + hi);
  const double fw = score(w);
  if (f0 >= fw && f0 >= f1) w = 0.0;
  else if (f1 > fw) w = 1.0;

  const double closed = std::clamp(*meanvar_closed_form(in, side), 0.0, 1.0);
  if (std::abs(closed - w) > 1e-6) {
    fail(ErrorKind::Numerical, "mean-variance search disagrees with closed form (" + std::to_string(w) + " vs " +
                                   std::to_string(closed) + ")");
  }
  return w;
}

Moments rolling_moments(const QhSeries& venue1, const QhSeries& venue2, Date day, int qh, int window_days) {
  if (window_days < kMinWindowDays) {
    fail(ErrorKind::Config, "moment window of " + std::to_string(window_days) + " days is shorter than " +
                                std::to_string(kMinWindowDays));
  }
  std::vector<double> a;
  std::vector<double> b;
  for (int k = window_days; k >= 1; --k) {
    const Date d = day - std::chrono::days{k};
    const auto i = venue1.index_of(d);
    const auto j = venue2.index_of(d);
    if (!i || !j || venue1.day_missing(*i) || venue2.day_missing(*j)) continue;
    a.push_back(venue1.value(*i, qh - 1));
    b.push_back(venue2.value(*j, qh - 1));
  }
  if (static_cast<int>(a.size()) < kMinWindowDays) {
    fail(ErrorKind::Data, "only " + std::to_string(a.size()) + " realized days before " + format_date(day) +
                              " for mean-variance moments");
  }
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  Moments m;
  for (std::size_t k = 0; k < a.size(); ++k) {
    m.var1 += (a[k] - ma) * (a[k] - ma);
    m.var2 += (b[k] - mb) * (b[k] - mb);
    m.cov += (a[k] - ma) * (b[k] - mb);
  }
  m.var1 /= n - 1.0;
  m.var2 /= n - 1.0;
  m.cov /= n - 1.0;
  m.days = static_cast<int>(a.size());
  return m;
}

StrategyLedger meanvar_strategy(const SlotBook& book, const Dataset& dataset, const std::string& source_model,
                                Side side, int window_days, double gamma, double volume_mw, const std::string& name) {
  const auto& [fa, fb] = forecasts_of(book, source_model);
  const QhSeries& auction = dataset.series(Market::EpexQhAuction);
  const QhSeries& intraday = dataset.series(Market::EpexQhIdVwap);
  StrategyLedger ledger{name.empty() ? default_name("MeanVar", side, source_model) : name, side, {}, {}};
  for (std::size_t i = 0; i < book.size(); ++i) {
    const SlotKey& s = book.slots[i];
    if (std::isnan(fa[i]) || std::isnan(fb[i])) {
      ledger.skipped.emplace_back(s, "missing forecast from " + source_model);
      continue;
    }
    const Moments m = rolling_moments(auction, intraday, s.date, s.qh, window_days);
    const double w2 = meanvar_weight({fa[i], fb[i], m.var1, m.var2, m.cov, gamma}, side);
    const double price = (1.0 - w2) * book.auction[i] + w2 * book.intraday[i];
    const Venue venue = w2 == 0.0 ? Venue::Auction : (w2 == 1.0 ? Venue::Intraday : Venue::Mixed);
    ledger.entries.push_back(entry(s, venue, w2, price, volume_mw, side));
  }
  return ledger;
}

double account_delta(const StrategyLedger& strategy, const StrategyLedger& benchmark, double volume_mw) {
  if (strategy.entries.size() != benchmark.entries.size()) {
    fail(ErrorKind::Data, strategy.name + " and " + benchmark.name + " cover different slots");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < strategy.entries.size(); ++i) {
    if (strategy.entries[i].slot != benchmark.entries[i].slot) {
      fail(ErrorKind::Data, strategy.name + " and " + benchmark.name + " cover different slots");
    }
    sum += benchmark.entries[i].price - strategy.entries[i].price;
  }
  const double delta = sum * volume_mw * kSlotHours;
  return strategy.side == Side::Buy ? delta : -delta;
}

AccountSummary account(const StrategyLedger& ledger, const std::vector<const StrategyLedger*>& benchmarks,
                       double volume_mw) {
  if (ledger.entries.empty()) fail(ErrorKind::Data, "strategy " + ledger.name + " has an empty ledger");
  AccountSummary s;
  s.strategy = ledger.name;
  s.side = ledger.side;
  s.volume_mw = volume_mw;
  const std::vector<double> prices = ledger.prices();
  s.slots = prices.size();
  double sum = 0.0;
  for (double p : prices) sum += p;
  s.price = sum / static_cast<double>(prices.size());
  s.min_price = *std::min_element(prices.begin(), prices.end());
  s.max_price = *std::max_element(prices.begin(), prices.end());
  double sq = 0.0;
  for (double p : prices) sq += (p - s.price) * (p - s.price);
  s.std_dev = std::sqrt(sq / static_cast<double>(prices.size()));
  try {
    s.sharpe = sharpe(prices);
  } catch (const Error&) {
    s.sharpe = kNaN;
  }
  for (const auto& e : ledger.entries) s.cashflow_eur += cashflow(e.price, volume_mw, ledger.side);
  for (const StrategyLedger* b : benchmarks) s.delta_eur[b->name] = account_delta(ledger, *b, volume_mw);
  return s;
}

DirectionalAccuracy base_choice_accuracy(const SlotBook& book, const std::string& source_model, Side side) {
  const StrategyLedger ledger = base_strategy(book, source_model, side, 1.0);
  const auto& [fa, fb] = forecasts_of(book, source_model);
  std::map<SlotKey, std::size_t> index;
  for (std::size_t i = 0; i < book.size(); ++i) index[book.slots[i]] = i;
  DirectionalAccuracy out;
  std::map<int, std::pair<std::size_t, std::size_t>> per_qh;
  for (const auto& e : ledger.entries) {
    const std::size_t i = index.at(e.slot);
    if (fa[i] == fb[i] || book.auction[i] == book.intraday[i]) {
      ++out.ties;
      continue;
    }
    const bool intraday_better = side == Side::Buy ? book.intraday[i] < book.auction[i]
                                                   : book.intraday[i] > book.auction[i];
    const bool hit = (e.venue == Venue::Intraday) == intraday_better;
    auto& cell = per_qh[e.slot.qh];
    cell.first += hit ? 1 : 0;
    ++cell.second;
    out.hits += hit ? 1 : 0;
    ++out.evaluated;
  }
  if (out.evaluated == 0) fail(ErrorKind::Data, "venue choice accuracy: every slot is tied");
  out.overall = static_cast<double>(out.hits) / static_cast<double>(out.evaluated);
  for (const auto& [qh, cell] : per_qh) {
    out.per_qh[qh] = static_cast<double>(cell.first) / static_cast<double>(cell.second);
  }
  return out;
}

void write_ledger_csv(const std::vector<StrategyLedger>& ledgers, std::ostream& out) {
  out << "date,qh,strategy,venue_or_w2,price,volume_mw,cashflow_eur\n";
  for (const auto& l : ledgers) {
    for (const auto& e : l.entries) {
      out << format_date(e.slot.date) << ',' << e.slot.qh << ',' << l.name << ','
          << (e.venue == Venue::Mixed ? csv::format_double(e.w2) : std::string(to_string(e.venue))) << ','
          << csv::format_double(e.price) << ',' << csv::format_double(e.volume_mw) << ','
          << csv::format_double(e.cashflow_eur) << '\n';
    }
  }
}

void write_summary_csv(const std::vector<AccountSummary>& rows, std::ostream& out) {
  std::set<std::string> benchmarks;
  for (const auto& r : rows) {
    for (const auto& [name, delta] : r.delta_eur) benchmarks.insert(name);
  }
  out << "strategy,side,slots,price,min_price,max_price,std_dev,sharpe,cashflow_eur";
  for (const auto& b : benchmarks) out << ",delta_vs_" << b;
  out << '\n';
  for (const auto& r : rows) {
    out << r.strategy << ',' << to_string(r.side) << ',' << r.slots << ',' << csv::format_double(r.price) << ','
        << csv::format_double(r.min_price) << ',' << csv::format_double(r.max_price) << ','
        << csv::format_double(r.std_dev) << ',' << csv::format_double(r.sharpe) << ','
        << csv::format_double(r.cashflow_eur);
    for (const auto& b : benchmarks) {
      const auto it = r.delta_eur.find(b);
      out << ',' << (it == r.delta_eur.end() ? std::string() : csv::format_double(it->second));
    }
    out << '\n';
  }
}

nlohmann::json to_json(const AccountSummary& s) {
  return {{"strategy", s.strategy}, {"side", std::string(to_string(s.side))},
          {"slots", s.slots},       {"price", s.price},
          {"min_price", s.min_price}, {"max_price", s.max_price},
          {"std_dev", s.std_dev},   {"sharpe", std::isfinite(s.sharpe) ? nlohmann::json(s.sharpe) : nlohmann::json()},
          {"cashflow_eur", s.cashflow_eur}, {"volume_mw", s.volume_mw},
          {"delta_eur", s.delta_eur}};
}

}  // namespace qhprice

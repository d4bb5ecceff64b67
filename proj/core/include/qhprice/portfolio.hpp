#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qhprice/backtest.hpp"
#include "qhprice/evaluation.hpp"

namespace qhprice {

enum class Side { Buy, Sell };
std::string_view to_string(Side s);

enum class Venue { Exaa, Auction, Intraday, Rebap, Mixed };
std::string_view to_string(Venue v);

inline constexpr double kSlotHours = 0.25;
inline constexpr double kDefaultGamma = 2.0;
inline constexpr double kDefaultVolumeMw = 50.0;

struct SlotKey {
  Date date;
  int qh = 1;
  auto operator<=>(const SlotKey&) const = default;
};

/// Realized prices per slot and venue forecasts per model, aligned on one
/// sorted slot list. Unknown values are NaN.
struct SlotBook {
  std::vector<SlotKey> slots;
  std::vector<double> exaa;
  std::vector<double> auction;
  std::vector<double> intraday;
  std::vector<double> rebap;
  /// model id -> (auction forecast, intraday forecast) per slot
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> forecasts;

  /// Slots where both venues are realized in the panel. EXAA prices come from
  /// the Naive_EXAA rows or the dataset; REBAP only from the dataset.
  static SlotBook build(const ForecastPanel& panel, const Dataset* dataset = nullptr);
  std::size_t size() const { return slots.size(); }
};

struct LedgerEntry {
  SlotKey slot;
  Venue venue = Venue::Auction;
  double w2 = 0.0;  // weight of the intraday venue
  double price = 0.0;
  double volume_mw = 0.0;
  double cashflow_eur = 0.0;
};

struct StrategyLedger {
  std::string name;
  Side side = Side::Buy;
  std::vector<LedgerEntry> entries;
  /// Slots left out, with the reason.
  std::vector<std::pair<SlotKey, std::string>> skipped;

  std::vector<double> prices() const;
};

/// Signed cash flow: buying pays, selling receives.
double cashflow(double price, double volume_mw, Side side);

StrategyLedger naive_strategy(const SlotBook& book, Venue venue, double volume_mw = kDefaultVolumeMw,
                              Side side = Side::Buy);
StrategyLedger perfect_strategy(const SlotBook& book, Side side, double volume_mw = kDefaultVolumeMw);
/// Trades in the venue with the lower (buy) or higher (sell) forecast; ties go to the auction.
StrategyLedger base_strategy(const SlotBook& book, const std::string& source_model, Side side,
                             double volume_mw = kDefaultVolumeMw, const std::string& name = "");

struct MeanVarInputs {
  double mu1 = 0.0;  // auction
  double mu2 = 0.0;  // intraday
  double var1 = 0.0;
  double var2 = 0.0;
  double cov = 0.0;
  double gamma = kDefaultGamma;
};

/// E - (gamma/2) var for sell, E + (gamma/2) var for buy.
double meanvar_objective(const MeanVarInputs& in, double w2, Side side);
/// Unclipped stationary point; nullopt when var1 - 2 cov + var2 = 0.
std::optional<double> meanvar_closed_form(const MeanVarInputs& in, Side side);
/// Optimal intraday weight in [0, 1] by golden-section search.
double meanvar_weight(const MeanVarInputs& in, Side side);

struct Moments {
  double var1 = 0.0;
  double var2 = 0.0;
  double cov = 0.0;
  int days = 0;
};

/// Sample variances and covariance of the two series at slot `qh` over the
/// `window_days` days before `day`; days missing in either series are left out.
Moments rolling_moments(const QhSeries& venue1, const QhSeries& venue2, Date day, int qh, int window_days);

StrategyLedger meanvar_strategy(const SlotBook& book, const Dataset& dataset, const std::string& source_model,
                                Side side, int window_days, double gamma = kDefaultGamma,
                                double volume_mw = kDefaultVolumeMw, const std::string& name = "");

struct AccountSummary {
  std::string strategy;
  Side side = Side::Buy;
  std::size_t slots = 0;
  double price = 0.0;
  double min_price = 0.0;
  double max_price = 0.0;
  double std_dev = 0.0;
  double sharpe = 0.0;  // NaN when undefined
  double cashflow_eur = 0.0;
  double volume_mw = 0.0;
  /// benchmark -> delta in EUR (positive: strategy better)
  std::map<std::string, double> delta_eur;
};

/// Delta of `strategy` against `benchmark`: sum (bench - strat) * volume * 0.25,
/// negated for sell. Throws Error(Data) when the slot sets differ.
double account_delta(const StrategyLedger& strategy, const StrategyLedger& benchmark, double volume_mw);

AccountSummary account(const StrategyLedger& ledger, const std::vector<const StrategyLedger*>& benchmarks,
                       double volume_mw = kDefaultVolumeMw);

/// Share of untied slots where a Base strategy picked the venue that realized
/// higher (sell) or lower (buy).
DirectionalAccuracy base_choice_accuracy(const SlotBook& book, const std::string& source_model, Side side);

void write_ledger_csv(const std::vector<StrategyLedger>& ledgers, std::ostream& out);
void write_summary_csv(const std::vector<AccountSummary>& rows, std::ostream& out);
nlohmann::json to_json(const AccountSummary& s);

}  // namespace qhprice

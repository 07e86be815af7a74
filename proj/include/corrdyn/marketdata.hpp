#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "corrdyn/dates.hpp"
#include "corrdyn/vol.hpp"

namespace corrdyn::marketdata {

struct OptionTrade {
    Date trade_date;
    Date expiry_date;
    std::string underlying;
    double strike = 0;
    double price = 0;
    vol::Right right = vol::Right::call;
    vol::Style style = vol::Style::european;
};

using RateCurve = std::vector<std::pair<double, double>>;  // (tenor years, rate)

struct MarketSnapshot {
    Date date;
    std::map<std::string, double> spot_by_ticker;
    std::map<std::string, double> weights;  // constituents only, sums to 1
    RateCurve rate_curve;                   // tenors strictly increasing
    std::map<std::string, std::vector<std::pair<Date, double>>> dividends;

    void validate() const;
};

struct SurfacePoint {
    double kappa = 0;
    double tau = 0;
    double value = 0;
};

struct SurfacePanel {
    std::vector<std::pair<Date, std::vector<SurfacePoint>>> days;  // dates strictly increasing
};

// CSV I/O. Header: trade_date,expiry_date,underlying,strike,price,right,style
std::vector<OptionTrade> parse_trades(std::istream& in);
void write_trades(std::ostream& out, const std::vector<OptionTrade>& trades);

// Daily snapshot assembly from the three auxiliary CSVs.
// snapshots.csv: date,ticker,spot,weight (weight 0 marks a non-constituent);
// rates.csv: date,tenor_years,rate; dividends.csv: ticker,ex_date,amount.
// The dividend calendar is global and attached to every snapshot.
std::map<std::int64_t, MarketSnapshot> assemble_snapshots(std::istream& snapshots,
                                                          std::istream& rates,
                                                          std::istream& dividends);
void write_snapshot_files(std::ostream& snapshots_out, std::ostream& rates_out,
                          std::ostream& dividends_out,
                          const std::map<std::int64_t, MarketSnapshot>& snaps);

// Piecewise-linear interpolation, clamped to the curve's end tenors.
double interpolate_rate(const RateCurve& curve, double tau);

// One trade surviving the liquidity filter, annotated with pricing context.
struct FilteredQuote {
    OptionTrade trade;
    double kappa = 0;  // forward moneyness K / (S e^{r tau})
    double tau = 0;    // trading-day year fraction
    double spot = 0;
    double rate = 0;
    std::vector<std::pair<double, double>> dividends;  // (years from trade date, amount)
};

// Keeps OTM options with kappa in [0.8, 1.2] and tau in [10/252, 1].
// IVs above 50% are removed later, after inversion.
std::vector<FilteredQuote> filter_and_prepare(const std::vector<OptionTrade>& trades,
                                              const std::map<std::int64_t, MarketSnapshot>& snaps);

// Pooled empirical-CDF transform of panel coordinates onto (0, 1]^2.
class EcdfMap {
  public:
    EcdfMap() = default;
    EcdfMap(std::vector<double> kappa_knots, std::vector<double> tau_knots);

    double forward_kappa(double x) const;
    double forward_tau(double x) const;
    double inverse_kappa(double y) const;
    double inverse_tau(double y) const;

    const std::vector<double>& kappa_knots() const { return kappa_knots_; }
    const std::vector<double>& tau_knots() const { return tau_knots_; }

  private:
    std::vector<double> kappa_knots_;  // sorted pooled sample, ties kept
    std::vector<double> tau_knots_;
};

std::pair<SurfacePanel, EcdfMap> ecdf_transform(const SurfacePanel& panel);

}  // namespace corrdyn::marketdata

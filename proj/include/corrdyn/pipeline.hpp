#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "corrdyn/correlation.hpp"
#include "corrdyn/dsfm.hpp"
#include "corrdyn/marketdata.hpp"
#include "corrdyn/strategy.hpp"
#include "corrdyn/synth.hpp"
#include "corrdyn/timeseries.hpp"

namespace corrdyn::pipeline {

struct RunConfig {
    std::filesystem::path trades, snapshots, rates, dividends;
    std::filesystem::path output_dir = ".";
    std::string index_ticker;
    Date est_start, est_end;  // estimation window (inclusive)
    Date bt_start, bt_end;    // backtest window (inclusive), after estimation
    int grid1 = 10, grid2 = 10;
    int l_max = 3;
    double variance_threshold = 0.95;
    bool auto_bandwidth = false;
    dsfm::Bandwidth h{0.12, 0.17};
    int var_p = 0;  // 0 selects the order by information criteria
    std::vector<double> tenors = {21.0 / 252.0, 0.25, 0.5, 1.0};
    double dt = 1.0 / 252.0;
    bool regime_correction = false;
    double iv_cap = 0.5;
    std::uint64_t seed = 1;
    synth::SynthConfig synth;

    void validate() const;
    static RunConfig from_json_file(const std::filesystem::path& path);
};

// Everything the forecast and backtest stages need, serializable to JSON.
struct FittedModel {
    dsfm::FactorModel model;  // fitted on the estimation window
    marketdata::EcdfMap ecdf;
    std::vector<Date> all_dates;  // estimation + out-of-sample scored days
    Eigen::MatrixXd all_scores;   // length(all_dates) x L
    int est_rows = 0;             // leading rows inside the estimation window
    std::vector<std::uint8_t> diff_flags;  // factor first-differenced before the VAR
    timeseries::VarModel dynamics;
    std::vector<timeseries::TestReport> adf_reports;
    std::vector<timeseries::LagOrderRow> lag_table;
    timeseries::TestReport portmanteau;
    correlation::Breakpoint breakpoint;
    bool regime_applied = false;
};

// Full estimation pass: filter, invert, correlation surface, optional regime
// correction, Fisher-Z, ECDF, DSFM fit, stationarity handling, VAR fit.
FittedModel fit_pipeline(const RunConfig& config,
                         const std::vector<marketdata::OptionTrade>& trades,
                         const std::map<std::int64_t, marketdata::MarketSnapshot>& snaps);

void save_model(const std::filesystem::path& path, const FittedModel& fm);
FittedModel load_model(const std::filesystem::path& path);

// VAR forecast of the correlation level at kappa = 1 and the shortest
// observed maturity, horizon business days past all_dates[date_index].
double forecast_rho(const FittedModel& fm, std::size_t date_index, int horizon_days);

strategy::BacktestLedger backtest_tenor(
    const RunConfig& config, const FittedModel& fm,
    const std::vector<marketdata::OptionTrade>& trades,
    const std::map<std::int64_t, marketdata::MarketSnapshot>& snaps, double tenor,
    bool oracle_forecast);

// Plain-text report tables.
std::string explained_variance_table(const FittedModel& fm);
std::string adf_table(const FittedModel& fm);
std::string lag_order_table(const FittedModel& fm);
std::string var_table(const FittedModel& fm);
// Hedge-error moment summary, one row per tenor.
std::string hedge_error_table(
    const std::vector<std::pair<double, strategy::BacktestLedger>>& ledgers);
// Three strategies x tenors x {min, max, mean, stdd}.
std::string strategy_table(
    const std::vector<std::pair<double, strategy::BacktestLedger>>& ledgers);

}  // namespace corrdyn::pipeline

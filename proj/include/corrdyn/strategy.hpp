#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "corrdyn/correlation.hpp"
#include "corrdyn/dates.hpp"
#include "corrdyn/stats.hpp"

namespace corrdyn::strategy {

enum class Direction { long_var, short_var };

struct VarianceSwap {
    std::string underlying;
    double strike_var = 0;  // annualized variance
    double tenor = 0;       // year fraction
    double notional = 0;    // currency per variance point
    Direction direction = Direction::long_var;
    Date open_date;

    void validate() const;
};

struct DispersionTrade {
    correlation::BasketSpec basket;
    VarianceSwap index_leg;                     // short
    std::vector<VarianceSwap> constituent_legs; // long, notionals proportional to w_i^2
    Date open_date;
    double tenor = 0;

    void validate() const;
};

struct LedgerRow {
    Date open_date;
    double tenor = 0;
    double mfic = 0;           // implied equicorrelation strike
    double realized_corr = 0;
    double forecast_corr = 0;
    double D = 0;              // dispersion payoff
    double D_h = 0;            // naive hedge value
    double D_adv = 0;          // advanced payoff
    double hedge_error = 0;    // valid only when hedge_error_valid
    bool hedge_error_valid = false;
};

struct BacktestLedger {
    std::vector<LedgerRow> rows;  // sorted by open_date
    double tenor = 0;
    double dt = 1.0 / 252.0;
    std::size_t excluded_incomplete = 0;
    std::size_t excluded_forecast = 0;
};

double variance_swap_payoff(const VarianceSwap& swap, double realized_var);

// Variance-swap form of the dispersion payoff: short index variance, long
// w_i^2-weighted constituent variances. Asserts agreement with the
// correlation form (implied strike correlation times implied cross terms
// minus realized correlation times realized cross terms) within 1e-10.
double dispersion_payoff(const DispersionTrade& trade, double realized_index_var,
                         const Eigen::VectorXd& realized_constituent_vars);

// Hedge position value: sum_{i != j} w_i w_j s_i s_j * (implied_corr - forecast),
// with s_i the constituent strike vols.
double naive_hedge_value(const DispersionTrade& trade, double forecast_rho);

// (D_h - D) / D. Throws std::invalid_argument when D == 0.
double hedge_error(double D, double D_h);

double advanced_payoff(double D, double D_h, double forecast_rho, double mfic_strike);

// One origination date's market state: strikes at open, realizations at expiry.
struct DailyQuantities {
    Date open_date;
    Eigen::VectorXd weights;
    double implied_index_var = 0;
    Eigen::VectorXd implied_constituent_vars;
    std::optional<double> realized_index_var;
    std::optional<Eigen::VectorXd> realized_constituent_vars;
};

// Forecast of the correlation prevailing at expiry, or nullopt on failure.
using Forecaster = std::function<std::optional<double>(const Date&)>;

BacktestLedger run_backtest(const std::vector<DailyQuantities>& panel,
                            const Forecaster& forecaster, double tenor, double dt = 1.0 / 252.0);

struct PayoffSummary {
    stats::MomentSummary moments;
    bool degenerate = false;  // zero dispersion, tests undefined
};

PayoffSummary payoff_summary(const std::vector<double>& series);

std::string ledger_csv(const BacktestLedger& ledger);
BacktestLedger parse_ledger_csv(const std::string& text);

// Aligned plain-text table: strategy rows x {min, max, mean, stdd} columns.
std::string summary_table(const BacktestLedger& ledger);

}  // namespace corrdyn::strategy

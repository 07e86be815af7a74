#include "corrdyn/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace corrdyn::strategy {

namespace {

double cross_term(const Eigen::VectorXd& vols, const Eigen::VectorXd& weights) {
    const double sum = weights.dot(vols);
    const double diag = weights.array().square().matrix().dot(vols.array().square().matrix());
    return sum * sum - diag;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void VarianceSwap::validate() const {
    if (strike_var < 0)
        throw std::invalid_argument("variance swap strike must be nonnegative");
    if (notional <= 0)
        throw std::invalid_argument("variance swap notional must be positive");
    if (tenor <= 0)
        throw std::invalid_argument("variance swap tenor must be positive");
}

void DispersionTrade::validate() const {
    basket.validate();
    index_leg.validate();
    if (index_leg.direction != Direction::short_var)
        throw std::invalid_argument("dispersion index leg must be short variance");
    if (constituent_legs.size() != static_cast<std::size_t>(basket.weights.size()))
        throw std::invalid_argument("dispersion trade needs one leg per constituent");
    for (const auto& leg : constituent_legs) {
        leg.validate();
        if (leg.direction != Direction::long_var)
            throw std::invalid_argument("dispersion constituent legs must be long variance");
        if (leg.tenor != index_leg.tenor)
            throw std::invalid_argument("dispersion leg tenors must match");
    }
}

double variance_swap_payoff(const VarianceSwap& swap, double realized_var) {
    if (realized_var < 0)
        throw std::invalid_argument("realized variance must be nonnegative");
    const double sign = swap.direction == Direction::long_var ? 1.0 : -1.0;
    return sign * (realized_var - swap.strike_var) * swap.notional;
}

double dispersion_payoff(const DispersionTrade& trade, double realized_index_var,
                         const Eigen::VectorXd& realized_constituent_vars) {
    const auto& w = trade.basket.weights;
    const int n = static_cast<int>(w.size());
    if (realized_constituent_vars.size() != n)
        throw std::invalid_argument("dispersion payoff: missing constituent leg data");

    double payoff = -(realized_index_var - trade.index_leg.strike_var);
    Eigen::VectorXd implied_vols(n), realized_vols(n);
    for (int i = 0; i < n; ++i) {
        const auto& leg = trade.constituent_legs[static_cast<std::size_t>(i)];
        payoff += w(i) * w(i) *
                  (realized_constituent_vars(i) - leg.strike_var);
        implied_vols(i) = std::sqrt(leg.strike_var);
        realized_vols(i) = std::sqrt(realized_constituent_vars(i));
    }

    // Correlation form of the same payoff through the equicorrelation identity.
    const double rho_implied =
        correlation::equicorrelation(trade.index_leg.strike_var, implied_vols, w);
    const double rho_realized =
        correlation::equicorrelation(realized_index_var, realized_vols, w);
    const double corr_form = rho_implied * cross_term(implied_vols, w) -
                             rho_realized * cross_term(realized_vols, w);
    if (std::abs(payoff - corr_form) > 1e-10)
        throw std::logic_error("dispersion payoff forms disagree beyond tolerance");
    return payoff;
}

double naive_hedge_value(const DispersionTrade& trade, double forecast_rho) {
    if (!std::isfinite(forecast_rho))
        throw std::invalid_argument("naive hedge: forecast must be finite");
    const auto& w = trade.basket.weights;
    const int n = static_cast<int>(w.size());
    Eigen::VectorXd implied_vols(n);
    for (int i = 0; i < n; ++i)
        implied_vols(i) = std::sqrt(trade.constituent_legs[static_cast<std::size_t>(i)].strike_var);
    const double rho_implied =
        correlation::equicorrelation(trade.index_leg.strike_var, implied_vols, w);
    return cross_term(implied_vols, w) * (rho_implied - forecast_rho);
}

double hedge_error(double D, double D_h) {
    if (D == 0)
        throw std::invalid_argument("hedge error undefined for zero dispersion payoff");
    return (D_h - D) / D;
}

double advanced_payoff(double D, double D_h, double forecast_rho, double mfic_strike) {
    return forecast_rho >= mfic_strike ? D - D_h : D;
}

BacktestLedger run_backtest(const std::vector<DailyQuantities>& panel,
                            const Forecaster& forecaster, double tenor, double dt) {
    BacktestLedger ledger;
    ledger.tenor = tenor;
    ledger.dt = dt;
    for (const auto& day : panel) {
        if (!day.realized_index_var || !day.realized_constituent_vars) {
            ++ledger.excluded_incomplete;
            continue;
        }
        const std::optional<double> forecast = forecaster(day.open_date);
        if (!forecast || !std::isfinite(*forecast)) {
            ++ledger.excluded_forecast;
            continue;
        }

        const auto& w = day.weights;
        const int n = static_cast<int>(w.size());
        DispersionTrade trade;
        trade.basket.weights = w;
        trade.basket.tickers.resize(static_cast<std::size_t>(n));
        trade.open_date = day.open_date;
        trade.tenor = tenor;
        trade.index_leg = {"index", day.implied_index_var, tenor, 1.0, Direction::short_var,
                           day.open_date};
        for (int i = 0; i < n; ++i)
            trade.constituent_legs.push_back({"c" + std::to_string(i),
                                              day.implied_constituent_vars(i), tenor,
                                              w(i) * w(i), Direction::long_var, day.open_date});

        Eigen::VectorXd implied_vols = day.implied_constituent_vars.cwiseSqrt();
        Eigen::VectorXd realized_vols = day.realized_constituent_vars->cwiseSqrt();

        LedgerRow row;
        row.open_date = day.open_date;
        row.tenor = tenor;
        row.mfic = correlation::equicorrelation(day.implied_index_var, implied_vols, w);
        row.realized_corr =
            correlation::equicorrelation(*day.realized_index_var, realized_vols, w);
        row.forecast_corr = *forecast;
        row.D = dispersion_payoff(trade, *day.realized_index_var, *day.realized_constituent_vars);
        row.D_h = naive_hedge_value(trade, *forecast);
        row.D_adv = advanced_payoff(row.D, row.D_h, *forecast, row.mfic);
        if (row.D != 0) {
            row.hedge_error = hedge_error(row.D, row.D_h);
            row.hedge_error_valid = true;
        }
        ledger.rows.push_back(row);
    }
    std::sort(ledger.rows.begin(), ledger.rows.end(),
              [](const LedgerRow& a, const LedgerRow& b) { return a.open_date < b.open_date; });
    return ledger;
}

PayoffSummary payoff_summary(const std::vector<double>& series) {
    PayoffSummary out;
    out.moments = stats::moments(series);
    out.degenerate = out.moments.stddev == 0;
    return out;
}

std::string ledger_csv(const BacktestLedger& ledger) {
    std::ostringstream os;
    os << "open_date,tenor,mfic,realized_corr,forecast_corr,D,D_h,D_adv,hedge_error\n";
    for (const auto& row : ledger.rows) {
        os << row.open_date.to_string() << ',' << fmt_double(row.tenor) << ','
           << fmt_double(row.mfic) << ',' << fmt_double(row.realized_corr) << ','
           << fmt_double(row.forecast_corr) << ',' << fmt_double(row.D) << ','
           << fmt_double(row.D_h) << ',' << fmt_double(row.D_adv) << ',';
        if (row.hedge_error_valid) os << fmt_double(row.hedge_error);
        os << '\n';
    }
    return os.str();
}

BacktestLedger parse_ledger_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) ||
        line != "open_date,tenor,mfic,realized_corr,forecast_corr,D,D_h,D_adv,hedge_error")
        throw std::runtime_error("ledger csv: bad header");
    BacktestLedger ledger;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(fields, tok, ',')) cols.push_back(tok);
        if (line.back() == ',') cols.push_back("");
        if (cols.size() != 9)
            throw std::runtime_error("ledger csv line " + std::to_string(lineno) +
                                     ": expected 9 fields");
        LedgerRow row;
        row.open_date = Date::parse(cols[0]);
        row.tenor = std::stod(cols[1]);
        row.mfic = std::stod(cols[2]);
        row.realized_corr = std::stod(cols[3]);
        row.forecast_corr = std::stod(cols[4]);
        row.D = std::stod(cols[5]);
        row.D_h = std::stod(cols[6]);
        row.D_adv = std::stod(cols[7]);
        if (!cols[8].empty()) {
            row.hedge_error = std::stod(cols[8]);
            row.hedge_error_valid = true;
        }
        ledger.rows.push_back(row);
        ledger.tenor = row.tenor;
    }
    return ledger;
}

std::string summary_table(const BacktestLedger& ledger) {
    std::vector<double> d, naive, adv;
    for (const auto& row : ledger.rows) {
        d.push_back(row.D);
        naive.push_back(row.D - row.D_h);
        adv.push_back(row.D_adv);
    }
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-16s %6s %12s %12s %12s %12s\n", "strategy", "tenor",
                  "min", "max", "mean", "stdd");
    os << buf;
    const auto emit = [&](const char* name, const std::vector<double>& xs) {
        if (xs.size() < 2) {
            std::snprintf(buf, sizeof(buf), "%-16s %6.3f %12s %12s %12s %12s\n", name,
                          ledger.tenor, "-", "-", "-", "-");
            os << buf;
            return;
        }
        const auto m = stats::moments(xs);
        std::snprintf(buf, sizeof(buf), "%-16s %6.3f %12.6f %12.6f %12.6f %12.6f\n", name,
                      ledger.tenor, m.min, m.max, m.mean, m.stddev);
        os << buf;
    };
    emit("no_hedge", d);
    emit("naive_hedge", naive);
    emit("advanced_hedge", adv);
    return os.str();
}

}  // namespace corrdyn::strategy

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "corrdyn/correlation.hpp"
#include "corrdyn/dates.hpp"
#include "corrdyn/marketdata.hpp"

namespace corrdyn::synth {

struct RegimeParams {
    double threshold = 21.0;   // ATM index vol, percentage points
    double slope_low = 0.0328;
    double slope_high = 0.0091;
};

struct SynthConfig {
    std::uint64_t seed = 1;
    int n_assets = 5;
    int n_days = 250;          // trading days with option quotes
    int obs_per_day = 135;     // index surface observations per day
    int true_factor_count = 3;
    Date start = Date(2009, 8, 3);
    double rate = 0.01;        // flat continuously compounded curve
    bool regime_enabled = false;
    RegimeParams regime;

    void validate() const;
};

// Per-day generated surface state kept as the test oracle.
struct GroundTruth {
    std::vector<Date> dates;                 // trade dates, length n_days
    Eigen::MatrixXd scores;                  // n_days x L*, the true Z_t
    std::vector<double> tenors;              // generator expiry tenors (year fractions)
    // true correlation at every emitted index observation, one list per day
    std::vector<std::vector<correlation::CorrelationPoint>> rho_nodes;
    std::vector<double> atm_vol;             // regime driver, percentage points
    RegimeParams regime;                     // echoed when regime_enabled
    bool regime_enabled = false;
    // realized annualized variance over [t, t + tenor] per day x tenor;
    // column 0 is the index, then the constituents
    std::vector<Eigen::MatrixXd> realized_vars;  // one n_days x (N+1) matrix per tenor
};

struct SynthOutput {
    std::vector<marketdata::OptionTrade> trades;
    std::map<std::int64_t, marketdata::MarketSnapshot> snapshots;
    correlation::BasketSpec basket;
    std::string index_ticker;
    GroundTruth truth;
};

// Deterministic synthetic market. Constituent implied vols follow smooth
// smiles over lognormal AR(1) vol levels; the index implied vol is assembled
// from the constituents and a generated correlation surface through the
// basket-variance identity, so the downstream equicorrelation recovers the
// generated surface exactly at the emitted nodes. Throws if any generated
// correlation leaves (0, 0.9999).
SynthOutput generate_market(const SynthConfig& config);

// trades.csv, snapshots.csv, rates.csv, dividends.csv, ground_truth.json.
void write_market(const std::filesystem::path& dir, const SynthOutput& out);

}  // namespace corrdyn::synth

#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "corrdyn/dates.hpp"

namespace corrdyn::correlation {

struct BasketSpec {
    std::vector<std::string> tickers;
    Eigen::VectorXd weights;  // sums to 1, all positive

    void validate() const;  // throws on violated invariants
};

struct CorrelationPoint {
    double rho = 0;
    double kappa = 0;
    double tau = 0;
    Date date;
};

struct Breakpoint {
    double threshold = 0;   // in the units of the regressor
    double slope_low = 0;
    double slope_high = 0;
    double intercept_low = 0;
    double intercept_high = 0;  // implied by continuity at the threshold
    double sse = 0;
};

// Eq-form basket variance with a common off-diagonal correlation:
// sum w_i^2 s_i^2 + rho * sum_{i != j} w_i w_j s_i s_j.
double basket_variance(const Eigen::VectorXd& vols, const Eigen::VectorXd& weights, double rho);

// Inverts basket_variance for rho.
double equicorrelation(double basket_var, const Eigen::VectorXd& vols,
                       const Eigen::VectorXd& weights);

// Nonlinear weighted average of pairwise correlations; agrees with the
// equicorrelation of the implied basket variance.
double weighted_average_decomposition(const Eigen::MatrixXd& corr, const Eigen::VectorXd& vols,
                                      const Eigen::VectorXd& weights);

double fisher_z(double u);
double fisher_z_inv(double y);

// One day of implied-vol observations for a single underlying, keyed by expiry.
struct IvSmileDay {
    // expiry serial -> sorted (kappa, iv) pairs
    std::map<std::int64_t, std::vector<std::pair<double, double>>> by_expiry;
};

struct IcsDiagnostics {
    std::size_t dropped_no_coverage = 0;   // index expiries without constituent coverage
    std::size_t dropped_extrapolation = 0; // points needing out-of-range interpolation
};

// Implied-correlation points on the index (kappa, tau) grid of one day.
// Constituent IVs are linearly interpolated in kappa within the same expiry;
// points requiring extrapolation are dropped.
std::vector<CorrelationPoint> implied_correlation_points(
    Date date, const IvSmileDay& index_ivs, const std::vector<IvSmileDay>& constituent_ivs,
    const Eigen::VectorXd& weights, const std::map<std::int64_t, double>& tau_by_expiry,
    IcsDiagnostics* diag = nullptr);

// Continuous two-piece linear fit minimizing SSE; breakpoint by exhaustive
// search over midpoints of sorted distinct regressor values.
Breakpoint fit_breakpoint(const std::vector<double>& x, const std::vector<double>& y);

// Appendix-style regime rule: on days where the ATM index vol exceeds the
// threshold, rho is replaced by slope_high * (index vol at that point); points
// with |rho| >= 0.9999 are dropped afterwards.
struct RegimeVolDay {
    double atm_vol = 0;  // shortest-expiry ATM index vol, percentage points
    // vol (percentage points) per point, aligned with that day's points
    std::vector<double> point_vols;
};

std::vector<CorrelationPoint> regime_correct(const std::vector<CorrelationPoint>& points,
                                             const std::map<std::int64_t, RegimeVolDay>& vol_by_day,
                                             const Breakpoint& bp);

}  // namespace corrdyn::correlation

#include "corrdyn/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace corrdyn::correlation {

namespace {

double cross_term(const Eigen::VectorXd& vols, const Eigen::VectorXd& weights) {
    // sum_{i != j} w_i w_j s_i s_j = (sum w_i s_i)^2 - sum w_i^2 s_i^2
    const double ws = weights.dot(vols);
    const double diag = weights.cwiseProduct(vols).squaredNorm();
    return ws * ws - diag;
}

}  // namespace

void BasketSpec::validate() const {
    if (weights.size() < 2) throw std::invalid_argument("BasketSpec: need at least 2 assets");
    if (static_cast<std::size_t>(weights.size()) != tickers.size())
        throw std::invalid_argument("BasketSpec: tickers/weights size mismatch");
    if ((weights.array() <= 0.0).any())
        throw std::invalid_argument("BasketSpec: weights must be positive");
    if (std::fabs(weights.sum() - 1.0) >= 1e-12)
        throw std::invalid_argument("BasketSpec: weights must sum to 1");
}

double basket_variance(const Eigen::VectorXd& vols, const Eigen::VectorXd& weights, double rho) {
    if (vols.size() != weights.size())
        throw std::invalid_argument("basket_variance: size mismatch");
    const auto n = static_cast<double>(vols.size());
    if (rho <= -1.0 / (n - 1.0) || rho > 1.0)
        throw std::invalid_argument("basket_variance: rho outside positive-semidefinite range");
    const double diag = weights.cwiseProduct(vols).squaredNorm();
    return diag + rho * cross_term(vols, weights);
}

double equicorrelation(double basket_var, const Eigen::VectorXd& vols,
                       const Eigen::VectorXd& weights) {
    const double cross = cross_term(vols, weights);
    if (cross <= 0.0) throw std::invalid_argument("equicorrelation: zero cross-vol denominator");
    const double diag = weights.cwiseProduct(vols).squaredNorm();
    return (basket_var - diag) / cross;
}

double weighted_average_decomposition(const Eigen::MatrixXd& corr, const Eigen::VectorXd& vols,
                                      const Eigen::VectorXd& weights) {
    const auto n = corr.rows();
    if (corr.cols() != n || vols.size() != n || weights.size() != n)
        throw std::invalid_argument("weighted_average_decomposition: size mismatch");
    if (!corr.isApprox(corr.transpose(), 1e-12))
        throw std::invalid_argument("weighted_average_decomposition: matrix not symmetric");
    const double denom = cross_term(vols, weights);
    if (denom <= 0.0)
        throw std::invalid_argument("weighted_average_decomposition: zero denominator");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) sum += weights(i) * weights(j) * vols(i) * vols(j) * corr(i, j);
    return sum / denom;
}

double fisher_z(double u) {
    if (std::fabs(u) >= 1.0)
        throw std::invalid_argument("fisher_z: |u| must be < 1");
    return 0.5 * std::log((1.0 + u) / (1.0 - u));
}

double fisher_z_inv(double y) {
    const double e = std::exp(2.0 * y);
    return (e - 1.0) / (e + 1.0);
}

namespace {

// Linear interpolation of (kappa, iv) pairs; returns false outside the range.
bool interp_smile(const std::vector<std::pair<double, double>>& smile, double kappa, double* out) {
    if (smile.size() < 2) return false;
    if (kappa < smile.front().first || kappa > smile.back().first) return false;
    auto it = std::lower_bound(smile.begin(), smile.end(), kappa,
                               [](const auto& p, double k) { return p.first < k; });
    if (it->first == kappa) {
        *out = it->second;
        return true;
    }
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double t = (kappa - lo.first) / (hi.first - lo.first);
    *out = lo.second + t * (hi.second - lo.second);
    return true;
}

}  // namespace

std::vector<CorrelationPoint> implied_correlation_points(
    Date date, const IvSmileDay& index_ivs, const std::vector<IvSmileDay>& constituent_ivs,
    const Eigen::VectorXd& weights, const std::map<std::int64_t, double>& tau_by_expiry,
    IcsDiagnostics* diag) {
    const auto n = static_cast<std::size_t>(weights.size());
    if (constituent_ivs.size() != n)
        throw std::invalid_argument("implied_correlation_points: weights/constituents mismatch");

    std::vector<CorrelationPoint> out;
    Eigen::VectorXd vols(weights.size());
    for (const auto& [expiry, smile] : index_ivs.by_expiry) {
        const auto tau_it = tau_by_expiry.find(expiry);
        if (tau_it == tau_by_expiry.end())
            throw std::invalid_argument("implied_correlation_points: expiry without tau");

        bool covered = true;
        for (const auto& c : constituent_ivs) {
            auto it = c.by_expiry.find(expiry);
            if (it == c.by_expiry.end() || it->second.size() < 2) {
                covered = false;
                break;
            }
        }
        if (!covered) {
            if (diag) diag->dropped_no_coverage += smile.size();
            continue;
        }

        for (const auto& [kappa, index_iv] : smile) {
            bool ok = true;
            for (std::size_t i = 0; i < n; ++i) {
                double v;
                if (!interp_smile(constituent_ivs[i].by_expiry.at(expiry), kappa, &v)) {
                    ok = false;
                    break;
                }
                vols(static_cast<Eigen::Index>(i)) = v;
            }
            if (!ok) {
                if (diag) diag->dropped_extrapolation += 1;
                continue;
            }
            CorrelationPoint p;
            p.rho = equicorrelation(index_iv * index_iv, vols, weights);
            p.kappa = kappa;
            p.tau = tau_it->second;
            p.date = date;
            out.push_back(p);
        }
    }
    return out;
}

namespace {

struct LineFit {
    double sse = 0;
    Eigen::VectorXd beta;
    bool ok = false;
};

LineFit solve_ls(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
    LineFit f;
    const Eigen::MatrixXd xtx = design.transpose() * design;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    if (ldlt.info() != Eigen::Success) return f;
    f.beta = ldlt.solve(design.transpose() * y);
    const Eigen::VectorXd resid = y - design * f.beta;
    // Reject near-singular designs that LDLT silently "solves".
    if ((xtx * f.beta - design.transpose() * y).norm() > 1e-6 * (1.0 + y.norm())) return f;
    f.sse = resid.squaredNorm();
    f.ok = true;
    return f;
}

}  // namespace

Breakpoint fit_breakpoint(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("fit_breakpoint: size mismatch");
    if (x.size() < 20) throw std::invalid_argument("fit_breakpoint: need >= 20 observations");
    std::set<double> distinct(x.begin(), x.end());
    if (distinct.size() < 10)
        throw std::invalid_argument("fit_breakpoint: need >= 10 distinct regressor values");

    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::VectorXd xv(n), yv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        xv(i) = x[static_cast<std::size_t>(i)];
        yv(i) = y[static_cast<std::size_t>(i)];
    }

    std::vector<double> knots;
    for (auto it = distinct.begin(); std::next(it) != distinct.end(); ++it)
        knots.push_back(0.5 * (*it + *std::next(it)));

    Breakpoint best;
    bool have = false;
    Eigen::MatrixXd design(n, 3);
    design.col(0).setOnes();
    design.col(1) = xv;
    for (double c : knots) {
        design.col(2) = (xv.array() - c).cwiseMax(0.0);
        const LineFit f = solve_ls(design, yv);
        if (!f.ok) continue;
        if (!have || f.sse < best.sse) {
            have = true;
            best.threshold = c;
            best.intercept_low = f.beta(0);
            best.slope_low = f.beta(1);
            best.slope_high = f.beta(1) + f.beta(2);
            best.intercept_high = f.beta(0) - f.beta(2) * c;
            best.sse = f.sse;
        }
    }
    if (!have) throw std::runtime_error("fit_breakpoint: all candidate fits singular");
    return best;
}

std::vector<CorrelationPoint> regime_correct(const std::vector<CorrelationPoint>& points,
                                             const std::map<std::int64_t, RegimeVolDay>& vol_by_day,
                                             const Breakpoint& bp) {
    // Index of each point within its day, to align with RegimeVolDay::point_vols.
    std::map<std::int64_t, std::size_t> day_pos;
    std::vector<CorrelationPoint> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        const auto it = vol_by_day.find(p.date.serial());
        if (it == vol_by_day.end())
            throw std::invalid_argument("regime_correct: missing vol for " + p.date.to_string());
        const std::size_t pos = day_pos[p.date.serial()]++;
        CorrelationPoint q = p;
        if (it->second.atm_vol > bp.threshold) {
            if (pos >= it->second.point_vols.size())
                throw std::invalid_argument("regime_correct: vol series misaligned for " +
                                            p.date.to_string());
            q.rho = bp.slope_high * it->second.point_vols[pos];
        }
        if (std::fabs(q.rho) >= 0.9999) continue;  // keep Fisher-Z finite
        out.push_back(q);
    }
    return out;
}

}  // namespace corrdyn::correlation

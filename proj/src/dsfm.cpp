#include "corrdyn/dsfm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "corrdyn/correlation.hpp"

namespace corrdyn::dsfm {

Eigen::MatrixXd covariance_surface(const Eigen::MatrixXd& phi, const Eigen::VectorXd& mu) {
    if (phi.rows() != phi.cols() || phi.rows() != mu.size())
        throw std::invalid_argument("covariance_surface: shape mismatch");
    Eigen::MatrixXd psi = phi - mu * mu.transpose();
    psi = 0.5 * (psi + psi.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(psi);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("covariance_surface: eigendecomposition failed");
    const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

FpcaResult fpca(const Eigen::MatrixXd& psi, const Grid2D& grid, int L_max,
                double variance_threshold) {
    const int g_total = grid.size();
    if (psi.rows() != g_total || psi.cols() != g_total)
        throw std::invalid_argument("fpca: psi does not match grid");
    if (!psi.isApprox(psi.transpose(), 1e-9))
        throw std::invalid_argument("fpca: psi must be symmetric");

    Eigen::VectorXd w(g_total), sqrt_w(g_total);
    for (int g = 0; g < g_total; ++g) {
        w(g) = grid.quad_weight(g);
        sqrt_w(g) = std::sqrt(w(g));
    }
    // Weighted problem: psi W gamma = lambda gamma, symmetrized through
    // B = W^{1/2} psi W^{1/2} so gamma = W^{-1/2} e is quadrature-orthonormal.
    const Eigen::MatrixXd b = sqrt_w.asDiagonal() * psi * sqrt_w.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
    if (es.info() != Eigen::Success) throw std::runtime_error("fpca: eigensolver failed");

    // Eigen returns ascending order.
    std::vector<int> order(static_cast<std::size_t>(g_total));
    for (int i = 0; i < g_total; ++i) order[static_cast<std::size_t>(i)] = g_total - 1 - i;

    double total = 0;
    for (int i = 0; i < g_total; ++i) total += std::max(es.eigenvalues()(i), 0.0);

    FpcaResult res;
    if (total <= 0.0) {
        res.basis.resize(g_total, 0);
        res.eigenvalues.resize(0);
        res.explained_variance = 0.0;
        return res;
    }

    double cum = 0;
    int L = 0;
    for (int rank = 0; rank < std::min(L_max, g_total); ++rank) {
        const double lambda = es.eigenvalues()(order[static_cast<std::size_t>(rank)]);
        if (lambda <= 0.0) break;
        cum += lambda;
        L = rank + 1;
        if (cum / total >= variance_threshold) break;
    }

    res.L = L;
    res.basis.resize(g_total, L);
    res.eigenvalues.resize(L);
    double kept = 0;
    for (int l = 0; l < L; ++l) {
        const int col = order[static_cast<std::size_t>(l)];
        res.eigenvalues(l) = es.eigenvalues()(col);
        kept += res.eigenvalues(l);
        Eigen::VectorXd gamma = es.eigenvectors().col(col).cwiseQuotient(sqrt_w);
        int arg_max = 0;
        gamma.cwiseAbs().maxCoeff(&arg_max);
        if (gamma(arg_max) < 0.0) gamma = -gamma;
        res.basis.col(l) = gamma;
    }
    res.explained_variance = kept / total;
    return res;
}

double interpolate_surface(const Grid2D& grid, const Eigen::VectorXd& surface, double u, double v) {
    const auto locate = [](const std::vector<double>& nodes, double x) {
        const int n = static_cast<int>(nodes.size());
        const double step = nodes[1] - nodes[0];
        int i = static_cast<int>(std::floor(x / step));
        i = std::clamp(i, 0, n - 2);
        const double t = std::clamp((x - nodes[static_cast<std::size_t>(i)]) / step, 0.0, 1.0);
        return std::pair<int, double>{i, t};
    };
    const auto [iu, tu] = locate(grid.u_nodes, u);
    const auto [iv, tv] = locate(grid.v_nodes, v);
    const double f00 = surface(grid.index(iu, iv));
    const double f01 = surface(grid.index(iu, iv + 1));
    const double f10 = surface(grid.index(iu + 1, iv));
    const double f11 = surface(grid.index(iu + 1, iv + 1));
    return (1 - tu) * ((1 - tv) * f00 + tv * f01) + tu * ((1 - tv) * f10 + tv * f11);
}

namespace {

Eigen::VectorXd solve_day_scores(const Eigen::MatrixXd& design, const Eigen::VectorXd& resp,
                                 bool* ridge_used) {
    const Eigen::MatrixXd xtx = design.transpose() * design;
    const Eigen::VectorXd xty = design.transpose() * resp;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    *ridge_used = false;
    // a consistent singular system still "solves", so check the pivot spread
    // to catch rank-deficient designs explicitly
    const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
    const bool full_rank = d.minCoeff() > 1e-12 * std::max(d.maxCoeff(), 1e-300);
    if (ldlt.info() == Eigen::Success && full_rank) {
        const Eigen::VectorXd z = ldlt.solve(xty);
        if ((xtx * z - xty).norm() <= 1e-6 * (1.0 + xty.norm())) return z;
    }
    *ridge_used = true;
    Eigen::MatrixXd reg = xtx;
    reg.diagonal().array() += 1e-8;
    return reg.ldlt().solve(xty);
}

}  // namespace

ScoreResult factor_scores(const PanelData& panel, const Grid2D& grid, const Eigen::VectorXd& m0,
                          const Eigen::MatrixXd& basis) {
    const int L = static_cast<int>(basis.cols());
    const auto T = static_cast<Eigen::Index>(panel.size());
    ScoreResult res;
    res.scores.setZero(T, L);
    res.flags.assign(panel.size(), 0);
    Eigen::VectorXd prev = Eigen::VectorXd::Zero(L);
    for (Eigen::Index t = 0; t < T; ++t) {
        const auto& day = panel[static_cast<std::size_t>(t)];
        const auto n = static_cast<Eigen::Index>(day.y.size());
        if (n < L + 1) {
            res.scores.row(t) = prev.transpose();
            res.flags[static_cast<std::size_t>(t)] = 1;
            continue;
        }
        Eigen::MatrixXd design(n, L);
        Eigen::VectorXd resp(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto js = static_cast<std::size_t>(j);
            for (int l = 0; l < L; ++l)
                design(j, l) = interpolate_surface(grid, basis.col(l), day.x1[js], day.x2[js]);
            resp(j) = day.y[js] - interpolate_surface(grid, m0, day.x1[js], day.x2[js]);
        }
        bool ridge = false;
        prev = solve_day_scores(design, resp, &ridge);
        res.scores.row(t) = prev.transpose();
        if (ridge) res.flags[static_cast<std::size_t>(t)] = 1;
    }
    return res;
}

std::optional<Eigen::VectorXd> score_day(const DayObs& day, const Grid2D& grid,
                                         const Eigen::VectorXd& m0, const Eigen::MatrixXd& basis) {
    const int L = static_cast<int>(basis.cols());
    const auto n = static_cast<Eigen::Index>(day.y.size());
    if (n < L + 1) return std::nullopt;
    Eigen::MatrixXd design(n, L);
    Eigen::VectorXd resp(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto js = static_cast<std::size_t>(j);
        for (int l = 0; l < L; ++l)
            design(j, l) = interpolate_surface(grid, basis.col(l), day.x1[js], day.x2[js]);
        resp(j) = day.y[js] - interpolate_surface(grid, m0, day.x1[js], day.x2[js]);
    }
    bool ridge = false;
    return solve_day_scores(design, resp, &ridge);
}

FactorModel fit_dsfm(const PanelData& panel, const Grid2D& grid, const Bandwidth& h_mu,
                     const Bandwidth& h_phi, int L_max, double variance_threshold) {
    if (panel.empty()) throw std::invalid_argument("fit_dsfm: empty panel");
    FactorModel model;
    model.grid = grid;
    model.h_mu = h_mu;
    model.h_phi = h_phi;

    MeanSurface mean = smooth_mean(panel, grid, h_mu);
    model.m0 = mean.values;
    model.mean_flags = mean.flagged;

    SecondMomentSurface phi = smooth_second_moment(panel, grid, h_phi);
    model.pair_flagged = phi.flagged_count;

    const Eigen::MatrixXd psi = covariance_surface(phi.values, model.m0);
    const FpcaResult pca = fpca(psi, grid, L_max, variance_threshold);
    model.basis = pca.basis;
    model.eigenvalues = pca.eigenvalues;
    model.explained_variance = pca.explained_variance;

    const ScoreResult sc = factor_scores(panel, grid, model.m0, model.basis);
    model.scores = sc.scores;
    model.score_flags = sc.flags;
    model.dates.reserve(panel.size());
    for (const auto& day : panel) model.dates.push_back(day.date);
    return model;
}

double evaluate_transformed(const FactorModel& model, const Eigen::VectorXd& z, double u,
                            double v) {
    if (z.size() != model.basis.cols())
        throw std::invalid_argument("evaluate_transformed: score length mismatch");
    double y = interpolate_surface(model.grid, model.m0, u, v);
    for (Eigen::Index l = 0; l < z.size(); ++l)
        y += z(l) * interpolate_surface(model.grid, model.basis.col(l), u, v);
    return y;
}

double evaluate_surface(const FactorModel& model, const Eigen::VectorXd& z, double kappa,
                        double tau, const marketdata::EcdfMap& ecdf) {
    if (ecdf.kappa_knots().empty() || ecdf.tau_knots().empty())
        throw std::invalid_argument("evaluate_surface: empty ECDF map");
    if (kappa < ecdf.kappa_knots().front() || kappa > ecdf.kappa_knots().back() ||
        tau < ecdf.tau_knots().front() || tau > ecdf.tau_knots().back())
        throw std::out_of_range("evaluate_surface: point outside observed coordinate hull");
    const double u = ecdf.forward_kappa(kappa);
    const double v = ecdf.forward_tau(tau);
    return correlation::fisher_z_inv(evaluate_transformed(model, z, u, v));
}

Bandwidth default_h_star(const PanelData& panel) {
    std::vector<double> x1, x2;
    for (const auto& day : panel) {
        x1.insert(x1.end(), day.x1.begin(), day.x1.end());
        x2.insert(x2.end(), day.x2.begin(), day.x2.end());
    }
    if (x1.size() < 2) throw std::invalid_argument("default_h_star: too few observations");
    auto median_spacing = [](std::vector<double> xs) {
        std::sort(xs.begin(), xs.end());
        // Median pairwise |x_i - x_j| of the pooled sample, computed exactly
        // from the sorted order statistics would be O(n^2); use the median
        // absolute deviation of evenly thinned pairs instead.
        std::vector<double> diffs;
        const std::size_t n = xs.size();
        const std::size_t strides[] = {n / 4, n / 3, n / 2, 2 * n / 3};
        for (std::size_t s : strides) {
            if (s == 0) continue;
            for (std::size_t i = 0; i + s < n; i += std::max<std::size_t>(1, n / 512))
                diffs.push_back(xs[i + s] - xs[i]);
        }
        if (diffs.empty()) diffs.push_back(xs.back() - xs.front());
        std::nth_element(diffs.begin(), diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2),
                         diffs.end());
        return std::max(diffs[diffs.size() / 2], 1e-3);
    };
    Bandwidth h;
    h.h1 = std::min(median_spacing(x1), 0.999);
    h.h2 = std::min(median_spacing(x2), 0.999);
    return h;
}

BandwidthSelection select_bandwidth(const PanelData& panel, const Grid2D& grid,
                                    const std::vector<Bandwidth>& candidates, int L,
                                    const Bandwidth& h_star) {
    if (candidates.empty()) throw std::invalid_argument("select_bandwidth: empty candidate list");
    const auto T = static_cast<double>(panel.size());

    // Average design density per observation at the fixed weighting bandwidth.
    std::vector<std::vector<double>> density(panel.size());
    for (std::size_t t = 0; t < panel.size(); ++t) {
        const auto& day = panel[t];
        const std::size_t n = day.y.size();
        density[t].assign(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0;
            for (std::size_t k = 0; k < n; ++k)
                sum += quartic_h(day.x1[k] - day.x1[j], h_star.h1) *
                       quartic_h(day.x2[k] - day.x2[j], h_star.h2);
            density[t][j] = sum / static_cast<double>(n);
        }
    }

    BandwidthSelection sel;
    bool have = false;
    double best_score = 0;
    for (const Bandwidth& h : candidates) {
        double score = 0;
        try {
            const FactorModel model = fit_dsfm(panel, grid, h, h, L, 1.1);
            const double kernel_at_zero = quartic(0.0) * quartic(0.0) / (h.h1 * h.h2);
            for (std::size_t t = 0; t < panel.size(); ++t) {
                const auto& day = panel[t];
                const std::size_t n = day.y.size();
                if (n == 0) continue;
                const double inv_tj = 1.0 / (T * static_cast<double>(n));
                double day_sum = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    double fit = interpolate_surface(grid, model.m0, day.x1[j], day.x2[j]);
                    for (Eigen::Index l = 0; l < model.basis.cols(); ++l)
                        fit += model.scores(static_cast<Eigen::Index>(t), l) *
                               interpolate_surface(grid, model.basis.col(l), day.x1[j], day.x2[j]);
                    const double resid = day.y[j] - fit;
                    if (density[t][j] <= 0.0) continue;
                    const double leverage = kernel_at_zero / density[t][j];
                    day_sum += resid * resid / density[t][j] * std::exp(2.0 * leverage * inv_tj);
                }
                score += day_sum / static_cast<double>(n);
            }
            score /= T;
        } catch (const std::exception&) {
            ++sel.skipped;
            continue;
        }
        sel.criteria.emplace_back(h, score);
        if (!have || score < best_score) {
            have = true;
            best_score = score;
            sel.best = h;
        }
    }
    if (!have) throw std::runtime_error("select_bandwidth: every candidate fit failed");
    return sel;
}

std::vector<Bandwidth> default_bandwidth_candidates() {
    return {{0.12, 0.17}, {0.17, 0.22}, {0.25, 0.25}};
}

}  // namespace corrdyn::dsfm

#include "corrdyn/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace corrdyn::dsfm {

Grid2D Grid2D::regular(int g1, int g2) {
    if (g1 < 2 || g2 < 2) throw std::invalid_argument("Grid2D: need at least 2 nodes per axis");
    Grid2D g;
    g.nu = g1;
    g.nv = g2;
    auto fill = [](int n, std::vector<double>& nodes, std::vector<double>& weights) {
        nodes.resize(static_cast<std::size_t>(n));
        weights.resize(static_cast<std::size_t>(n));
        const double step = 1.0 / (n - 1);
        for (int i = 0; i < n; ++i) {
            nodes[static_cast<std::size_t>(i)] = i * step;
            weights[static_cast<std::size_t>(i)] = (i == 0 || i == n - 1) ? 0.5 * step : step;
        }
    };
    fill(g1, g.u_nodes, g.u_weights);
    fill(g2, g.v_nodes, g.v_weights);
    return g;
}

void Bandwidth::validate() const {
    if (h1 <= 0.0 || h1 >= 1.0 || h2 <= 0.0 || h2 >= 1.0)
        throw std::invalid_argument("Bandwidth: components must lie in (0, 1)");
}

PanelData to_panel_data(const marketdata::SurfacePanel& panel) {
    PanelData out;
    out.reserve(panel.days.size());
    for (const auto& [date, points] : panel.days) {
        DayObs day;
        day.date = date;
        day.x1.reserve(points.size());
        day.x2.reserve(points.size());
        day.y.reserve(points.size());
        for (const auto& p : points) {
            day.x1.push_back(p.kappa);
            day.x2.push_back(p.tau);
            day.y.push_back(p.value);
        }
        out.push_back(std::move(day));
    }
    return out;
}

double quartic(double q) {
    if (std::fabs(q) >= 1.0) return 0.0;
    const double t = 1.0 - q * q;
    return 0.9375 * t * t;
}

double quartic_h(double q, double h) { return quartic(q / h) / h; }

namespace {

// Range of node indices within kernel support of coordinate x.
std::pair<int, int> support_range(const std::vector<double>& nodes, double x, double h) {
    const int n = static_cast<int>(nodes.size());
    const double step = nodes[1] - nodes[0];
    int lo = static_cast<int>(std::ceil((x - h) / step - 1e-12));
    int hi = static_cast<int>(std::floor((x + h) / step + 1e-12));
    lo = std::max(lo, 0);
    hi = std::min(hi, n - 1);
    return {lo, hi};
}

void fill_flagged_nodes(const Grid2D& grid, Eigen::VectorXd& values,
                        std::vector<std::uint8_t>& flagged) {
    std::vector<int> valid;
    for (int g = 0; g < grid.size(); ++g)
        if (!flagged[static_cast<std::size_t>(g)]) valid.push_back(g);
    if (valid.empty()) throw std::runtime_error("smoother: no grid node has enough local data");
    for (int g = 0; g < grid.size(); ++g) {
        if (!flagged[static_cast<std::size_t>(g)]) continue;
        const double u = grid.node_u(g), v = grid.node_v(g);
        int best = valid.front();
        double best_d = 1e300;
        for (int c : valid) {
            const double du = grid.node_u(c) - u, dv = grid.node_v(c) - v;
            const double d = du * du + dv * dv;
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        values(g) = values(best);
    }
}

struct NodeFit {
    double value = 0;
    bool ok = false;
};

// Solves the local-linear normal equations M beta = b for the intercept.
// Columns without variation in the kernel window (coordinate atoms make the
// design collinear with the intercept) are excluded by a rank-revealing
// selection on the correlation-scaled normal matrix, which forces the
// corresponding slope to zero instead of leaving the intercept unidentified.
NodeFit solve_intercept(const Eigen::MatrixXd& M, const Eigen::VectorXd& b) {
    NodeFit f;
    const Eigen::Index k = M.rows();
    if (M(0, 0) <= 0.0) return f;
    Eigen::VectorXd scale(k);
    scale(0) = std::sqrt(M(0, 0));
    std::vector<Eigen::Index> sel{0};
    for (Eigen::Index c = 1; c < k; ++c) {
        if (M(c, c) <= 1e-14 * M(0, 0)) continue;  // no spread at all
        scale(c) = std::sqrt(M(c, c));
        const Eigen::Index m = static_cast<Eigen::Index>(sel.size()) + 1;
        Eigen::MatrixXd sub(m, m);
        for (Eigen::Index i = 0; i < m - 1; ++i)
            for (Eigen::Index j = 0; j < m - 1; ++j)
                sub(i, j) = M(sel[static_cast<std::size_t>(i)], sel[static_cast<std::size_t>(j)]) /
                            (scale(sel[static_cast<std::size_t>(i)]) *
                             scale(sel[static_cast<std::size_t>(j)]));
        for (Eigen::Index i = 0; i < m - 1; ++i) {
            sub(i, m - 1) = M(sel[static_cast<std::size_t>(i)], c) /
                            (scale(sel[static_cast<std::size_t>(i)]) * scale(c));
            sub(m - 1, i) = sub(i, m - 1);
        }
        sub(m - 1, m - 1) = 1.0;
        const Eigen::LLT<Eigen::MatrixXd> llt(sub);
        if (llt.info() != Eigen::Success) continue;
        // Schur complement of the candidate column in correlation scale.
        const double pivot = llt.matrixL()(m - 1, m - 1);
        if (pivot * pivot < 1e-7) continue;
        sel.push_back(c);
    }
    const Eigen::Index m = static_cast<Eigen::Index>(sel.size());
    Eigen::MatrixXd Ms(m, m);
    Eigen::VectorXd bs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        bs(i) = b(sel[static_cast<std::size_t>(i)]) / scale(sel[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < m; ++j)
            Ms(i, j) = M(sel[static_cast<std::size_t>(i)], sel[static_cast<std::size_t>(j)]) /
                       (scale(sel[static_cast<std::size_t>(i)]) *
                        scale(sel[static_cast<std::size_t>(j)]));
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(Ms);
    if (llt.info() != Eigen::Success) return f;
    const Eigen::VectorXd beta = llt.solve(bs);
    f.value = beta(0) / scale(0);
    f.ok = true;
    return f;
}

NodeFit solve_mean_node(const double m[6], const double r[3], long count) {
    if (count < 3 || m[0] <= 0.0) return {};
    Eigen::MatrixXd M(3, 3);
    M << m[0], m[1], m[2], m[1], m[3], m[4], m[2], m[4], m[5];
    Eigen::VectorXd b(3);
    b << r[0], r[1], r[2];
    return solve_intercept(M, b);
}

NodeFit solve_pair_node(const double* a) {
    // a: 15 upper-triangle entries of the 5x5 normal matrix, 5 rhs, 1 count.
    if (a[20] < 3.0 || a[0] <= 0.0) return {};
    Eigen::MatrixXd M(5, 5);
    int idx = 0;
    for (int i = 0; i < 5; ++i)
        for (int j = i; j < 5; ++j) {
            M(i, j) = a[idx];
            M(j, i) = a[idx];
            ++idx;
        }
    Eigen::VectorXd b(5);
    for (int i = 0; i < 5; ++i) b(i) = a[15 + i];
    return solve_intercept(M, b);
}

MeanSurface smooth_mean_impl(const PanelData& panel, const Grid2D& grid, const Bandwidth& h,
                             bool parallel) {
    h.validate();
    const int g_total = grid.size();
    MeanSurface out;
    out.values.resize(g_total);
    out.flagged.assign(static_cast<std::size_t>(g_total), 0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
    for (int g = 0; g < g_total; ++g) {
        const double u1 = grid.node_u(g), u2 = grid.node_v(g);
        double m[6] = {0, 0, 0, 0, 0, 0};
        double r[3] = {0, 0, 0};
        long count = 0;
        for (const auto& day : panel) {
            for (std::size_t j = 0; j < day.y.size(); ++j) {
                const double d1 = u1 - day.x1[j], d2 = u2 - day.x2[j];
                const double w = quartic_h(d1, h.h1) * quartic_h(d2, h.h2);
                if (w <= 0.0) continue;
                ++count;
                m[0] += w;
                m[1] += w * d1;
                m[2] += w * d2;
                m[3] += w * d1 * d1;
                m[4] += w * d1 * d2;
                m[5] += w * d2 * d2;
                r[0] += w * day.y[j];
                r[1] += w * day.y[j] * d1;
                r[2] += w * day.y[j] * d2;
            }
        }
        const NodeFit f = solve_mean_node(m, r, count);
        out.values(g) = f.value;
        out.flagged[static_cast<std::size_t>(g)] = f.ok ? 0 : 1;
    }
    fill_flagged_nodes(grid, out.values, out.flagged);
    return out;
}

// Accumulator layout per node pair: 15 normal-matrix entries (upper triangle,
// regressors ordered [1, du1, du2, dv1, dv2]), 5 rhs entries, 1 pair count.
constexpr int kAccSize = 21;

inline void accumulate_pair(double* a, double w, double du1, double du2, double dv1, double dv2,
                            double y, double sign) {
    const double ws = sign * w;
    a[0] += ws;
    a[1] += ws * du1;
    a[2] += ws * du2;
    a[3] += ws * dv1;
    a[4] += ws * dv2;
    a[5] += ws * du1 * du1;
    a[6] += ws * du1 * du2;
    a[7] += ws * du1 * dv1;
    a[8] += ws * du1 * dv2;
    a[9] += ws * du2 * du2;
    a[10] += ws * du2 * dv1;
    a[11] += ws * du2 * dv2;
    a[12] += ws * dv1 * dv1;
    a[13] += ws * dv1 * dv2;
    a[14] += ws * dv2 * dv2;
    a[15] += ws * y;
    a[16] += ws * y * du1;
    a[17] += ws * y * du2;
    a[18] += ws * y * dv1;
    a[19] += ws * y * dv2;
    a[20] += sign;
}

// Per-day, per-node kernel moments used by the factorized pair sums.
struct NodeMarginal {
    double w0 = 0, w1 = 0, w2 = 0;     // sum w, sum w*du1, sum w*du2
    double w11 = 0, w12 = 0, w22 = 0;  // second design moments
    double y0 = 0, y1 = 0, y2 = 0;     // response moments sum w*y*{1, du1, du2}
    double count = 0;
};

void fill_flagged_pairs(const Grid2D& grid, Eigen::MatrixXd& values,
                        std::vector<std::uint8_t>& flagged) {
    const int g_total = grid.size();
    std::vector<std::pair<int, int>> valid, missing;
    for (int u = 0; u < g_total; ++u)
        for (int v = u; v < g_total; ++v) {
            if (flagged[static_cast<std::size_t>(u * g_total + v)])
                missing.emplace_back(u, v);
            else
                valid.emplace_back(u, v);
        }
    if (valid.empty()) throw std::runtime_error("pair smoother: no valid node pairs");
    if (missing.size() * valid.size() > 2e9)
        throw std::runtime_error("pair smoother: bandwidth too small, most node pairs empty");
    for (const auto& [u, v] : missing) {
        const double u1 = grid.node_u(u), u2 = grid.node_v(u);
        const double v1 = grid.node_u(v), v2 = grid.node_v(v);
        double best_d = 1e300, best_val = 0;
        for (const auto& [cu, cv] : valid) {
            const double a1 = grid.node_u(cu) - u1, a2 = grid.node_v(cu) - u2;
            const double b1 = grid.node_u(cv) - v1, b2 = grid.node_v(cv) - v2;
            const double d = a1 * a1 + a2 * a2 + b1 * b1 + b2 * b2;
            if (d < best_d) {
                best_d = d;
                best_val = values(cu, cv);
            }
        }
        values(u, v) = best_val;
        values(v, u) = best_val;
    }
}

}  // namespace

MeanSurface smooth_mean(const PanelData& panel, const Grid2D& grid, const Bandwidth& h) {
    return smooth_mean_impl(panel, grid, h, true);
}

MeanSurface smooth_mean_reference(const PanelData& panel, const Grid2D& grid, const Bandwidth& h) {
    return smooth_mean_impl(panel, grid, h, false);
}

SecondMomentSurface smooth_second_moment(const PanelData& panel, const Grid2D& grid,
                                         const Bandwidth& h) {
    h.validate();
    const int g_total = grid.size();
    const int days = static_cast<int>(panel.size());

    // Per-day node marginals.
    std::vector<std::vector<NodeMarginal>> marg(static_cast<std::size_t>(days));
    for (int d = 0; d < days; ++d) {
        auto& md = marg[static_cast<std::size_t>(d)];
        md.assign(static_cast<std::size_t>(g_total), NodeMarginal{});
        const auto& day = panel[static_cast<std::size_t>(d)];
        for (std::size_t j = 0; j < day.y.size(); ++j) {
            const auto [lo1, hi1] = support_range(grid.u_nodes, day.x1[j], h.h1);
            const auto [lo2, hi2] = support_range(grid.v_nodes, day.x2[j], h.h2);
            for (int iu = lo1; iu <= hi1; ++iu) {
                const double d1 = grid.u_nodes[static_cast<std::size_t>(iu)] - day.x1[j];
                const double k1 = quartic_h(d1, h.h1);
                if (k1 <= 0.0) continue;
                for (int iv = lo2; iv <= hi2; ++iv) {
                    const double d2 = grid.v_nodes[static_cast<std::size_t>(iv)] - day.x2[j];
                    const double w = k1 * quartic_h(d2, h.h2);
                    if (w <= 0.0) continue;
                    NodeMarginal& nm = md[static_cast<std::size_t>(grid.index(iu, iv))];
                    nm.w0 += w;
                    nm.w1 += w * d1;
                    nm.w2 += w * d2;
                    nm.w11 += w * d1 * d1;
                    nm.w12 += w * d1 * d2;
                    nm.w22 += w * d2 * d2;
                    nm.y0 += w * day.y[j];
                    nm.y1 += w * day.y[j] * d1;
                    nm.y2 += w * day.y[j] * d2;
                    nm.count += 1.0;
                }
            }
        }
    }

    SecondMomentSurface out;
    out.values.setZero(g_total, g_total);
    out.flagged.assign(static_cast<std::size_t>(g_total) * static_cast<std::size_t>(g_total), 0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4)
#endif
    for (int u = 0; u < g_total; ++u) {
        std::vector<double> acc(static_cast<std::size_t>(g_total) * kAccSize, 0.0);
        const double u1 = grid.node_u(u), u2 = grid.node_v(u);
        for (int d = 0; d < days; ++d) {
            const auto& md = marg[static_cast<std::size_t>(d)];
            const NodeMarginal& mu = md[static_cast<std::size_t>(u)];
            if (mu.count > 0.0) {
                // Marginal products over ordered pairs (j at u, k at v).
                for (int v = u; v < g_total; ++v) {
                    const NodeMarginal& mv = md[static_cast<std::size_t>(v)];
                    if (mv.count <= 0.0) continue;
                    double* a = acc.data() + static_cast<std::size_t>(v) * kAccSize;
                    a[0] += mu.w0 * mv.w0;
                    a[1] += mu.w1 * mv.w0;
                    a[2] += mu.w2 * mv.w0;
                    a[3] += mu.w0 * mv.w1;
                    a[4] += mu.w0 * mv.w2;
                    a[5] += mu.w11 * mv.w0;
                    a[6] += mu.w12 * mv.w0;
                    a[7] += mu.w1 * mv.w1;
                    a[8] += mu.w1 * mv.w2;
                    a[9] += mu.w22 * mv.w0;
                    a[10] += mu.w2 * mv.w1;
                    a[11] += mu.w2 * mv.w2;
                    a[12] += mu.w0 * mv.w11;
                    a[13] += mu.w0 * mv.w12;
                    a[14] += mu.w0 * mv.w22;
                    a[15] += mu.y0 * mv.y0;
                    a[16] += mu.y1 * mv.y0;
                    a[17] += mu.y2 * mv.y0;
                    a[18] += mu.y0 * mv.y1;
                    a[19] += mu.y0 * mv.y2;
                    a[20] += mu.count * mv.count;
                }
                // j = k corrections.
                const auto& day = panel[static_cast<std::size_t>(d)];
                for (std::size_t j = 0; j < day.y.size(); ++j) {
                    const double du1 = u1 - day.x1[j], du2 = u2 - day.x2[j];
                    const double wu = quartic_h(du1, h.h1) * quartic_h(du2, h.h2);
                    if (wu <= 0.0) continue;
                    const auto [lo1, hi1] = support_range(grid.u_nodes, day.x1[j], h.h1);
                    const auto [lo2, hi2] = support_range(grid.v_nodes, day.x2[j], h.h2);
                    const double y2sq = day.y[j] * day.y[j];
                    for (int iu = lo1; iu <= hi1; ++iu) {
                        const double dv1 = grid.u_nodes[static_cast<std::size_t>(iu)] - day.x1[j];
                        const double k1 = quartic_h(dv1, h.h1);
                        if (k1 <= 0.0) continue;
                        for (int iv = lo2; iv <= hi2; ++iv) {
                            const int v = grid.index(iu, iv);
                            if (v < u) continue;
                            const double dv2 =
                                grid.v_nodes[static_cast<std::size_t>(iv)] - day.x2[j];
                            const double wv = k1 * quartic_h(dv2, h.h2);
                            if (wv <= 0.0) continue;
                            accumulate_pair(acc.data() + static_cast<std::size_t>(v) * kAccSize,
                                            wu * wv, du1, du2, dv1, dv2, y2sq, -1.0);
                        }
                    }
                }
            }
        }
        for (int v = u; v < g_total; ++v) {
            const NodeFit f = solve_pair_node(acc.data() + static_cast<std::size_t>(v) * kAccSize);
            out.values(u, v) = f.value;
            out.values(v, u) = f.value;
            const std::uint8_t flag = f.ok ? 0 : 1;
            out.flagged[static_cast<std::size_t>(u) * static_cast<std::size_t>(g_total) +
                        static_cast<std::size_t>(v)] = flag;
        }
    }
    for (std::uint8_t f : out.flagged) out.flagged_count += f;
    fill_flagged_pairs(grid, out.values, out.flagged);
    // The ordered-pair sum is symmetric in (u, v) by construction; the fill
    // step keeps the mirror entries in sync as well.
    return out;
}

SecondMomentSurface smooth_second_moment_reference(const PanelData& panel, const Grid2D& grid,
                                                   const Bandwidth& h) {
    h.validate();
    const int g_total = grid.size();
    std::vector<double> acc(static_cast<std::size_t>(g_total) * static_cast<std::size_t>(g_total) *
                                kAccSize,
                            0.0);
    for (const auto& day : panel) {
        const std::size_t n = day.y.size();
        for (std::size_t j = 0; j < n; ++j) {
            const auto [jlo1, jhi1] = support_range(grid.u_nodes, day.x1[j], h.h1);
            const auto [jlo2, jhi2] = support_range(grid.v_nodes, day.x2[j], h.h2);
            for (std::size_t k = 0; k < n; ++k) {
                if (k == j) continue;
                const double y = day.y[j] * day.y[k];
                const auto [klo1, khi1] = support_range(grid.u_nodes, day.x1[k], h.h1);
                const auto [klo2, khi2] = support_range(grid.v_nodes, day.x2[k], h.h2);
                for (int ju = jlo1; ju <= jhi1; ++ju) {
                    const double du1 = grid.u_nodes[static_cast<std::size_t>(ju)] - day.x1[j];
                    const double kj1 = quartic_h(du1, h.h1);
                    if (kj1 <= 0.0) continue;
                    for (int jv = jlo2; jv <= jhi2; ++jv) {
                        const double du2 = grid.v_nodes[static_cast<std::size_t>(jv)] - day.x2[j];
                        const double wj = kj1 * quartic_h(du2, h.h2);
                        if (wj <= 0.0) continue;
                        const int gu = grid.index(ju, jv);
                        for (int ku = klo1; ku <= khi1; ++ku) {
                            const double dv1 =
                                grid.u_nodes[static_cast<std::size_t>(ku)] - day.x1[k];
                            const double kk1 = quartic_h(dv1, h.h1);
                            if (kk1 <= 0.0) continue;
                            for (int kv = klo2; kv <= khi2; ++kv) {
                                const double dv2 =
                                    grid.v_nodes[static_cast<std::size_t>(kv)] - day.x2[k];
                                const double wk = kk1 * quartic_h(dv2, h.h2);
                                if (wk <= 0.0) continue;
                                const int gv = grid.index(ku, kv);
                                accumulate_pair(
                                    acc.data() +
                                        (static_cast<std::size_t>(gu) *
                                             static_cast<std::size_t>(g_total) +
                                         static_cast<std::size_t>(gv)) *
                                            kAccSize,
                                    wj * wk, du1, du2, dv1, dv2, y, 1.0);
                            }
                        }
                    }
                }
            }
        }
    }

    SecondMomentSurface out;
    out.values.setZero(g_total, g_total);
    out.flagged.assign(static_cast<std::size_t>(g_total) * static_cast<std::size_t>(g_total), 0);
    Eigen::MatrixXd raw(g_total, g_total);
    for (int u = 0; u < g_total; ++u) {
        for (int v = 0; v < g_total; ++v) {
            const NodeFit f = solve_pair_node(
                acc.data() + (static_cast<std::size_t>(u) * static_cast<std::size_t>(g_total) +
                              static_cast<std::size_t>(v)) *
                                 kAccSize);
            raw(u, v) = f.value;
            out.flagged[static_cast<std::size_t>(u) * static_cast<std::size_t>(g_total) +
                        static_cast<std::size_t>(v)] = f.ok ? 0 : 1;
        }
    }
    out.values = 0.5 * (raw + raw.transpose());
    for (std::uint8_t f : out.flagged) out.flagged_count += f;
    fill_flagged_pairs(grid, out.values, out.flagged);
    return out;
}

double pair_local_linear_at(const PanelData& panel, const Grid2D& grid, const Bandwidth& h,
                            int node_u, int node_v,
                            const std::vector<std::vector<double>>& pair_response_per_day) {
    h.validate();
    const double u1 = grid.node_u(node_u), u2 = grid.node_v(node_u);
    const double v1 = grid.node_u(node_v), v2 = grid.node_v(node_v);
    double a[kAccSize] = {0};
    for (std::size_t d = 0; d < panel.size(); ++d) {
        const auto& day = panel[d];
        const std::size_t n = day.y.size();
        if (pair_response_per_day[d].size() != n * n)
            throw std::invalid_argument("pair_local_linear_at: response matrix size mismatch");
        for (std::size_t j = 0; j < n; ++j) {
            const double du1 = u1 - day.x1[j], du2 = u2 - day.x2[j];
            const double wj = quartic_h(du1, h.h1) * quartic_h(du2, h.h2);
            if (wj <= 0.0) continue;
            for (std::size_t k = 0; k < n; ++k) {
                if (k == j) continue;
                const double dv1 = v1 - day.x1[k], dv2 = v2 - day.x2[k];
                const double wk = quartic_h(dv1, h.h1) * quartic_h(dv2, h.h2);
                if (wk <= 0.0) continue;
                accumulate_pair(a, wj * wk, du1, du2, dv1, dv2, pair_response_per_day[d][j * n + k],
                                1.0);
            }
        }
    }
    const NodeFit f = solve_pair_node(a);
    if (!f.ok) throw std::runtime_error("pair_local_linear_at: insufficient local data");
    return f.value;
}

}  // namespace corrdyn::dsfm

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "corrdyn/dates.hpp"
#include "corrdyn/marketdata.hpp"

namespace corrdyn::dsfm {

struct Grid2D {
    int nu = 0, nv = 0;
    std::vector<double> u_nodes, v_nodes;      // equally spaced on [0, 1]
    std::vector<double> u_weights, v_weights;  // trapezoid weights, sum to 1 per axis

    static Grid2D regular(int g1, int g2);
    int size() const { return nu * nv; }
    int index(int iu, int iv) const { return iu * nv + iv; }
    double node_u(int g) const { return u_nodes[static_cast<std::size_t>(g / nv)]; }
    double node_v(int g) const { return v_nodes[static_cast<std::size_t>(g % nv)]; }
    double quad_weight(int g) const {
        return u_weights[static_cast<std::size_t>(g / nv)] *
               v_weights[static_cast<std::size_t>(g % nv)];
    }
};

struct Bandwidth {
    double h1 = 0, h2 = 0;  // in the transformed coordinates, each in (0, 1)

    void validate() const;
};

// Flattened per-day observations in transformed coordinates.
struct DayObs {
    Date date;
    std::vector<double> x1, x2, y;
};

using PanelData = std::vector<DayObs>;

PanelData to_panel_data(const marketdata::SurfacePanel& panel);

// Quartic (biweight) kernel, k(q) = 15/16 (1 - q^2)^2 on |q| < 1.
double quartic(double q);
double quartic_h(double q, double h);  // k(q/h) / h

struct MeanSurface {
    Eigen::VectorXd values;             // grid.size()
    std::vector<std::uint8_t> flagged;  // nodes filled from the nearest valid node
};

struct SecondMomentSurface {
    Eigen::MatrixXd values;  // grid.size() x grid.size(), symmetric
    std::vector<std::uint8_t> flagged;
    std::size_t flagged_count = 0;
};

// Local-linear smoothers with a product quartic kernel. The second-moment
// smoother runs over all ordered within-day pairs j != k; sums are evaluated
// in a factorized form (marginal products minus j = k corrections) so the
// cost is O(J * support^2) per day instead of O(J^2 * support^2).
MeanSurface smooth_mean(const PanelData& panel, const Grid2D& grid, const Bandwidth& h);
SecondMomentSurface smooth_second_moment(const PanelData& panel, const Grid2D& grid,
                                         const Bandwidth& h);

// Serial reference implementations with direct loops (mean) and explicit pair
// enumeration (second moment). Used by tests and the benchmark; they evaluate
// the same estimator as the kernels above.
MeanSurface smooth_mean_reference(const PanelData& panel, const Grid2D& grid, const Bandwidth& h);
SecondMomentSurface smooth_second_moment_reference(const PanelData& panel, const Grid2D& grid,
                                                   const Bandwidth& h);

// Test entry point: local-linear fit of arbitrary pair responses g(X_j, X_k)
// at one node pair, by direct enumeration.
double pair_local_linear_at(const PanelData& panel, const Grid2D& grid, const Bandwidth& h,
                            int node_u, int node_v,
                            const std::vector<std::vector<double>>& pair_response_per_day);

}  // namespace corrdyn::dsfm

#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "corrdyn/marketdata.hpp"
#include "corrdyn/smoothing.hpp"

namespace corrdyn::dsfm {

struct FactorModel {
    Grid2D grid;
    Eigen::VectorXd m0;           // mean surface on the grid
    Eigen::MatrixXd basis;        // grid.size() x L, orthonormal under grid quadrature
    Eigen::VectorXd eigenvalues;  // nonincreasing, length L
    Eigen::MatrixXd scores;       // T x L
    std::vector<Date> dates;      // T
    double explained_variance = 0;
    Bandwidth h_mu, h_phi;
    double h_star = 0;
    std::vector<std::uint8_t> mean_flags;           // grid nodes filled by nearest neighbour
    std::size_t pair_flagged = 0;                   // filled node pairs in the phi fit
    std::vector<std::uint8_t> score_flags;          // per day: carried forward or ridge fallback
};

// psi(u, v) = phi(u, v) - mu(u) mu(v), then projected onto the PSD cone by
// clipping negative eigenvalues to zero.
Eigen::MatrixXd covariance_surface(const Eigen::MatrixXd& phi, const Eigen::VectorXd& mu);

struct FpcaResult {
    Eigen::MatrixXd basis;        // grid.size() x L
    Eigen::VectorXd eigenvalues;  // length L, nonincreasing
    int L = 0;
    double explained_variance = 0;
};

// Quadrature-weighted eigendecomposition of the covariance surface so that the
// eigenfunctions are orthonormal in L2 over the unit square. L is the smallest
// count reaching `variance_threshold` of total eigenvalue mass, capped at L_max.
// Each basis surface is scaled so its largest-magnitude entry is positive.
FpcaResult fpca(const Eigen::MatrixXd& psi, const Grid2D& grid, int L_max,
                double variance_threshold);

// Bilinear interpolation of a grid-sampled surface at transformed coordinates.
double interpolate_surface(const Grid2D& grid, const Eigen::VectorXd& surface, double u, double v);

struct ScoreResult {
    Eigen::MatrixXd scores;  // T x L
    std::vector<std::uint8_t> flags;
};

// Per-day OLS of Y - m0(X) on the basis surfaces; days with too few
// observations carry the previous day's scores, singular designs fall back to
// a ridge solve with penalty 1e-8. Both cases are flagged.
ScoreResult factor_scores(const PanelData& panel, const Grid2D& grid, const Eigen::VectorXd& m0,
                          const Eigen::MatrixXd& basis);

// One day's scores against a fitted basis (used when scoring out-of-sample days).
std::optional<Eigen::VectorXd> score_day(const DayObs& day, const Grid2D& grid,
                                         const Eigen::VectorXd& m0, const Eigen::MatrixXd& basis);

FactorModel fit_dsfm(const PanelData& panel, const Grid2D& grid, const Bandwidth& h_mu,
                     const Bandwidth& h_phi, int L_max, double variance_threshold);

// Model surface in transformed coordinates: m0 + sum_l z_l m_l at (u, v).
double evaluate_transformed(const FactorModel& model, const Eigen::VectorXd& z, double u, double v);

// Full evaluation from raw (kappa, tau): forward ECDF, interpolate, invert
// Fisher-Z. Throws if x lies outside the observed coordinate hull.
double evaluate_surface(const FactorModel& model, const Eigen::VectorXd& z, double kappa,
                        double tau, const marketdata::EcdfMap& ecdf);

// Median pairwise coordinate spacing of the pooled panel, the default
// weighting bandwidth for the AIC criterion.
Bandwidth default_h_star(const PanelData& panel);

struct BandwidthSelection {
    Bandwidth best;
    std::vector<std::pair<Bandwidth, double>> criteria;  // evaluated candidates
    std::size_t skipped = 0;
};

// Weighted AIC-penalized residual criterion over the candidate list; each
// candidate is evaluated by fitting the full pipeline with h_mu = h_phi = h.
BandwidthSelection select_bandwidth(const PanelData& panel, const Grid2D& grid,
                                    const std::vector<Bandwidth>& candidates, int L,
                                    const Bandwidth& h_star);

std::vector<Bandwidth> default_bandwidth_candidates();

}  // namespace corrdyn::dsfm

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace corrdyn::timeseries {

struct VarModel {
    int p = 1;
    Eigen::VectorXd intercept;            // L
    std::vector<Eigen::MatrixXd> coeffs;  // A_1 .. A_p, each L x L
    Eigen::MatrixXd residual_cov;         // L x L, symmetric PSD
    Eigen::MatrixXd residuals;            // (T - p) x L
    int sample_start = 0;                 // first fitted row (0-based, = p)
    int sample_end = 0;                   // one past the last fitted row (= T)
};

struct TestReport {
    double statistic = 0;
    int lags_used = 0;
    bool reject_at_5pct = false;
    std::string detail;
};

// Augmented Dickey-Fuller regression with constant. The lag count starts at
// `start_lags` and the last lag is deleted until it is significant at 5%.
// The statistic is compared with the asymptotic 5% critical value -2.86.
TestReport adf_test(const Eigen::VectorXd& series, int start_lags = 3);

struct LagOrderRow {
    int p = 0;
    double aic = 0, hqic = 0, sbic = 0;
    bool aic_best = false, hqic_best = false, sbic_best = false;
};

// Criteria from VAR(p) fits on the common effective sample rows p_max+1..T.
std::vector<LagOrderRow> select_lag_order(const Eigen::MatrixXd& z, int p_max = 4);

// Equation-by-equation OLS with intercept; residual covariance uses the
// denominator T - p - (L p + 1).
VarModel fit_var(const Eigen::MatrixXd& z, int p);

// Multivariate Ljung-Box Q test on VAR residuals, df = L^2 (max_lag - p).
TestReport portmanteau_test(const Eigen::MatrixXd& residuals, int p, int max_lag = 10);

// Iterated one-step conditional means.
std::vector<Eigen::VectorXd> forecast_var(const VarModel& model, const Eigen::MatrixXd& z_history,
                                          int horizon);

}  // namespace corrdyn::timeseries

#include "corrdyn/timeseries.hpp"

#include <cmath>
#include <stdexcept>

#include "corrdyn/stats.hpp"

namespace corrdyn::timeseries {

namespace {

struct OlsFit {
    Eigen::VectorXd beta;
    Eigen::VectorXd se;
    Eigen::VectorXd resid;
};

OlsFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const Eigen::MatrixXd xtx = x.transpose() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("ols: singular design");
    OlsFit fit;
    fit.beta = ldlt.solve(x.transpose() * y);
    fit.resid = y - x * fit.beta;
    const double dof = static_cast<double>(x.rows() - x.cols());
    if (dof <= 0)
        throw std::runtime_error("ols: not enough observations");
    const double s2 = fit.resid.squaredNorm() / dof;
    const Eigen::MatrixXd xtx_inv =
        ldlt.solve(Eigen::MatrixXd::Identity(x.cols(), x.cols()));
    fit.se = (s2 * xtx_inv.diagonal()).cwiseMax(0.0).cwiseSqrt();
    if ((fit.se.array() <= 0).any())
        throw std::runtime_error("ols: singular design");
    return fit;
}

// VAR(p) residuals via OLS with intercept, fitted on rows [start, T).
Eigen::MatrixXd var_residuals(const Eigen::MatrixXd& z, int p, int start) {
    const int t_total = static_cast<int>(z.rows());
    const int dim = static_cast<int>(z.cols());
    const int n = t_total - start;
    const int k = dim * p + 1;
    Eigen::MatrixXd x(n, k);
    Eigen::MatrixXd y(n, dim);
    for (int t = start; t < t_total; ++t) {
        const int r = t - start;
        x(r, 0) = 1.0;
        for (int lag = 1; lag <= p; ++lag)
            x.block(r, 1 + (lag - 1) * dim, 1, dim) = z.row(t - lag);
        y.row(r) = z.row(t);
    }
    const Eigen::MatrixXd xtx = x.transpose() * x;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
    if (!lu.isInvertible())
        throw std::runtime_error("fit_var: singular design");
    const Eigen::MatrixXd beta = lu.solve(x.transpose() * y);  // k x L
    return y - x * beta;
}

}  // namespace

TestReport adf_test(const Eigen::VectorXd& series, int start_lags) {
    const int n = static_cast<int>(series.size());
    if (n < 30)
        throw std::invalid_argument("adf_test: series too short");
    if (start_lags < 0)
        throw std::invalid_argument("adf_test: negative lag count");

    Eigen::VectorXd diff(n - 1);
    for (int i = 0; i < n - 1; ++i) diff(i) = series(i + 1) - series(i);

    int lags = start_lags;
    TestReport report;
    for (;;) {
        // Regress diff(t) on [1, y(t-1), diff(t-1..lags)], t = lags..n-2.
        const int rows = (n - 1) - lags;
        const int cols = 2 + lags;
        if (rows <= cols + 2)
            throw std::invalid_argument("adf_test: series too short for lag count");
        Eigen::MatrixXd x(rows, cols);
        Eigen::VectorXd y(rows);
        for (int t = lags; t < n - 1; ++t) {
            const int r = t - lags;
            x(r, 0) = 1.0;
            x(r, 1) = series(t);
            for (int l = 1; l <= lags; ++l) x(r, 1 + l) = diff(t - l);
            y(r) = diff(t);
        }
        const OlsFit fit = ols(x, y);
        if (lags > 0) {
            const double t_last = fit.beta(cols - 1) / fit.se(cols - 1);
            if (std::abs(t_last) < 1.959963984540054) {
                --lags;
                continue;
            }
        }
        report.statistic = fit.beta(1) / fit.se(1);
        report.lags_used = lags;
        break;
    }
    report.reject_at_5pct = report.statistic < -2.86;
    report.detail = "ADF with constant, 5% critical value -2.86";
    return report;
}

std::vector<LagOrderRow> select_lag_order(const Eigen::MatrixXd& z, int p_max) {
    const int t_total = static_cast<int>(z.rows());
    const int dim = static_cast<int>(z.cols());
    if (p_max < 1)
        throw std::invalid_argument("select_lag_order: p_max must be >= 1");
    if (t_total <= dim * p_max + 10)
        throw std::invalid_argument("select_lag_order: insufficient sample");

    const int n = t_total - p_max;  // common effective sample
    std::vector<LagOrderRow> rows;
    for (int p = 1; p <= p_max; ++p) {
        const Eigen::MatrixXd resid = var_residuals(z, p, p_max);
        const Eigen::MatrixXd sigma = resid.transpose() * resid / static_cast<double>(n);
        const double log_det = std::log(sigma.determinant());
        const double k = static_cast<double>(dim * (dim * p + 1));
        LagOrderRow row;
        row.p = p;
        row.aic = log_det + 2.0 * k / n;
        row.hqic = log_det + 2.0 * std::log(std::log(static_cast<double>(n))) * k / n;
        row.sbic = log_det + std::log(static_cast<double>(n)) * k / n;
        rows.push_back(row);
    }
    const auto mark = [&rows](double LagOrderRow::* value, bool LagOrderRow::* flag) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < rows.size(); ++i)
            if (rows[i].*value < rows[best].*value) best = i;
        rows[best].*flag = true;
    };
    mark(&LagOrderRow::aic, &LagOrderRow::aic_best);
    mark(&LagOrderRow::hqic, &LagOrderRow::hqic_best);
    mark(&LagOrderRow::sbic, &LagOrderRow::sbic_best);
    return rows;
}

VarModel fit_var(const Eigen::MatrixXd& z, int p) {
    const int t_total = static_cast<int>(z.rows());
    const int dim = static_cast<int>(z.cols());
    if (p < 1)
        throw std::invalid_argument("fit_var: p must be >= 1");
    if (t_total <= dim * p + 10)
        throw std::invalid_argument("fit_var: insufficient sample");

    const int n = t_total - p;
    const int k = dim * p + 1;
    Eigen::MatrixXd x(n, k);
    Eigen::MatrixXd y(n, dim);
    for (int t = p; t < t_total; ++t) {
        const int r = t - p;
        x(r, 0) = 1.0;
        for (int lag = 1; lag <= p; ++lag)
            x.block(r, 1 + (lag - 1) * dim, 1, dim) = z.row(t - lag);
        y.row(r) = z.row(t);
    }
    const Eigen::MatrixXd xtx = x.transpose() * x;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
    if (!lu.isInvertible())
        throw std::runtime_error("fit_var: singular design");
    const Eigen::MatrixXd beta = lu.solve(x.transpose() * y);  // k x L

    VarModel model;
    model.p = p;
    model.intercept = beta.row(0).transpose();
    model.coeffs.resize(static_cast<std::size_t>(p));
    for (int lag = 1; lag <= p; ++lag)
        model.coeffs[static_cast<std::size_t>(lag - 1)] =
            beta.block(1 + (lag - 1) * dim, 0, dim, dim).transpose();
    model.residuals = y - x * beta;
    const double denom = static_cast<double>(t_total - p - (dim * p + 1));
    if (denom <= 0)
        throw std::runtime_error("fit_var: insufficient degrees of freedom");
    model.residual_cov = model.residuals.transpose() * model.residuals / denom;
    model.residual_cov = 0.5 * (model.residual_cov + model.residual_cov.transpose()).eval();
    model.sample_start = p;
    model.sample_end = t_total;
    return model;
}

TestReport portmanteau_test(const Eigen::MatrixXd& residuals, int p, int max_lag) {
    const int n = static_cast<int>(residuals.rows());
    const int dim = static_cast<int>(residuals.cols());
    if (max_lag <= p)
        throw std::invalid_argument("portmanteau_test: max_lag must exceed the VAR order");
    if (n <= max_lag + 1)
        throw std::invalid_argument("portmanteau_test: too few residual rows");

    Eigen::MatrixXd centered = residuals.rowwise() - residuals.colwise().mean();
    const Eigen::MatrixXd c0 = centered.transpose() * centered / static_cast<double>(n);
    TestReport report;
    report.lags_used = max_lag;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(c0);
    if (!lu.isInvertible()) {
        report.detail = "degenerate residual covariance";
        return report;
    }
    const Eigen::MatrixXd c0_inv = lu.inverse();
    double q = 0;
    for (int k = 1; k <= max_lag; ++k) {
        Eigen::MatrixXd ck = Eigen::MatrixXd::Zero(dim, dim);
        for (int t = k; t < n; ++t)
            ck += centered.row(t).transpose() * centered.row(t - k);
        ck /= static_cast<double>(n);
        q += (ck.transpose() * c0_inv * ck * c0_inv).trace() / static_cast<double>(n - k);
    }
    q *= static_cast<double>(n) * static_cast<double>(n);
    const double df = static_cast<double>(dim * dim * (max_lag - p));
    const double p_value = stats::chi_square_sf(q, df);
    report.statistic = q;
    report.reject_at_5pct = p_value < 0.05;
    report.detail = "Ljung-Box Q, p-value " + std::to_string(p_value);
    return report;
}

std::vector<Eigen::VectorXd> forecast_var(const VarModel& model, const Eigen::MatrixXd& z_history,
                                          int horizon) {
    const int t_total = static_cast<int>(z_history.rows());
    const int dim = static_cast<int>(z_history.cols());
    if (t_total < model.p)
        throw std::invalid_argument("forecast_var: insufficient history");
    if (horizon < 1)
        throw std::invalid_argument("forecast_var: horizon must be >= 1");
    if (model.intercept.size() != dim)
        throw std::invalid_argument("forecast_var: dimension mismatch");

    // Most recent observation first.
    std::vector<Eigen::VectorXd> state(static_cast<std::size_t>(model.p));
    for (int lag = 1; lag <= model.p; ++lag)
        state[static_cast<std::size_t>(lag - 1)] = z_history.row(t_total - lag).transpose();

    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(horizon));
    for (int h = 0; h < horizon; ++h) {
        Eigen::VectorXd next = model.intercept;
        for (int lag = 1; lag <= model.p; ++lag)
            next += model.coeffs[static_cast<std::size_t>(lag - 1)] *
                    state[static_cast<std::size_t>(lag - 1)];
        for (int lag = model.p - 1; lag >= 1; --lag)
            state[static_cast<std::size_t>(lag)] = state[static_cast<std::size_t>(lag - 1)];
        state[0] = next;
        out.push_back(next);
    }
    return out;
}

}  // namespace corrdyn::timeseries

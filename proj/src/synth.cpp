#include "corrdyn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "corrdyn/rng.hpp"
#include "corrdyn/vol.hpp"

namespace corrdyn::synth {

namespace {

constexpr int kTenorDays[] = {21, 63, 126, 189, 252};
constexpr int kNumTenors = 5;
constexpr double kTauMin = 21.0 / 252.0;
constexpr double kTauMax = 1.0;

// Right-skewed maturity mix: most observations at the short end.
constexpr double kTenorShare[] = {0.33, 0.25, 0.18, 0.14, 0.10};

double basis_fn(int l, double x1, double x2) {
    constexpr double pi = 3.14159265358979323846;
    switch (l) {
        case 0: return 0.55 + 0.10 * x2 - 0.06 * x1;  // mean surface
        case 1: return 0.22 * std::cos(pi * x1);
        case 2: return 0.20 * (x2 - 0.5);
        case 3: return 0.18 * std::sin(pi * x1) * (x2 - 0.5);
        default:
            return 0.12 * std::cos(pi * l * x1) * (x2 - 0.5);
    }
}

std::vector<int> tenor_counts(int obs_per_day) {
    std::vector<int> counts(kNumTenors);
    std::vector<std::pair<double, int>> remainders;
    int total = 0;
    for (int e = 0; e < kNumTenors; ++e) {
        const double exact = kTenorShare[e] * obs_per_day;
        counts[static_cast<std::size_t>(e)] = std::max(2, static_cast<int>(exact));
        total += counts[static_cast<std::size_t>(e)];
        remainders.emplace_back(exact - std::floor(exact), e);
    }
    std::sort(remainders.rbegin(), remainders.rend());
    for (std::size_t i = 0; total < obs_per_day; ++total, i = (i + 1) % remainders.size())
        ++counts[static_cast<std::size_t>(remainders[i].second)];
    while (total > obs_per_day) {
        auto it = std::max_element(counts.begin(), counts.end());
        --*it;
        --total;
    }
    return counts;
}

double smile_vol(double level, double kappa, double x2) {
    return level * (1.0 + 0.15 * (kappa - 1.0) * (kappa - 1.0) + 0.05 * x2);
}

}  // namespace

void SynthConfig::validate() const {
    if (n_assets < 2) throw std::invalid_argument("synth: need at least 2 assets");
    if (n_days < 30) throw std::invalid_argument("synth: need at least 30 days");
    if (obs_per_day < 5 * kNumTenors)
        throw std::invalid_argument("synth: too few observations per day");
    if (true_factor_count < 1 || true_factor_count > 6)
        throw std::invalid_argument("synth: factor count must be in [1, 6]");
    if (rate < 0.0 || rate > 0.2) throw std::invalid_argument("synth: rate outside [0, 0.2]");
    if (regime_enabled && (regime.threshold <= 0 || regime.slope_high <= 0))
        throw std::invalid_argument("synth: invalid regime parameters");
}

SynthOutput generate_market(const SynthConfig& config) {
    config.validate();
    const int n = config.n_assets;
    const int t_days = config.n_days;
    const int sim_days = t_days + kTenorDays[kNumTenors - 1];
    const int l_star = config.true_factor_count;
    Rng rng(Rng::mix(config.seed, 0));

    SynthOutput out;
    out.index_ticker = "IDX";
    out.basket.weights = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) {
        out.basket.tickers.push_back("AST" + std::to_string(i));
        out.basket.weights(i) = 2.0 * (i + 1) / (static_cast<double>(n) * (n + 1));
    }
    const Eigen::VectorXd& w = out.basket.weights;

    // Business-day calendar.
    std::vector<Date> calendar;
    Date d = config.start;
    while (!d.is_business_day()) d = d.next_business_day();
    for (int t = 0; t < sim_days + 1; ++t) {
        calendar.push_back(d);
        d = d.next_business_day();
    }

    // Per-asset lognormal AR(1) vol levels and correlated spot paths.
    const double phi = 0.97, sigma_x = 0.04, rho_spot = 0.35;
    Eigen::MatrixXd vol_level(sim_days + 1, n);   // annualized
    Eigen::MatrixXd spots(sim_days + 1, n);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) spots(0, i) = 100.0;
    for (int i = 0; i < n; ++i) vol_level(0, i) = 0.15 + 0.03 * i;
    for (int t = 1; t <= sim_days; ++t) {
        const double common = rng.normal();
        for (int i = 0; i < n; ++i) {
            x(i) = phi * x(i) + sigma_x * rng.normal();
            vol_level(t, i) = (0.15 + 0.03 * i) * std::exp(x(i));
            const double v = vol_level(t - 1, i);
            const double eps =
                std::sqrt(rho_spot) * common + std::sqrt(1.0 - rho_spot) * rng.normal();
            spots(t, i) =
                spots(t - 1, i) *
                std::exp(-v * v / (2.0 * 252.0) + v / std::sqrt(252.0) * eps);
        }
    }
    Eigen::VectorXd index_spot(sim_days + 1);
    for (int t = 0; t <= sim_days; ++t) index_spot(t) = w.dot(spots.row(t).transpose());

    // True factor scores from a stable diagonal VAR(2), 50-step burn-in.
    Eigen::VectorXd a1(l_star), a2(l_star);
    for (int l = 0; l < l_star; ++l) {
        a1(l) = 0.45 - 0.05 * l;
        a2(l) = 0.15 - 0.02 * l;
    }
    out.truth.scores = Eigen::MatrixXd::Zero(t_days, l_star);
    {
        Eigen::VectorXd z1 = Eigen::VectorXd::Zero(l_star), z2 = z1;
        for (int t = -50; t < t_days; ++t) {
            Eigen::VectorXd z(l_star);
            for (int l = 0; l < l_star; ++l)
                z(l) = a1(l) * z1(l) + a2(l) * z2(l) + 0.12 * rng.normal();
            z2 = z1;
            z1 = z;
            if (t >= 0) out.truth.scores.row(t) = z.transpose();
        }
    }

    const std::vector<int> counts = tenor_counts(config.obs_per_day);
    out.truth.tenors.resize(kNumTenors);
    for (int e = 0; e < kNumTenors; ++e)
        out.truth.tenors[static_cast<std::size_t>(e)] = kTenorDays[e] / 252.0;
    out.truth.regime_enabled = config.regime_enabled;
    out.truth.regime = config.regime;

    for (int t = 0; t < t_days; ++t) {
        const Date trade_date = calendar[static_cast<std::size_t>(t)];
        out.truth.dates.push_back(trade_date);

        // Regime driver: ATM basket vol at the shortest tenor, percentage points.
        Eigen::VectorXd atm_vols(n);
        for (int i = 0; i < n; ++i) atm_vols(i) = smile_vol(vol_level(t, i), 1.0, 0.0);
        const double atm_sum = w.dot(atm_vols);
        const double atm_diag = w.array().square().matrix().dot(
            atm_vols.array().square().matrix());
        const double atm_cross = atm_sum * atm_sum - atm_diag;
        const double rho0 = std::tanh(basis_fn(0, 0.5, 0.0));
        const double atm_vol_pct = 100.0 * std::sqrt(atm_diag + rho0 * atm_cross);
        out.truth.atm_vol.push_back(atm_vol_pct);

        double day_level = 0.0;
        double shape_scale = 1.0;
        if (config.regime_enabled) {
            const double driver = std::clamp(atm_vol_pct, 17.0, 30.0);
            const auto& rp = config.regime;
            const double intercept_low = rp.threshold * (rp.slope_high - rp.slope_low);
            const double target = driver > rp.threshold
                                      ? rp.slope_high * driver
                                      : intercept_low + rp.slope_low * driver;
            day_level = correlation::fisher_z(target);
            shape_scale = 0.1;
        }

        std::vector<correlation::CorrelationPoint> day_nodes;
        for (int e = 0; e < kNumTenors; ++e) {
            const double tau = kTenorDays[e] / 252.0;
            const Date expiry =
                calendar[static_cast<std::size_t>(t)].add_business_days(kTenorDays[e]);
            const double x2 = (tau - kTauMin) / (kTauMax - kTauMin);
            const int nk = counts[static_cast<std::size_t>(e)];
            for (int k = 0; k < nk; ++k) {
                const double kappa = 0.8 + 0.4 * k / (nk - 1);
                const double x1 = (kappa - 0.8) / 0.4;

                double zval = config.regime_enabled ? day_level : basis_fn(0, x1, x2);
                for (int l = 1; l <= l_star; ++l)
                    zval += shape_scale * out.truth.scores(t, l - 1) * basis_fn(l, x1, x2);
                // Soft guard against rare extreme draws leaving the valid range.
                zval = std::clamp(zval, 0.05, 1.5);
                const double rho = std::tanh(zval);
                if (rho <= 0.0 || rho >= 0.9999)
                    throw std::runtime_error("synth: generated correlation outside (0, 0.9999)");
                day_nodes.push_back({rho, kappa, tau, trade_date});

                Eigen::VectorXd const_vols(n);
                for (int i = 0; i < n; ++i)
                    const_vols(i) = smile_vol(vol_level(t, i), kappa, x2);
                const double vsum = w.dot(const_vols);
                const double vdiag = w.array().square().matrix().dot(
                    const_vols.array().square().matrix());
                const double index_var = vdiag + rho * (vsum * vsum - vdiag);

                const auto emit = [&](const std::string& ticker, double spot, double iv) {
                    vol::PricingInputs in;
                    in.spot = spot;
                    in.strike = kappa * spot * std::exp(config.rate * tau);
                    in.rate = config.rate;
                    in.tau = tau;
                    in.vol = iv;
                    in.right = kappa < 1.0 ? vol::Right::put : vol::Right::call;
                    marketdata::OptionTrade trade;
                    trade.trade_date = trade_date;
                    trade.expiry_date = expiry;
                    trade.underlying = ticker;
                    trade.strike = in.strike;
                    trade.price = vol::european_price(in);
                    trade.right = in.right;
                    trade.style = vol::Style::european;
                    if (trade.price > 0.0) out.trades.push_back(std::move(trade));
                };
                emit(out.index_ticker, index_spot(t), std::sqrt(index_var));
                for (int i = 0; i < n; ++i)
                    emit(out.basket.tickers[static_cast<std::size_t>(i)], spots(t, i),
                         const_vols(i));
            }
        }
        out.truth.rho_nodes.push_back(std::move(day_nodes));
    }

    // Snapshots over the whole simulated span so realized windows resolve.
    for (int t = 0; t <= sim_days; ++t) {
        marketdata::MarketSnapshot snap;
        snap.date = calendar[static_cast<std::size_t>(t)];
        snap.spot_by_ticker[out.index_ticker] = index_spot(t);
        for (int i = 0; i < n; ++i) {
            snap.spot_by_ticker[out.basket.tickers[static_cast<std::size_t>(i)]] = spots(t, i);
            snap.weights[out.basket.tickers[static_cast<std::size_t>(i)]] = w(i);
        }
        snap.rate_curve = {{10.0 / 252.0, config.rate}, {1.0, config.rate}};
        snap.validate();
        out.snapshots.emplace(snap.date.serial(), std::move(snap));
    }

    // Realized variances per tenor: column 0 index, then constituents.
    std::vector<double> index_prices(index_spot.data(), index_spot.data() + sim_days + 1);
    for (int e = 0; e < kNumTenors; ++e) {
        const double tau = kTenorDays[e] / 252.0;
        Eigen::MatrixXd rv(t_days, n + 1);
        for (int t = 0; t < t_days; ++t) {
            rv(t, 0) = vol::realized_variance(index_prices, static_cast<std::size_t>(t), tau).value;
            for (int i = 0; i < n; ++i) {
                std::vector<double> path(sim_days + 1);
                for (int s = 0; s <= sim_days; ++s) path[static_cast<std::size_t>(s)] = spots(s, i);
                rv(t, i + 1) =
                    vol::realized_variance(path, static_cast<std::size_t>(t), tau).value;
            }
        }
        out.truth.realized_vars.push_back(std::move(rv));
    }
    return out;
}

void write_market(const std::filesystem::path& dir, const SynthOutput& out) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "trades.csv", std::ios::binary);
        marketdata::write_trades(f, out.trades);
    }
    {
        std::ofstream fs(dir / "snapshots.csv", std::ios::binary);
        std::ofstream fr(dir / "rates.csv", std::ios::binary);
        std::ofstream fd(dir / "dividends.csv", std::ios::binary);
        marketdata::write_snapshot_files(fs, fr, fd, out.snapshots);
    }

    nlohmann::json j;
    j["index_ticker"] = out.index_ticker;
    j["tickers"] = out.basket.tickers;
    j["weights"] = std::vector<double>(out.basket.weights.data(),
                                      out.basket.weights.data() + out.basket.weights.size());
    j["tenors"] = out.truth.tenors;
    for (const auto& date : out.truth.dates) j["dates"].push_back(date.to_string());
    for (int t = 0; t < out.truth.scores.rows(); ++t) {
        std::vector<double> row(out.truth.scores.cols());
        for (int l = 0; l < out.truth.scores.cols(); ++l)
            row[static_cast<std::size_t>(l)] = out.truth.scores(t, l);
        j["scores"].push_back(row);
    }
    j["atm_vol"] = out.truth.atm_vol;
    j["regime_enabled"] = out.truth.regime_enabled;
    j["regime"] = {{"threshold", out.truth.regime.threshold},
                   {"slope_low", out.truth.regime.slope_low},
                   {"slope_high", out.truth.regime.slope_high}};
    for (const auto& day : out.truth.rho_nodes) {
        nlohmann::json jd = nlohmann::json::array();
        for (const auto& p : day) jd.push_back({p.kappa, p.tau, p.rho});
        j["rho_nodes"].push_back(std::move(jd));
    }
    for (std::size_t e = 0; e < out.truth.realized_vars.size(); ++e) {
        const auto& rv = out.truth.realized_vars[e];
        nlohmann::json jt = nlohmann::json::array();
        for (int t = 0; t < rv.rows(); ++t) {
            std::vector<double> row(static_cast<std::size_t>(rv.cols()));
            for (int c = 0; c < rv.cols(); ++c) row[static_cast<std::size_t>(c)] = rv(t, c);
            jt.push_back(row);
        }
        j["realized_vars"].push_back(std::move(jt));
    }

    std::ofstream f(dir / "ground_truth.json", std::ios::binary);
    f << j.dump(2) << '\n';
}

}  // namespace corrdyn::synth

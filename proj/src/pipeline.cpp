#include "corrdyn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "corrdyn/vol.hpp"

namespace corrdyn::pipeline {

namespace {

using nlohmann::json;

json vec_to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vec_from_json(const json& j) {
    const auto xs = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

json mat_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd mat_from_json(const json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size())
            throw std::runtime_error("model json: ragged matrix");
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return m;
}

struct DaySmiles {
    correlation::IvSmileDay index;
    std::map<std::string, correlation::IvSmileDay> constituents;
    std::map<std::int64_t, double> tau_by_expiry;
};

// Factor series arranged for the VAR: unit-root factors first-differenced.
Eigen::MatrixXd transform_scores(const Eigen::MatrixXd& scores,
                                 const std::vector<std::uint8_t>& diff_flags) {
    const bool any_diff =
        std::any_of(diff_flags.begin(), diff_flags.end(), [](std::uint8_t f) { return f != 0; });
    if (!any_diff) return scores;
    const Eigen::Index t = scores.rows(), l = scores.cols();
    Eigen::MatrixXd out(t - 1, l);
    for (Eigen::Index c = 0; c < l; ++c)
        for (Eigen::Index r = 1; r < t; ++r)
            out(r - 1, c) = diff_flags[static_cast<std::size_t>(c)]
                                ? scores(r, c) - scores(r - 1, c)
                                : scores(r, c);
    return out;
}

}  // namespace

void RunConfig::validate() const {
    if (grid1 < 4 || grid2 < 4) throw std::invalid_argument("config: grid must be at least 4x4");
    if (l_max < 1) throw std::invalid_argument("config: l_max must be >= 1");
    if (variance_threshold <= 0 || variance_threshold > 1)
        throw std::invalid_argument("config: variance_threshold outside (0, 1]");
    if (iv_cap <= 0) throw std::invalid_argument("config: iv_cap must be positive");
    if (dt <= 0) throw std::invalid_argument("config: dt must be positive");
    if (var_p < 0) throw std::invalid_argument("config: var_p must be >= 0");
    if (!(est_start < est_end))
        throw std::invalid_argument("config: estimation range empty");
    if (!(bt_start <= bt_end)) throw std::invalid_argument("config: backtest range empty");
    if (!(est_end < bt_start))
        throw std::invalid_argument("config: estimation range must precede backtest range");
    for (double tenor : tenors)
        if (tenor < 10.0 / 252.0 || tenor > 1.0)
            throw std::invalid_argument("config: tenor outside [10/252, 1]");
    if (!auto_bandwidth) h.validate();
}

RunConfig RunConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::invalid_argument("config: parse failure: " + std::string(e.what()));
    }
    RunConfig cfg;
    try {
        const auto get_path = [&](const char* key) -> std::filesystem::path {
            return std::filesystem::path(j.at(key).get<std::string>());
        };
        if (j.contains("trades")) cfg.trades = get_path("trades");
        if (j.contains("snapshots")) cfg.snapshots = get_path("snapshots");
        if (j.contains("rates")) cfg.rates = get_path("rates");
        if (j.contains("dividends")) cfg.dividends = get_path("dividends");
        if (j.contains("output_dir")) cfg.output_dir = get_path("output_dir");
        if (j.contains("index_ticker")) cfg.index_ticker = j["index_ticker"].get<std::string>();
        const auto get_date = [&](const char* key) {
            return Date::parse(j.at(key).get<std::string>());
        };
        if (j.contains("est_start")) cfg.est_start = get_date("est_start");
        if (j.contains("est_end")) cfg.est_end = get_date("est_end");
        if (j.contains("bt_start")) cfg.bt_start = get_date("bt_start");
        if (j.contains("bt_end")) cfg.bt_end = get_date("bt_end");
        if (j.contains("grid")) {
            cfg.grid1 = j["grid"].at(0).get<int>();
            cfg.grid2 = j["grid"].at(1).get<int>();
        }
        if (j.contains("l_max")) cfg.l_max = j["l_max"].get<int>();
        if (j.contains("variance_threshold"))
            cfg.variance_threshold = j["variance_threshold"].get<double>();
        if (j.contains("auto_bandwidth")) cfg.auto_bandwidth = j["auto_bandwidth"].get<bool>();
        if (j.contains("bandwidth")) {
            cfg.h.h1 = j["bandwidth"].at(0).get<double>();
            cfg.h.h2 = j["bandwidth"].at(1).get<double>();
        }
        if (j.contains("var_p")) cfg.var_p = j["var_p"].get<int>();
        if (j.contains("tenors")) cfg.tenors = j["tenors"].get<std::vector<double>>();
        if (j.contains("dt")) cfg.dt = j["dt"].get<double>();
        if (j.contains("regime_correction"))
            cfg.regime_correction = j["regime_correction"].get<bool>();
        if (j.contains("iv_cap")) cfg.iv_cap = j["iv_cap"].get<double>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("synth")) {
            const json& s = j["synth"];
            if (s.contains("seed")) cfg.synth.seed = s["seed"].get<std::uint64_t>();
            if (s.contains("n_assets")) cfg.synth.n_assets = s["n_assets"].get<int>();
            if (s.contains("n_days")) cfg.synth.n_days = s["n_days"].get<int>();
            if (s.contains("obs_per_day")) cfg.synth.obs_per_day = s["obs_per_day"].get<int>();
            if (s.contains("true_factor_count"))
                cfg.synth.true_factor_count = s["true_factor_count"].get<int>();
            if (s.contains("start")) cfg.synth.start = Date::parse(s["start"].get<std::string>());
            if (s.contains("rate")) cfg.synth.rate = s["rate"].get<double>();
            if (s.contains("regime_enabled"))
                cfg.synth.regime_enabled = s["regime_enabled"].get<bool>();
            if (s.contains("regime")) {
                cfg.synth.regime.threshold = s["regime"].at("threshold").get<double>();
                cfg.synth.regime.slope_low = s["regime"].at("slope_low").get<double>();
                cfg.synth.regime.slope_high = s["regime"].at("slope_high").get<double>();
            }
        }
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception& e) {
        throw std::invalid_argument("config: bad field: " + std::string(e.what()));
    }
    return cfg;
}

FittedModel fit_pipeline(const RunConfig& config,
                         const std::vector<marketdata::OptionTrade>& trades,
                         const std::map<std::int64_t, marketdata::MarketSnapshot>& snaps) {
    if (config.index_ticker.empty())
        throw std::invalid_argument("fit: index_ticker must be configured");

    // 1. Filter and invert implied vols.
    const auto quotes = marketdata::filter_and_prepare(trades, snaps);
    std::map<std::int64_t, DaySmiles> days;
    for (const auto& q : quotes) {
        const Date date = q.trade.trade_date;
        if (date < config.est_start || date > config.bt_end) continue;
        double iv;
        try {
            vol::PricingInputs in;
            in.spot = q.spot;
            in.strike = q.trade.strike;
            in.rate = q.rate;
            in.tau = q.tau;
            in.right = q.trade.right;
            in.dividends = q.dividends;
            iv = vol::implied_vol(q.trade.price, in, q.trade.style);
        } catch (const std::exception&) {
            continue;  // unattainable price or non-convergence: drop the quote
        }
        if (iv > config.iv_cap) continue;
        DaySmiles& day = days[date.serial()];
        const std::int64_t exp_serial = q.trade.expiry_date.serial();
        day.tau_by_expiry[exp_serial] = q.tau;
        auto& smile = q.trade.underlying == config.index_ticker
                          ? day.index.by_expiry[exp_serial]
                          : day.constituents[q.trade.underlying].by_expiry[exp_serial];
        smile.emplace_back(q.kappa, iv);
    }

    // 2. Implied correlation surface per day.
    std::vector<std::pair<Date, std::vector<correlation::CorrelationPoint>>> raw_days;
    std::map<std::int64_t, correlation::RegimeVolDay> vol_by_day;
    for (auto& [serial, day] : days) {
        const Date date{serial};
        const auto snap_it = snaps.find(serial);
        if (snap_it == snaps.end()) continue;
        const auto& weights_map = snap_it->second.weights;
        std::vector<std::string> order;
        for (const auto& [ticker, weight] : weights_map) order.push_back(ticker);
        Eigen::VectorXd weights(static_cast<Eigen::Index>(order.size()));
        std::vector<correlation::IvSmileDay> constituents;
        bool complete = true;
        for (std::size_t i = 0; i < order.size(); ++i) {
            weights(static_cast<Eigen::Index>(i)) = weights_map.at(order[i]);
            const auto it = day.constituents.find(order[i]);
            if (it == day.constituents.end()) {
                complete = false;
                break;
            }
            constituents.push_back(it->second);
        }
        if (!complete || day.index.by_expiry.empty()) continue;
        for (auto& [exp, smile] : day.index.by_expiry)
            std::sort(smile.begin(), smile.end());
        for (auto& c : constituents)
            for (auto& [exp, smile] : c.by_expiry) std::sort(smile.begin(), smile.end());

        auto points = correlation::implied_correlation_points(date, day.index, constituents,
                                                              weights, day.tau_by_expiry);
        if (points.empty()) continue;

        // Regime driver: shortest-expiry near-ATM index vol in percentage points.
        correlation::RegimeVolDay rv;
        {
            const auto& [exp, smile] = *day.index.by_expiry.begin();
            const auto atm = std::min_element(
                smile.begin(), smile.end(), [](const auto& a, const auto& b) {
                    return std::abs(a.first - 1.0) < std::abs(b.first - 1.0);
                });
            rv.atm_vol = 100.0 * atm->second;
        }
        for (const auto& p : points) {
            // vol of the index at the point's coordinates, linear in kappa
            const auto exp_it = std::find_if(
                day.tau_by_expiry.begin(), day.tau_by_expiry.end(),
                [&](const auto& kv) { return std::abs(kv.second - p.tau) < 1e-12; });
            double v = rv.atm_vol;
            if (exp_it != day.tau_by_expiry.end()) {
                const auto& smile = day.index.by_expiry.at(exp_it->first);
                const auto near = std::min_element(
                    smile.begin(), smile.end(), [&](const auto& a, const auto& b) {
                        return std::abs(a.first - p.kappa) < std::abs(b.first - p.kappa);
                    });
                v = 100.0 * near->second;
            }
            rv.point_vols.push_back(v);
        }
        vol_by_day[serial] = std::move(rv);
        raw_days.emplace_back(date, std::move(points));
    }
    if (raw_days.empty()) throw std::runtime_error("fit: no usable correlation surfaces");

    FittedModel fm;

    // 3. Optional regime correction with a fitted two-piece law.
    if (config.regime_correction) {
        std::vector<double> xs, ys;
        for (const auto& [date, points] : raw_days) {
            const auto& rv = vol_by_day.at(date.serial());
            for (std::size_t i = 0; i < points.size(); ++i) {
                xs.push_back(rv.point_vols[i]);
                ys.push_back(points[i].rho);
            }
        }
        fm.breakpoint = correlation::fit_breakpoint(xs, ys);
        fm.regime_applied = true;
        for (auto& [date, points] : raw_days)
            points = correlation::regime_correct(points, vol_by_day, fm.breakpoint);
    }

    // 4. Fisher-Z panel in raw coordinates.
    marketdata::SurfacePanel est_panel, full_panel;
    for (const auto& [date, points] : raw_days) {
        std::vector<marketdata::SurfacePoint> sp;
        for (const auto& p : points) {
            if (std::abs(p.rho) >= 0.9999) continue;
            sp.push_back({p.kappa, p.tau, correlation::fisher_z(p.rho)});
        }
        if (sp.empty()) continue;
        full_panel.days.emplace_back(date, sp);
        if (date <= config.est_end) est_panel.days.emplace_back(date, std::move(sp));
    }
    if (est_panel.days.size() < 30)
        throw std::runtime_error("fit: too few estimation days");

    // 5. ECDF transform from the estimation window; DSFM fit.
    auto [transformed, ecdf] = marketdata::ecdf_transform(est_panel);
    fm.ecdf = std::move(ecdf);
    const dsfm::PanelData panel = dsfm::to_panel_data(transformed);
    const dsfm::Grid2D grid = dsfm::Grid2D::regular(config.grid1, config.grid2);
    dsfm::Bandwidth h = config.h;
    if (config.auto_bandwidth) {
        const auto sel = dsfm::select_bandwidth(panel, grid, dsfm::default_bandwidth_candidates(),
                                                config.l_max, dsfm::default_h_star(panel));
        h = sel.best;
    }
    fm.model = dsfm::fit_dsfm(panel, grid, h, h, config.l_max, config.variance_threshold);
    const int n_factors = static_cast<int>(fm.model.basis.cols());

    // 6. Score every day (estimation and out-of-sample) against the fitted basis.
    fm.est_rows = 0;
    std::vector<Eigen::VectorXd> score_rows;
    for (const auto& [date, points] : full_panel.days) {
        dsfm::DayObs day;
        day.date = date;
        for (const auto& p : points) {
            day.x1.push_back(fm.ecdf.forward_kappa(p.kappa));
            day.x2.push_back(fm.ecdf.forward_tau(p.tau));
            day.y.push_back(p.value);
        }
        auto z = dsfm::score_day(day, fm.model.grid, fm.model.m0, fm.model.basis);
        if (!z) {
            if (score_rows.empty()) continue;
            z = score_rows.back();
        }
        score_rows.push_back(*z);
        fm.all_dates.push_back(date);
        if (date <= config.est_end) ++fm.est_rows;
    }
    fm.all_scores.resize(static_cast<Eigen::Index>(score_rows.size()), n_factors);
    for (std::size_t r = 0; r < score_rows.size(); ++r)
        fm.all_scores.row(static_cast<Eigen::Index>(r)) = score_rows[r].transpose();

    // 7. Stationarity per factor; first-difference unit roots.
    const Eigen::MatrixXd est_scores = fm.all_scores.topRows(fm.est_rows);
    fm.diff_flags.assign(static_cast<std::size_t>(n_factors), 0);
    for (int l = 0; l < n_factors; ++l) {
        const auto report = timeseries::adf_test(est_scores.col(l));
        fm.adf_reports.push_back(report);
        if (!report.reject_at_5pct) fm.diff_flags[static_cast<std::size_t>(l)] = 1;
    }

    // 8. VAR order selection and fit on the (possibly differenced) factors.
    const Eigen::MatrixXd z = transform_scores(est_scores, fm.diff_flags);
    fm.lag_table = timeseries::select_lag_order(z, 4);
    int p = config.var_p;
    if (p == 0)
        for (const auto& row : fm.lag_table)
            if (row.aic_best) p = row.p;
    fm.dynamics = timeseries::fit_var(z, p);
    fm.portmanteau = timeseries::portmanteau_test(fm.dynamics.residuals, p, 10);
    return fm;
}

void save_model(const std::filesystem::path& path, const FittedModel& fm) {
    json j;
    j["grid"] = {fm.model.grid.nu, fm.model.grid.nv};
    j["m0"] = vec_to_json(fm.model.m0);
    j["basis"] = mat_to_json(fm.model.basis);
    j["eigenvalues"] = vec_to_json(fm.model.eigenvalues);
    j["explained_variance"] = fm.model.explained_variance;
    j["h_mu"] = {fm.model.h_mu.h1, fm.model.h_mu.h2};
    j["h_phi"] = {fm.model.h_phi.h1, fm.model.h_phi.h2};
    j["ecdf_kappa"] = fm.ecdf.kappa_knots();
    j["ecdf_tau"] = fm.ecdf.tau_knots();
    json dates = json::array();
    for (const auto& d : fm.all_dates) dates.push_back(d.to_string());
    j["dates"] = std::move(dates);
    j["scores"] = mat_to_json(fm.all_scores);
    j["est_rows"] = fm.est_rows;
    j["diff_flags"] = fm.diff_flags;
    json dyn;
    dyn["p"] = fm.dynamics.p;
    dyn["intercept"] = vec_to_json(fm.dynamics.intercept);
    json coeffs = json::array();
    for (const auto& a : fm.dynamics.coeffs) coeffs.push_back(mat_to_json(a));
    dyn["coeffs"] = std::move(coeffs);
    dyn["residual_cov"] = mat_to_json(fm.dynamics.residual_cov);
    dyn["sample_start"] = fm.dynamics.sample_start;
    dyn["sample_end"] = fm.dynamics.sample_end;
    j["dynamics"] = std::move(dyn);
    j["regime_applied"] = fm.regime_applied;
    if (fm.regime_applied)
        j["breakpoint"] = {{"threshold", fm.breakpoint.threshold},
                           {"slope_low", fm.breakpoint.slope_low},
                           {"slope_high", fm.breakpoint.slope_high},
                           {"intercept_low", fm.breakpoint.intercept_low},
                           {"intercept_high", fm.breakpoint.intercept_high},
                           {"sse", fm.breakpoint.sse}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open " + path.string());
    out << j.dump(2) << '\n';
}

FittedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open " + path.string());
    json j;
    in >> j;
    FittedModel fm;
    fm.model.grid = dsfm::Grid2D::regular(j.at("grid").at(0).get<int>(),
                                          j.at("grid").at(1).get<int>());
    fm.model.m0 = vec_from_json(j.at("m0"));
    fm.model.basis = mat_from_json(j.at("basis"));
    fm.model.eigenvalues = vec_from_json(j.at("eigenvalues"));
    fm.model.explained_variance = j.at("explained_variance").get<double>();
    fm.model.h_mu = {j.at("h_mu").at(0).get<double>(), j.at("h_mu").at(1).get<double>()};
    fm.model.h_phi = {j.at("h_phi").at(0).get<double>(), j.at("h_phi").at(1).get<double>()};
    fm.ecdf = marketdata::EcdfMap(j.at("ecdf_kappa").get<std::vector<double>>(),
                                  j.at("ecdf_tau").get<std::vector<double>>());
    for (const auto& d : j.at("dates")) fm.all_dates.push_back(Date::parse(d.get<std::string>()));
    fm.all_scores = mat_from_json(j.at("scores"));
    fm.est_rows = j.at("est_rows").get<int>();
    fm.diff_flags = j.at("diff_flags").get<std::vector<std::uint8_t>>();
    const json& dyn = j.at("dynamics");
    fm.dynamics.p = dyn.at("p").get<int>();
    fm.dynamics.intercept = vec_from_json(dyn.at("intercept"));
    for (const auto& a : dyn.at("coeffs")) fm.dynamics.coeffs.push_back(mat_from_json(a));
    fm.dynamics.residual_cov = mat_from_json(dyn.at("residual_cov"));
    fm.dynamics.sample_start = dyn.at("sample_start").get<int>();
    fm.dynamics.sample_end = dyn.at("sample_end").get<int>();
    fm.regime_applied = j.at("regime_applied").get<bool>();
    if (fm.regime_applied) {
        const json& bp = j.at("breakpoint");
        fm.breakpoint.threshold = bp.at("threshold").get<double>();
        fm.breakpoint.slope_low = bp.at("slope_low").get<double>();
        fm.breakpoint.slope_high = bp.at("slope_high").get<double>();
        fm.breakpoint.intercept_low = bp.at("intercept_low").get<double>();
        fm.breakpoint.intercept_high = bp.at("intercept_high").get<double>();
        fm.breakpoint.sse = bp.at("sse").get<double>();
    }
    // Fields not needed downstream (per-day fit diagnostics) stay default.
    fm.model.scores = fm.all_scores.topRows(fm.est_rows);
    for (int r = 0; r < fm.est_rows; ++r)
        fm.model.dates.push_back(fm.all_dates[static_cast<std::size_t>(r)]);
    return fm;
}

double forecast_rho(const FittedModel& fm, std::size_t date_index, int horizon_days) {
    if (date_index >= fm.all_dates.size())
        throw std::invalid_argument("forecast_rho: date index out of range");
    if (horizon_days < 1) throw std::invalid_argument("forecast_rho: horizon must be >= 1");
    const bool any_diff = std::any_of(fm.diff_flags.begin(), fm.diff_flags.end(),
                                      [](std::uint8_t f) { return f != 0; });
    const Eigen::Index t = static_cast<Eigen::Index>(date_index) + 1;
    if (t < (any_diff ? 2 : 1) + fm.dynamics.p)
        throw std::invalid_argument("forecast_rho: insufficient history");

    const Eigen::MatrixXd history = transform_scores(fm.all_scores.topRows(t), fm.diff_flags);
    const auto path = timeseries::forecast_var(fm.dynamics, history, horizon_days);

    const Eigen::Index n_factors = fm.all_scores.cols();
    Eigen::VectorXd level(n_factors);
    for (Eigen::Index l = 0; l < n_factors; ++l) {
        if (fm.diff_flags[static_cast<std::size_t>(l)]) {
            double acc = fm.all_scores(t - 1, l);
            for (const auto& step : path) acc += step(l);
            level(l) = acc;
        } else {
            level(l) = path.back()(l);
        }
    }
    const double kappa = 1.0;
    const double tau = fm.ecdf.tau_knots().front();
    return dsfm::evaluate_surface(fm.model, level, kappa, tau, fm.ecdf);
}

strategy::BacktestLedger backtest_tenor(
    const RunConfig& config, const FittedModel& fm,
    const std::vector<marketdata::OptionTrade>& trades,
    const std::map<std::int64_t, marketdata::MarketSnapshot>& snaps, double tenor,
    bool oracle_forecast) {
    const int window = static_cast<int>(std::llround(252.0 * tenor));

    // Spot histories indexed by snapshot order.
    std::vector<std::int64_t> snap_dates;
    for (const auto& [serial, snap] : snaps) snap_dates.push_back(serial);
    std::map<std::int64_t, std::size_t> snap_index;
    for (std::size_t i = 0; i < snap_dates.size(); ++i) snap_index[snap_dates[i]] = i;
    std::map<std::string, std::vector<double>> spot_series;
    for (const auto& [serial, snap] : snaps)
        for (const auto& [ticker, spot] : snap.spot_by_ticker)
            spot_series[ticker].push_back(spot);

    // Option chains keyed by (date, underlying, expiry).
    std::map<std::int64_t,
             std::map<std::string, std::map<std::int64_t, std::vector<vol::ChainQuote>>>>
        chains;
    for (const auto& t : trades) {
        if (t.trade_date < config.bt_start || t.trade_date > config.bt_end) continue;
        chains[t.trade_date.serial()][t.underlying][t.expiry_date.serial()].push_back(
            {t.strike, t.price, t.right});
    }

    std::vector<strategy::DailyQuantities> panel;
    std::map<std::int64_t, double> realized_rho;  // oracle forecasts
    for (const auto& [serial, by_ticker] : chains) {
        const Date date{serial};
        const auto snap_it = snaps.find(serial);
        if (snap_it == snaps.end()) continue;
        const auto& snap = snap_it->second;
        const auto idx_chain_it = by_ticker.find(config.index_ticker);
        if (idx_chain_it == by_ticker.end()) continue;

        // Expiry closest to the requested tenor.
        std::int64_t expiry = -1;
        double best = 1e18, tau = 0;
        for (const auto& [exp_serial, chain] : idx_chain_it->second) {
            const double t_exp = year_fraction(date, Date{exp_serial});
            if (std::abs(t_exp - tenor) < best) {
                best = std::abs(t_exp - tenor);
                expiry = exp_serial;
                tau = t_exp;
            }
        }
        if (expiry < 0 || best > 0.55 * tenor) continue;

        const auto mfiv_for = [&](const std::string& ticker) -> std::optional<double> {
            const auto t_it = by_ticker.find(ticker);
            if (t_it == by_ticker.end()) return std::nullopt;
            const auto c_it = t_it->second.find(expiry);
            if (c_it == t_it->second.end()) return std::nullopt;
            const double spot = snap.spot_by_ticker.at(ticker);
            const double rate = marketdata::interpolate_rate(snap.rate_curve, tau);
            std::vector<vol::ChainQuote> chain = c_it->second;
            std::erase_if(chain, [&](const vol::ChainQuote& q) {
                return q.right == vol::Right::put ? q.strike >= spot : q.strike < spot;
            });
            std::sort(chain.begin(), chain.end(),
                      [](const auto& a, const auto& b) { return a.strike < b.strike; });
            if (chain.size() < 3) return std::nullopt;
            return vol::mfiv(chain, spot, rate, tau, date).value;
        };

        std::vector<std::string> order;
        for (const auto& [ticker, weight] : snap.weights) order.push_back(ticker);
        strategy::DailyQuantities dq;
        dq.open_date = date;
        dq.weights.resize(static_cast<Eigen::Index>(order.size()));
        dq.implied_constituent_vars.resize(static_cast<Eigen::Index>(order.size()));
        const auto idx_var = mfiv_for(config.index_ticker);
        if (!idx_var) continue;
        dq.implied_index_var = *idx_var;
        bool complete = true;
        for (std::size_t i = 0; i < order.size(); ++i) {
            dq.weights(static_cast<Eigen::Index>(i)) = snap.weights.at(order[i]);
            const auto v = mfiv_for(order[i]);
            if (!v) {
                complete = false;
                break;
            }
            dq.implied_constituent_vars(static_cast<Eigen::Index>(i)) = *v;
        }
        if (!complete) continue;

        // Realized variances over [date, date + window].
        const std::size_t start = snap_index.at(serial);
        if (start + static_cast<std::size_t>(window) < snap_dates.size()) {
            const double rtau = window / 252.0;
            Eigen::VectorXd rv(static_cast<Eigen::Index>(order.size()));
            bool ok = true;
            for (std::size_t i = 0; i < order.size() && ok; ++i) {
                const auto& path = spot_series.at(order[i]);
                if (path.size() != snap_dates.size()) ok = false;
                else rv(static_cast<Eigen::Index>(i)) =
                    vol::realized_variance(path, start, rtau).value;
            }
            const auto& ipath = spot_series.at(config.index_ticker);
            if (ok && ipath.size() == snap_dates.size()) {
                dq.realized_index_var = vol::realized_variance(ipath, start, rtau).value;
                dq.realized_constituent_vars = rv;
                realized_rho[serial] = correlation::equicorrelation(
                    *dq.realized_index_var, rv.cwiseSqrt(), dq.weights);
            }
        }
        panel.push_back(std::move(dq));
    }

    const int horizon = std::max(1, static_cast<int>(std::llround(252.0 * config.dt)));
    strategy::Forecaster forecaster = [&](const Date& date) -> std::optional<double> {
        if (oracle_forecast) {
            const auto it = realized_rho.find(date.serial());
            if (it == realized_rho.end()) return std::nullopt;
            return it->second;
        }
        const auto it = std::lower_bound(fm.all_dates.begin(), fm.all_dates.end(), date);
        if (it == fm.all_dates.end() || !(*it == date)) return std::nullopt;
        try {
            return forecast_rho(fm, static_cast<std::size_t>(it - fm.all_dates.begin()), horizon);
        } catch (const std::exception&) {
            return std::nullopt;
        }
    };
    return strategy::run_backtest(panel, forecaster, tenor, config.dt);
}

std::string explained_variance_table(const FittedModel& fm) {
    std::ostringstream os;
    char buf[128];
    os << "factor   eigenvalue        share   cumulative\n";
    const double total = fm.model.eigenvalues.sum() / fm.model.explained_variance;
    double cum = 0;
    for (Eigen::Index l = 0; l < fm.model.eigenvalues.size(); ++l) {
        const double share = total > 0 ? fm.model.eigenvalues(l) / total : 0;
        cum += share;
        std::snprintf(buf, sizeof(buf), "%-6lld %12.6f %12.6f %12.6f\n",
                      static_cast<long long>(l + 1), fm.model.eigenvalues(l), share, cum);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "explained variance: %.6f\n", fm.model.explained_variance);
    os << buf;
    return os.str();
}

std::string adf_table(const FittedModel& fm) {
    std::ostringstream os;
    char buf[128];
    os << "factor   statistic   lags   reject_5pct\n";
    for (std::size_t l = 0; l < fm.adf_reports.size(); ++l) {
        const auto& r = fm.adf_reports[l];
        std::snprintf(buf, sizeof(buf), "Z%-6zu %10.4f %6d   %s\n", l + 1, r.statistic,
                      r.lags_used, r.reject_at_5pct ? "yes" : "no");
        os << buf;
    }
    return os.str();
}

std::string lag_order_table(const FittedModel& fm) {
    std::ostringstream os;
    char buf[160];
    os << "p        AIC         HQIC         SBIC\n";
    for (const auto& row : fm.lag_table) {
        std::snprintf(buf, sizeof(buf), "%-4d %10.4f%s %10.4f%s %10.4f%s\n", row.p, row.aic,
                      row.aic_best ? "*" : " ", row.hqic, row.hqic_best ? "*" : " ", row.sbic,
                      row.sbic_best ? "*" : " ");
        os << buf;
    }
    return os.str();
}

std::string var_table(const FittedModel& fm) {
    std::ostringstream os;
    char buf[64];
    const auto& dyn = fm.dynamics;
    const Eigen::Index dim = dyn.intercept.size();
    os << "VAR(" << dyn.p << ") coefficients\n";
    os << "intercept:";
    for (Eigen::Index i = 0; i < dim; ++i) {
        std::snprintf(buf, sizeof(buf), " %10.6f", dyn.intercept(i));
        os << buf;
    }
    os << '\n';
    for (std::size_t lag = 0; lag < dyn.coeffs.size(); ++lag) {
        os << "A" << lag + 1 << ":\n";
        for (Eigen::Index r = 0; r < dim; ++r) {
            for (Eigen::Index c = 0; c < dim; ++c) {
                std::snprintf(buf, sizeof(buf), " %10.6f", dyn.coeffs[lag](r, c));
                os << buf;
            }
            os << '\n';
        }
    }
    os << "portmanteau Q: ";
    std::snprintf(buf, sizeof(buf), "%.4f", fm.portmanteau.statistic);
    os << buf << (fm.portmanteau.reject_at_5pct ? " (reject)" : " (no rejection)") << '\n';
    return os.str();
}

std::string hedge_error_table(
    const std::vector<std::pair<double, strategy::BacktestLedger>>& ledgers) {
    std::ostringstream os;
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%6s %6s %10s %10s %10s %10s %10s %10s %10s\n", "tenor",
                  "n", "min", "max", "mean", "median", "stdd", "skew", "kurt");
    os << buf;
    for (const auto& [tenor, ledger] : ledgers) {
        std::vector<double> err;
        for (const auto& row : ledger.rows)
            if (row.hedge_error_valid) err.push_back(row.hedge_error);
        if (err.size() < 2) {
            std::snprintf(buf, sizeof(buf), "%6.3f %6zu %10s %10s %10s %10s %10s %10s %10s\n",
                          tenor, err.size(), "-", "-", "-", "-", "-", "-", "-");
            os << buf;
            continue;
        }
        const auto m = stats::moments(err);
        std::snprintf(buf, sizeof(buf),
                      "%6.3f %6zu %10.4f %10.4f %10.4f %10.4f %10.4f %10.4f %10.4f\n", tenor,
                      m.n, m.min, m.max, m.mean, m.median, m.stddev, m.skewness, m.kurtosis);
        os << buf;
    }
    return os.str();
}

std::string strategy_table(
    const std::vector<std::pair<double, strategy::BacktestLedger>>& ledgers) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-16s %6s %12s %12s %12s %12s\n", "strategy", "tenor",
                  "min", "max", "mean", "stdd");
    os << buf;
    const auto emit = [&](const char* name, double tenor, const std::vector<double>& xs) {
        if (xs.size() < 2) {
            std::snprintf(buf, sizeof(buf), "%-16s %6.3f %12s %12s %12s %12s\n", name, tenor,
                          "-", "-", "-", "-");
            os << buf;
            return;
        }
        const auto m = stats::moments(xs);
        std::snprintf(buf, sizeof(buf), "%-16s %6.3f %12.6f %12.6f %12.6f %12.6f\n", name, tenor,
                      m.min, m.max, m.mean, m.stddev);
        os << buf;
    };
    for (const char* name : {"no_hedge", "naive_hedge", "advanced_hedge"}) {
        for (const auto& [tenor, ledger] : ledgers) {
            std::vector<double> xs;
            for (const auto& row : ledger.rows) {
                if (std::string(name) == "no_hedge") xs.push_back(row.D);
                else if (std::string(name) == "naive_hedge") xs.push_back(row.D - row.D_h);
                else xs.push_back(row.D_adv);
            }
            emit(name, tenor, xs);
        }
    }
    return os.str();
}

}  // namespace corrdyn::pipeline

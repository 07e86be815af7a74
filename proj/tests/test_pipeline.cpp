#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "corrdyn/pipeline.hpp"

using namespace corrdyn;
using namespace corrdyn::pipeline;

namespace {

namespace fs = std::filesystem;

RunConfig base_config() {
    RunConfig cfg;
    cfg.index_ticker = "IDX";
    cfg.est_start = Date(2009, 8, 3);
    cfg.est_end = Date(2009, 11, 20);
    cfg.bt_start = Date(2009, 11, 23);
    cfg.bt_end = Date(2010, 6, 30);
    cfg.grid1 = 8;
    cfg.grid2 = 8;
    cfg.l_max = 3;
    cfg.variance_threshold = 0.95;
    cfg.h = {0.12, 0.17};
    cfg.var_p = 2;
    cfg.tenors = {21.0 / 252.0, 0.25};
    cfg.seed = 7;
    cfg.synth.seed = 7;
    cfg.synth.n_days = 120;
    return cfg;
}

struct Fixture {
    RunConfig cfg = base_config();
    synth::SynthOutput market;
    FittedModel fm;

    Fixture() {
        market = synth::generate_market(cfg.synth);
        fm = fit_pipeline(cfg, market.trades, market.snapshots);
    }
};

// fit once, reuse across test cases
const Fixture& fixture() {
    static const Fixture f;
    return f;
}

}  // namespace

TEST_CASE("config validation") {
    RunConfig cfg = base_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.bt_start = cfg.est_end;  // backtest must start after estimation
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = base_config();
    cfg.tenors = {2.0};  // outside [10/252, 1]
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = base_config();
    cfg.grid1 = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("config JSON parsing") {
    const fs::path dir = fs::temp_directory_path() / "corrdyn_pipeline_cfg";
    fs::create_directories(dir);
    const fs::path path = dir / "cfg.json";
    {
        std::ofstream out(path);
        out << R"({
            "trades": "t.csv", "snapshots": "s.csv", "rates": "r.csv",
            "dividends": "d.csv", "output_dir": ".", "index_ticker": "IDX",
            "est_start": "2009-08-03", "est_end": "2009-11-20",
            "bt_start": "2009-11-23", "bt_end": "2010-06-30",
            "grid": [8, 8], "l_max": 3, "variance_threshold": 0.95,
            "bandwidth": [0.12, 0.17], "var_p": 2,
            "tenors": [0.25], "regime_correction": false, "seed": 7,
            "synth": {"seed": 7, "n_days": 120}
        })";
    }
    const RunConfig cfg = RunConfig::from_json_file(path);
    CHECK(cfg.index_ticker == "IDX");
    CHECK(cfg.est_start == Date(2009, 8, 3));
    CHECK(cfg.bt_end == Date(2010, 6, 30));
    CHECK(cfg.grid1 == 8);
    CHECK(cfg.h.h1 == doctest::Approx(0.12));
    CHECK(cfg.var_p == 2);
    REQUIRE(cfg.tenors.size() == 1);
    CHECK(cfg.tenors[0] == doctest::Approx(0.25));
    CHECK(cfg.synth.n_days == 120);
    CHECK_THROWS(RunConfig::from_json_file(dir / "missing.json"));
    fs::remove_all(dir);
}

TEST_CASE("fit pipeline produces a usable factor model") {
    const auto& f = fixture();
    const FittedModel& fm = f.fm;
    CHECK(fm.model.explained_variance >= 0.9);
    CHECK(fm.model.scores.cols() >= 1);
    CHECK(fm.est_rows > 50);
    CHECK(fm.all_dates.size() == static_cast<std::size_t>(fm.all_scores.rows()));
    CHECK(fm.all_scores.rows() > fm.est_rows);  // out-of-sample days scored too
    CHECK(fm.adf_reports.size() == static_cast<std::size_t>(fm.model.scores.cols()));
    CHECK(fm.diff_flags.size() == static_cast<std::size_t>(fm.model.scores.cols()));
    CHECK(!fm.lag_table.empty());
    CHECK(fm.dynamics.p == 2);
    // estimation-window dates strictly increasing and inside the window
    for (std::size_t i = 0; i < fm.all_dates.size(); ++i) {
        if (i > 0) CHECK(fm.all_dates[i] > fm.all_dates[i - 1]);
    }
    CHECK(fm.all_dates.front() >= f.cfg.est_start);
    CHECK(fm.all_dates[static_cast<std::size_t>(fm.est_rows - 1)] <= f.cfg.est_end);
}

TEST_CASE("model JSON round trip is exact and deterministic") {
    const auto& f = fixture();
    const fs::path dir = fs::temp_directory_path() / "corrdyn_pipeline_model";
    fs::create_directories(dir);
    const fs::path a = dir / "a.json", b = dir / "b.json";
    save_model(a, f.fm);
    const FittedModel back = load_model(a);
    save_model(b, back);
    std::ifstream ia(a), ib(b);
    std::stringstream sa, sb;
    sa << ia.rdbuf();
    sb << ib.rdbuf();
    CHECK(sa.str() == sb.str());  // byte-identical after a round trip
    CHECK(back.est_rows == f.fm.est_rows);
    CHECK((back.all_scores - f.fm.all_scores).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.model.basis - f.fm.model.basis).cwiseAbs().maxCoeff() == 0.0);
    // forecasts agree exactly through the round trip
    const std::size_t idx = static_cast<std::size_t>(f.fm.est_rows) - 1;
    CHECK(forecast_rho(back, idx, 21) == forecast_rho(f.fm, idx, 21));
    fs::remove_all(dir);
}

TEST_CASE("fitting twice is deterministic") {
    const auto& f = fixture();
    const FittedModel again = fit_pipeline(f.cfg, f.market.trades, f.market.snapshots);
    CHECK((again.all_scores - f.fm.all_scores).cwiseAbs().maxCoeff() == 0.0);
    CHECK((again.model.basis - f.fm.model.basis).cwiseAbs().maxCoeff() == 0.0);
    CHECK(again.dynamics.intercept == f.fm.dynamics.intercept);
}

TEST_CASE("forecast_rho returns a valid correlation") {
    const auto& f = fixture();
    for (int h : {1, 21, 63}) {
        const double rho = forecast_rho(f.fm, static_cast<std::size_t>(f.fm.est_rows) - 1, h);
        CHECK(rho > 0.0);
        CHECK(rho < 1.0);
    }
}

TEST_CASE("backtest produces a populated, dated ledger") {
    const auto& f = fixture();
    const auto ledger =
        backtest_tenor(f.cfg, f.fm, f.market.trades, f.market.snapshots, 21.0 / 252.0, false);
    CHECK(ledger.tenor == doctest::Approx(21.0 / 252.0));
    REQUIRE(!ledger.rows.empty());
    for (std::size_t i = 0; i < ledger.rows.size(); ++i) {
        const auto& row = ledger.rows[i];
        if (i > 0) CHECK(row.open_date > ledger.rows[i - 1].open_date);
        CHECK(row.open_date >= f.cfg.bt_start);
        CHECK(row.open_date <= f.cfg.bt_end);
        CHECK(row.mfic > 0.0);
        CHECK(row.mfic < 1.0);
        CHECK(row.realized_corr > 0.0);
        CHECK(row.realized_corr < 1.0);
        CHECK(row.forecast_corr > 0.0);
        CHECK(row.forecast_corr < 1.0);
    }
}

TEST_CASE("oracle-forecast backtest forecasts the realized correlation") {
    const auto& f = fixture();
    const auto ledger =
        backtest_tenor(f.cfg, f.fm, f.market.trades, f.market.snapshots, 21.0 / 252.0, true);
    REQUIRE(!ledger.rows.empty());
    for (const auto& row : ledger.rows) {
        CHECK(row.forecast_corr == doctest::Approx(row.realized_corr).epsilon(1e-12));
        // with a perfect forecast the advanced strategy hedges exactly when
        // the realized correlation reaches the implied strike
        if (row.realized_corr >= row.mfic)
            CHECK(row.D_adv == doctest::Approx(row.D - row.D_h).epsilon(1e-10));
        else
            CHECK(row.D_adv == doctest::Approx(row.D).epsilon(1e-10));
    }
}

TEST_CASE("report tables have the documented layout") {
    const auto& f = fixture();
    CHECK(explained_variance_table(f.fm).find("explained") != std::string::npos);
    const std::string adf = adf_table(f.fm);
    CHECK(adf.find("statistic") != std::string::npos);
    const std::string lags = lag_order_table(f.fm);
    CHECK(lags.find("AIC") != std::string::npos);
    CHECK(lags.find("*") != std::string::npos);  // best-criterion marker
    CHECK(var_table(f.fm).find("A1") != std::string::npos);

    std::vector<std::pair<double, strategy::BacktestLedger>> ledgers;
    for (double tenor : f.cfg.tenors)
        ledgers.emplace_back(tenor, backtest_tenor(f.cfg, f.fm, f.market.trades,
                                                   f.market.snapshots, tenor, false));
    const std::string hedge = hedge_error_table(ledgers);
    for (const char* col : {"tenor", "min", "max", "mean", "median", "stdd", "skew", "kurt"})
        CHECK(hedge.find(col) != std::string::npos);
    const std::string strat = strategy_table(ledgers);
    for (const char* row : {"no_hedge", "naive_hedge", "advanced_hedge"})
        CHECK(strat.find(row) != std::string::npos);
}

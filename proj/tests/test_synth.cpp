#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "corrdyn/correlation.hpp"
#include "corrdyn/synth.hpp"
#include "corrdyn/vol.hpp"

using namespace corrdyn;
using namespace corrdyn::synth;

namespace {

SynthConfig small_config(std::uint64_t seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.n_assets = 3;
    cfg.n_days = 30;
    cfg.obs_per_day = 40;
    return cfg;
}

}  // namespace

TEST_CASE("generator is deterministic in the seed") {
    const SynthOutput a = generate_market(small_config(11));
    const SynthOutput b = generate_market(small_config(11));
    REQUIRE(a.trades.size() == b.trades.size());
    for (std::size_t i = 0; i < a.trades.size(); ++i) {
        CHECK(a.trades[i].price == b.trades[i].price);
        CHECK(a.trades[i].strike == b.trades[i].strike);
    }
    CHECK((a.truth.scores - b.truth.scores).cwiseAbs().maxCoeff() == 0.0);

    const SynthOutput c = generate_market(small_config(12));
    bool differs = c.trades.size() != a.trades.size();
    for (std::size_t i = 0; !differs && i < a.trades.size(); ++i)
        differs = a.trades[i].price != c.trades[i].price;
    CHECK(differs);
}

TEST_CASE("generated market has the documented shape") {
    const SynthConfig cfg = small_config(21);
    const SynthOutput out = generate_market(cfg);
    CHECK(out.truth.dates.size() == 30);
    CHECK(out.truth.scores.rows() == 30);
    CHECK(out.truth.scores.cols() == cfg.true_factor_count);
    REQUIRE(out.truth.tenors.size() == 5);
    CHECK(out.truth.tenors.front() == doctest::Approx(21.0 / 252.0));
    CHECK(out.truth.tenors.back() == doctest::Approx(1.0));
    CHECK(out.truth.rho_nodes.size() == 30);
    // observation counts add up to the configured total
    for (const auto& day : out.truth.rho_nodes) {
        CHECK(day.size() == 40);
        for (const auto& p : day) {
            CHECK(p.rho > 0.0);
            CHECK(p.rho < 0.9999);
            CHECK(p.kappa >= 0.8 - 1e-12);
            CHECK(p.kappa <= 1.2 + 1e-12);
        }
    }
    // linearly increasing weights w_i = 2 (i+1) / (N (N+1))
    REQUIRE(out.basket.weights.size() == 3);
    for (int i = 0; i < 3; ++i)
        CHECK(out.basket.weights(i) == doctest::Approx(2.0 * (i + 1) / (3.0 * 4.0)));
    // snapshots span the option sample plus a year of realized-window history
    CHECK(out.snapshots.size() >= 30 + 252);
    // realized variances: one matrix per tenor, index plus constituents
    REQUIRE(out.truth.realized_vars.size() == 5);
    for (const auto& rv : out.truth.realized_vars) {
        CHECK(rv.rows() == 30);
        CHECK(rv.cols() == 4);
        CHECK(rv.minCoeff() > 0.0);
    }
    CHECK(out.truth.atm_vol.size() == 30);
}

TEST_CASE("inverting generated prices recovers the generated correlation") {
    const SynthConfig cfg = small_config(31);
    const SynthOutput out = generate_market(cfg);
    // the generator emits, per surface node, one index quote followed by one
    // quote per constituent, all at the same forward moneyness
    const auto& first_day = out.snapshots.at(out.truth.dates[0].serial());
    const correlation::CorrelationPoint& node = out.truth.rho_nodes[0][0];
    REQUIRE(out.trades.size() >= 4);

    Eigen::VectorXd ivs(3);
    double index_iv = 0.0;
    for (int q = 0; q < 4; ++q) {
        const auto& t = out.trades[static_cast<std::size_t>(q)];
        CHECK(t.trade_date == out.truth.dates[0]);
        const double spot = first_day.spot_by_ticker.at(t.underlying);
        const double kappa = t.strike / (spot * std::exp(cfg.rate * node.tau));
        CHECK(kappa == doctest::Approx(node.kappa).epsilon(1e-12));
        vol::PricingInputs in;
        in.spot = spot;
        in.strike = t.strike;
        in.rate = cfg.rate;
        in.tau = node.tau;
        in.right = t.right;
        const double iv = vol::implied_vol(t.price, in, vol::Style::european);
        if (t.underlying == out.index_ticker)
            index_iv = iv;
        else
            ivs(q - 1) = iv;
    }
    const double rho =
        correlation::equicorrelation(index_iv * index_iv, ivs, out.basket.weights);
    // the 1e-8 price tolerance of the bisection maps to ~1e-4 in rho at this
    // deep-OTM node (small vega amplified by the cross-term division)
    CHECK(rho == doctest::Approx(node.rho).epsilon(1e-3));
}

TEST_CASE("regime mode ties the day level to the vol driver") {
    SynthConfig cfg = small_config(41);
    cfg.regime_enabled = true;
    const SynthOutput out = generate_market(cfg);
    CHECK(out.truth.regime_enabled);
    CHECK(out.truth.regime.threshold == doctest::Approx(21.0));
    CHECK(out.truth.regime.slope_low == doctest::Approx(0.0328));
    CHECK(out.truth.regime.slope_high == doctest::Approx(0.0091));
    const auto& rp = out.truth.regime;
    for (std::size_t t = 0; t < out.truth.dates.size(); ++t) {
        const double driver = std::clamp(out.truth.atm_vol[t], 17.0, 30.0);
        const double target = driver > rp.threshold
                                  ? rp.slope_high * driver
                                  : rp.threshold * (rp.slope_high - rp.slope_low) +
                                        rp.slope_low * driver;
        // factor wiggles are damped to 10%, so node correlations cluster
        // around the piecewise-linear day level
        double mean = 0;
        for (const auto& p : out.truth.rho_nodes[t]) mean += p.rho;
        mean /= static_cast<double>(out.truth.rho_nodes[t].size());
        CHECK(std::fabs(mean - target) < 0.05);
    }
}

TEST_CASE("config validation") {
    SynthConfig cfg = small_config(1);
    cfg.n_assets = 1;
    CHECK_THROWS(cfg.validate());
    cfg = small_config(1);
    cfg.n_days = 10;
    CHECK_THROWS(cfg.validate());
    cfg = small_config(1);
    cfg.obs_per_day = 3;
    CHECK_THROWS(cfg.validate());
    CHECK_NOTHROW(small_config(1).validate());
}

TEST_CASE("write_market emits readable CSV files") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "corrdyn_synth_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const SynthOutput out = generate_market(small_config(51));
    write_market(dir, out);
    for (const char* name :
         {"trades.csv", "snapshots.csv", "rates.csv", "dividends.csv", "ground_truth.json"}) {
        CHECK(fs::exists(dir / name));
    }
    std::ifstream trades_in(dir / "trades.csv");
    const auto trades = marketdata::parse_trades(trades_in);
    CHECK(trades.size() == out.trades.size());
    std::ifstream s(dir / "snapshots.csv"), r(dir / "rates.csv"), d(dir / "dividends.csv");
    const auto snaps = marketdata::assemble_snapshots(s, r, d);
    CHECK(snaps.size() == out.snapshots.size());
    const auto& snap = snaps.at(out.truth.dates[0].serial());
    CHECK(snap.spot_by_ticker.at(out.index_ticker) ==
          out.snapshots.at(out.truth.dates[0].serial()).spot_by_ticker.at(out.index_ticker));
    fs::remove_all(dir);
}

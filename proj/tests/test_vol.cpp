#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "corrdyn/rng.hpp"
#include "corrdyn/vol.hpp"

using namespace corrdyn;
using namespace corrdyn::vol;

namespace {

PricingInputs make(double S, double K, double r, double tau, double sigma, Right right) {
    PricingInputs in;
    in.spot = S;
    in.strike = K;
    in.rate = r;
    in.tau = tau;
    in.vol = sigma;
    in.right = right;
    return in;
}

}  // namespace

// Reference prices frozen from an independent Black-Scholes / binomial
// implementation.

TEST_CASE("European prices match reference values") {
    CHECK(european_price(make(100, 110, 0.03, 0.5, 0.25, Right::call)) ==
          doctest::Approx(3.8985511831850594).epsilon(1e-12));
    CHECK(european_price(make(100, 110, 0.03, 0.5, 0.25, Right::put)) ==
          doctest::Approx(12.260864539521961).epsilon(1e-12));
    CHECK(european_price(make(100, 90, 0.0, 0.25, 0.2, Right::put)) ==
          doctest::Approx(0.7123808960736788).epsilon(1e-12));
}

TEST_CASE("European put-call parity") {
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        const double S = rng.uniform(50, 150), K = rng.uniform(50, 150);
        const double r = rng.uniform(0.0, 0.08), tau = rng.uniform(0.05, 1.5);
        const double sigma = rng.uniform(0.05, 0.6);
        const double c = european_price(make(S, K, r, tau, sigma, Right::call));
        const double p = european_price(make(S, K, r, tau, sigma, Right::put));
        CHECK(c - p == doctest::Approx(S - K * std::exp(-r * tau)).epsilon(1e-9));
    }
}

TEST_CASE("American binomial matches reference values") {
    CHECK(american_price(make(100, 105, 0.05, 0.5, 0.3, Right::put), 500) ==
          doctest::Approx(10.16101038607011).epsilon(1e-10));
    CHECK(american_price(make(100, 95, 0.05, 0.5, 0.3, Right::call), 500) ==
          doctest::Approx(12.330415867987032).epsilon(1e-10));
    // no dividends: the American call never exercises early, so its binomial
    // value converges to the European one
    CHECK(american_price(make(100, 95, 0.05, 0.5, 0.3, Right::call), 500) ==
          doctest::Approx(12.327916546186017).epsilon(5e-4));
    // American premium over the European put
    const double am = american_price(make(100, 105, 0.05, 0.5, 0.3, Right::put), 500);
    const double eu = european_price(make(100, 105, 0.05, 0.5, 0.3, Right::put));
    CHECK(am > eu);
}

TEST_CASE("American put with escrowed cash dividend") {
    PricingInputs in = make(100, 105, 0.05, 0.5, 0.3, Right::put);
    in.dividends = {{0.25, 2.0}};
    CHECK(american_price(in, 500) == doctest::Approx(11.246081531900163).epsilon(1e-10));
    // a dividend lowers the effective spot, raising the put value
    CHECK(american_price(in, 500) > 10.16101038607011);
}

TEST_CASE("European implied-vol round trip") {
    Rng rng(8);
    for (int i = 0; i < 1000; ++i) {
        // moneyness within +-1.5 total vols of the spot keeps the vega bounded
        // away from zero, so the price tolerance translates into vol accuracy
        const double S = rng.uniform(60, 140);
        const double r = rng.uniform(0.0, 0.06), tau = rng.uniform(0.15, 1.2);
        const double sigma = rng.uniform(0.15, 0.8);
        const double K = S * std::exp(rng.uniform(-1.5, 1.5) * sigma * std::sqrt(tau));
        const Right right = rng.uniform() < 0.5 ? Right::call : Right::put;
        PricingInputs in = make(S, K, r, tau, sigma, right);
        const double price = european_price(in);
        const double got = implied_vol(price, in, Style::european);
        CHECK(std::fabs(got - sigma) < 1e-6);
    }
}

TEST_CASE("American implied-vol round trip") {
    Rng rng(12);
    for (int i = 0; i < 50; ++i) {
        const double S = rng.uniform(80, 120);
        const double r = rng.uniform(0.0, 0.05), tau = rng.uniform(0.15, 1.0);
        const double sigma = rng.uniform(0.15, 0.6);
        const double K = S * std::exp(rng.uniform(-1.2, 1.2) * sigma * std::sqrt(tau));
        const Right right = rng.uniform() < 0.5 ? Right::call : Right::put;
        PricingInputs in = make(S, K, r, tau, sigma, right);
        const double price = american_price(in, 500);
        const double got = implied_vol(price, in, Style::american, 500);
        CHECK(std::fabs(got - sigma) < 1e-4);
    }
}

TEST_CASE("discrete model-free implied variance on a flat-vol chain") {
    const double S = 100, r = 0.008, tau = 0.25, sigma = 0.2;
    auto build = [&](double step) {
        std::vector<ChainQuote> chain;
        for (double k = 0.50; k <= 2.0 + 1e-12; k += step) {
            const double K = S * k;
            ChainQuote q;
            q.strike = K;
            q.right = K < S ? Right::put : Right::call;
            q.price = european_price(make(S, K, r, tau, sigma, q.right));
            chain.push_back(q);
        }
        return chain;
    };
    const double v1 = mfiv(build(0.01), S, r, tau).value;
    const double v2 = mfiv(build(0.005), S, r, tau).value;
    // frozen errors from an independent quadrature of the same chain
    CHECK(v1 - 0.04 == doctest::Approx(1.630223e-4).epsilon(1e-4));
    CHECK(v2 - 0.04 == doctest::Approx(7.278397e-5).epsilon(1e-4));
    CHECK(std::fabs(v1 - 0.04) / 0.04 < 0.02);
    // discretization error roughly halves with the strike spacing
    const double ratio = (v2 - 0.04) / (v1 - 0.04);
    CHECK(ratio > 0.35);
    CHECK(ratio < 0.65);
}

TEST_CASE("realized variance matches reference value") {
    const std::vector<double> prices = {100.0, 101.2, 99.8,  100.5, 102.3, 101.7, 103.0, 102.1,
                                        104.2, 103.5, 105.0, 104.1, 106.3, 105.8, 107.2, 106.0,
                                        108.1, 107.4, 109.0, 108.2, 110.1, 109.3};
    const VarianceEstimate rv = realized_variance(prices, 0, 21.0 / 252.0);
    CHECK(rv.value == doctest::Approx(0.042356543691737622).epsilon(1e-13));
    CHECK(rv.kind == VarianceKind::realized);
    CHECK(rv.window_or_tenor == doctest::Approx(21.0 / 252.0));
}

TEST_CASE("realized variance of a constant price path is zero") {
    const std::vector<double> prices(30, 42.0);
    CHECK(realized_variance(prices, 0, 21.0 / 252.0).value == 0.0);
}

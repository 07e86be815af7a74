#include "corrdyn/vol.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "corrdyn/stats.hpp"

namespace corrdyn::vol {

namespace {

void check_positive(const PricingInputs& in) {
    if (in.tau <= 0.0) throw std::invalid_argument("pricing: tau must be positive");
    if (in.vol <= 0.0) throw std::invalid_argument("pricing: vol must be positive");
    if (in.spot <= 0.0 || in.strike <= 0.0)
        throw std::invalid_argument("pricing: spot and strike must be positive");
}

double intrinsic_bound(const PricingInputs& in, Style style) {
    const double disc_k = in.strike * std::exp(-in.rate * in.tau);
    double spot = in.spot;
    if (style == Style::american) {
        for (const auto& [t, amount] : in.dividends) spot -= amount * std::exp(-in.rate * t);
    }
    if (in.right == Right::call) return std::max(spot - disc_k, 0.0);
    // American puts can be exercised immediately, so intrinsic uses the raw strike.
    const double k = style == Style::american ? in.strike : disc_k;
    return std::max(k - spot, 0.0);
}

}  // namespace

double european_price(const PricingInputs& in) {
    check_positive(in);
    if (!in.dividends.empty())
        throw std::invalid_argument("european_price: dividends not supported");
    const double sqrt_tau = std::sqrt(in.tau);
    const double d1 = (std::log(in.spot / in.strike) + (in.rate + 0.5 * in.vol * in.vol) * in.tau) /
                      (in.vol * sqrt_tau);
    const double d2 = d1 - in.vol * sqrt_tau;
    const double disc_k = in.strike * std::exp(-in.rate * in.tau);
    if (in.right == Right::call)
        return in.spot * stats::normal_cdf(d1) - disc_k * stats::normal_cdf(d2);
    return disc_k * stats::normal_cdf(-d2) - in.spot * stats::normal_cdf(-d1);
}

double american_price(const PricingInputs& in, int steps) {
    check_positive(in);
    if (steps < 2) throw std::invalid_argument("american_price: steps must be >= 2");

    double spot = in.spot;
    for (const auto& [t, amount] : in.dividends) {
        if (t <= 0.0 || t >= in.tau)
            throw std::invalid_argument("american_price: dividend time outside (0, tau)");
        if (amount < 0.0) throw std::invalid_argument("american_price: negative dividend");
        spot -= amount * std::exp(-in.rate * t);
    }
    if (spot <= 0.0) throw std::invalid_argument("american_price: dividend PV >= spot");

    const double dt = in.tau / steps;
    // floor the vol just above the tree's stability boundary sigma = r sqrt(dt)
    // so that tiny vols (e.g. bisection probing its lower bound) stay priceable
    const double vol = std::max(in.vol, (std::fabs(in.rate) + 1e-9) * std::sqrt(dt));
    const double u = std::exp(vol * std::sqrt(dt));
    const double d = 1.0 / u;
    const double disc = std::exp(-in.rate * dt);
    const double p = (std::exp(in.rate * dt) - d) / (u - d);
    if (p <= 0.0 || p >= 1.0)
        throw std::invalid_argument("american_price: unstable tree parameters");

    const double sign = in.right == Right::call ? 1.0 : -1.0;
    const double u2 = u * u;
    std::vector<double> values(steps + 1);
    double s = spot * std::pow(d, steps);
    for (int i = 0; i <= steps; ++i, s *= u2) values[i] = std::max(sign * (s - in.strike), 0.0);
    const double pu = disc * p, pd = disc * (1.0 - p);
    for (int n = steps - 1; n >= 0; --n) {
        s = spot * std::pow(d, n);
        for (int i = 0; i <= n; ++i, s *= u2) {
            const double cont = pd * values[i] + pu * values[i + 1];
            values[i] = std::max(cont, sign * (s - in.strike));
        }
    }
    return values[0];
}

double implied_vol(double market_price, const PricingInputs& inputs, Style style, int steps) {
    if (inputs.tau <= 0.0) throw std::invalid_argument("implied_vol: tau must be positive");
    const double vol_lo = 1e-4, vol_hi = 5.0;
    auto price_at = [&](double sigma) {
        PricingInputs in = inputs;
        in.vol = sigma;
        return style == Style::european ? european_price(in) : american_price(in, steps);
    };

    const double floor = intrinsic_bound(inputs, style);
    const double p_lo = price_at(vol_lo);
    const double p_hi = price_at(vol_hi);
    if (market_price < std::max(floor, p_lo) - 1e-12 || market_price > p_hi + 1e-12)
        throw std::runtime_error("implied_vol: unattainable price " + std::to_string(market_price));

    double lo = vol_lo, hi = vol_hi;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double diff = price_at(mid) - market_price;
        if (std::fabs(diff) < 1e-8) return mid;
        if (diff > 0.0)
            hi = mid;
        else
            lo = mid;
        if (hi - lo < 1e-12) return 0.5 * (lo + hi);
    }
    // Price is monotone in vol but can be flat near intrinsic; report the bracket.
    throw std::runtime_error("implied_vol: no convergence, bracket [" + std::to_string(lo) + ", " +
                             std::to_string(hi) + "]");
}

VarianceEstimate mfiv(const std::vector<ChainQuote>& chain, double spot, double rate, double tau,
                      Date as_of) {
    if (chain.size() < 3) throw std::invalid_argument("mfiv: need at least 3 strikes");
    if (tau <= 0.0) throw std::invalid_argument("mfiv: tau must be positive");
    for (std::size_t i = 1; i < chain.size(); ++i)
        if (chain[i].strike <= chain[i - 1].strike)
            throw std::invalid_argument("mfiv: strikes must be strictly increasing");
    for (const auto& q : chain) {
        const bool otm_side = q.right == Right::put ? q.strike < spot : q.strike >= spot;
        if (!otm_side) throw std::invalid_argument("mfiv: puts must lie below spot, calls at/above");
    }

    double sum = 0.0;
    const std::size_t n = chain.size();
    for (std::size_t i = 0; i < n; ++i) {
        double dk;
        if (i == 0)
            dk = 0.5 * (chain[1].strike - chain[0].strike);
        else if (i == n - 1)
            dk = 0.5 * (chain[n - 1].strike - chain[n - 2].strike);
        else
            dk = 0.5 * (chain[i + 1].strike - chain[i - 1].strike);
        sum += dk * chain[i].price / (chain[i].strike * chain[i].strike);
    }
    VarianceEstimate est;
    est.value = 2.0 * std::exp(rate * tau) / tau * sum;
    est.window_or_tenor = tau;
    est.as_of = as_of;
    est.kind = VarianceKind::model_free_implied;
    return est;
}

VarianceEstimate realized_variance(const std::vector<double>& prices, std::size_t start_index,
                                   double tau, Date as_of) {
    if (tau <= 0.0) throw std::invalid_argument("realized_variance: tau must be positive");
    const std::size_t span = static_cast<std::size_t>(std::llround(252.0 * tau));
    if (span == 0) throw std::invalid_argument("realized_variance: window shorter than one day");
    if (start_index + span >= prices.size())
        throw std::invalid_argument("realized_variance: window exceeds series");
    double sum = 0.0;
    for (std::size_t i = start_index + 1; i <= start_index + span; ++i) {
        if (prices[i] <= 0.0 || prices[i - 1] <= 0.0)
            throw std::invalid_argument("realized_variance: non-positive price in window");
        const double r = std::log(prices[i] / prices[i - 1]);
        sum += r * r;
    }
    VarianceEstimate est;
    est.value = sum / tau;
    est.window_or_tenor = tau;
    est.as_of = as_of;
    est.kind = VarianceKind::realized;
    return est;
}

}  // namespace corrdyn::vol

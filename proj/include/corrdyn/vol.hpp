#pragma once

#include <utility>
#include <vector>

#include "corrdyn/dates.hpp"

namespace corrdyn::vol {

enum class Right { put, call };
enum class Style { european, american };

struct PricingInputs {
    double spot = 0;
    double strike = 0;
    double rate = 0;
    double tau = 0;    // year fraction
    double vol = 0;    // annualized
    Right right = Right::call;
    // (time in years from valuation, cash amount); only the American pricer uses these
    std::vector<std::pair<double, double>> dividends;
};

enum class VarianceKind { realized, model_free_implied };

struct VarianceEstimate {
    double value = 0;  // annualized variance
    double window_or_tenor = 0;
    Date as_of;
    VarianceKind kind = VarianceKind::realized;
};

// Black-Scholes value; dividends in `inputs` must be empty.
double european_price(const PricingInputs& inputs);

// Cox-Ross-Rubinstein binomial tree with early exercise; cash dividends are
// handled by subtracting their PV from the spot (escrowed-spot adjustment).
double american_price(const PricingInputs& inputs, int steps);

// Bisection on vol in [1e-4, 5.0] to price tolerance 1e-8, max 200 iterations.
// `inputs.vol` is ignored. Style selects the pricer.
double implied_vol(double market_price, const PricingInputs& inputs, Style style, int steps = 500);

struct ChainQuote {
    double strike = 0;
    double price = 0;  // OTM option price
    Right right = Right::put;
};

// Discrete model-free implied variance: (2 e^{r tau} / tau) * sum dK Q(K) / K^2
// with centered strike spacing (half-spacing at the ends).
VarianceEstimate mfiv(const std::vector<ChainQuote>& chain, double spot, double rate, double tau,
                      Date as_of = Date());

// Realized annualized variance of log returns over indices
// [start_index, start_index + round(252 tau)].
VarianceEstimate realized_variance(const std::vector<double>& prices, std::size_t start_index,
                                   double tau, Date as_of = Date());

}  // namespace corrdyn::vol

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace corrdyn::stats {

double normal_cdf(double x);
double normal_pdf(double x);

// Regularized incomplete gamma P(a, x) and Q(a, x) = 1 - P(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper-tail probability of a chi-square variate with df degrees of freedom.
double chi_square_sf(double x, double df);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// CDF of Student's t with df degrees of freedom.
double student_t_cdf(double t, double df);

struct MomentSummary {
    std::size_t n = 0;
    double min = 0, max = 0, mean = 0, median = 0, stddev = 0;
    double skewness = 0;  // standardized third central moment
    double kurtosis = 0;  // standardized fourth central moment, non-excess
};

// Throws std::invalid_argument for fewer than 2 observations.
MomentSummary moments(std::span<const double> xs);

struct PairedTTest {
    double statistic = 0;
    double p_value = 1.0;  // one-sided, alternative mean(x) < mean(y)
    bool defined = false;  // false when the difference series is degenerate
};

PairedTTest paired_t_test_less(std::span<const double> x, std::span<const double> y);

}  // namespace corrdyn::stats

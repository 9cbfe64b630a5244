#pragma once

#include <cmath>
#include <cstdint>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include "memrobust/errors.hpp"

namespace memrobust {

inline double normal_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

/// Quantile of the chi-square distribution with `dof` degrees of freedom
/// at lower-tail probability `p`.
inline double chi_square_quantile(double p, double dof) {
    if (!(p > 0.0 && p < 1.0)) throw ArgumentError("chi_square_quantile: p must be in (0,1)");
    if (!(dof > 0.0)) throw ArgumentError("chi_square_quantile: dof must be positive");
    boost::math::chi_squared_distribution<double> dist(dof);
    return boost::math::quantile(dist, p);
}

/// One-sided lower confidence bound for a binomial proportion
/// (Clopper-Pearson). `alpha` is the tail probability, e.g. 0.001 for a
/// 99.9% bound.
inline double clopper_pearson_lower(std::uint64_t successes, std::uint64_t trials,
                                    double alpha) {
    if (trials == 0) throw ArgumentError("clopper_pearson_lower: trials must be positive");
    if (successes > trials) throw ArgumentError("clopper_pearson_lower: successes > trials");
    if (successes == 0) return 0.0;
    boost::math::beta_distribution<double> dist(static_cast<double>(successes),
                                                static_cast<double>(trials - successes + 1));
    return boost::math::quantile(dist, alpha);
}

} // namespace memrobust

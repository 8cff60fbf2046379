#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "retroq/common.hpp"

namespace retroq {

namespace detail {

// Regularized lower incomplete gamma P(a, x) by power series (x < a + 1).
inline Real gamma_p_series(Real a, Real x) {
    Real ap = a;
    Real sum = 1.0 / a;
    Real term = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a, x) by continued fraction (x >= a + 1).
inline Real gamma_q_cf(Real a, Real x) {
    const Real tiny = std::numeric_limits<Real>::min() / 1e-30;
    Real b = x + 1.0 - a;
    Real c = 1.0 / tiny;
    Real d = 1.0 / b;
    Real h = d;
    for (int i = 1; i <= 500; ++i) {
        const Real an = -static_cast<Real>(i) * (static_cast<Real>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const Real del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

/// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
inline Real gamma_q(Real a, Real x) {
    if (a <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_q: a > 0, x >= 0 required");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
    return detail::gamma_q_cf(a, x);
}

/// Chi-square survival function: P(X >= x) for k degrees of freedom.
inline Real chi2_sf(Real x, Real k) { return gamma_q(0.5 * k, 0.5 * x); }

/// Two-sample z statistic for binomial proportions with pooled variance.
/// Returns 0 when both proportions are identical and the pooled variance
/// vanishes (all successes or all failures).
inline Real proportion_z(Index hits_a, Index n_a, Index hits_b, Index n_b) {
    if (n_a <= 0 || n_b <= 0) throw std::invalid_argument("proportion_z: empty sample");
    const Real pa = static_cast<Real>(hits_a) / static_cast<Real>(n_a);
    const Real pb = static_cast<Real>(hits_b) / static_cast<Real>(n_b);
    const Real pooled = static_cast<Real>(hits_a + hits_b) / static_cast<Real>(n_a + n_b);
    const Real var = pooled * (1.0 - pooled) * (1.0 / static_cast<Real>(n_a) + 1.0 / static_cast<Real>(n_b));
    if (var <= 0.0) return pa == pb ? 0.0 : std::numeric_limits<Real>::infinity();
    return std::abs(pa - pb) / std::sqrt(var);
}

}  // namespace retroq

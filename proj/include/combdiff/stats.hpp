#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "combdiff/errors.hpp"

namespace combdiff {

// Streaming mean/variance (Welford).
struct MeanVar {
    std::int64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }

    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    double se() const { return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

namespace detail {

// Regularized lower incomplete gamma by power series, for x < a + 1.
inline double gamma_p_series(double a, double x) {
    double ap = a, sum = 1.0 / a, term = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * 1e-16)
            return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    throw NonConvergence("gamma_p_series: no convergence");
}

// Regularized upper incomplete gamma by continued fraction (Lentz), x >= a + 1.
inline double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16)
            return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    throw NonConvergence("gamma_q_cf: no convergence");
}

} // namespace detail

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
inline double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw Error("gamma_p: domain");
    if (x == 0.0) return 0.0;
    return x < a + 1.0 ? detail::gamma_p_series(a, x) : 1.0 - detail::gamma_q_cf(a, x);
}

inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw Error("gamma_q: domain");
    if (x == 0.0) return 1.0;
    return x < a + 1.0 ? 1.0 - detail::gamma_p_series(a, x) : detail::gamma_q_cf(a, x);
}

// Survival function of the chi-squared distribution with k degrees of freedom.
inline double chi2_sf(double x, double k) {
    return gamma_q(0.5 * k, 0.5 * x);
}

// Kolmogorov distribution tail P(sup |B(t)| > lambda); two complementary
// series, switched where both are accurate.
inline double kolmogorov_p(double lambda) {
    constexpr double pi = std::numbers::pi;
    if (lambda < 1e-3) return 1.0;
    if (lambda < 1.18) {
        const double y = std::exp(-pi * pi / (8.0 * lambda * lambda));
        const double series = y + std::pow(y, 9.0) + std::pow(y, 25.0);
        return 1.0 - std::sqrt(2.0 * pi) / lambda * series;
    }
    const double e = std::exp(-2.0 * lambda * lambda);
    return 2.0 * (e - std::pow(e, 4.0) + std::pow(e, 9.0));
}

struct KsResult {
    double d = 0.0; // sup-norm statistic
    double p = 1.0; // asymptotic p-value
};

// One-sample Kolmogorov-Smirnov test against a continuous CDF.
template <class Cdf>
KsResult ks_test(std::vector<double> sample, Cdf&& cdf) {
    if (sample.size() < 2) throw InsufficientSample("ks_test: need >= 2 points");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        d = std::max({d, std::fabs(f - lo), std::fabs(hi - f)});
    }
    const double rn = std::sqrt(n);
    return {d, kolmogorov_p((rn + 0.12 + 0.11 / rn) * d)};
}

// Two-sample Kolmogorov-Smirnov test.
inline KsResult ks_test_two(std::vector<double> a, std::vector<double> b) {
    if (a.size() < 2 || b.size() < 2)
        throw InsufficientSample("ks_test_two: need >= 2 points each");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na
                                  - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_p((ne + 0.12 + 0.11 / ne) * d)};
}

// Pearson chi-squared goodness of fit; expected given as probabilities.
struct Chi2Result {
    double statistic = 0.0;
    double dof = 0.0;
    double p = 1.0;
};

inline Chi2Result chi2_gof(const std::vector<double>& observed,
                           const std::vector<double>& expected_prob) {
    if (observed.size() != expected_prob.size() || observed.size() < 2)
        throw Error("chi2_gof: size mismatch");
    double total = 0.0;
    for (double o : observed) total += o;
    double stat = 0.0;
    double dof = -1.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double e = expected_prob[i] * total;
        if (e < 1e-9) continue; // empty cell carries no information
        const double d = observed[i] - e;
        stat += d * d / e;
        dof += 1.0;
    }
    if (dof < 1.0) throw InsufficientSample("chi2_gof: too few occupied cells");
    return {stat, dof, chi2_sf(stat, dof)};
}

// Total variation distance between two histograms on the same bins.
inline double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw Error("tv_distance: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - q[i]);
    return 0.5 * s;
}

} // namespace combdiff

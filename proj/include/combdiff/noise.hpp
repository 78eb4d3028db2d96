#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "combdiff/errors.hpp"
#include "combdiff/quadrature.hpp"
#include "combdiff/rng.hpp"

namespace combdiff {

enum class NoiseKind { gaussian, window, mixture };

// One centered uniform block: density rate/(2 width) on [-width, width].
struct WindowComponent {
    double rate;
    double width;
};

// Symmetric kick-rate density j(v) >= 0. Conventions:
//   rate      R = integral of j            (events per unit time)
//   sigma     = integral of j v^2          (energy pump rate)
//   varsigma  = integral of (j/R) v^4      (kick fourth moment)
// Kicks are drawn from the probability density j/R.
class NoiseModel {
public:
    static NoiseModel gaussian(double rate = 1.0, double width = 0.5) {
        check(rate, width);
        NoiseModel m;
        m.kind_ = NoiseKind::gaussian;
        m.s_ = width;
        m.rate_ = rate;
        m.sigma_ = rate * width * width;
        m.varsigma_ = 3.0 * width * width * width * width;
        return m;
    }

    static NoiseModel window(double rate = 1.0, double width = 1.0) {
        check(rate, width);
        NoiseModel m;
        m.kind_ = NoiseKind::window;
        m.parts_ = {{rate, width}};
        m.tally();
        return m;
    }

    static NoiseModel mixture(std::vector<WindowComponent> parts) {
        if (parts.empty()) throw Error("NoiseModel: empty mixture");
        for (const auto& c : parts) check(c.rate, c.width);
        NoiseModel m;
        m.kind_ = NoiseKind::mixture;
        m.parts_ = std::move(parts);
        m.tally();
        return m;
    }

    NoiseKind kind() const { return kind_; }
    double rate() const { return rate_; }
    double sigma() const { return sigma_; }
    double varsigma() const { return varsigma_; }
    const std::vector<WindowComponent>& components() const { return parts_; }

    double density(double v) const {
        const double av = std::fabs(v);
        if (kind_ == NoiseKind::gaussian) {
            const double z = av / s_;
            return rate_ / (s_ * std::sqrt(2.0 * std::numbers::pi))
                   * std::exp(-0.5 * z * z);
        }
        double j = 0.0;
        for (const auto& c : parts_)
            if (av <= c.width) j += c.rate / (2.0 * c.width);
        return j;
    }

    // Smallest r with j = 0 outside [-r, r]; infinite for the gaussian.
    double support_radius() const {
        if (kind_ == NoiseKind::gaussian)
            return std::numeric_limits<double>::infinity();
        double r = 0.0;
        for (const auto& c : parts_) r = std::max(r, c.width);
        return r;
    }

    // integral of j(v) e^{a|v|}, in closed form.
    double exp_moment(double a) const {
        if (a < 0.0) throw Error("NoiseModel: exp_moment needs a >= 0");
        if (kind_ == NoiseKind::gaussian) {
            const double as = a * s_;
            return rate_ * std::exp(0.5 * as * as)
                   * (1.0 + std::erf(as / std::sqrt(2.0)));
        }
        double m = 0.0;
        for (const auto& c : parts_) {
            const double aw = a * c.width;
            m += aw < 1e-12 ? c.rate : c.rate * std::expm1(aw) / aw;
        }
        return m;
    }

    // integral of j(v) e^{iqv}; real because j is even.
    double fourier(double q) const {
        if (kind_ == NoiseKind::gaussian) {
            const double qs = q * s_;
            return rate_ * std::exp(-0.5 * qs * qs);
        }
        double m = 0.0;
        for (const auto& c : parts_) {
            const double qw = q * c.width;
            m += std::fabs(qw) < 1e-8 ? c.rate * (1.0 - qw * qw / 6.0)
                                      : c.rate * std::sin(qw) / qw;
        }
        return m;
    }

    // One kick with density j/R.
    double sample(Rng& rng) const {
        if (kind_ == NoiseKind::gaussian) return s_ * rng.normal();
        double u = rng.uniform() * rate_;
        for (const auto& c : parts_) {
            if (u < c.rate || &c == &parts_.back())
                return rng.uniform(-c.width, c.width);
            u -= c.rate;
        }
        return 0.0; // unreachable
    }

    // Intensity scaling j -> c j: rates scale, normalized moments do not.
    NoiseModel scaled(double c) const {
        if (!(c > 0.0)) throw Error("NoiseModel: scale must be positive");
        NoiseModel m = *this;
        m.rate_ *= c;
        m.sigma_ *= c;
        for (auto& part : m.parts_) part.rate *= c;
        return m;
    }

private:
    static void check(double rate, double width) {
        if (!(rate > 0.0) || !(width > 0.0))
            throw Error("NoiseModel: rate and width must be positive");
    }

    void tally() {
        rate_ = sigma_ = varsigma_ = 0.0;
        for (const auto& c : parts_) {
            rate_ += c.rate;
            sigma_ += c.rate * c.width * c.width / 3.0;
            varsigma_ += c.rate * std::pow(c.width, 4.0) / 5.0;
        }
        varsigma_ /= rate_;
    }

    NoiseKind kind_ = NoiseKind::gaussian;
    double s_ = 0.0;
    std::vector<WindowComponent> parts_;
    double rate_ = 0.0, sigma_ = 0.0, varsigma_ = 0.0;
};

// Admissibility of j: finite exponential moment, bounded sum over the
// half-integer lattice, and a strictly positive floor on [-1, 1]. The
// certificate varpi is the smallest constant covering all three.
struct AssumptionsReport {
    double a = 0.0;
    double exp_moment = std::numeric_limits<double>::infinity();
    bool exp_moment_ok = false;
    double lattice_sum_sup = std::numeric_limits<double>::infinity();
    double inf_on_unit = 0.0;
    double varpi = std::numeric_limits<double>::infinity();
    bool pass = false;
};

inline AssumptionsReport validate_assumptions(const NoiseModel& model, double a,
                                              int grid_resolution = 2001) {
    if (!(a > 0.0)) throw Error("validate_assumptions: a must be positive");
    if (grid_resolution < 3) throw Error("validate_assumptions: grid too coarse");
    AssumptionsReport rep;
    rep.a = a;

    // exponential moment: quadrature over the effective support plus an
    // analytic gaussian tail beyond the cutoff
    const double support = model.support_radius();
    double cutoff = support, tail = 0.0;
    if (!std::isfinite(support)) {
        // j e^{av} peaks at v = a s^2; past cutoff the gaussian factor wins
        const double s = std::sqrt(model.sigma() / model.rate());
        cutoff = a * s * s + 12.0 * s;
        tail = model.rate() * std::exp(0.5 * a * a * s * s)
               * 0.5 * std::erfc((cutoff - a * s * s) / (std::sqrt(2.0) * s));
    }
    auto f = [&](double v) { return model.density(v) * std::exp(a * v); };
    std::vector<double> pts{0.0};
    for (const auto& c : model.components())
        if (c.width < cutoff) pts.push_back(c.width); // density jump points
    pts.push_back(cutoff);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const double quad = integrate_pieces(f, pts, 1e-10);
    rep.exp_moment = 2.0 * (quad + tail);
    rep.exp_moment_ok = std::isfinite(rep.exp_moment)
                        && tail <= 1e-8 * rep.exp_moment;

    // sup over |theta| <= 1/4 of sum_n j(theta + n/2)
    const double reach = std::isfinite(support) ? support : cutoff;
    const auto n_max = static_cast<std::int64_t>(std::ceil(2.0 * (reach + 0.25))) + 1;
    double lattice_sup = 0.0;
    for (int i = 0; i < grid_resolution; ++i) {
        const double th = -0.25 + 0.5 * i / (grid_resolution - 1);
        double s = 0.0;
        for (std::int64_t n = -n_max; n <= n_max; ++n)
            s += model.density(th + 0.5 * static_cast<double>(n));
        lattice_sup = std::max(lattice_sup, s);
    }
    rep.lattice_sum_sup = lattice_sup;

    // inf of j on [-1, 1]; j is even and non-increasing in |v| for the
    // built-in families, so the grid floor is exact up to ties at v = 1
    double inf_unit = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid_resolution; ++i) {
        const double v = static_cast<double>(i) / (grid_resolution - 1);
        inf_unit = std::min(inf_unit, model.density(v));
    }
    rep.inf_on_unit = inf_unit;

    rep.pass = rep.exp_moment_ok && std::isfinite(rep.lattice_sum_sup)
               && inf_unit > 0.0;
    rep.varpi = std::max({rep.exp_moment, rep.lattice_sum_sup,
                          inf_unit > 0.0 ? 1.0 / inf_unit
                                         : std::numeric_limits<double>::infinity()});
    return rep;
}

} // namespace combdiff

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <sstream>
#include <vector>

#include "combdiff/errors.hpp"
#include "combdiff/zone.hpp"

namespace combdiff {

inline constexpr double kPi = 3.141592653589793238462643;
inline constexpr double kTwoPi = 6.283185307179586476925287;

// Dispersion relation of the periodic delta comb. For momenta off the
// half-integer lattice the quasi-energy label q(p) solves
//
//     cos(2 pi p) = cos(2 pi q) + (alpha / 2q) sin(2 pi q),
//
// with q antisymmetric, increasing, q(n/2) = n/2 for n != 0, and the branch
// on each band chosen continuously. E(p) = q(p)^2. Half-integer momenta are
// snapped to q = n/2 (including the p = 0 convention q = 0; the band-0 limit
// q(0+) is strictly positive, see README).
//
// Internally p > 0 is reduced to the band equation: with N = ceil(2p),
// x = pi N - 2 pi p in (0, pi), g = 2 pi (N/2 - q) solves
//
//     f_N(g) = -cos(x),   f_N(y) = -cos(y) + alpha pi sin(y) / (pi N - y),
//
// whose first root in [0, x] is bracketed by f_N(0) = -1 <= -cos(x) and
// f_N(x) >= -cos(x). Bands are cached as adaptive Chebyshev fits of g(x);
// evaluations get one Newton polish on the original relation and are
// verified against the requested residual tolerance.
class Dispersion {
public:
    static constexpr double kSnapTol = 1e-13;
    static constexpr double kEdgeOffset = 1e-9;
    static constexpr double kDefaultTol = 1e-12;

    explicit Dispersion(double alpha) : alpha_(alpha) {
        if (!(alpha >= 0.0) || !std::isfinite(alpha))
            throw Error("Dispersion: alpha must be finite and >= 0");
        fits_ = std::make_unique<std::atomic<BandFit*>[]>(kMaxBand);
        for (std::size_t i = 0; i < kMaxBand; ++i) fits_[i].store(nullptr);
    }

    ~Dispersion() {
        for (std::size_t i = 0; i < kMaxBand; ++i) delete fits_[i].load();
    }

    Dispersion(const Dispersion&) = delete;
    Dispersion& operator=(const Dispersion&) = delete;

    double alpha() const { return alpha_; }

    // q(p) with Kronig-Penney residual <= tol.
    double q(double p, double tol = kDefaultTol) const {
        return q_impl(p, tol, true);
    }

    // Uncached variant (fresh bracketing solve); used by audits and fits.
    double q_direct(double p, double tol = kDefaultTol) const {
        return q_impl(p, tol, false);
    }

    double energy(double p, double tol = kDefaultTol) const {
        const double v = q(p, tol);
        return v * v;
    }

    struct Derivs {
        double q;
        double dq;
        double d2q;
    };

    // q, q', q'' at p; p must be off the half-integer lattice.
    Derivs derivatives(double p, double tol = kDefaultTol) const {
        if (alpha_ == 0.0) return {p, 1.0, 0.0};
        const double snapped = 0.5 * std::round(2.0 * p);
        if (std::fabs(p - snapped) <= kSnapTol) {
            std::ostringstream os;
            os << "derivatives: p = " << p << " is a lattice point";
            throw LatticePoint(os.str());
        }
        const double ap = std::fabs(p);
        const std::int64_t N = band_of(ap);
        const double x = kPi * N - kTwoPi * ap;
        const double qa = q_impl(ap, tol, true);
        const double g = kTwoPi * (0.5 * N - qa);
        const double fp = f_prime(N, g);
        const double fpp = f_second(N, g);
        const double gp = std::sin(x) / fp;
        const double gpp = (std::cos(x) - fpp * gp * gp) / fp;
        Derivs d{qa, gp, -kTwoPi * gpp};
        if (p < 0.0) {
            d.q = -d.q;
            d.d2q = -d.d2q;
        }
        return d;
    }

    // dE/dp = 2 q q'.
    double group_velocity(double p, double tol = kDefaultTol) const {
        const Derivs d = derivatives(p, tol);
        return 2.0 * d.q * d.dq;
    }

    // Spectral gap above the band edge at |n|/2, probed at n/2 +- 1e-9.
    // Tends to alpha/pi for large n.
    double band_gap(int n, double tol = kDefaultTol) const {
        if (n < 1) throw Error("band_gap: band index must be >= 1");
        if (alpha_ == 0.0) return 0.0;
        const double edge = 0.5 * n;
        return energy(edge + kEdgeOffset, tol) - energy(edge - kEdgeOffset, tol);
    }

private:
    static constexpr std::size_t kMaxBand = 4096;
    static constexpr int kDeg = 20;
    static constexpr double kFitTol = 2e-13;
    static constexpr int kMaxDepth = 14;

    struct Panel {
        double a, b;
        std::array<double, kDeg + 1> c;
    };

    struct BandFit {
        std::vector<double> breaks; // panel right endpoints, ascending
        std::vector<Panel> panels;
    };

    double alpha_;
    std::unique_ptr<std::atomic<BandFit*>[]> fits_;

    static std::int64_t band_of(double ap) {
        auto N = static_cast<std::int64_t>(std::ceil(2.0 * ap));
        return N < 1 ? 1 : N;
    }

    // --- band equation -------------------------------------------------

    double f_val(std::int64_t N, double y) const {
        return -std::cos(y) + alpha_ * kPi * sin_ratio(N, y);
    }

    // sin(y)/(pi N - y); removable singularity at y = pi when N = 1.
    static double sin_ratio(std::int64_t N, double y) {
        const double den = kPi * N - y;
        if (N == 1 && den < 1e-8) return 1.0 - den * den / 6.0;
        return std::sin(y) / den;
    }

    double f_prime(std::int64_t N, double y) const {
        const double den = kPi * N - y;
        const double s = std::sin(y), c = std::cos(y);
        return s + alpha_ * kPi * (c / den + s / (den * den));
    }

    double f_second(std::int64_t N, double y) const {
        const double den = kPi * N - y;
        const double s = std::sin(y), c = std::cos(y);
        return c + alpha_ * kPi * (-s / den + 2.0 * c / (den * den)
                                   + 2.0 * s / (den * den * den));
    }

    // Kronig-Penney residual at (p, q); sin(2 pi q)/(2q) evaluated stably.
    double kp_residual(double p, double qv) const {
        double half_sinc;
        if (std::fabs(qv) < 1e-3) {
            const double z = kTwoPi * qv;
            half_sinc = kPi * (1.0 - z * z / 6.0 * (1.0 - z * z / 20.0));
        } else {
            half_sinc = std::sin(kTwoPi * qv) / (2.0 * qv);
        }
        return std::cos(kTwoPi * p) - std::cos(kTwoPi * qv) - alpha_ * half_sinc;
    }

    // First root of f_N(y) = target in [0, hi]; bracketed Newton with
    // bisection fallback. Requires f_N(0) <= target <= f_N(hi).
    double solve_g(std::int64_t N, double target, double hi) const {
        double lo = 0.0;
        if (-1.0 - target > 0.0 || f_val(N, hi) - target < 0.0)
            throw NonConvergence("solve_g: bracket lost");
        double y = 0.5 * (lo + hi);
        for (int it = 0; it < 200; ++it) {
            const double fy = f_val(N, y) - target;
            if (fy == 0.0) return y;
            if (fy < 0.0)
                lo = y;
            else
                hi = y;
            if (hi - lo < 4e-16 * (1.0 + hi)) return 0.5 * (lo + hi);
            const double dy = f_prime(N, y);
            double ynew = (dy != 0.0) ? y - fy / dy : 0.5 * (lo + hi);
            if (!(ynew > lo && ynew < hi)) ynew = 0.5 * (lo + hi);
            y = ynew;
        }
        throw NonConvergence("solve_g: iteration cap");
    }

    double g_direct(std::int64_t N, double x) const {
        return solve_g(N, -std::cos(x), x);
    }

    // Newton polish of q on the original relation, then verify.
    double polish(double p, double qv, double tol) const {
        for (int it = 0; it < 4; ++it) {
            const double r = kp_residual(p, qv);
            if (std::fabs(r) <= tol) return qv;
            const double s = std::sin(kTwoPi * qv), c = std::cos(kTwoPi * qv);
            const double dF = -kTwoPi * s
                + alpha_ * (kTwoPi * qv * c - s) / (2.0 * qv * qv);
            if (dF == 0.0) break;
            qv += r / dF;
        }
        // The residual itself carries rounding noise of order eps * 2 pi q
        // from the cosine argument, so the final verification cannot be
        // stricter than that floor at large momentum.
        const double noise = 32.0 * std::numeric_limits<double>::epsilon()
            * (1.0 + kTwoPi * (std::fabs(p) + std::fabs(qv)));
        if (std::fabs(kp_residual(p, qv)) <= tol + noise) return qv;
        std::ostringstream os;
        os << "solve_q: residual above tol at p = " << p;
        throw NonConvergence(os.str());
    }

    double q_impl(double p, double tol, bool use_cache) const {
        if (alpha_ == 0.0) return p;
        const double snapped = 0.5 * std::round(2.0 * p);
        if (std::fabs(p - snapped) <= kSnapTol) return snapped;
        const double ap = std::fabs(p);
        const std::int64_t N = band_of(ap);
        const double x = kPi * N - kTwoPi * ap;
        double g;
        if (use_cache && std::fabs(theta(ap)) >= 1e-4
            && static_cast<std::size_t>(N) <= kMaxBand) {
            g = eval_fit(*fit_for(N), x);
        } else {
            g = g_direct(N, x);
        }
        const double qv = polish(ap, 0.5 * N - g / kTwoPi, tol);
        return p < 0.0 ? -qv : qv;
    }

    // --- Chebyshev band fits --------------------------------------------

    BandFit* fit_for(std::int64_t N) const {
        auto& slot = fits_[static_cast<std::size_t>(N - 1)];
        BandFit* f = slot.load(std::memory_order_acquire);
        if (f) return f;
        auto built = std::make_unique<BandFit>(build_fit(N));
        BandFit* expected = nullptr;
        if (slot.compare_exchange_strong(expected, built.get(),
                                         std::memory_order_acq_rel))
            return built.release();
        return expected; // another thread won the race
    }

    BandFit build_fit(std::int64_t N) const {
        monotonicity_scan(N);
        struct Job {
            double a, b;
            int depth;
        };
        std::vector<Job> work{{0.0, kPi, 0}};
        std::vector<Panel> done;
        while (!work.empty()) {
            const Job job = work.back();
            work.pop_back();
            Panel panel = fit_panel(N, job.a, job.b);
            if (job.depth < kMaxDepth && panel_error(N, panel) > kFitTol) {
                const double mid = 0.5 * (job.a + job.b);
                work.push_back({mid, job.b, job.depth + 1});
                work.push_back({job.a, mid, job.depth + 1});
            } else {
                done.push_back(panel);
            }
        }
        std::sort(done.begin(), done.end(),
                  [](const Panel& u, const Panel& v) { return u.a < v.a; });
        BandFit fit;
        fit.panels = std::move(done);
        fit.breaks.reserve(fit.panels.size());
        for (const auto& pl : fit.panels) fit.breaks.push_back(pl.b);
        return fit;
    }

    // The bracketing argument needs f_N to increase from f_N(0) = -1 until
    // it first exceeds 1; verify once per band on a coarse grid.
    void monotonicity_scan(std::int64_t N) const {
        double prev = f_val(N, 0.0);
        for (int i = 1; i <= 64; ++i) {
            const double v = f_val(N, kPi * i / 64.0);
            if (prev >= 1.0) break;
            if (v <= prev)
                throw Error("band fit: f_N not increasing below its first crossing of 1");
            prev = v;
        }
    }

    Panel fit_panel(std::int64_t N, double a, double b) const {
        Panel p;
        p.a = a;
        p.b = b;
        std::array<double, kDeg + 1> v{};
        for (int k = 0; k <= kDeg; ++k) {
            const double t = std::cos(kPi * k / kDeg); // Lobatto nodes
            const double x = 0.5 * (a + b) + 0.5 * (b - a) * t;
            v[k] = g_direct(N, std::clamp(x, 0.0, kPi));
        }
        for (int j = 0; j <= kDeg; ++j) {
            double s = 0.0;
            for (int k = 0; k <= kDeg; ++k) {
                const double w = (k == 0 || k == kDeg) ? 0.5 : 1.0;
                s += w * v[k] * std::cos(kPi * j * k / kDeg);
            }
            p.c[j] = 2.0 * s / kDeg;
        }
        p.c[0] *= 0.5;
        p.c[kDeg] *= 0.5;
        return p;
    }

    double panel_error(std::int64_t N, const Panel& p) const {
        double err = std::fabs(p.c[kDeg]) + std::fabs(p.c[kDeg - 1]);
        for (int i = 1; i <= 5; ++i) {
            const double x = p.a + (p.b - p.a) * i / 6.0;
            err = std::max(err, std::fabs(eval_panel(p, x) - g_direct(N, x)));
        }
        return err;
    }

    static double eval_panel(const Panel& p, double x) {
        const double t = (2.0 * x - (p.a + p.b)) / (p.b - p.a);
        double b1 = 0.0, b2 = 0.0;
        for (int j = kDeg; j >= 1; --j) {
            const double b0 = 2.0 * t * b1 - b2 + p.c[j];
            b2 = b1;
            b1 = b0;
        }
        return t * b1 - b2 + p.c[0];
    }

    static double eval_fit(const BandFit& fit, double x) {
        const auto it = std::lower_bound(fit.breaks.begin(), fit.breaks.end(), x);
        const std::size_t idx = std::min<std::size_t>(
            static_cast<std::size_t>(it - fit.breaks.begin()), fit.panels.size() - 1);
        return eval_panel(fit.panels[idx], x);
    }
};

} // namespace combdiff

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "combdiff/bandstructure.hpp"
#include "combdiff/errors.hpp"
#include "combdiff/quadrature.hpp"
#include "combdiff/zone.hpp"

namespace combdiff {

using cplx = std::complex<double>;

// cot(pi z), argument reduced to |z - round(z)| <= 1/2.
inline double cot_pi(double z) {
    const double r = z - std::round(z);
    return std::cos(kPi * r) / std::sin(kPi * r);
}

// sin^2(pi z), reduced (period 1 in z).
inline double sin_pi_sq(double z) {
    const double r = z - std::round(z);
    const double s = std::sin(kPi * r);
    return s * s;
}

// e^{i 2 pi z} - 1 = 2 i sin(pi z) e^{i pi z}, cancellation-free real part.
inline cplx expm1_2pi(double z) {
    const double s = std::sin(kPi * z);
    return cplx(-2.0 * s * s, 2.0 * s * std::cos(kPi * z));
}

// Plane-wave decomposition of the comb's Bloch eigenfunction over one cell.
// The cell is [-pi, pi) with plane waves e^{i(p+m)x}/sqrt(2 pi), m integer.
// eta(p, m) = <plane wave m | psi~_p> has the two-pole closed form
//
//   eta(p, m) = c_p (1/(q+p+m) + 1/(q-p-m)),
//   c_p = -i (2 pi N_p)^{-1/2} (e^{i 2 pi (q-p)} - 1),
//
// with sum_m |eta(p, m)|^2 = 1. The free case alpha = 0 degenerates to
// eta(p, m) = delta_{m,0}.
class BlochBasis {
public:
    BlochBasis(const Dispersion& d, double p, double tol = Dispersion::kDefaultTol)
        : p_(p) {
        q_ = d.q(p, tol);
        free_ = (d.alpha() == 0.0);
        if (free_) {
            A_ = 2.0 * p;
            B_ = 0.0;
            Np_ = kTwoPi;
            p2_ = p * p;
            c_ = cplx(0.0, 0.0);
            cotA_ = 0.0;
            cotB_ = 0.0;
            sin2A_ = sin_pi_sq(A_);
            am_ = cplx(0.0, 0.0);
            bm_ = cplx(1.0, 0.0);
            ap_ = cplx(0.0, 0.0);
            return;
        }
        if (q_ == 0.5 * std::round(2.0 * p))
            throw LatticePoint("BlochBasis: p on the half-integer lattice");
        A_ = q_ + p;
        B_ = q_ - p;
        sin2A_ = sin_pi_sq(A_);
        if (sin2A_ < 1e-24)
            throw LatticePoint("BlochBasis: degenerate cell denominator");
        cotA_ = cot_pi(A_);
        cotB_ = cot_pi(B_);
        // cell coefficients: psi~ = am e^{-iqx} + bm e^{iqx} on [-pi, 0],
        //                    ap e^{-iqx} + e^{iqx} on [0, pi)
        const double sA = std::sin(kPi * A_), sB = std::sin(kPi * B_);
        am_ = (sB / sA) * std::polar(1.0, kPi * (B_ - A_));
        bm_ = std::polar(1.0, kTwoPi * B_);
        ap_ = (sB / sA) * std::polar(1.0, kPi * (B_ + A_));
        // cell norm of the unnormalized coefficients, in closed form
        const cplx im = (1.0 - std::polar(1.0, -kTwoPi * q_)) / cplx(0.0, 2.0 * q_);
        const cplx ip = (std::polar(1.0, kTwoPi * q_) - 1.0) / cplx(0.0, 2.0 * q_);
        const double w = 2.0 * (std::conj(am_) * bm_ * im).real()
                       + 2.0 * (std::conj(ap_) * ip).real();
        Np_ = kPi * (2.0 * std::norm(am_) + 2.0) + w;
        p2_ = q_ * q_ * (Np_ - 2.0 * w) / Np_;
        c_ = cplx(0.0, -1.0) * expm1_2pi(B_) / std::sqrt(kTwoPi * Np_);
    }

    double p() const { return p_; }
    double q() const { return q_; }
    double norm_const() const { return Np_; }
    // <P^2> in the cell state; equals E - alpha |psi(0)|^2 and sits in (0, E].
    double kinetic_moment() const { return p2_; }
    bool is_free() const { return free_; }
    double A() const { return A_; }
    double B() const { return B_; }
    double cotA() const { return cotA_; }
    double cotB() const { return cotB_; }
    double sin2A() const { return sin2A_; }
    cplx prefactor() const { return c_; }

    cplx eta(std::int64_t m) const {
        if (free_) return m == 0 ? cplx(1.0, 0.0) : cplx(0.0, 0.0);
        const double md = static_cast<double>(m);
        return c_ * (1.0 / (A_ + md) + 1.0 / (B_ - md));
    }

    // psi~_p(x) for x in [-pi, pi).
    cplx cell_value(double x) const {
        if (free_) return std::polar(1.0 / std::sqrt(kTwoPi), p_ * x);
        const cplx em = std::polar(1.0, -q_ * x);
        const cplx ep = std::polar(1.0, q_ * x);
        const double r = 1.0 / std::sqrt(Np_);
        if (x < 0.0) return r * (am_ * em + bm_ * ep);
        return r * (ap_ * em + ep);
    }

    // Free plane wave psi_p(x) = e^{ipx}/sqrt(2 pi).
    cplx plane_value(double x) const {
        return std::polar(1.0 / std::sqrt(kTwoPi), p_ * x);
    }

private:
    double p_, q_, A_, B_, Np_, p2_, cotA_, cotB_, sin2A_;
    cplx c_, am_, bm_, ap_;
    bool free_;
};

namespace detail {

// sum_{m in Z} 1/((m+a)(m+b)) = pi (cot(pi a) - cot(pi b)) / (b - a);
// series expansion when b - a is small.
inline double pair_sum_same(double a, double diff, double cot_a, double cot_b,
                            double sin2_a) {
    if (std::fabs(diff) < 1e-7) {
        const double h = kPi * diff;
        const double c2 = cot_a * cot_a;
        return kPi * kPi / sin2_a
               * (1.0 - h * cot_a + h * h * (2.0 * c2 / 3.0 + 1.0 / (3.0 * sin2_a)));
    }
    return kPi * (cot_a - cot_b) / diff;
}

// sum_{m in Z} 1/((m+a)(c-m)) = pi (cot(pi a) + cot(pi c)) / (a + c).
inline double pair_sum_opp(double a, double sum, double cot_a, double cot_c,
                           double sin2_a) {
    if (std::fabs(sum) < 1e-7) {
        const double h = kPi * sum;
        const double c2 = cot_a * cot_a;
        return -kPi * kPi / sin2_a
               * (1.0 + h * cot_a + h * h * (2.0 * c2 / 3.0 + 1.0 / (3.0 * sin2_a)));
    }
    return kPi * (cot_a + cot_c) / sum;
}

} // namespace detail

// kappa_v(p, n) = sum_m conj(eta(p', m-n)) eta(p, m) with p' = p + v + n,
// evaluated exactly: products of two-pole rationals sum to cotangent pair
// sums over the full lattice (no m-truncation).
inline cplx kappa_exact(const BlochBasis& src, const BlochBasis& dst,
                        std::int64_t n, double v) {
    if (src.is_free() || dst.is_free()) {
        if (src.is_free() && dst.is_free()) return n == 0 ? 1.0 : 0.0;
        // one-sided free case: a single plane wave against a two-pole row
        if (src.is_free()) {
            // sum_m conj(eta_dst(m-n)) delta_{m,0}
            return std::conj(dst.eta(-n));
        }
        return src.eta(n);
    }
    const double qd = dst.q() - src.q();
    const double qs = dst.q() + src.q();
    const double s11 = detail::pair_sum_same(src.A(), qd + v, src.cotA(),
                                             dst.cotA(), src.sin2A());
    const double s12 = detail::pair_sum_opp(src.A(), qs - v, src.cotA(),
                                            dst.cotB(), src.sin2A());
    const double s21 = detail::pair_sum_opp(dst.A(), qs + v, dst.cotA(),
                                            src.cotB(), dst.sin2A());
    const double s22 = detail::pair_sum_same(src.B(), qd - v, src.cotB(),
                                             dst.cotB(), sin_pi_sq(src.B()));
    return std::conj(dst.prefactor()) * src.prefactor() * (s11 + s12 + s21 + s22);
}

// Reference truncated evaluation: partial m-sum over |m| <= M.
inline cplx kappa_msum(const BlochBasis& src, const BlochBasis& dst,
                       std::int64_t n, std::int64_t M) {
    cplx acc(0.0, 0.0);
    for (std::int64_t m = -M; m <= M; ++m)
        acc += std::conj(dst.eta(m - n)) * src.eta(m);
    return acc;
}

// Quadrature oracle: kappa_v(p, n) = <psi~_{p+v+n} | e^{ivx} psi~_p> over the
// cell, split at the comb site x = 0 where the integrand loses smoothness.
inline cplx kappa_quad(const BlochBasis& src, const BlochBasis& dst, double v,
                       double abs_tol = 1e-10) {
    auto f = [&](double x) {
        return std::conj(dst.cell_value(x)) * std::polar(1.0, v * x)
               * src.cell_value(x);
    };
    return integrate_pieces(f, {-kPi, 0.0, kPi}, abs_tol);
}

// Diffraction channels that carry the bulk of |kappa|^2 for |v| <= |p|/2:
// {0, -n(p), -n(p+v), n(p) - n(p+v)}, deduplicated, order preserved.
inline std::vector<std::int64_t> iset(double p, double v) {
    const std::int64_t np = lattice_n(p);
    const std::int64_t npv = lattice_n(p + v);
    std::array<std::int64_t, 4> raw{0, -np, -npv, np - npv};
    std::vector<std::int64_t> out;
    for (auto n : raw) {
        bool seen = false;
        for (auto m : out) seen = seen || (m == n);
        if (!seen) out.push_back(n);
    }
    return out;
}

// Full kappa row over n in [-M, M], closed-form entries, window doubled from
// M0 until the captured mass is within tail_tol of 1 (cap M_cap).
struct KappaRow {
    std::int64_t M = 0;
    std::vector<cplx> vals; // index n + M
    double tail = 0.0;      // 1 - sum |vals|^2

    const cplx& at(std::int64_t n) const { return vals[static_cast<std::size_t>(n + M)]; }
};

inline KappaRow kappa_row(const Dispersion& d, double p, double v,
                          std::int64_t M0 = 64, std::int64_t M_cap = 512,
                          double tail_tol = 1e-8,
                          double tol = Dispersion::kDefaultTol) {
    const BlochBasis src(d, p, tol);
    KappaRow row;
    for (std::int64_t M = M0; M <= M_cap; M *= 2) {
        row.M = M;
        row.vals.assign(static_cast<std::size_t>(2 * M + 1), cplx(0.0, 0.0));
        double mass = 0.0;
        for (std::int64_t n = -M; n <= M; ++n) {
            const double pd = p + v + static_cast<double>(n);
            cplx k;
            if (std::fabs(theta(pd)) < 1e-11) {
                k = cplx(0.0, 0.0); // destination pinned on a band edge
            } else {
                const BlochBasis dst(d, pd, tol);
                k = kappa_exact(src, dst, n, v);
            }
            row.vals[static_cast<std::size_t>(n + M)] = k;
            mass += std::norm(k);
        }
        row.tail = 1.0 - mass;
        if (std::fabs(row.tail) <= tail_tol) return row;
    }
    return row; // caller decides whether the residual tail is acceptable
}

// Distance between the free and comb Bloch functions; equals
// sqrt(2 - 2 Re eta(p, 0)) since both are cell-normalized.
inline double bloch_distance(const Dispersion& d, double p,
                             double tol = Dispersion::kDefaultTol) {
    const BlochBasis b(d, p, tol);
    const double val = 2.0 - 2.0 * b.eta(0).real();
    return std::sqrt(std::max(val, 0.0));
}

// Weighted spread of the post-kick energy over diffraction channels:
// variance of E^{1/2}(p+v+n) under |kappa_v(p, n)|^2, which a kick of
// size v can raise by at most v^2.
struct VarianceReport {
    double mean_sqrt_e = 0.0;
    double variance = 0.0;
    double mass = 0.0;
    bool within_bound = false;
};

inline VarianceReport variance_check(const Dispersion& d, double p, double v,
                                     std::int64_t M0 = 64,
                                     std::int64_t M_cap = 512,
                                     double bound_slack = 1e-4) {
    const KappaRow row = kappa_row(d, p, v, M0, M_cap);
    VarianceReport rep;
    if (1.0 - row.tail < 0.5) return rep; // row lost its mass to edge masking
    double mean = 0.0, mass = 0.0;
    std::vector<double> se(row.vals.size());
    for (std::int64_t n = -row.M; n <= row.M; ++n) {
        const double w = std::norm(row.at(n));
        const double e = d.energy(p + v + static_cast<double>(n));
        se[static_cast<std::size_t>(n + row.M)] = std::sqrt(e);
        mean += w * std::sqrt(e);
        mass += w;
    }
    mean /= mass;
    double var = 0.0;
    for (std::int64_t n = -row.M; n <= row.M; ++n) {
        const double w = std::norm(row.at(n)) / mass;
        const double dev = se[static_cast<std::size_t>(n + row.M)] - mean;
        var += w * dev * dev;
    }
    rep.mean_sqrt_e = mean;
    rep.variance = var;
    rep.mass = mass;
    rep.within_bound = var <= v * v + bound_slack;
    return rep;
}

} // namespace combdiff

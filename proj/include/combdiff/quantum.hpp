#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <sstream>
#include <vector>

#include "combdiff/bandstructure.hpp"
#include "combdiff/bloch.hpp"
#include "combdiff/errors.hpp"
#include "combdiff/noise.hpp"
#include "combdiff/rng.hpp"
#include "combdiff/zone.hpp"

namespace combdiff {

// A wavefunction supported on one quasimomentum fiber of the comb, truncated
// to a window of 2M+1 reciprocal-lattice offsets. Entry i carries the plane
// wave at momentum phi + center + (i - M). Kicks shift phi and center but act
// within a single fiber, so the whole unitary evolution stays in this class.
// Probability pushed over the window boundary is booked into leaked_mass, so
// mass() + leaked_mass stays within 1e-9 of 1 for a normalized start.
struct FiberWavefunction {
    double phi = 0.0;          // quasimomentum, in [-1/2, 1/2)
    std::int64_t center = 0;   // integer anchor of the window
    std::int64_t M = 48;       // window half-width in lattice units
    std::vector<cplx> amps;    // plane-wave amplitudes, offset m = index - M
    double leaked_mass = 0.0;  // probability dropped at the window boundary

    double momentum(std::int64_t i) const {
        return phi + static_cast<double>(center + i - M);
    }
    double mass() const {
        double s = 0.0;
        for (const auto& a : amps) s += std::norm(a);
        return s;
    }
    cplx& at(std::int64_t m) { return amps[static_cast<std::size_t>(m + M)]; }
    const cplx& at(std::int64_t m) const {
        return amps[static_cast<std::size_t>(m + M)];
    }
};

inline FiberWavefunction plane_wave(double p, std::int64_t M = 48) {
    if (M < 16) throw Error("plane_wave: window half-width must be >= 16");
    FiberWavefunction psi;
    psi.phi = quasimomentum(p);
    psi.center = std::llround(p - psi.phi);
    psi.M = M;
    psi.amps.assign(static_cast<std::size_t>(2 * M + 1), cplx(0.0, 0.0));
    psi.at(0) = cplx(1.0, 0.0);
    return psi;
}

// Mean kinetic-plus-comb energy of the retained mass; diagonal in the
// eigenbasis coefficients.
// Defined below, after FiberBasis.
class FiberBasis;
inline double mean_energy(const FiberBasis& basis, const FiberWavefunction& psi);

// Bloch eigenbasis of the fiber through phi + center, truncated to the same
// window as the wavefunctions it transforms. Column k holds the eigenvector
// at extended momentum phi + center + k over the plane-wave rows j, with
// entries eta(p_k, j - k). A fiber within 1e-6 of the half-integer lattice is
// nudged off it by 1e-6 so every column stays regular; callers should copy
// phi_used() back into the state and log the event.
class FiberBasis {
public:
    static constexpr double kEdgeNudge = 1e-6;
    // relative mass defect above which a transform refuses to pretend the
    // window was large enough
    static constexpr double kDefectTol = 1e-4;

    FiberBasis(const Dispersion& d, double phi, std::int64_t center,
               std::int64_t M)
        : M_(M), n_(static_cast<std::size_t>(2 * M + 1)), center_(center) {
        if (M < 16) throw Error("FiberBasis: window half-width must be >= 16");
        const double th = theta(phi + static_cast<double>(center));
        phi_ = phi;
        if (d.alpha() > 0.0 && std::fabs(th) < kEdgeNudge) {
            phi_ += th >= 0.0 ? kEdgeNudge - th : -(kEdgeNudge + th);
            nudged_ = true;
        }
        U_.resize(n_ * n_);
        energies_.resize(n_);
        for (std::int64_t k = -M; k <= M; ++k) {
            const double pk = phi_ + static_cast<double>(center + k);
            const BlochBasis b(d, pk);
            energies_[idx(k)] = b.q() * b.q();
            for (std::int64_t j = -M; j <= M; ++j)
                U_[idx(j) * n_ + idx(k)] = b.eta(j - k);
        }
    }

    std::int64_t M() const { return M_; }
    std::int64_t center() const { return center_; }
    double phi_used() const { return phi_; }
    bool nudged() const { return nudged_; }
    double energy(std::int64_t k) const { return energies_[idx(k)]; }
    cplx u(std::int64_t j, std::int64_t k) const {
        return U_[idx(j) * n_ + idx(k)];
    }

    // Plane-wave amplitudes to eigenbasis coefficients, c = U^H a.
    std::vector<cplx> to_q(const std::vector<cplx>& a) const {
        require_size(a);
        std::vector<cplx> c(n_);
        for (std::size_t k = 0; k < n_; ++k) {
            cplx acc(0.0, 0.0);
            for (std::size_t j = 0; j < n_; ++j)
                acc += std::conj(U_[j * n_ + k]) * a[j];
            c[k] = acc;
        }
        check_defect(a, c);
        return c;
    }

    // Eigenbasis coefficients back to plane-wave amplitudes, a = U c.
    std::vector<cplx> from_q(const std::vector<cplx>& c) const {
        require_size(c);
        std::vector<cplx> a(n_, cplx(0.0, 0.0));
        for (std::size_t j = 0; j < n_; ++j) {
            cplx acc(0.0, 0.0);
            const cplx* row = &U_[j * n_];
            for (std::size_t k = 0; k < n_; ++k) acc += row[k] * c[k];
            a[j] = acc;
        }
        check_defect(c, a);
        return a;
    }

private:
    std::size_t idx(std::int64_t m) const {
        return static_cast<std::size_t>(m + M_);
    }
    void require_size(const std::vector<cplx>& x) const {
        if (x.size() != n_)
            throw Error("FiberBasis: vector does not match the window");
    }
    static double mass_of(const std::vector<cplx>& x) {
        double s = 0.0;
        for (const auto& v : x) s += std::norm(v);
        return s;
    }
    void check_defect(const std::vector<cplx>& in,
                      const std::vector<cplx>& out) const {
        const double mi = mass_of(in);
        if (mi <= 0.0) return;
        if (std::fabs(mass_of(out) - mi) > kDefectTol * mi) {
            std::ostringstream os;
            os << "FiberBasis: window of half-width " << M_
               << " truncates the state (mass defect "
               << std::fabs(mass_of(out) - mi) / mi << ")";
            throw TruncationInsufficient(os.str());
        }
    }

    std::int64_t M_;
    std::size_t n_;
    std::int64_t center_;
    double phi_ = 0.0;
    bool nudged_ = false;
    std::vector<cplx> U_;
    std::vector<double> energies_;
};

inline std::vector<cplx> to_qbasis(const FiberBasis& basis,
                                   const FiberWavefunction& psi) {
    return basis.to_q(psi.amps);
}

inline void from_qbasis(const FiberBasis& basis, const std::vector<cplx>& c,
                        FiberWavefunction& psi) {
    psi.amps = basis.from_q(c);
}

inline double mean_energy(const FiberBasis& basis,
                          const FiberWavefunction& psi) {
    const auto c = basis.to_q(psi.amps);
    double e = 0.0;
    for (std::int64_t k = -psi.M; k <= psi.M; ++k)
        e += std::norm(c[static_cast<std::size_t>(k + psi.M)]) * basis.energy(k);
    return e;
}

// Mean momentum of the retained mass; diagonal in the plane-wave amplitudes.
inline double mean_momentum(const FiberWavefunction& psi) {
    double m = 0.0;
    for (std::size_t i = 0; i < psi.amps.size(); ++i)
        m += std::norm(psi.amps[i]) * psi.momentum(static_cast<std::int64_t>(i));
    return m;
}

// <e^{iqP}>: characteristic function of the momentum distribution carried by
// the retained amplitudes.
inline cplx momentum_char(const FiberWavefunction& psi, double q) {
    cplx acc(0.0, 0.0);
    for (std::size_t i = 0; i < psi.amps.size(); ++i)
        acc += std::norm(psi.amps[i])
               * std::polar(1.0, q * psi.momentum(static_cast<std::int64_t>(i)));
    return acc;
}

// |<a|b>|^2 with amplitudes matched by their integer window labels; the
// quasimomenta may differ by rounding noise without affecting the pairing.
inline double fidelity(const FiberWavefunction& a, const FiberWavefunction& b) {
    cplx acc(0.0, 0.0);
    for (std::int64_t ma = -a.M; ma <= a.M; ++ma) {
        const std::int64_t mb = a.center + ma - b.center;
        if (mb < -b.M || mb > b.M) continue;
        acc += std::conj(a.at(ma)) * b.at(mb);
    }
    return std::norm(acc);
}

// Free evolution for a time dt: eigenmodes pick up phases
// e^{-i dt E_k / lambda^varrho}. The transform into the eigenbasis and back
// is the only lossy step; its mass defect is booked into leaked_mass.
inline void free_flight(const FiberBasis& basis, FiberWavefunction& psi,
                        double dt, double lam_rho) {
    if (!(dt >= 0.0) || !std::isfinite(dt))
        throw Error("free_flight: dt must be finite and >= 0");
    if (!(lam_rho > 0.0))
        throw Error("free_flight: lambda^varrho must be positive");
    if (basis.M() != psi.M || basis.center() != psi.center)
        throw Error("free_flight: basis window does not match the state");
    if (dt == 0.0) return;
    const double before = psi.mass();
    auto c = basis.to_q(psi.amps);
    const double w = dt / lam_rho;
    for (std::int64_t k = -psi.M; k <= psi.M; ++k)
        c[static_cast<std::size_t>(k + psi.M)] *=
            std::polar(1.0, -w * basis.energy(k));
    psi.amps = basis.from_q(c);
    psi.leaked_mass += before - psi.mass();
}

// Momentum kick e^{ivX}: every plane wave shifts by v, which in fiber labels
// is a pure relabeling of (phi, center) with the amplitudes untouched. The
// window is then re-centered on the amplitude centroid so repeated kicks and
// accumulated diffraction cannot walk the support into the boundary; mass
// shifted out of the window goes to leaked_mass.
inline void kick(FiberWavefunction& psi, double v) {
    if (!std::isfinite(v)) throw Error("kick: v must be finite");
    if (std::fabs(v) >= 0.5 * static_cast<double>(psi.M))
        throw WindowOverflow("kick: |v| must stay below M/2");
    const double total = psi.phi + v;
    const double wrapped = total - std::floor(total + 0.5);
    const std::int64_t carry = std::llround(total - wrapped);
    const double m = psi.mass();
    std::int64_t shift = 0;
    if (m > 0.0) {
        double mu = 0.0;
        for (std::int64_t o = -psi.M; o <= psi.M; ++o)
            mu += std::norm(psi.at(o)) * static_cast<double>(o);
        shift = std::llround(mu / m);
    }
    if (shift != 0) {
        std::vector<cplx> next(psi.amps.size(), cplx(0.0, 0.0));
        double kept = 0.0;
        for (std::int64_t o = -psi.M; o <= psi.M; ++o) {
            const std::int64_t src = o + shift;
            if (src < -psi.M || src > psi.M) continue;
            next[static_cast<std::size_t>(o + psi.M)] = psi.at(src);
            kept += std::norm(psi.at(src));
        }
        const double dropped = m - kept;
        if (dropped > 0.1 * m)
            throw WindowOverflow("kick: re-centering would drop dominant mass");
        psi.amps = std::move(next);
        psi.leaked_mass += dropped;
    }
    psi.phi = wrapped;
    psi.center += carry + shift;
}

struct UnravelingConfig {
    double lambda = 0.1;      // scale parameter, in (0, 1)
    double varrho = 1.0;      // time-rescaling exponent, > 0
    double p0 = 10.2;         // initial plane-wave momentum
    double t_end = 1.0;
    std::int64_t M = 48;      // window half-width, >= 16
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

struct UnravelingResult {
    FiberWavefunction psi;    // state at t_end
    std::int64_t kicks = 0;
    std::int64_t nudges = 0;  // band-edge nudges applied to the fiber
    double energy = 0.0;      // mean energy of the retained mass at t_end
    // |<bloch_k|psi>|^2 at t_end, on the same labels as psi.momentum(i);
    // the plane marginal |amps|^2 and this band marginal differ mainly near
    // band edges, where a Bloch state spreads its plane-wave weight across
    // the gap partner.
    std::vector<double> band_weights;
};

// One realization of the kicked evolution: exponential(R) free flights under
// the comb Hamiltonian, with time scaled by 1/lambda^varrho, alternate with
// momentum kicks drawn from the noise density. Averaging |amps|^2 over
// realizations estimates the momentum distribution of the open evolution.
inline UnravelingResult levy_trajectory(const UnravelingConfig& cfg,
                                        const Dispersion& bands,
                                        const NoiseModel* noise) {
    if (!(cfg.lambda > 0.0 && cfg.lambda < 1.0))
        throw Error("levy_trajectory: lambda must lie in (0, 1)");
    if (!(cfg.varrho > 0.0))
        throw Error("levy_trajectory: varrho must be positive");
    if (!(cfg.t_end >= 0.0) || !std::isfinite(cfg.t_end))
        throw Error("levy_trajectory: t_end must be finite and >= 0");
    UnravelingResult out;
    out.psi = plane_wave(cfg.p0, cfg.M);
    Rng rng(cfg.seed, cfg.stream);
    const double lam_rho = std::pow(cfg.lambda, cfg.varrho);
    const double rate = noise ? noise->rate() : 0.0;
    std::optional<FiberBasis> basis;
    double basis_phi = 0.0;
    std::int64_t basis_center = 0;
    auto refresh = [&]() {
        if (basis && basis_phi == out.psi.phi && basis_center == out.psi.center)
            return;
        basis.emplace(bands, out.psi.phi, out.psi.center, out.psi.M);
        if (basis->nudged()) {
            out.psi.phi = basis->phi_used();
            ++out.nudges;
        }
        basis_phi = out.psi.phi;
        basis_center = out.psi.center;
    };
    double t = 0.0;
    while (true) {
        const double dt_next =
            rate > 0.0 ? rng.exponential(rate) : 2.0 * (cfg.t_end - t) + 1.0;
        refresh();
        if (t + dt_next >= cfg.t_end) {
            free_flight(*basis, out.psi, cfg.t_end - t, lam_rho);
            break;
        }
        free_flight(*basis, out.psi, dt_next, lam_rho);
        t += dt_next;
        kick(out.psi, noise->sample(rng));
        ++out.kicks;
    }
    refresh();
    const auto c = basis->to_q(out.psi.amps);
    out.band_weights.resize(c.size());
    for (std::int64_t k = -out.psi.M; k <= out.psi.M; ++k) {
        const auto i = static_cast<std::size_t>(k + out.psi.M);
        out.band_weights[i] = std::norm(c[i]);
        out.energy += out.band_weights[i] * basis->energy(k);
    }
    return out;
}

inline UnravelingResult levy_trajectory(const UnravelingConfig& cfg,
                                        const Dispersion& bands,
                                        const NoiseModel& noise) {
    return levy_trajectory(cfg, bands, &noise);
}

// Reflected-wave weight |<p - n|psi_t>|^2 for a plane-wave start near the
// Bragg condition p ~ n/2. The comb couples the incident wave to its mirror
// partner across the n-th gap; at exact resonance the weight oscillates with
// beat period 2 pi lambda^varrho / gap(n).
inline std::vector<double> pendellosung_probe(const Dispersion& bands, double p,
                                              std::int64_t n,
                                              const std::vector<double>& t_grid,
                                              double lam_rho,
                                              std::int64_t M = 48) {
    if (n < 1) throw Error("pendellosung_probe: n must be >= 1");
    if (std::fabs(p - 0.5 * static_cast<double>(n)) > 0.45)
        throw Error("pendellosung_probe: start must stay near the Bragg "
                    "momentum n/2");
    if (!(lam_rho > 0.0))
        throw Error("pendellosung_probe: lambda^varrho must be positive");
    if (M < n + 8)
        throw WindowOverflow(
            "pendellosung_probe: window must cover the reflected branch");
    const auto psi = plane_wave(p, M);
    const FiberBasis basis(bands, psi.phi, psi.center, M);
    const auto c0 = basis.to_q(psi.amps);
    std::vector<double> out;
    out.reserve(t_grid.size());
    for (const double t : t_grid) {
        cplx acc(0.0, 0.0);
        for (std::int64_t k = -M; k <= M; ++k)
            acc += basis.u(-n, k)
                   * std::polar(1.0, -t / lam_rho * basis.energy(k))
                   * c0[static_cast<std::size_t>(k + M)];
        out.push_back(std::norm(acc));
    }
    return out;
}

namespace detail {

// Largest reflected weight over a bit more than one beat period at detuning
// delta from the n-th Bragg condition.
inline double peak_reflection(const Dispersion& bands, std::int64_t n,
                              double delta, std::int64_t M) {
    const double gap = bands.band_gap(static_cast<int>(n));
    const double omega =
        std::hypot(2.0 * static_cast<double>(n) * delta, gap);
    const double horizon = 1.1 * kTwoPi / omega;
    std::vector<double> grid(192);
    for (std::size_t i = 0; i < grid.size(); ++i)
        grid[i] = horizon * static_cast<double>(i + 1)
                  / static_cast<double>(grid.size());
    const auto r = pendellosung_probe(
        bands, 0.5 * static_cast<double>(n) + delta, n, grid, 1.0, M);
    return *std::max_element(r.begin(), r.end());
}

} // namespace detail

// Half-width in |p - n/2| of the momentum window around the n-th Bragg
// condition inside which the peak reflected weight over time exceeds the
// threshold. The two-level picture puts it near gap(n)/(4 |n/2|), so it
// decays like 1/n with a prefactor set by alpha.
inline double reflection_band_width(const Dispersion& bands, std::int64_t n,
                                    double threshold = 0.5,
                                    std::int64_t M = 48) {
    if (n < 2) throw Error("reflection_band_width: n must be >= 2");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw Error("reflection_band_width: threshold must lie in (0, 1)");
    if (bands.alpha() == 0.0) return 0.0;
    auto above = [&](double delta) {
        return detail::peak_reflection(bands, n, delta, M) >= threshold;
    };
    if (!above(0.0)) return 0.0;
    const double gap = bands.band_gap(static_cast<int>(n));
    double hi = 0.5 * gap / static_cast<double>(n);
    while (above(hi)) {
        hi *= 2.0;
        if (hi > 0.1)
            throw Error("reflection_band_width: window exceeds the near-Bragg "
                        "regime |p - n/2| <= 0.1");
    }
    double lo = 0.0;
    for (int i = 0; i < 40 && hi - lo > 1e-4 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (above(mid) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace combdiff

#pragma once

// Scalar fiber semigroups on a momentum grid.  Each off-diagonal
// f(p) = <p-k|rho|p+k> of a kick-covariant state evolves autonomously
// under one of three generators: the quantum fiber (band-energy drift
// and kappa-product kicks), its classical analogue (parabolic drift
// and |kappa|^2 kicks), and a hybrid with quantum drift but classical
// kicks.  Densities are complex arrays over a uniform grid; evolution
// applies exact drift phases with a Lawson RK4 step for the bounded
// jump part, and a weighted jump-chain unraveling provides an
// independent Monte Carlo estimate of the same characteristic values.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "combdiff/bandstructure.hpp"
#include "combdiff/bloch.hpp"
#include "combdiff/errors.hpp"
#include "combdiff/noise.hpp"
#include "combdiff/rng.hpp"
#include "combdiff/stats.hpp"
#include "combdiff/zone.hpp"

namespace combdiff {

// Uniform window [center - half_width, center + half_width] in momentum.
struct MomentumGrid {
    double center = 0.0;
    double h = 0.005;
    std::int64_t count = 4096;

    double half_width() const { return 0.5 * h * static_cast<double>(count - 1); }
    double lo() const { return center - half_width(); }
    double hi() const { return center + half_width(); }
    double point(std::int64_t i) const { return lo() + h * static_cast<double>(i); }

    void validate() const {
        if (!std::isfinite(center))
            throw Error("momentum grid: center must be finite");
        if (!(h > 0.0) || h > 0.01)
            throw Error("momentum grid: spacing must lie in (0, 0.01]");
        if (count < 64)
            throw Error("momentum grid: need at least 64 points");
    }

    bool same_as(const MomentumGrid& o) const {
        return center == o.center && h == o.h && count == o.count;
    }
};

inline MomentumGrid default_grid(double p_center) {
    return MomentumGrid{p_center, 0.005, 4096};
}

// One fiber: the off-diagonal offset k and complex values on the grid.
struct FiberDensity {
    MomentumGrid grid;
    double k = 0.0;
    std::vector<cplx> values;

    double mass() const {
        double s = 0.0;
        for (const auto& v : values) s += std::abs(v);
        return grid.h * s;
    }
};

// Normalized Gaussian profile; the discrete sum times h is exactly one.
inline FiberDensity gaussian_density(const MomentumGrid& grid, double mean, double width,
                                     double k = 0.0) {
    grid.validate();
    if (!(width > 0.0) || !std::isfinite(mean))
        throw Error("gaussian_density: need finite mean and positive width");
    FiberDensity f;
    f.grid = grid;
    f.k = k;
    f.values.resize(static_cast<std::size_t>(grid.count));
    double tot = 0.0;
    for (std::int64_t j = 0; j < grid.count; ++j) {
        const double z = (grid.point(j) - mean) / width;
        const double val = std::exp(-0.5 * z * z);
        f.values[static_cast<std::size_t>(j)] = cplx(val, 0.0);
        tot += val;
    }
    const double scale = 1.0 / (tot * grid.h);
    for (auto& v : f.values) v *= scale;
    return f;
}

// Trapezoidal integral of the values; for k = 0 this is the total mass,
// in general one point of the position characteristic function.
inline cplx char_value(const FiberDensity& f) {
    if (f.values.empty()) return cplx(0.0, 0.0);
    cplx s(0.0, 0.0);
    for (const auto& v : f.values) s += v;
    s -= 0.5 * (f.values.front() + f.values.back());
    return s * f.grid.h;
}

inline double l1_distance(const FiberDensity& a, const FiberDensity& b) {
    if (!a.grid.same_as(b.grid))
        throw Error("l1_distance: densities live on different grids");
    double s = 0.0;
    for (std::size_t j = 0; j < a.values.size(); ++j) s += std::abs(a.values[j] - b.values[j]);
    return a.grid.h * s;
}

enum class FiberKind { quantumFiber, classicalFiber, hybrid };

// One discretized deposit of the gain kernel: a jump out of grid point
// src lands between dst and dst + 1 with linear weights.  Coefficients
// are mass rates; the sum over a column is at most the total kick rate.
struct JumpTap {
    std::int32_t src = 0;
    std::int32_t dst = 0;
    double frac = 0.0;
    cplx coef;
};

struct GeneratorSpec {
    FiberKind kind = FiberKind::classicalFiber;
    double k = 0.0;
    double lambda = 0.1;
    double varrho = 1.0;
    double rate = 0.0;
    MomentumGrid grid;
    std::vector<double> drift; // phase rate omega(p_j); drift acts as exp(i omega t)
    std::vector<JumpTap> taps;

    double lam_rho() const { return std::pow(lambda, varrho); }
};

namespace detail {

// Shift a momentum off the band-edge lattice, preserving its side.
inline double off_edge(double p) {
    const double th = theta(p);
    if (std::fabs(th) >= 1e-9) return p;
    return th >= 0.0 ? p + (1e-9 - th) : p - (1e-9 + th);
}

// Gauss-Legendre nodes and weights on [-1, 1].
inline void gauss_legendre(int m, std::vector<double>& x, std::vector<double>& w) {
    x.assign(static_cast<std::size_t>(m), 0.0);
    w.assign(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < (m + 1) / 2; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (m + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 64; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < m; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            pp = m * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / pp;
            z -= dz;
            if (std::fabs(dz) < 1e-15) break;
        }
        x[static_cast<std::size_t>(i)] = -z;
        x[static_cast<std::size_t>(m - 1 - i)] = z;
        w[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(m - 1 - i)] =
            2.0 / ((1.0 - z * z) * pp * pp);
    }
}

struct KickNode {
    double v = 0.0;
    double w = 0.0; // quadrature weight times jump density
};

// Quadrature over the kick size, one Gauss rule per smooth piece of the
// jump density: a single stretched rule for the Gaussian profile, one
// rule per rectangular component otherwise.  The node count also sets
// how finely the deposited layers resolve the kick profile, so initial
// densities should be no narrower than the node spacing.
inline std::vector<KickNode> kick_nodes(const NoiseModel& model) {
    constexpr int kNodes = 64;
    std::vector<double> gx, gw;
    gauss_legendre(kNodes, gx, gw);
    std::vector<KickNode> out;
    if (model.components().empty()) {
        const double s = std::sqrt(model.sigma() / model.rate());
        const double reach = 7.5 * s;
        out.reserve(static_cast<std::size_t>(kNodes));
        for (int i = 0; i < kNodes; ++i) {
            const double v = reach * gx[static_cast<std::size_t>(i)];
            out.push_back({v, reach * gw[static_cast<std::size_t>(i)] * model.density(v)});
        }
        return out;
    }
    for (const auto& c : model.components()) {
        const double level = c.rate / (2.0 * c.width);
        for (int i = 0; i < kNodes; ++i) {
            const double v = c.width * gx[static_cast<std::size_t>(i)];
            out.push_back({v, c.width * gw[static_cast<std::size_t>(i)] * level});
        }
    }
    return out;
}

// Diffraction channels kept in the kernel columns: the shortlist that
// carries the bulk of |kappa|^2 plus its immediate neighbours.
inline std::vector<std::int64_t> channel_set(double p, double v) {
    const auto base = iset(p, v);
    std::vector<std::int64_t> out;
    out.reserve(3 * base.size());
    auto add = [&out](std::int64_t n) {
        for (auto m : out)
            if (m == n) return;
        out.push_back(n);
    };
    for (auto n : base) add(n);
    for (auto n : base) {
        add(n - 1);
        add(n + 1);
    }
    return out;
}

} // namespace detail

// Assemble the drift multiplier and the discretized gain kernel.  The
// quantum kernel couples kappa rows at the shifted arguments p' -+ k;
// the classical and hybrid kernels use the diagonal |kappa|^2 rows.
// Columns are rescaled so that the surviving channel set carries the
// exact marginal mass: the classical column rate is exactly the total
// kick rate, and the quantum column obeys the Cauchy-Schwarz bound.
// Pass a null model for drift-only (kick-free) evolution.
inline GeneratorSpec build_generator(FiberKind kind, double k, double lambda, double varrho,
                                     const MomentumGrid& grid, const Dispersion& bands,
                                     const NoiseModel* model) {
    grid.validate();
    if (!std::isfinite(k))
        throw Error("build_generator: k must be finite");
    if (!(lambda > 0.0) || !(lambda < 1.0))
        throw Error("build_generator: lambda must lie in (0, 1)");
    if (!(varrho > 0.0))
        throw Error("build_generator: varrho must be positive");

    GeneratorSpec spec;
    spec.kind = kind;
    spec.k = k;
    spec.lambda = lambda;
    spec.varrho = varrho;
    spec.rate = model ? model->rate() : 0.0;
    spec.grid = grid;
    const double lr = spec.lam_rho();

    spec.drift.resize(static_cast<std::size_t>(grid.count));
    for (std::int64_t j = 0; j < grid.count; ++j) {
        const double p = grid.point(j);
        spec.drift[static_cast<std::size_t>(j)] =
            kind == FiberKind::classicalFiber
                ? 4.0 * k * p / lr
                : (bands.energy(detail::off_edge(p + k)) - bands.energy(detail::off_edge(p - k)))
                      / lr;
    }
    if (!model || spec.rate <= 0.0) return spec;

    // Band-edge columns fall back to full kappa rows; elsewhere the
    // channel shortlist suffices.
    constexpr double kThetaFullRow = 5e-3;
    const double koff = kind == FiberKind::quantumFiber ? k : 0.0;
    const auto nodes = detail::kick_nodes(*model);
    const double lo = grid.lo();

    std::vector<double> posn;
    std::vector<cplx> coef;
    spec.taps.reserve(static_cast<std::size_t>(grid.count) * 8);

    for (std::int64_t jc = 0; jc < grid.count; ++jc) {
        const double s = grid.point(jc);
        const double sm = detail::off_edge(s - koff);
        const double sp = detail::off_edge(s + koff);
        posn.clear();
        coef.clear();
        double marg = 0.0; // averaged marginal |kappa|^2 mass under the kick nodes

        if (bands.alpha() == 0.0) {
            for (const auto& nd : nodes) {
                posn.push_back(s + nd.v);
                coef.push_back(cplx(nd.w, 0.0));
                marg += nd.w;
            }
        } else if (std::min(std::fabs(theta(sm)), std::fabs(theta(sp))) < kThetaFullRow) {
            for (const auto& nd : nodes) {
                const KappaRow rm = kappa_row(bands, sm, nd.v);
                std::optional<KappaRow> rp_store;
                const KappaRow* rp = &rm;
                if (koff != 0.0) {
                    rp_store = kappa_row(bands, sp, nd.v);
                    rp = &*rp_store;
                }
                if (std::fabs(rm.tail) > 1e-3 || std::fabs(rp->tail) > 1e-3)
                    throw TruncationInsufficient("build_generator: kappa row tail not captured");
                marg += nd.w * (1.0 - 0.5 * (rm.tail + rp->tail));
                const std::int64_t M = std::min(rm.M, rp->M);
                for (std::int64_t n = -M; n <= M; ++n) {
                    const cplx c = koff != 0.0
                                       ? nd.w * rm.at(n) * std::conj(rp->at(n))
                                       : cplx(nd.w * std::norm(rm.at(n)), 0.0);
                    if (std::abs(c) < 1e-15 * spec.rate) continue;
                    posn.push_back(s + nd.v + static_cast<double>(n));
                    coef.push_back(c);
                }
            }
        } else {
            const BlochBasis srcm(bands, sm);
            std::optional<BlochBasis> srcp_store;
            const BlochBasis* srcp = &srcm;
            if (koff != 0.0) {
                srcp_store.emplace(bands, sp);
                srcp = &*srcp_store;
            }
            for (const auto& nd : nodes) {
                for (const std::int64_t n : detail::channel_set(s, nd.v)) {
                    const double dm = sm + nd.v + static_cast<double>(n);
                    const double dp = sp + nd.v + static_cast<double>(n);
                    if (std::fabs(theta(dm)) < 1e-10 || std::fabs(theta(dp)) < 1e-10) continue;
                    const cplx km = kappa_exact(srcm, BlochBasis(bands, dm), n, nd.v);
                    const cplx kp =
                        koff != 0.0 ? kappa_exact(*srcp, BlochBasis(bands, dp), n, nd.v) : km;
                    marg += nd.w * 0.5 * (std::norm(km) + std::norm(kp));
                    const cplx c = nd.w * km * std::conj(kp);
                    if (std::abs(c) < 1e-15 * spec.rate) continue;
                    posn.push_back(s + nd.v + static_cast<double>(n));
                    coef.push_back(c);
                }
            }
        }

        if (!std::isfinite(marg) || !(marg > 0.1 * spec.rate))
            throw TruncationInsufficient("build_generator: kernel column mass not captured");
        const double scale = spec.rate / marg;
        for (std::size_t i = 0; i < posn.size(); ++i) {
            const double x = (posn[i] - lo) / grid.h;
            const double fl = std::floor(x);
            const auto i0 = static_cast<std::int64_t>(fl);
            if (i0 < 0 || i0 >= grid.count - 1) continue; // deposits beyond the window are lost
            spec.taps.push_back({static_cast<std::int32_t>(jc), static_cast<std::int32_t>(i0),
                                 x - fl, coef[i] * scale});
        }
    }
    return spec;
}

// Propagate a fiber density for t_end with steps of at most dt: exact
// drift phases around a classical RK4 substep for the bounded jump
// part (Lawson scheme), so the k = 0 mass balance is exact.
inline FiberDensity evolve(const FiberDensity& f0, const GeneratorSpec& spec, double t_end,
                           double dt) {
    if (!f0.grid.same_as(spec.grid))
        throw Error("evolve: density and generator grids differ");
    if (f0.values.size() != static_cast<std::size_t>(spec.grid.count))
        throw Error("evolve: density size does not match its grid");
    if (std::fabs(f0.k - spec.k) > 1e-12 * std::max(1.0, std::fabs(spec.k)))
        throw Error("evolve: density offset k does not match the generator");
    if (!(t_end >= 0.0) || !std::isfinite(t_end))
        throw Error("evolve: horizon must be finite and nonnegative");
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw StabilityViolation("evolve: step must be positive");
    if (dt * spec.rate > 0.1 + 1e-12)
        throw StabilityViolation("evolve: step times kick rate exceeds 0.1");

    FiberDensity f = f0;
    if (t_end == 0.0) return f;
    const auto n = static_cast<std::size_t>(spec.grid.count);
    const auto steps = static_cast<std::int64_t>(std::ceil(t_end / dt - 1e-12));
    const double ht = t_end / static_cast<double>(steps);

    if (spec.taps.empty() && spec.rate <= 0.0) {
        for (std::size_t j = 0; j < n; ++j)
            f.values[j] *= std::polar(1.0, spec.drift[j] * t_end);
        return f;
    }

    std::vector<cplx> e1(n), e2(n);
    for (std::size_t j = 0; j < n; ++j) {
        e1[j] = std::polar(1.0, 0.5 * ht * spec.drift[j]);
        e2[j] = e1[j] * e1[j];
    }

    auto jump_part = [&](const std::vector<cplx>& g, std::vector<cplx>& out) {
        for (std::size_t j = 0; j < n; ++j) out[j] = -spec.rate * g[j];
        for (const auto& tap : spec.taps) {
            const cplx c = tap.coef * g[static_cast<std::size_t>(tap.src)];
            out[static_cast<std::size_t>(tap.dst)] += (1.0 - tap.frac) * c;
            out[static_cast<std::size_t>(tap.dst) + 1] += tap.frac * c;
        }
    };

    std::vector<cplx>& u = f.values;
    std::vector<cplx> k1(n), k2(n), k3(n), k4(n), w(n);
    const double half = 0.5 * ht;
    for (std::int64_t step = 0; step < steps; ++step) {
        jump_part(u, k1);
        for (std::size_t j = 0; j < n; ++j) w[j] = e1[j] * (u[j] + half * k1[j]);
        jump_part(w, k2);
        for (std::size_t j = 0; j < n; ++j) k2[j] *= std::conj(e1[j]);
        for (std::size_t j = 0; j < n; ++j) w[j] = e1[j] * (u[j] + half * k2[j]);
        jump_part(w, k3);
        for (std::size_t j = 0; j < n; ++j) k3[j] *= std::conj(e1[j]);
        for (std::size_t j = 0; j < n; ++j) w[j] = e2[j] * (u[j] + ht * k3[j]);
        jump_part(w, k4);
        for (std::size_t j = 0; j < n; ++j) k4[j] *= std::conj(e2[j]);
        for (std::size_t j = 0; j < n; ++j)
            u[j] = e2[j]
                   * (u[j] + (ht / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
    }
    for (const auto& v : u)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw StabilityViolation("evolve: values diverged");
    return f;
}

namespace detail {

struct KickOutcome {
    std::int64_t n = 0;
    cplx weight{1.0, 0.0};
};

// Sample a diffraction channel for kick v from momentum p and return
// the importance weight of the quantum kernel against the classical
// proposal.  Near band edges (or at small |p|) the proposal mixes the
// classical row with the rows at p -+ k, which bounds the weight by 2.
inline KickOutcome fiber_kick(const Dispersion& bands, double p, double v, double k,
                              bool quantum, Rng& rng) {
    if (bands.alpha() == 0.0) return {0, cplx(1.0, 0.0)};
    const double pv = p + v;
    const auto chans = iset(p, v);

    bool fast = std::fabs(p) > 5.0 && std::fabs(theta(p)) > 0.02 && std::fabs(theta(pv)) > 0.02;
    for (std::size_t i = 0; fast && i < chans.size(); ++i)
        fast = std::fabs(theta(pv + static_cast<double>(chans[i]))) > 0.02;

    if (fast) {
        const BlochBasis src(bands, p);
        std::array<double, 4> wts{};
        double captured = 0.0;
        for (std::size_t i = 0; i < chans.size(); ++i) {
            const double pd = pv + static_cast<double>(chans[i]);
            wts[i] = std::norm(kappa_exact(src, BlochBasis(bands, pd), chans[i], v));
            captured += wts[i];
        }
        if (captured <= 1.0 + 1e-9) {
            wts[0] += 1.0 - captured; // off-shortlist remainder rides with n = 0
            double u = rng.uniform();
            std::size_t pick = chans.size() - 1;
            for (std::size_t i = 0; i < chans.size(); ++i) {
                u -= wts[i];
                if (u <= 0.0) {
                    pick = i;
                    break;
                }
            }
            if (!(wts[pick] > 0.0)) return {0, cplx(1.0, 0.0)};
            const std::int64_t n = chans[pick];
            if (!quantum || k == 0.0) return {n, cplx(1.0, 0.0)};
            const double pd = pv + static_cast<double>(n);
            const cplx km = kappa_exact(BlochBasis(bands, off_edge(p - k)),
                                        BlochBasis(bands, off_edge(pd - k)), n, v);
            const cplx kp = kappa_exact(BlochBasis(bands, off_edge(p + k)),
                                        BlochBasis(bands, off_edge(pd + k)), n, v);
            return {n, km * std::conj(kp) / wts[pick]};
        }
        // inconsistent shortlist mass; fall through to the full rows
    }

    const KappaRow r0 = kappa_row(bands, off_edge(p), v);
    const double m0 = 1.0 - r0.tail;
    if (m0 < 0.5)
        throw TruncationInsufficient("fiber_kick: diffraction mass not captured");
    if (!quantum || k == 0.0) {
        double u = rng.uniform() * m0;
        std::int64_t pick = 0;
        for (std::int64_t n = -r0.M; n <= r0.M; ++n) {
            u -= std::norm(r0.at(n));
            if (u <= 0.0) {
                pick = n;
                break;
            }
        }
        return {pick, cplx(1.0, 0.0)};
    }

    const KappaRow rm = kappa_row(bands, off_edge(p - k), v);
    const KappaRow rp = kappa_row(bands, off_edge(p + k), v);
    const double mm = 1.0 - rm.tail, mp = 1.0 - rp.tail;
    if (mm < 0.5 || mp < 0.5)
        throw TruncationInsufficient("fiber_kick: shifted diffraction mass not captured");
    auto at = [](const KappaRow& r, std::int64_t n) {
        return std::llabs(n) <= r.M ? r.at(n) : cplx(0.0, 0.0);
    };
    const std::int64_t M = std::max(r0.M, std::max(rm.M, rp.M));
    std::vector<double> q(static_cast<std::size_t>(2 * M + 1), 0.0);
    double qs = 0.0;
    for (std::int64_t n = -M; n <= M; ++n) {
        const double val = 0.5 * std::norm(at(r0, n)) / m0 + 0.25 * std::norm(at(rm, n)) / mm
                           + 0.25 * std::norm(at(rp, n)) / mp;
        q[static_cast<std::size_t>(n + M)] = val;
        qs += val;
    }
    double u = rng.uniform() * qs;
    std::int64_t pick = 0;
    for (std::int64_t n = -M; n <= M; ++n) {
        u -= q[static_cast<std::size_t>(n + M)];
        if (u <= 0.0) {
            pick = n;
            break;
        }
    }
    const double qp = q[static_cast<std::size_t>(pick + M)] / qs;
    if (!(qp > 0.0)) return {0, cplx(1.0, 0.0)};
    return {pick, at(rm, pick) * std::conj(at(rp, pick)) / qp};
}

} // namespace detail

struct UnravelingEstimate {
    cplx value{0.0, 0.0};
    double se_re = 0.0;
    double se_im = 0.0;
    std::int64_t paths = 0;
    double max_weight = 0.0;
};

// Monte Carlo estimate of char_value(evolve(f0, spec, t_end, .)): the
// classical jump chain with per-kick importance weights for the
// quantum kernel and exact drift phases between kicks.  The initial
// density must be (numerically) real and nonnegative.
inline UnravelingEstimate weighted_unraveling(const GeneratorSpec& spec, const FiberDensity& f0,
                                              double t_end, std::int64_t n_paths,
                                              const Dispersion& bands, const NoiseModel* model,
                                              std::uint64_t seed, std::uint64_t stream0 = 0) {
    if (!f0.grid.same_as(spec.grid))
        throw Error("weighted_unraveling: density and generator grids differ");
    if (std::fabs(f0.k - spec.k) > 1e-12 * std::max(1.0, std::fabs(spec.k)))
        throw Error("weighted_unraveling: density offset k does not match the generator");
    if (!(t_end >= 0.0) || n_paths < 1)
        throw Error("weighted_unraveling: need nonnegative horizon and at least one path");
    if (spec.rate > 0.0 && !model)
        throw Error("weighted_unraveling: generator has kicks but no model was given");

    const auto n = f0.values.size();
    double peak = 0.0;
    for (const auto& v : f0.values) peak = std::max(peak, std::abs(v));
    std::vector<double> cdf(n, 0.0);
    double tot = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const cplx v = f0.values[j];
        if (v.real() < -1e-9 * peak || std::fabs(v.imag()) > 1e-9 * peak)
            throw Error("weighted_unraveling: initial density must be real and nonnegative");
        tot += std::max(v.real(), 0.0);
        cdf[j] = tot;
    }
    if (!(tot > 0.0)) throw Error("weighted_unraveling: initial density has no mass");
    const double start_mass = tot * f0.grid.h;

    const bool quantum = spec.kind == FiberKind::quantumFiber;
    const double lr = spec.lam_rho();
    auto omega = [&](double p) {
        if (spec.kind == FiberKind::classicalFiber) return 4.0 * spec.k * p / lr;
        return (bands.energy(detail::off_edge(p + spec.k))
                - bands.energy(detail::off_edge(p - spec.k)))
               / lr;
    };

    MeanVar acc_re, acc_im;
    double wmax = 0.0;
    for (std::int64_t path = 0; path < n_paths; ++path) {
        Rng rng(seed, stream0 + static_cast<std::uint64_t>(path));
        const double u0 = rng.uniform() * tot;
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u0);
        double p = f0.grid.point(static_cast<std::int64_t>(it - cdf.begin()));
        cplx w(start_mass, 0.0);
        double t = 0.0;
        if (spec.rate > 0.0) {
            for (;;) {
                const double gap = rng.exponential(spec.rate);
                if (t + gap >= t_end) break;
                w *= std::polar(1.0, omega(p) * gap);
                const double v = model->sample(rng);
                const auto kick = detail::fiber_kick(bands, p, v, spec.k, quantum, rng);
                w *= kick.weight;
                if (std::abs(w) > 1e3 * start_mass)
                    throw WeightBlowup("weighted_unraveling: importance weight exceeded 1e3");
                p = detail::off_edge(p + v + static_cast<double>(kick.n));
                t += gap;
            }
        }
        w *= std::polar(1.0, omega(p) * (t_end - t));
        wmax = std::max(wmax, std::abs(w));
        acc_re.add(w.real());
        acc_im.add(w.imag());
    }

    UnravelingEstimate est;
    est.value = cplx(acc_re.mean, acc_im.mean);
    est.se_re = acc_re.se();
    est.se_im = acc_im.se();
    est.paths = n_paths;
    est.max_weight = wmax;
    return est;
}

struct SemigroupDistances {
    double quantum_classical = 0.0;
    double quantum_hybrid = 0.0;
};

// Evolve the same initial fiber under all three kinds and report the
// L1 distances from the quantum evolution.  The hybrid generator
// shares the classical kernel; only the drift differs.
inline SemigroupDistances compare_semigroups(double k, double lambda, double varrho, double t,
                                             const FiberDensity& f0, const Dispersion& bands,
                                             const NoiseModel* model, double dt = 0.0) {
    if (std::fabs(f0.k - k) > 1e-12 * std::max(1.0, std::fabs(k)))
        throw Error("compare_semigroups: density offset does not match k");
    GeneratorSpec gq =
        build_generator(FiberKind::quantumFiber, k, lambda, varrho, f0.grid, bands, model);
    GeneratorSpec gc =
        build_generator(FiberKind::classicalFiber, k, lambda, varrho, f0.grid, bands, model);
    GeneratorSpec gh = gc;
    gh.kind = FiberKind::hybrid;
    gh.drift = gq.drift;
    const double step =
        dt > 0.0 ? dt : (gq.rate > 0.0 ? 0.099 / gq.rate : std::max(t / 16.0, 1e-3));
    const FiberDensity fq = evolve(f0, gq, t, step);
    const FiberDensity fc = evolve(f0, gc, t, step);
    const FiberDensity fh = evolve(f0, gh, t, step);
    return {l1_distance(fq, fc), l1_distance(fq, fh)};
}

} // namespace combdiff

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "combdiff/bandstructure.hpp"
#include "combdiff/bloch.hpp"
#include "combdiff/errors.hpp"
#include "combdiff/noise.hpp"
#include "combdiff/params.hpp"
#include "combdiff/rng.hpp"
#include "combdiff/stats.hpp"
#include "combdiff/threads.hpp"
#include "combdiff/zone.hpp"

namespace combdiff {

// Shared context for drawing momentum jumps p -> p + v + n: the kick v has
// density j/R and the integer diffraction shift n has law |kappa_v(p, n)|^2.
struct JumpContext {
    const Dispersion& bands;
    const NoiseModel& noise;
    // above this momentum, and away from band edges, the four-channel
    // shortlist carries all but O(1/p^2) of the diffraction mass
    double p_fast = 5.0;
    double theta_min = 0.02;
    std::int64_t row_M0 = 64;
    std::int64_t row_M_cap = 512;
    double row_tail_tol = 1e-8;
};

struct JumpSample {
    double v = 0.0;
    std::int64_t n = 0;
    double p_new = 0.0;
};

namespace detail {

inline JumpSample jump_from_row(const Dispersion& bands, double p_prev, double v,
                                const JumpContext& ctx, Rng& rng) {
    const KappaRow row =
        kappa_row(bands, p_prev, v, ctx.row_M0, ctx.row_M_cap, ctx.row_tail_tol);
    const double mass = 1.0 - row.tail;
    if (mass < 0.5)
        throw TruncationInsufficient("jump_from_row: diffraction mass not captured");
    double u = rng.uniform() * mass;
    std::int64_t pick = 0;
    for (std::int64_t n = -row.M; n <= row.M; ++n) {
        u -= std::norm(row.at(n));
        if (u <= 0.0) {
            pick = n;
            break;
        }
    }
    return {v, pick, p_prev + v + static_cast<double>(pick)};
}

} // namespace detail

inline JumpSample jump_sample(double p_prev, const JumpContext& ctx, Rng& rng) {
    const double v = ctx.noise.sample(rng);
    const double pv = p_prev + v;
    if (ctx.bands.alpha() == 0.0) return {v, 0, pv};

    const bool fast = std::fabs(p_prev) > ctx.p_fast
                      && std::fabs(theta(p_prev)) > ctx.theta_min
                      && std::fabs(theta(pv)) > ctx.theta_min;
    if (fast) {
        const BlochBasis src(ctx.bands, p_prev);
        const auto chans = iset(p_prev, v);
        std::array<double, 4> w{};
        double captured = 0.0;
        for (std::size_t i = 0; i < chans.size(); ++i) {
            const double pd = pv + static_cast<double>(chans[i]);
            if (std::fabs(theta(pd)) < 1e-11) continue;
            const BlochBasis dst(ctx.bands, pd);
            w[i] = std::norm(kappa_exact(src, dst, chans[i], v));
            captured += w[i];
        }
        if (captured <= 1.0 + 1e-9) {
            w[0] += 1.0 - captured; // off-shortlist remainder defaults to n = 0
            double u = rng.uniform();
            std::int64_t pick = chans.back();
            for (std::size_t i = 0; i < chans.size(); ++i) {
                u -= w[i];
                if (u <= 0.0) {
                    pick = chans[i];
                    break;
                }
            }
            return {v, pick, pv + static_cast<double>(pick)};
        }
        // shortlist weights are inconsistent; fall through to the full row
    }
    return detail::jump_from_row(ctx.bands, p_prev, v, ctx, rng);
}

// Jump-rate density J(p_new, p_prev) = sum_n j(p_new - p_prev - n)
// |kappa_{p_new - p_prev - n}(p_prev, n)|^2, defined off the band-edge lattice.
inline double kernel_eval(double p_new, double p_prev, const JumpContext& ctx) {
    if (std::fabs(theta(p_new)) < 1e-11 || std::fabs(theta(p_prev)) < 1e-11)
        return 0.0;
    const double gap = p_new - p_prev;
    double reach = ctx.noise.support_radius();
    if (!std::isfinite(reach))
        reach = 12.0 * std::sqrt(ctx.noise.sigma() / ctx.noise.rate());
    const auto n_lo = static_cast<std::int64_t>(std::ceil(gap - reach));
    const auto n_hi = static_cast<std::int64_t>(std::floor(gap + reach));
    if (n_lo > n_hi) return 0.0;
    if (ctx.bands.alpha() == 0.0) return ctx.noise.density(gap);
    const BlochBasis src(ctx.bands, p_prev);
    const BlochBasis dst(ctx.bands, p_new);
    double total = 0.0;
    for (std::int64_t n = n_lo; n <= n_hi; ++n) {
        const double v = gap - static_cast<double>(n);
        const double j = ctx.noise.density(v);
        if (j == 0.0) continue;
        total += j * std::norm(kappa_exact(src, dst, n, v));
    }
    return total;
}

enum class RecordMode { none, events, dense };

struct TrajectoryConfig {
    CombParams comb;
    std::optional<NoiseModel> noise; // absent: free ballistic motion
    double K0 = 0.0;
    double t_end = 0.0;
    RecordMode record = RecordMode::none;
    double dense_dt = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

struct Event {
    double t = 0.0;
    double v = 0.0;
    std::int64_t n = 0;
    double K_before = 0.0;
    double K_after = 0.0;
};

struct EventLog {
    std::vector<Event> events;
};

struct PathState {
    double t = 0.0;
    double K = 0.0;
    double Y = 0.0; // Y_t = 2 * integral of K
};

struct DensePoint {
    double t = 0.0;
    double K = 0.0;
    double Y = 0.0;
};

struct PathResult {
    PathState final_state;
    EventLog log;
    std::vector<DensePoint> trace;
};

// Event-driven simulation: exponential waiting times at the total rate R,
// ballistic position between events (dY/dt = 2K exactly).
inline PathResult simulate_path(const TrajectoryConfig& cfg, const Dispersion& bands) {
    if (!(cfg.t_end > 0.0)) throw Error("simulate_path: t_end must be positive");
    if (!std::isfinite(cfg.K0)) throw Error("simulate_path: K0 must be finite");
    PathResult out;
    Rng rng(cfg.seed, cfg.stream);
    double t = 0.0, K = cfg.K0, Y = 0.0;
    const bool dense = cfg.record == RecordMode::dense;
    const bool keep_events = cfg.record != RecordMode::none;
    double next_grid = cfg.dense_dt;
    if (dense) {
        if (!(cfg.dense_dt > 0.0)) throw Error("simulate_path: dense_dt must be positive");
        out.trace.push_back({0.0, K, 0.0});
    }
    auto advance = [&](double t_to) {
        if (dense) {
            while (next_grid < t_to - 1e-15 * cfg.t_end) {
                out.trace.push_back({next_grid, K, Y + 2.0 * K * (next_grid - t)});
                next_grid += cfg.dense_dt;
            }
        }
        Y += 2.0 * K * (t_to - t);
        t = t_to;
    };
    if (cfg.noise) {
        const JumpContext ctx{bands, *cfg.noise};
        const double rate = cfg.noise->rate();
        for (;;) {
            const double t_next = t + rng.exponential(rate);
            if (t_next >= cfg.t_end) break;
            advance(t_next);
            const JumpSample js = jump_sample(K, ctx, rng);
            if (keep_events)
                out.log.events.push_back({t, js.v, js.n, K, js.p_new});
            if (dense) {
                out.trace.push_back({t, K, Y});
                out.trace.push_back({t, js.p_new, Y});
            }
            K = js.p_new;
        }
    }
    advance(cfg.t_end);
    if (dense) out.trace.push_back({cfg.t_end, K, Y});
    out.final_state = {cfg.t_end, K, Y};
    return out;
}

// Sign-flip bookkeeping. A flip happens at an event whose sign equals the
// sign at the next event, after a maximal odd-length run of sign changes.
// The tau sequence advances at the earlier of a flip or an exit of |K| from
// [|K_tau|/2, 3|K_tau|/2]; varsigma_exit is the first event that pushes |K|
// outside [(1 - lambda^eps) |K0|, (1 + lambda^eps) |K0|].
struct FlipStats {
    std::vector<double> tau;
    std::vector<double> delta_tau;
    std::vector<double> ref_absK;  // |K| at the start of each tau interval
    std::vector<char> is_flip;     // 1 = sign-flip, 0 = corridor exit
    std::int64_t count = 0;
    double varsigma_exit = std::numeric_limits<double>::infinity();
};

inline FlipStats detect_flips(const EventLog& log, double K0, double lambda,
                              double eps) {
    const auto sgn = [](double x) { return x >= 0.0 ? 1 : -1; };
    const std::size_t ne = log.events.size();
    FlipStats fs;

    std::vector<int> s(ne + 1);
    s[0] = sgn(K0);
    for (std::size_t i = 0; i < ne; ++i) s[i + 1] = sgn(log.events[i].K_after);

    // classify flips: event i (1-based in s) is a flip when the next event
    // confirms the sign and the maximal change-run into i has odd length
    std::vector<char> flip(ne + 1, 0);
    for (std::size_t i = 1; i + 1 <= ne; ++i) {
        if (s[i + 1] != s[i]) continue;
        std::size_t m = 0, j = i;
        while (j >= 1 && s[j - 1] == -s[j]) {
            ++m;
            --j;
        }
        if (m % 2 == 1) flip[i] = 1;
    }

    const double band = std::pow(lambda, eps) * std::fabs(K0);
    double tau_prev = 0.0, ref = std::fabs(K0);
    for (std::size_t i = 1; i <= ne; ++i) {
        const Event& ev = log.events[i - 1];
        const double absK = std::fabs(ev.K_after);
        if (std::isinf(fs.varsigma_exit)
            && std::fabs(absK - std::fabs(K0)) > band)
            fs.varsigma_exit = ev.t;
        const bool exit = absK < 0.5 * ref || absK > 1.5 * ref;
        if (!flip[i] && !exit) continue;
        fs.tau.push_back(ev.t);
        fs.delta_tau.push_back(ev.t - tau_prev);
        fs.ref_absK.push_back(ref);
        fs.is_flip.push_back(flip[i] ? 1 : 0);
        tau_prev = ev.t;
        ref = absK;
    }
    fs.count = static_cast<std::int64_t>(fs.tau.size());
    return fs;
}

// Moments of the first flip interval from a fresh start at K0, conditioned
// on no sign change at the first event. The interval ends at the earlier of
// a sign-flip or an exit of |K| from [|K0|/2, 3|K0|/2]; the normalized ratio
// nu * tau / |K0| with nu = alpha R / 4 is approximately Exp(1) for large
// |K0|. Intervals restarted at later flips are systematically shorter: the
// post-flip momentum concentrates near band edges, where the reflection
// weight is elevated, so only fresh starts carry the clean exponential law.
struct FlipMomentSummary {
    MeanVar ratio;    // nu * tau / |K0|
    MeanVar ratio_sq;
    std::int64_t flips = 0;    // samples ending in a sign-flip
    std::int64_t exits = 0;    // samples ending in a corridor exit
    std::int64_t rejected = 0; // paths failing the first-event conditioning
};

inline FlipMomentSummary flip_interval_moments(const Dispersion& bands,
                                               const NoiseModel& noise,
                                               double K0,
                                               std::int64_t samples,
                                               std::uint64_t seed,
                                               unsigned workers = 0) {
    const double nu = bands.alpha() * noise.rate() / 4.0;
    if (samples < 1) throw Error("flip_interval_moments: need samples >= 1");
    if (!(nu > 0.0))
        throw Error("flip_interval_moments: need alpha > 0 and a positive rate");
    const double t_scale = std::fabs(K0) / nu;
    const std::int64_t attempts = samples + samples / 32 + 16;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> vals(static_cast<std::size_t>(attempts), nan);
    std::vector<char> kind(static_cast<std::size_t>(attempts), 0);
    parallel_for(attempts, [&](std::int64_t a) {
        for (double T = 4.0 * t_scale; T <= 64.0 * t_scale; T *= 2.0) {
            TrajectoryConfig cfg;
            cfg.noise = noise;
            cfg.K0 = K0;
            cfg.t_end = T;
            cfg.record = RecordMode::events;
            cfg.seed = seed;
            cfg.stream = static_cast<std::uint64_t>(a);
            const auto res = simulate_path(cfg, bands);
            if (res.log.events.empty()) continue;
            if ((res.log.events[0].K_after >= 0.0) != (K0 >= 0.0)) break;
            const auto fs = detect_flips(res.log, K0, 0.05, 0.2);
            if (fs.tau.empty()) continue; // interval not yet confirmed
            vals[static_cast<std::size_t>(a)] =
                nu * fs.delta_tau[0] / fs.ref_absK[0];
            kind[static_cast<std::size_t>(a)] = fs.is_flip[0];
            break;
        }
    }, workers);
    FlipMomentSummary out;
    for (std::int64_t a = 0; a < attempts; ++a) {
        const double r = vals[static_cast<std::size_t>(a)];
        if (std::isnan(r)) {
            ++out.rejected;
            continue;
        }
        out.ratio.add(r);
        out.ratio_sq.add(r * r);
        if (kind[static_cast<std::size_t>(a)])
            ++out.flips;
        else
            ++out.exits;
        if (out.flips + out.exits == samples) break;
    }
    return out;
}

// The momentum modulo 1 is itself Markov: the integer diffraction shift n
// drops out, leaving the difference kernel sum_n j(phi - phi' + n) on the
// torus. This check runs full paths, bins K_t mod 1, and compares against an
// RK4 integration of the reduced master equation on a fine grid.
struct TorusCheckConfig {
    std::optional<double> phi0; // absent: uniform initial phase
    double K_base = 10.0;
    double t = 2.0;
    int paths = 20000;
    int bins = 64;
    int grid = 512;
    double bound = 0.02; // deterministic tolerance on top of the MC scale
    std::uint64_t seed = 1;
    unsigned workers = 0;
};

struct TorusReport {
    double tv = 0.0;
    double mc_scale = 0.0;
    int bins = 0;
    int paths = 0;
    bool pass = false;
};

inline TorusReport torus_marginal_check(const Dispersion& bands,
                                        const NoiseModel& noise,
                                        const TorusCheckConfig& tc) {
    const int N = tc.grid;
    if (N < 2 || tc.bins < 2 || N % tc.bins != 0)
        throw Error("torus_marginal_check: grid must refine the bins");
    if (tc.paths < 1000)
        throw InsufficientSample("torus_marginal_check: need >= 1000 paths");

    // wrapped kick kernel: T[k] is the rate from any cell j into cell j + k
    double reach = noise.support_radius();
    if (!std::isfinite(reach))
        reach = 10.0 * std::sqrt(noise.sigma() / noise.rate()) + 1.0;
    const auto n_hi = static_cast<std::int64_t>(std::ceil(reach)) + 1;
    std::vector<double> T(static_cast<std::size_t>(N), 0.0);
    double t_sum = 0.0;
    for (int k = 0; k < N; ++k) {
        double w = 0.0;
        for (std::int64_t n = -n_hi; n <= n_hi; ++n)
            w += noise.density(static_cast<double>(k) / N + static_cast<double>(n));
        T[static_cast<std::size_t>(k)] = w / N;
        t_sum += w / N;
    }
    for (auto& w : T) w *= noise.rate() / t_sum; // exact mass conservation

    std::vector<double> mu(static_cast<std::size_t>(N), 0.0);
    if (tc.phi0) {
        const double f = *tc.phi0 - std::floor(*tc.phi0);
        mu[static_cast<std::size_t>(std::floor(f * N))] = 1.0;
    } else {
        for (auto& m : mu) m = 1.0 / N;
    }
    auto deriv = [&](const std::vector<double>& m, std::vector<double>& out) {
        for (int i = 0; i < N; ++i) {
            double acc = -noise.rate() * m[static_cast<std::size_t>(i)];
            for (int j = 0; j < N; ++j)
                acc += T[static_cast<std::size_t>((i - j + N) % N)]
                       * m[static_cast<std::size_t>(j)];
            out[static_cast<std::size_t>(i)] = acc;
        }
    };
    const int steps = std::max(20, static_cast<int>(std::ceil(tc.t * noise.rate() / 0.05)));
    const double dt = tc.t / steps;
    std::vector<double> k1(mu.size()), k2(mu.size()), k3(mu.size()), k4(mu.size()),
        tmp(mu.size());
    for (int s = 0; s < steps; ++s) {
        deriv(mu, k1);
        for (std::size_t i = 0; i < mu.size(); ++i) tmp[i] = mu[i] + 0.5 * dt * k1[i];
        deriv(tmp, k2);
        for (std::size_t i = 0; i < mu.size(); ++i) tmp[i] = mu[i] + 0.5 * dt * k2[i];
        deriv(tmp, k3);
        for (std::size_t i = 0; i < mu.size(); ++i) tmp[i] = mu[i] + dt * k3[i];
        deriv(tmp, k4);
        for (std::size_t i = 0; i < mu.size(); ++i)
            mu[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }

    // Monte Carlo marginal from full paths
    std::vector<double> phase(static_cast<std::size_t>(tc.paths));
    parallel_for(tc.paths, [&](std::int64_t i) {
        double k0 = tc.K_base;
        if (tc.phi0) {
            k0 += *tc.phi0;
        } else {
            Rng init(tc.seed, static_cast<std::uint64_t>(i + tc.paths));
            k0 += init.uniform();
        }
        TrajectoryConfig cfg;
        cfg.noise = noise;
        cfg.K0 = k0;
        cfg.t_end = tc.t;
        cfg.seed = tc.seed;
        cfg.stream = static_cast<std::uint64_t>(i);
        const auto res = simulate_path(cfg, bands);
        phase[static_cast<std::size_t>(i)] =
            res.final_state.K - std::floor(res.final_state.K);
    }, tc.workers);

    std::vector<double> emp(static_cast<std::size_t>(tc.bins), 0.0);
    for (double f : phase) {
        auto b = static_cast<int>(f * tc.bins);
        b = std::min(std::max(b, 0), tc.bins - 1);
        emp[static_cast<std::size_t>(b)] += 1.0 / tc.paths;
    }
    std::vector<double> oracle(static_cast<std::size_t>(tc.bins), 0.0);
    const int fold = N / tc.bins;
    for (int i = 0; i < N; ++i)
        oracle[static_cast<std::size_t>(i / fold)] += mu[static_cast<std::size_t>(i)];

    TorusReport rep;
    rep.bins = tc.bins;
    rep.paths = tc.paths;
    rep.tv = tv_distance(emp, oracle);
    rep.mc_scale = std::sqrt(2.0 * tc.bins / (kPi * tc.paths));
    rep.pass = rep.tv <= tc.bound + 3.0 * rep.mc_scale;
    return rep;
}

} // namespace combdiff

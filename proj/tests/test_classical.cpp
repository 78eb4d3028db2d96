#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "combdiff/classical.hpp"
#include "combdiff/quadrature.hpp"
#include "combdiff/stats.hpp"

using namespace combdiff;

namespace {

EventLog synthetic_log(const std::vector<double>& K_values, double K0) {
    EventLog log;
    double prev = K0;
    for (std::size_t i = 0; i < K_values.size(); ++i) {
        Event ev;
        ev.t = static_cast<double>(i + 1);
        ev.K_before = prev;
        ev.K_after = K_values[i];
        ev.v = K_values[i] - prev;
        ev.n = 0;
        log.events.push_back(ev);
        prev = K_values[i];
    }
    return log;
}

} // namespace

TEST_CASE("free comb never diffracts") {
    Dispersion d0(0.0);
    const auto noise = NoiseModel::gaussian(1.0, 0.5);
    const JumpContext ctx{d0, noise};
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double p = rng.uniform(-20.0, 20.0);
        const JumpSample js = jump_sample(p, ctx, rng);
        CHECK(js.n == 0);
        CHECK(js.p_new == p + js.v);
    }
}

TEST_CASE("noise off gives exact ballistic motion") {
    Dispersion d(1.0);
    TrajectoryConfig cfg;
    cfg.K0 = 3.7;
    cfg.t_end = 11.0;
    cfg.seed = 9;
    const auto res = simulate_path(cfg, d);
    CHECK(res.final_state.K == 3.7);
    CHECK(res.final_state.Y == 2.0 * 3.7 * 11.0);
    CHECK(res.log.events.empty());
}

TEST_CASE("dense trace reproduces the position integral") {
    Dispersion d(1.0);
    TrajectoryConfig cfg;
    cfg.noise = NoiseModel::gaussian(1.0, 0.5);
    cfg.K0 = 3.2;
    cfg.t_end = 7.0;
    cfg.record = RecordMode::dense;
    cfg.dense_dt = 0.37;
    cfg.seed = 12;
    const auto res = simulate_path(cfg, d);
    REQUIRE(res.trace.size() > 4);
    double trapz = 0.0;
    for (std::size_t i = 0; i + 1 < res.trace.size(); ++i) {
        const auto& a = res.trace[i];
        const auto& b = res.trace[i + 1];
        CHECK(b.t >= a.t);
        trapz += (b.t - a.t) * (a.K + b.K); // 2 * K integrated
    }
    CHECK(trapz == Catch::Approx(res.final_state.Y).margin(1e-9 * (1.0 + std::fabs(res.final_state.Y))));
    // event bookkeeping is exact
    double t_prev = 0.0;
    for (const auto& ev : res.log.events) {
        CHECK(ev.t > t_prev);
        CHECK((ev.K_before + ev.v) + static_cast<double>(ev.n) == ev.K_after);
        t_prev = ev.t;
    }
}

TEST_CASE("flip classification fixtures") {
    // even-length sign excursion: no flip
    {
        const auto log = synthetic_log({1.0, -1.0, 1.0, 1.0}, 1.0);
        const auto fs = detect_flips(log, 1.0, 0.05, 0.2);
        CHECK(fs.count == 0);
    }
    // odd run confirmed at the next event: flip at the first minus
    {
        const auto log = synthetic_log({1.0, -1.0, -1.0, -1.0}, 1.0);
        const auto fs = detect_flips(log, 1.0, 0.05, 0.2);
        REQUIRE(fs.count == 1);
        CHECK(fs.tau[0] == 2.0);
        CHECK(fs.is_flip[0] == 1);
        CHECK(fs.ref_absK[0] == 1.0);
    }
    // triple alternation then confirmation: still a flip (m = 3)
    {
        const auto log = synthetic_log({-1.0, 1.0, -1.0, -1.0}, 1.0);
        const auto fs = detect_flips(log, 1.0, 0.05, 0.2);
        REQUIRE(fs.count == 1);
        CHECK(fs.tau[0] == 3.0);
    }
    // corridor exit without any sign change
    {
        const auto log = synthetic_log({1.1, 2.0, 2.1}, 1.0);
        const auto fs = detect_flips(log, 1.0, 0.05, 0.2);
        REQUIRE(fs.count == 1);
        CHECK(fs.tau[0] == 2.0);
        CHECK(fs.is_flip[0] == 0);
        CHECK(fs.ref_absK[0] == 1.0);
    }
    // varsigma window exit: lambda^eps = 0.5, so the band is [0.5, 1.5]
    {
        const auto log = synthetic_log({1.2, 1.6, 1.0}, 1.0);
        const auto fs = detect_flips(log, 1.0, 0.25, 0.5);
        CHECK(fs.varsigma_exit == 2.0);
    }
    {
        const auto log = synthetic_log({1.2, 1.4, 1.0}, 1.0);
        const auto fs = detect_flips(log, 1.0, 0.25, 0.5);
        CHECK(std::isinf(fs.varsigma_exit));
    }
}

TEST_CASE("mid-band diffraction is rare") {
    Dispersion d(1.0);
    const auto noise = NoiseModel::gaussian(1.0, 0.5);
    const JumpContext ctx{d, noise};
    Rng rng(31);
    int diffracted = 0;
    const int n_draws = 100000;
    for (int i = 0; i < n_draws; ++i) {
        if (jump_sample(10.25, ctx, rng).n != 0) ++diffracted;
    }
    CHECK(static_cast<double>(diffracted) / n_draws <= 0.05);
}

TEST_CASE("event statistics and energy growth") {
    Dispersion d(1.0);
    const auto noise = NoiseModel::gaussian(1.0, 0.5);
    const double t_end = 5.0, dt = 1.25;
    const int n_paths = 10000;
    const double e0 = d.energy(10.2);

    MeanVar count, de, e2;
    std::vector<MeanVar> sqrt_e(4);
    std::vector<double> counts(n_paths), des(n_paths), e2s(n_paths);
    std::vector<std::array<double, 4>> grid_se(n_paths);
    parallel_for(n_paths, [&](std::int64_t i) {
        TrajectoryConfig cfg;
        cfg.noise = noise;
        cfg.K0 = 10.2;
        cfg.t_end = t_end;
        cfg.record = RecordMode::dense;
        cfg.dense_dt = dt;
        cfg.seed = 77;
        cfg.stream = static_cast<std::uint64_t>(i);
        const auto res = simulate_path(cfg, d);
        counts[static_cast<std::size_t>(i)] = static_cast<double>(res.log.events.size());
        const double ef = d.energy(res.final_state.K);
        des[static_cast<std::size_t>(i)] = ef - e0;
        e2s[static_cast<std::size_t>(i)] = ef * ef;
        std::array<double, 4> g{};
        std::size_t k = 0;
        for (const auto& pt : res.trace) {
            if (k < 4 && std::fabs(pt.t - dt * static_cast<double>(k + 1)) < 1e-12) {
                g[k] = std::sqrt(d.energy(pt.K));
                ++k;
            }
        }
        grid_se[static_cast<std::size_t>(i)] = g;
    });
    for (int i = 0; i < n_paths; ++i) {
        count.add(counts[static_cast<std::size_t>(i)]);
        de.add(des[static_cast<std::size_t>(i)]);
        e2.add(e2s[static_cast<std::size_t>(i)]);
        for (std::size_t k = 0; k < 4; ++k)
            sqrt_e[k].add(grid_se[static_cast<std::size_t>(i)][k]);
    }

    // Poisson event count: mean R t, dispersion index 1
    const double rt = noise.rate() * t_end;
    CHECK(std::fabs(count.mean - rt) < 4.0 * count.se());
    const double dispersion = count.variance() / count.mean;
    CHECK(std::fabs(dispersion - 1.0) < 4.0 * std::sqrt(2.0 / (n_paths - 1.0)));

    // exact linear mean-energy growth sigma * t
    CHECK(std::fabs(de.mean - noise.sigma() * t_end) < 3.0 * de.se());

    // Second-moment growth. A kick of size v transfers the energy square as
    //   E^2 + 2E(vE' + v^2) + 4v^2<P^2> + 2v^3 E' + v^4,  <P^2> <= E,
    // so with E[E_t] = E_0 + sigma t the generator gives
    //   d/dt E[E^2] = 2 sigma E[E] + 4 sigma E[<P^2>] + varsigma R
    //              <= 6 sigma E[E] + varsigma R.
    // Integrating yields the upper bound; the delta-site weight E - <P^2>
    // keeps the truth within a narrow band underneath it.
    const double sig = noise.sigma();
    const double bound = e0 * e0 + 6.0 * sig * t_end * e0
                         + 3.0 * sig * sig * t_end * t_end
                         + noise.varsigma() * noise.rate() * t_end;
    CHECK(e2.mean <= bound + 3.0 * e2.se());
    const double p2_0 = BlochBasis(d, 10.2).kinetic_moment();
    const double deficit = 4.0 * sig * t_end * (e0 - p2_0);
    CHECK(e2.mean >= bound - 4.0 * deficit - 3.0 * e2.se());

    // square-root energy is a submartingale: means non-decreasing on the grid
    double prev_mean = std::sqrt(e0), prev_se = 0.0;
    for (const auto& mv : sqrt_e) {
        CHECK(mv.mean >= prev_mean - 2.0 * (prev_se + mv.se()));
        prev_mean = mv.mean;
        prev_se = mv.se();
    }
}

TEST_CASE("flip time moments at high momentum") {
    Dispersion d(1.0);
    const auto noise = NoiseModel::gaussian(1.0, 0.5);
    // fresh starts at |K0| = 50.3, conditioned on no sign change at the
    // first event; nu * tau / |K0| should carry Exp(1) moments
    const auto fm = flip_interval_moments(d, noise, 50.3, 2000, 404);
    INFO("flips " << fm.flips << " exits " << fm.exits
                  << " rejected " << fm.rejected);
    REQUIRE(fm.flips + fm.exits >= 2000);
    CHECK(std::fabs(fm.ratio.mean - 1.0) < 0.1);
    CHECK(std::fabs(fm.ratio_sq.mean - 2.0) < 0.3);
    // corridor exits are rare at this momentum
    CHECK(fm.exits * 10 < fm.flips);
}

TEST_CASE("jump kernel integrates to the total rate") {
    Dispersion d(1.0);
    const auto noise = NoiseModel::window(1.0, 1.0);
    const JumpContext ctx{d, noise};
    for (double p_prev : {3.1, 10.25, -7.4}) {
        // diffraction tails fall off like 1/|n|^3 in captured mass, so the
        // window has to be generous to integrate back to the rate at 1e-6
        const double span = std::fabs(p_prev) + 12.0;
        // kinks sit on the half-integer lattice (band edges) and on
        // p_prev + integers (edges of the kick support)
        std::vector<double> pts{-span, span};
        for (double x = std::ceil(-2.0 * span) / 2.0; x <= span; x += 0.5)
            pts.push_back(x);
        for (double x = p_prev - std::floor(p_prev + span); x <= span; x += 1.0)
            if (x >= -span) pts.push_back(x);
        std::sort(pts.begin(), pts.end());
        pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
        auto f = [&](double p) { return kernel_eval(p, p_prev, ctx); };
        const double total = integrate_pieces(f, pts, 5e-8);
        CHECK(total == Catch::Approx(noise.rate()).margin(1e-6));
    }

    Dispersion d0(0.0);
    const JumpContext ctx0{d0, noise};
    CHECK(kernel_eval(3.4, 3.1, ctx0)
          == Catch::Approx(noise.density(0.3)).margin(1e-12));
}

TEST_CASE("jump targets match the kernel shape") {
    Dispersion d(1.0);
    const auto noise = NoiseModel::window(1.0, 1.0);
    const JumpContext ctx{d, noise};
    const double p_prev = 10.25;
    const int bins = 20, n_draws = 100000;
    const double lo = 9.25, hi = 11.25, width = (hi - lo) / bins;

    std::vector<double> counts(bins + 1, 0.0), probs(bins + 1, 0.0);
    Rng rng(59);
    for (int i = 0; i < n_draws; ++i) {
        const double p = jump_sample(p_prev, ctx, rng).p_new;
        const int b = (p >= lo && p < hi) ? static_cast<int>((p - lo) / width) : bins;
        counts[static_cast<std::size_t>(b)] += 1.0;
    }
    double inside = 0.0;
    auto f = [&](double p) { return kernel_eval(p, p_prev, ctx) / noise.rate(); };
    for (int b = 0; b < bins; ++b) {
        const double a = lo + b * width, c = a + width;
        std::vector<double> pts{a};
        for (double x = std::ceil(2.0 * a) / 2.0; x < c; x += 0.5)
            if (x > a) pts.push_back(x);
        pts.push_back(c);
        probs[static_cast<std::size_t>(b)] = integrate_pieces(f, pts, 1e-9);
        inside += probs[static_cast<std::size_t>(b)];
    }
    probs[bins] = 1.0 - inside;
    CHECK(chi2_gof(counts, probs).p > 0.001);
}

TEST_CASE("torus marginal stays uniform from uniform start") {
    Dispersion d(1.0);
    const auto noise = NoiseModel::gaussian(1.0, 0.35);
    TorusCheckConfig tc;
    tc.phi0.reset();
    tc.paths = 20000;
    tc.bins = 16;
    tc.t = 2.0;
    tc.bound = 0.005;
    tc.seed = 21;
    const auto rep = torus_marginal_check(d, noise, tc);
    INFO("tv=" << rep.tv << " mc=" << rep.mc_scale);
    CHECK(rep.pass);
}

TEST_CASE("torus marginal matches the master equation from a point start") {
    Dispersion d(1.0);
    const auto noise = NoiseModel::gaussian(1.0, 0.35);
    TorusCheckConfig tc;
    tc.phi0 = 0.2;
    tc.K_base = 10.0;
    tc.paths = 20000;
    tc.bins = 64;
    tc.t = 2.0;
    tc.bound = 0.02;
    tc.seed = 22;
    const auto rep = torus_marginal_check(d, noise, tc);
    INFO("tv=" << rep.tv << " mc=" << rep.mc_scale);
    CHECK(rep.pass);
}

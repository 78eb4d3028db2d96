#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "combdiff/bandstructure.hpp"
#include "combdiff/rng.hpp"
#include "combdiff/zone.hpp"

using namespace combdiff;

namespace {

// Independent residual of the dispersion relation, spelled out from scratch.
double kp_resid(double alpha, double p, double q) {
    return std::cos(kTwoPi * p) - std::cos(kTwoPi * q)
           - alpha * std::sin(kTwoPi * q) / (2.0 * q);
}

// Scan+bisection oracle over the band interval ((N-1)/2, N/2); independent
// of the reduced band-variable parameterization used by Dispersion.
double q_oracle(double alpha, double p) {
    const double ap = std::fabs(p);
    const int N = static_cast<int>(std::ceil(2.0 * ap));
    const double lo = 0.5 * (N - 1) + 1e-12, hi = 0.5 * N - 1e-12;
    const int n = 400000;
    double a = lo, fa = kp_resid(alpha, ap, a);
    double root = std::numeric_limits<double>::quiet_NaN();
    for (int i = 1; i <= n; ++i) {
        const double b = lo + (hi - lo) * i / n;
        const double fb = kp_resid(alpha, ap, b);
        if (fa * fb <= 0.0) {
            double x0 = a, x1 = b;
            for (int it = 0; it < 200; ++it) {
                const double m = 0.5 * (x0 + x1);
                if (kp_resid(alpha, ap, m) * kp_resid(alpha, ap, x0) <= 0.0)
                    x1 = m;
                else
                    x0 = m;
            }
            root = 0.5 * (x0 + x1);
            break;
        }
        a = b;
        fa = fb;
    }
    REQUIRE(std::isfinite(root));
    return p < 0 ? -root : root;
}

} // namespace

TEST_CASE("zone decomposition") {
    auto z = zone_decompose(0.3);
    CHECK(z.theta == Catch::Approx(-0.2).margin(1e-15));
    CHECK(z.n == 1);
    CHECK(z.beta == Catch::Approx(-0.1).margin(1e-15));

    z = zone_decompose(-0.3);
    CHECK(z.theta == Catch::Approx(0.2).margin(1e-15));
    CHECK(z.n == -1);
    CHECK(z.beta == Catch::Approx(-0.1).margin(1e-15));

    z = zone_decompose(0.0);
    CHECK(z.theta == 0.0);
    CHECK(z.n == 0);
    CHECK(z.beta == 0.0);

    CHECK(quasimomentum(10.7) == Catch::Approx(-0.3).margin(1e-12));
    CHECK(quasimomentum(-0.5) == -0.5);
    CHECK(band_index(10.7) == 21);
    CHECK(band_index(0.3) == 0);
    CHECK(band_index(-0.3) == 0);
    CHECK(band_index(0.7) == 1);
    CHECK(band_index(1.3) == 2);

    // theta stays in [-1/4, 1/4) on random momenta
    Rng rng(7771);
    for (int i = 0; i < 2000; ++i) {
        const double p = rng.uniform(-60.0, 60.0);
        const double th = theta(p);
        CHECK(th >= -0.25);
        CHECK(th < 0.25);
        CHECK(std::fabs(p - 0.5 * static_cast<double>(lattice_n(p)) - th) < 1e-12);
    }
}

TEST_CASE("dispersion snaps and free case") {
    Dispersion d1(1.0);
    CHECK(d1.q(1.5) == 1.5);
    CHECK(d1.q(-3.0) == -3.0);
    CHECK(d1.q(0.0) == 0.0);

    Dispersion d0(0.0);
    CHECK(d0.q(0.37) == 0.37);
    CHECK(d0.energy(2.0) == 4.0);
    CHECK(d0.band_gap(3) == 0.0);
    const auto dv = d0.derivatives(0.37);
    CHECK(dv.dq == 1.0);
    CHECK(dv.d2q == 0.0);
}

TEST_CASE("dispersion matches scan oracle") {
    Dispersion d(1.0);
    // frozen oracle values
    CHECK(d.q(0.25) == Catch::Approx(0.393818647082432).margin(1e-10));
    CHECK(d.q(10.25) == Catch::Approx(10.257751653591509).margin(1e-10));
    // fresh oracle comparisons across bands
    for (double p : {0.11, 0.43, 0.77, 1.21, 2.17, 5.4, 10.2, 33.33}) {
        const double qo = q_oracle(1.0, p);
        CHECK(d.q(p) == Catch::Approx(qo).margin(1e-10));
        CHECK(d.q(-p) == Catch::Approx(-qo).margin(1e-10));
    }
    // band-0 limit at 0+ stays strictly positive
    CHECK(d.q(1e-9) == Catch::Approx(0.319161131167147).margin(1e-6));
}

TEST_CASE("dispersion invariants on random momenta") {
    Dispersion d(1.0);
    Rng rng(424242);
    double prev_p = -1e9, prev_q = -1e9;
    for (int i = 0; i < 1000; ++i) {
        const double p = rng.uniform(-100.0, 100.0);
        const double qv = d.q(p, 1e-12);
        CHECK(std::fabs(kp_resid(1.0, p, qv)) <= 1e-10);
        CHECK(std::fabs(qv - p) <= 0.5 + 1e-12);
        CHECK(d.q(-p) == Catch::Approx(-qv).margin(1e-13));
    }
    // monotone along a sorted sweep (off the lattice)
    for (int i = 0; i < 4000; ++i) {
        const double p = -20.0 + 40.0 * (i + 0.5) / 4000.0;
        const double qv = d.q(p);
        if (prev_p > -1e8) CHECK(qv > prev_q);
        prev_p = p;
        prev_q = qv;
    }
}

TEST_CASE("cache agrees with direct solve") {
    Dispersion d(0.7);
    Rng rng(99);
    for (int i = 0; i < 300; ++i) {
        const double p = rng.uniform(-40.0, 40.0);
        CHECK(d.q(p) == Catch::Approx(d.q_direct(p)).margin(1e-12));
    }
}

TEST_CASE("energy asymptotics and gaps") {
    Dispersion d(1.0);
    // mid-band energy near p^2 + alpha/(2 pi)
    const double e = d.energy(10.25);
    CHECK(std::fabs(e - (10.25 * 10.25 + 1.0 / kTwoPi)) / e < 0.02);

    // gap at n = 50 within 10% of alpha/pi, for several alpha
    for (double alpha : {0.5, 1.0, 2.0}) {
        Dispersion da(alpha);
        const double g = da.band_gap(50);
        CHECK(std::fabs(g * kPi / alpha - 1.0) < 0.1);
    }

    // |g_n - alpha/pi| shrinks along n
    double prev = 1e9;
    for (int n : {5, 10, 20, 50}) {
        const double dev = std::fabs(d.band_gap(n) - 1.0 / kPi);
        CHECK(dev < prev);
        prev = dev;
    }

    // band-edge continuity from the origin side: E(n/2 - eps) ~ (n/2)^2
    CHECK(d.energy(25.0 - 1e-9) == Catch::Approx(625.0).margin(1e-6));
    CHECK_THROWS_AS(d.band_gap(0), Error);
}

TEST_CASE("derivatives: finite differences, antisymmetry, group velocity") {
    Dispersion d(1.0);
    const double h = 1e-5;
    for (double p : {0.31, 0.77, 2.17, 10.2, -4.63}) {
        const auto dv = d.derivatives(p);
        const double fd1 = (d.q(p + h, 1e-13) - d.q(p - h, 1e-13)) / (2.0 * h);
        const double fd2 = (d.q(p + h, 1e-13) - 2.0 * d.q(p, 1e-13) + d.q(p - h, 1e-13)) / (h * h);
        CHECK(dv.dq == Catch::Approx(fd1).epsilon(1e-4));
        CHECK(dv.d2q == Catch::Approx(fd2).epsilon(5e-3).margin(1e-6));
        const auto dm = d.derivatives(-p);
        CHECK(dm.q == Catch::Approx(-dv.q).margin(1e-13));
        CHECK(dm.dq == Catch::Approx(dv.dq).margin(1e-13));
        CHECK(dm.d2q == Catch::Approx(-dv.d2q).margin(1e-10));
    }
    // group velocity approaches the free value 2p mid-band
    CHECK(std::fabs(d.group_velocity(10.2) - 2.0 * 10.2) / (2.0 * 10.2) < 0.01);
    CHECK_THROWS_AS(d.derivatives(1.5), LatticePoint);
}

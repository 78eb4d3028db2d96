#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "combdiff/bandstructure.hpp"
#include "combdiff/bloch.hpp"
#include "combdiff/quadrature.hpp"
#include "combdiff/rng.hpp"
#include "combdiff/zone.hpp"

using namespace combdiff;

namespace {

// Truncated Parseval mass of the plane-wave coefficients.
double eta_mass(const BlochBasis& b, std::int64_t M) {
    double s = 0.0;
    for (std::int64_t m = -M; m <= M; ++m) s += std::norm(b.eta(m));
    return s;
}

} // namespace

TEST_CASE("plane-wave coefficients carry unit mass") {
    Dispersion d(1.0);
    Rng rng(17);
    for (int i = 0; i < 24; ++i) {
        const double p = rng.uniform(-30.0, 30.0);
        if (std::fabs(theta(p)) < 1e-3) continue;
        const BlochBasis b(d, p);
        // |eta(m)| ~ 2 q |c| / m^2, so the truncation deficit is O(M^-3)
        const double mass = eta_mass(b, 3000);
        CHECK(mass > 1.0 - 1e-6);
        CHECK(mass < 1.0 + 1e-10);
    }
}

TEST_CASE("cell function is normalized and bends at the comb site") {
    Dispersion d(1.0);
    for (double p : {0.3, 1.37, 10.2}) {
        const BlochBasis b(d, p);
        auto density = [&](double x) { return std::norm(b.cell_value(x)); };
        const double nrm = integrate_pieces(density, {-kPi, 0.0, kPi}, 1e-11);
        CHECK(nrm == Catch::Approx(1.0).margin(1e-9));

        // derivative jump across x = 0 equals alpha * psi(0)
        const double h = 1e-5;
        auto dplus = (-3.0 * b.cell_value(0.0) + 4.0 * b.cell_value(h)
                      - b.cell_value(2.0 * h)) / (2.0 * h);
        auto dminus = (3.0 * b.cell_value(0.0) - 4.0 * b.cell_value(-h)
                       + b.cell_value(-2.0 * h)) / (2.0 * h);
        const cplx jump = dplus - dminus;
        const cplx expected = d.alpha() * b.cell_value(0.0);
        CHECK(std::abs(jump - expected) < 1e-4);
    }
}

TEST_CASE("frozen coefficient values") {
    Dispersion d(1.0);
    struct Frozen {
        double p, re, im, np;
    };
    const std::vector<Frozen> cases = {
        {0.3, 8.932449776898140e-01, 3.555107414809934e-01, 8.828611381087045},
        {1.37, 9.652164579745115e-01, 1.395488677465179e-01, 6.777889121240379},
        {10.2, 9.992614294633614e-01, 2.465270286839579e-02, 6.292212633235036},
    };
    for (const auto& c : cases) {
        const BlochBasis b(d, c.p);
        const cplx e0 = b.eta(0);
        CHECK(e0.real() == Catch::Approx(c.re).margin(1e-10));
        CHECK(e0.imag() == Catch::Approx(c.im).margin(1e-10));
        CHECK(b.norm_const() == Catch::Approx(c.np).margin(1e-9));
        CHECK(b.norm_const() >= kTwoPi);
    }
}

TEST_CASE("diffraction amplitudes agree across evaluations") {
    Dispersion d(1.0);
    struct Case {
        double p, v;
        std::int64_t n;
    };
    const std::vector<Case> cases = {
        {10.2, 0.7, 0},   {10.2, 0.7, -22}, {10.2, 0.7, -2},
        {0.3, 0.23, 0},   {0.3, 0.23, -1},  {3.1, -0.4, -6},
        {50.21, 0.37, 0}, {50.21, 0.37, -101},
    };
    for (const auto& c : cases) {
        const BlochBasis src(d, c.p);
        const BlochBasis dst(d, c.p + c.v + static_cast<double>(c.n));
        const cplx exact = kappa_exact(src, dst, c.n, c.v);
        const cplx truncated = kappa_msum(src, dst, c.n, 20000);
        const cplx quad = kappa_quad(src, dst, c.v, 1e-11);
        CHECK(std::abs(exact - truncated) < 2e-8);
        CHECK(std::abs(exact - quad) < 2e-8);
        // reversing the kick transposes the overlap
        const cplx back = kappa_exact(dst, src, -c.n, -c.v);
        CHECK(std::abs(back - std::conj(exact)) < 1e-10);
    }
}

TEST_CASE("frozen diffraction amplitudes") {
    Dispersion d(1.0);
    struct Frozen {
        double p, v;
        std::int64_t n;
        double re, im;
    };
    const std::vector<Frozen> cases = {
        {10.2, 0.7, 0, 9.991235553246872e-01, 2.480109726244707e-03},
        {10.2, 0.7, -22, 3.152120253719663e-02, 1.509562745429496e-03},
        {0.3, 0.23, 0, 5.904624901085808e-01, -9.450066605427020e-02},
        {0.3, 0.23, -1, -7.163860869396197e-01, -3.587741477571430e-01},
        {3.1, -0.4, -6, 1.677058116929221e-01, 2.717501947075577e-02},
    };
    for (const auto& c : cases) {
        const BlochBasis src(d, c.p);
        const BlochBasis dst(d, c.p + c.v + static_cast<double>(c.n));
        const cplx k = kappa_exact(src, dst, c.n, c.v);
        CHECK(k.real() == Catch::Approx(c.re).margin(1e-9));
        CHECK(k.imag() == Catch::Approx(c.im).margin(1e-9));
    }
}

TEST_CASE("channel shortlist follows the lattice bookkeeping") {
    CHECK(iset(10.2, 0.7) == std::vector<std::int64_t>{0, -20, -22, -2});
    CHECK(iset(0.3, 0.23) == std::vector<std::int64_t>{0, -1});
    CHECK(iset(-10.2, -0.7) == std::vector<std::int64_t>{0, 20, 22, 2});
}

TEST_CASE("kappa rows capture unit mass") {
    Dispersion d(1.0);

    auto row = kappa_row(d, 10.2, 0.7);
    CHECK(row.M == 64);
    CHECK(std::fabs(row.tail) < 1e-8);
    {
        const BlochBasis src(d, 10.2);
        const BlochBasis dst(d, 10.2 + 0.7);
        CHECK(std::abs(row.at(0) - kappa_exact(src, dst, 0, 0.7)) < 1e-14);
    }

    // high momentum: the reflected channel sits near n = -2p, so the window
    // has to double before the mass closes
    row = kappa_row(d, 50.21, -0.8);
    CHECK(row.M == 128);
    CHECK(std::fabs(row.tail) < 1e-8);

    row = kappa_row(d, 0.3, 0.23);
    CHECK(std::fabs(row.tail) < 1e-8);
}

TEST_CASE("destinations pinned on a band edge are masked") {
    Dispersion d(1.0);
    // p + v lands exactly on the half-integer lattice; that channel is
    // dropped and the row reports the lost mass in its tail
    auto row = kappa_row(d, 0.3, 0.2, 4, 8);
    CHECK(row.at(0) == cplx(0.0, 0.0));
    CHECK(row.tail > 0.1);
}

TEST_CASE("post-kick energy spread respects the kick bound") {
    Dispersion d(1.0);
    for (double p : {0.31, 2.6, 10.2, 25.6}) {
        for (double v : {0.1, 0.7, 1.13}) {
            const auto rep = variance_check(d, p, v);
            INFO("p=" << p << " v=" << v << " var=" << rep.variance);
            CHECK(rep.within_bound);
            CHECK(rep.variance >= 0.0);
            CHECK(rep.mass == Catch::Approx(1.0).margin(1e-6));
        }
    }
}

TEST_CASE("distance to the plane wave decays with the zone offset") {
    Dispersion d(1.0);

    const double d03 = bloch_distance(d, 0.3);
    CHECK(d03 == Catch::Approx(4.620714713335718e-01).margin(1e-9));
    CHECK(bloch_distance(d, 2.2) == Catch::Approx(1.739886057444416e-01).margin(1e-9));
    CHECK(bloch_distance(d, 10.2) == Catch::Approx(3.843359303106116e-02).margin(1e-9));
    CHECK(bloch_distance(d, 40.3) == Catch::Approx(9.670762712176498e-03).margin(1e-9));

    // agreement with the direct cell integral of |psi~ - plane|^2
    for (double p : {0.3, 10.2}) {
        const BlochBasis b(d, p);
        auto f = [&](double x) { return std::norm(b.cell_value(x) - b.plane_value(x)); };
        const double direct = std::sqrt(integrate_pieces(f, {-kPi, 0.0, kPi}, 1e-12));
        CHECK(bloch_distance(d, p) == Catch::Approx(direct).margin(1e-8));
    }

    // uniform envelope C / (1 + |beta|)
    Rng rng(23);
    for (int i = 0; i < 60; ++i) {
        const double p = rng.uniform(-60.0, 60.0);
        if (std::fabs(theta(p)) < 1e-3) continue;
        const auto z = zone_decompose(p);
        CHECK(bloch_distance(d, p) * (1.0 + std::fabs(z.beta)) < 2.0);
    }
}

TEST_CASE("kick redistribution transfers energy moments exactly") {
    Dispersion d(4.0);

    // <P^2> in the cell state, two ways: the stored closed form against the
    // delta-site identity E - alpha |psi(0)|^2; also 0 < <P^2> <= E and the
    // Cauchy-Schwarz consequence (E')^2 = 4<P>^2 <= 4<P^2>.
    for (double p : {0.31, 2.6, 10.2, 25.6, 50.21}) {
        const BlochBasis b(d, p);
        const double e = d.energy(p);
        const double p2 = b.kinetic_moment();
        CHECK(p2 > 0.0);
        CHECK(p2 <= e);
        const double via_delta = e - d.alpha() * std::norm(b.cell_value(0.0));
        CHECK(p2 == Catch::Approx(via_delta).epsilon(1e-11));
        const double ep = d.group_velocity(p);
        CHECK(ep * ep <= 4.0 * p2 * (1.0 + 1e-12));
    }

    // Moments of E(p+v+n) under the channel weights |kappa_v(p,n)|^2:
    //   sum w E   = E + v E' + v^2                            (exact)
    //   sum w E^2 = E^2 + 2E(vE'+v^2) + 4v^2<P^2> + 2v^3E' + v^4
    // The square sum truncates like 1/M, so pin the window at M = 512 and
    // give the second moment a momentum-dependent allowance.
    for (double p : {2.6, 10.2, 25.6}) {
        const double e = d.energy(p);
        const double ep = d.group_velocity(p);
        const double p2 = BlochBasis(d, p).kinetic_moment();
        const double s2_tol = p < 5.0 ? 1e-4 : (p < 20.0 ? 5e-6 : 5e-7);
        for (double v : {0.1, 0.7, 1.13}) {
            const auto row = kappa_row(d, p, v, 512, 512, 1.0);
            REQUIRE(std::fabs(row.tail) < 1e-9);
            double s1 = 0.0, s2 = 0.0;
            for (std::int64_t n = -row.M; n <= row.M; ++n) {
                const double w = std::norm(row.at(n));
                if (w == 0.0) continue;
                const double ed = d.energy(p + v + static_cast<double>(n));
                s1 += w * ed;
                s2 += w * ed * ed;
            }
            const double s1_pred = e + v * ep + v * v;
            const double s2_pred = e * e + 2.0 * e * (v * ep + v * v)
                + 4.0 * v * v * p2 + 2.0 * v * v * v * ep + v * v * v * v;
            CHECK(s1 == Catch::Approx(s1_pred).epsilon(1e-9));
            CHECK(s2 == Catch::Approx(s2_pred).epsilon(s2_tol));
            // channel variance of E at fixed v is v^2 (4<P^2> - E'^2);
            // its absolute error is dominated by the truncation of s2
            const double var_pred = v * v * (4.0 * p2 - ep * ep);
            CHECK(s2 - s1 * s1 == Catch::Approx(var_pred).margin(s2_tol * s2_pred));
        }
    }
}

TEST_CASE("free comb degenerates to the identity") {
    Dispersion d0(0.0);
    const BlochBasis b(d0, 0.3);
    CHECK(b.eta(0) == cplx(1.0, 0.0));
    CHECK(b.eta(1) == cplx(0.0, 0.0));
    CHECK(b.eta(-5) == cplx(0.0, 0.0));
    CHECK(bloch_distance(d0, 0.3) < 1e-12);

    const BlochBasis dst0(d0, 0.53);
    CHECK(std::abs(kappa_exact(b, dst0, 0, 0.23) - cplx(1.0, 0.0)) < 1e-14);
    const BlochBasis dstm(d0, -0.47);
    CHECK(std::abs(kappa_exact(b, dstm, -1, 0.23)) < 1e-14);

    const auto row = kappa_row(d0, 0.3, 0.23, 4, 8);
    CHECK(std::abs(row.at(0) - cplx(1.0, 0.0)) < 1e-14);
    CHECK(std::fabs(row.tail) < 1e-12);
}

TEST_CASE("half-integer momenta are rejected") {
    Dispersion d(1.0);
    CHECK_THROWS_AS(BlochBasis(d, 0.5), LatticePoint);
    CHECK_THROWS_AS(BlochBasis(d, -3.0), LatticePoint);
}

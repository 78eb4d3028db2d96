#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "combdiff/noise.hpp"
#include "combdiff/quadrature.hpp"
#include "combdiff/rng.hpp"
#include "combdiff/stats.hpp"

using namespace combdiff;

namespace {

// Moment integrals straight from the density, independent of the closed forms.
double density_moment(const NoiseModel& m, int power) {
    double cutoff = m.support_radius();
    std::vector<double> pts{0.0};
    if (!std::isfinite(cutoff)) {
        cutoff = 14.0 * std::sqrt(m.sigma() / m.rate());
    } else {
        for (const auto& c : m.components()) pts.push_back(c.width);
    }
    pts.push_back(cutoff);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    auto f = [&](double v) { return m.density(v) * std::pow(v, power); };
    return 2.0 * integrate_pieces(f, pts, 1e-12);
}

} // namespace

TEST_CASE("closed-form moments") {
    const auto g = NoiseModel::gaussian(1.0, 0.5);
    CHECK(g.rate() == Catch::Approx(1.0).margin(1e-14));
    CHECK(g.sigma() == Catch::Approx(0.25).margin(1e-14));
    CHECK(g.varsigma() == Catch::Approx(0.1875).margin(1e-14));

    const auto w = NoiseModel::window(2.0, 1.0);
    CHECK(w.rate() == Catch::Approx(2.0).margin(1e-14));
    CHECK(w.sigma() == Catch::Approx(2.0 / 3.0).margin(1e-14));
    CHECK(w.varsigma() == Catch::Approx(0.2).margin(1e-14));

    const auto m = NoiseModel::mixture({{1.0, 0.5}, {2.0, 1.5}});
    CHECK(m.rate() == Catch::Approx(3.0).margin(1e-14));
    CHECK(m.sigma() == Catch::Approx(4.75 / 3.0).margin(1e-13));
    CHECK(m.varsigma() == Catch::Approx(10.1875 / 15.0).margin(1e-13));
}

TEST_CASE("moments agree with density quadrature") {
    const std::vector<NoiseModel> models{
        NoiseModel::gaussian(1.0, 0.5),
        NoiseModel::gaussian(2.5, 1.1),
        NoiseModel::window(2.0, 1.0),
        NoiseModel::mixture({{1.0, 0.5}, {2.0, 1.5}}),
    };
    for (const auto& m : models) {
        CHECK(density_moment(m, 0) == Catch::Approx(m.rate()).epsilon(1e-10));
        CHECK(density_moment(m, 2) == Catch::Approx(m.sigma()).epsilon(1e-10));
        CHECK(density_moment(m, 4) / m.rate()
              == Catch::Approx(m.varsigma()).epsilon(1e-10));
    }
}

TEST_CASE("intensity scaling") {
    const auto m = NoiseModel::mixture({{1.0, 0.5}, {2.0, 1.5}});
    const auto m3 = m.scaled(3.0);
    CHECK(m3.rate() == Catch::Approx(3.0 * m.rate()).margin(1e-13));
    CHECK(m3.sigma() == Catch::Approx(3.0 * m.sigma()).margin(1e-13));
    CHECK(m3.varsigma() == Catch::Approx(m.varsigma()).margin(1e-13));
    CHECK(m3.density(0.7) == Catch::Approx(3.0 * m.density(0.7)).margin(1e-13));
}

TEST_CASE("exponential moment closed form matches quadrature") {
    const double a = 0.7;
    for (const auto& m : {NoiseModel::gaussian(1.3, 0.5),
                          NoiseModel::window(2.0, 1.0),
                          NoiseModel::mixture({{1.0, 0.5}, {2.0, 1.5}})}) {
        double cutoff = m.support_radius();
        std::vector<double> pts{0.0};
        if (!std::isfinite(cutoff)) {
            const double s = std::sqrt(m.sigma() / m.rate());
            cutoff = a * s * s + 14.0 * s;
        } else {
            for (const auto& c : m.components()) pts.push_back(c.width);
        }
        pts.push_back(cutoff);
        std::sort(pts.begin(), pts.end());
        pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
        auto f = [&](double v) { return m.density(v) * std::exp(a * v); };
        const double quad = 2.0 * integrate_pieces(f, pts, 1e-11);
        CHECK(m.exp_moment(a) == Catch::Approx(quad).epsilon(1e-9));
    }
}

TEST_CASE("kick sampling reproduces the moments") {
    Rng rng(101);
    const int n = 1000000;

    const auto g = NoiseModel::gaussian(1.0, 0.5);
    MeanVar v1, v2;
    for (int i = 0; i < n; ++i) {
        const double v = g.sample(rng);
        v1.add(v);
        v2.add(v * v);
    }
    CHECK(std::fabs(v1.mean) < 3.0 * v1.se());
    CHECK(std::fabs(v2.mean - 0.25) < 4.0 * v2.se());

    const auto w = NoiseModel::window(2.0, 1.0);
    MeanVar v4;
    for (int i = 0; i < n; ++i) {
        const double v = w.sample(rng);
        v4.add(v * v * v * v);
    }
    CHECK(std::fabs(v4.mean - 0.2) < 4.0 * v4.se());

    const auto m = NoiseModel::mixture({{1.0, 0.5}, {2.0, 1.5}});
    MeanVar mv2;
    for (int i = 0; i < n; ++i) {
        const double v = m.sample(rng);
        mv2.add(v * v);
    }
    CHECK(std::fabs(mv2.mean - m.sigma() / m.rate()) < 4.0 * mv2.se());
}

TEST_CASE("sampler matches the density shape") {
    Rng rng(202);
    const int n = 100000, bins = 100;

    for (const auto& m : {NoiseModel::gaussian(1.0, 0.5),
                          NoiseModel::window(2.0, 1.0),
                          NoiseModel::mixture({{1.0, 0.5}, {2.0, 1.5}})}) {
        const double lo = std::isfinite(m.support_radius())
                              ? -m.support_radius()
                              : -4.0 * std::sqrt(m.sigma() / m.rate());
        const double hi = -lo;
        const double width = (hi - lo) / bins;
        std::vector<double> counts(bins + 2, 0.0), probs(bins + 2, 0.0);
        for (int i = 0; i < n; ++i) {
            const double v = m.sample(rng);
            const int b = v < lo ? 0
                        : v >= hi ? bins + 1
                                  : 1 + static_cast<int>((v - lo) / width);
            counts[static_cast<std::size_t>(b)] += 1.0;
        }
        double mass = 0.0;
        for (int b = 0; b < bins; ++b) {
            auto f = [&](double v) { return m.density(v) / m.rate(); };
            probs[static_cast<std::size_t>(b + 1)] =
                integrate(f, lo + b * width, lo + (b + 1) * width, 1e-12);
            mass += probs[static_cast<std::size_t>(b + 1)];
        }
        probs.front() = probs.back() = 0.5 * (1.0 - mass);
        CHECK(chi2_gof(counts, probs).p > 0.001);
    }
}

TEST_CASE("admissibility of the default gaussian") {
    const auto g = NoiseModel::gaussian(1.0, 0.5);
    const auto rep = validate_assumptions(g, 0.5);
    CHECK(rep.pass);
    CHECK(rep.exp_moment_ok);
    CHECK(rep.exp_moment == Catch::Approx(g.exp_moment(0.5)).epsilon(1e-8));
    CHECK(rep.inf_on_unit == Catch::Approx(g.density(1.0)).epsilon(1e-12));
    CHECK(rep.lattice_sum_sup == Catch::Approx(2.0).margin(0.01));
    CHECK(rep.varpi == Catch::Approx(1.0 / g.density(1.0)).epsilon(1e-10));
}

TEST_CASE("admissibility of the unit window") {
    const auto w = NoiseModel::window(2.0, 1.0);
    const auto rep = validate_assumptions(w, 1.0);
    CHECK(rep.pass);
    CHECK(rep.exp_moment == Catch::Approx(2.0 * (std::exp(1.0) - 1.0)).epsilon(1e-9));
    CHECK(rep.inf_on_unit == Catch::Approx(1.0).margin(1e-12));
    CHECK(rep.lattice_sum_sup == Catch::Approx(5.0).margin(1e-12));
    CHECK(rep.varpi == Catch::Approx(5.0).margin(1e-9));
}

TEST_CASE("narrow mixture fails the unit-interval floor") {
    const auto m = NoiseModel::mixture({{1.0, 0.5}});
    const auto rep = validate_assumptions(m, 0.5);
    CHECK_FALSE(rep.pass);
    CHECK(rep.inf_on_unit == 0.0);
    CHECK(rep.exp_moment_ok); // only the floor condition fails
    CHECK(std::isinf(rep.varpi));
}

TEST_CASE("sampling is reproducible by seed") {
    const auto m = NoiseModel::mixture({{1.0, 0.5}, {2.0, 1.5}});
    Rng a(55), b(55), c(56);
    bool same = true, differ = false;
    for (int i = 0; i < 1000; ++i) {
        const double va = m.sample(a);
        same = same && (va == m.sample(b));
        differ = differ || (va != m.sample(c));
    }
    CHECK(same);
    CHECK(differ);
}

TEST_CASE("invalid parameters are rejected") {
    CHECK_THROWS_AS(NoiseModel::gaussian(-1.0, 0.5), Error);
    CHECK_THROWS_AS(NoiseModel::window(1.0, 0.0), Error);
    CHECK_THROWS_AS(NoiseModel::mixture({}), Error);
    const auto g = NoiseModel::gaussian();
    CHECK_THROWS_AS(validate_assumptions(g, -0.1), Error);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "combdiff/rng.hpp"
#include "combdiff/stats.hpp"

using namespace combdiff;

TEST_CASE("streaming moments") {
    MeanVar mv;
    for (double x : {1.0, 2.0, 3.0, 4.0, 5.0}) mv.add(x);
    CHECK(mv.n == 5);
    CHECK(mv.mean == Catch::Approx(3.0).margin(1e-14));
    CHECK(mv.variance() == Catch::Approx(2.5).margin(1e-14));
    CHECK(mv.se() == Catch::Approx(std::sqrt(0.5)).margin(1e-14));
}

TEST_CASE("normal distribution values") {
    CHECK(normal_cdf(0.0) == Catch::Approx(0.5).margin(1e-15));
    CHECK(normal_cdf(1.959963984540054) == Catch::Approx(0.975).margin(1e-12));
    CHECK(normal_cdf(-1.959963984540054) == Catch::Approx(0.025).margin(1e-12));
}

TEST_CASE("incomplete gamma identities") {
    for (double a : {0.5, 1.0, 2.5, 10.0}) {
        for (double x : {0.1, 0.7, 2.0, 9.0, 30.0}) {
            CHECK(gamma_p(a, x) + gamma_q(a, x) == Catch::Approx(1.0).margin(1e-13));
        }
    }
    // chi-squared with 2 dof is exponential
    for (double x : {0.3, 1.0, 4.2}) {
        CHECK(chi2_sf(x, 2.0) == Catch::Approx(std::exp(-0.5 * x)).margin(1e-13));
    }
    // classical 5% critical point, 1 dof
    CHECK(chi2_sf(3.841458820694124, 1.0) == Catch::Approx(0.05).margin(1e-9));
    CHECK(chi2_sf(0.0, 5.0) == 1.0);
}

TEST_CASE("kolmogorov tail") {
    // reference values hit both series branches
    CHECK(kolmogorov_p(0.5) == Catch::Approx(0.963945243664875).margin(1e-12));
    CHECK(kolmogorov_p(0.8) == Catch::Approx(0.544142411574198).margin(1e-12));
    CHECK(kolmogorov_p(1.17) == Catch::Approx(0.129390042185619).margin(1e-12));
    CHECK(kolmogorov_p(1.36) == Catch::Approx(0.049485876755378).margin(1e-12));
    CHECK(kolmogorov_p(2.0) == Catch::Approx(0.000670925255780).margin(1e-12));
    CHECK(kolmogorov_p(1e-4) == 1.0);
    CHECK(kolmogorov_p(3.0) < 1e-7);
}

TEST_CASE("one-sample ks accepts its own distribution") {
    Rng rng(41);
    std::vector<double> u(20000);
    for (auto& x : u) x = rng.uniform();
    auto res = ks_test(u, [](double x) { return x; });
    CHECK(res.p > 0.001);

    std::vector<double> g(20000);
    for (auto& x : g) x = rng.normal();
    res = ks_test(g, [](double x) { return normal_cdf(x); });
    CHECK(res.p > 0.001);
}

TEST_CASE("one-sample ks rejects a shifted distribution") {
    Rng rng(42);
    std::vector<double> g(20000);
    for (auto& x : g) x = rng.normal() + 0.2;
    const auto res = ks_test(g, [](double x) { return normal_cdf(x); });
    CHECK(res.p < 1e-6);
}

TEST_CASE("two-sample ks") {
    Rng ra(7, 0), rb(7, 1), rc(7, 2);
    std::vector<double> a(15000), b(15000), c(15000);
    for (auto& x : a) x = ra.normal();
    for (auto& x : b) x = rb.normal();
    for (auto& x : c) x = rc.normal() * 1.2;
    CHECK(ks_test_two(a, b).p > 0.001);
    CHECK(ks_test_two(a, c).p < 1e-6);
}

TEST_CASE("chi-squared goodness of fit") {
    Rng rng(11);
    const std::vector<double> probs{0.1, 0.2, 0.3, 0.25, 0.15};
    std::vector<double> counts(probs.size(), 0.0);
    for (int i = 0; i < 100000; ++i) {
        double u = rng.uniform(), acc = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k) {
            acc += probs[k];
            if (u < acc || k + 1 == probs.size()) {
                counts[k] += 1.0;
                break;
            }
        }
    }
    CHECK(chi2_gof(counts, probs).p > 0.001);

    auto skew = counts;
    skew[0] += 800.0;
    skew[2] -= 800.0;
    CHECK(chi2_gof(skew, probs).p < 1e-6);
}

TEST_CASE("total variation distance") {
    CHECK(tv_distance({0.5, 0.5}, {0.5, 0.5}) == 0.0);
    CHECK(tv_distance({1.0, 0.0}, {0.0, 1.0}) == Catch::Approx(1.0));
    CHECK(tv_distance({0.25, 0.75}, {0.5, 0.5}) == Catch::Approx(0.25));
}

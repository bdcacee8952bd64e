#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>

#include "sxp/shapley_kernel.hpp"

using namespace sxp;

TEST_CASE("kernel_weight matches the closed form", "[kernel]") {
    // (n-1)(size-1)!(n-size-1)!/n!
    CHECK(kernel_weight(4, 1) == 0.25);
    CHECK(kernel_weight(4, 2) == 0.125);
    CHECK(kernel_weight(4, 3) == 0.25);
    CHECK(kernel_weight(2, 1) == 0.5);

    REQUIRE_THROWS_AS(kernel_weight(4, 0), domain_error);
    REQUIRE_THROWS_AS(kernel_weight(4, 4), domain_error);
    REQUIRE_THROWS_AS(kernel_weight(1, 1), domain_error);
}

TEST_CASE("kernel weight symmetry is exact", "[kernel]") {
    for (int n = 2; n <= 20; ++n)
        for (int k = 1; k < n; ++k) REQUIRE(kernel_weight(n, k) == kernel_weight(n, n - k));
    // log-space path stays symmetric too
    for (int n = 21; n <= 64; n += 7)
        for (int k = 1; k < n; ++k) REQUIRE(kernel_weight(n, k) == kernel_weight(n, n - k));
}

TEST_CASE("log-space weights agree with the exact path near the guard", "[kernel]") {
    // compare n=20 exact against the same value computed via lgamma
    for (int k = 1; k < 20; ++k) {
        const double log_binom = std::lgamma(19.0) - std::lgamma(static_cast<double>(std::min(k, 20 - k))) -
                                 std::lgamma(static_cast<double>(20 - std::min(k, 20 - k)));
        const double via_log = std::exp(-(std::log(20.0) + log_binom));
        REQUIRE(kernel_weight(20, k) == Catch::Approx(via_log).epsilon(1e-12));
    }
}

TEST_CASE("size marginals normalize and stay symmetric", "[kernel]") {
    for (int n : {2, 4, 8, 16, 33}) {
        const ShapleyKernelDistribution dist(n);
        double total = 0.0;
        for (int k = 1; k < n; ++k) total += dist.size_marginal(k);
        REQUIRE(std::abs(total - 1.0) <= 1e-12);
        for (int k = 1; k < n; ++k)
            REQUIRE(dist.size_marginal(k) == Catch::Approx(dist.size_marginal(n - k)).margin(1e-15));
    }
    // N=4: marginal mass 4*w1 : 6*w2 : 4*w3 = 1 : 0.75 : 1 -> 4/11, 3/11, 4/11
    const ShapleyKernelDistribution d4(4);
    REQUIRE(d4.size_marginal(1) == Catch::Approx(4.0 / 11.0).margin(1e-15));
    REQUIRE(d4.size_marginal(2) == Catch::Approx(3.0 / 11.0).margin(1e-15));
}

TEST_CASE("sampler hits the analytic size marginals", "[kernel]") {
    const int draws = 100000;
    for (int n : {4, 8, 16}) {
        const ShapleyKernelDistribution dist(n);
        std::mt19937_64 rng(7);
        std::map<int, int> histogram;
        for (int i = 0; i < draws; ++i) {
            const CoalitionMask s = sample_coalition(rng, dist);
            const int size = s.popcount();
            REQUIRE(size >= 1);
            REQUIRE(size <= n - 1);
            ++histogram[size];
        }
        double l1 = 0.0;
        for (int k = 1; k < n; ++k)
            l1 += std::abs(static_cast<double>(histogram[k]) / draws - dist.size_marginal(k));
        INFO("n=" << n << " L1=" << l1);
        REQUIRE(l1 <= 0.01);
    }
}

TEST_CASE("subsets of a given size are uniform over players", "[kernel]") {
    // each player should appear in roughly draws * E[size]/N coalitions
    const int n = 8, draws = 60000;
    const ShapleyKernelDistribution dist(n);
    std::mt19937_64 rng(11);
    std::vector<int> appearances(n, 0);
    double total_size = 0.0;
    for (int i = 0; i < draws; ++i) {
        const CoalitionMask s = sample_coalition(rng, dist);
        total_size += s.popcount();
        for (int p = 0; p < n; ++p)
            if (s.test(p)) ++appearances[static_cast<std::size_t>(p)];
    }
    const double expected = total_size / n;
    for (int p = 0; p < n; ++p)
        REQUIRE(std::abs(appearances[static_cast<std::size_t>(p)] - expected) / expected < 0.03);
}

TEST_CASE("N=2 draws are always singletons", "[kernel]") {
    const ShapleyKernelDistribution dist(2);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) REQUIRE(sample_coalition(rng, dist).popcount() == 1);
}

TEST_CASE("paired draws are complements with valid sizes", "[kernel]") {
    const ShapleyKernelDistribution dist(6);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 500; ++i) {
        const auto [s, partner] = sample_coalition_paired(rng, dist);
        REQUIRE(partner == s.complement());
        REQUIRE(s.popcount() + partner.popcount() == 6);
        REQUIRE(s.popcount() >= 1);
        REQUIRE(partner.popcount() >= 1);
    }
}

TEST_CASE("sampling is deterministic given the seed", "[kernel]") {
    const ShapleyKernelDistribution dist(9);
    std::mt19937_64 a(123), b(123);
    for (int i = 0; i < 100; ++i) REQUIRE(sample_coalition(a, dist) == sample_coalition(b, dist));
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sxp/game.hpp"

using namespace sxp;

namespace {

TableGame random_game(int n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> values(std::size_t{1} << n);
    for (double& v : values) v = dist(rng);
    return TableGame(n, values);
}

FunctionGame additive_game(int n, std::vector<double> per_player) {
    return FunctionGame(n, [n, per_player = std::move(per_player)](const CoalitionMask& s) {
        double total = 0.0;
        for (int i = 0; i < n; ++i)
            if (s.test(i)) total += per_player[static_cast<std::size_t>(i)];
        return total;
    });
}

// v = 1 iff the coalition contains player 2 and at least one of players 0, 1
FunctionGame glove_game() {
    return FunctionGame(3, [](const CoalitionMask& s) {
        return (s.test(2) && (s.test(0) || s.test(1))) ? 1.0 : 0.0;
    });
}

} // namespace

TEST_CASE("additive game recovers its per-player terms", "[oracle]") {
    const auto game = additive_game(3, {0.5, -1.0, 2.0});
    const auto phi = exact_shapley(game, 0);
    REQUIRE(phi[0] == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(phi[1] == Catch::Approx(-1.0).margin(1e-12));
    REQUIRE(phi[2] == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("glove game attribution", "[oracle]") {
    const auto phi = exact_shapley(glove_game(), 0);
    REQUIRE(std::abs(phi[0] - 1.0 / 6.0) <= 1e-12);
    REQUIRE(std::abs(phi[1] - 1.0 / 6.0) <= 1e-12);
    REQUIRE(std::abs(phi[2] - 2.0 / 3.0) <= 1e-12);
}

TEST_CASE("zero game gets zero attributions", "[oracle]") {
    const FunctionGame game(5, [](const CoalitionMask&) { return 0.0; });
    for (double v : exact_shapley(game, 0)) REQUIRE(v == 0.0);
}

TEST_CASE("capacity guard on exact enumeration", "[oracle]") {
    const FunctionGame game(21, [](const CoalitionMask&) { return 0.0; });
    REQUIRE_THROWS_AS(exact_shapley(game, 0), capacity_error);
}

TEST_CASE("efficiency: attributions sum to v(1) - v(0)", "[oracle]") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 11); // up to 12
        const TableGame game = random_game(n, rng);
        const auto phi = exact_shapley(game, 0);
        double total = 0.0;
        for (double v : phi) total += v;
        const double expected = game.evaluate(CoalitionMask::full_set(n), 0) -
                                game.evaluate(CoalitionMask::empty_set(n), 0);
        REQUIRE(total == Catch::Approx(expected).epsilon(1e-9).margin(1e-9));
    }
}

TEST_CASE("symmetry: interchangeable players get equal values", "[oracle]") {
    // players 0 and 1 share a type: v depends only on (count of {0,1} present, other bits)
    std::mt19937_64 rng(7);
    const int n = 6;
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    // table indexed by (pair_count, packed other players)
    std::vector<std::vector<double>> table(3, std::vector<double>(std::size_t{1} << (n - 2)));
    for (auto& row : table)
        for (double& v : row) v = dist(rng);
    const FunctionGame game(n, [&](const CoalitionMask& s) {
        const int pair_count = (s.test(0) ? 1 : 0) + (s.test(1) ? 1 : 0);
        std::uint64_t rest = 0;
        for (int i = 2; i < n; ++i)
            if (s.test(i)) rest |= std::uint64_t{1} << (i - 2);
        return table[static_cast<std::size_t>(pair_count)][rest];
    });
    const auto phi = exact_shapley(game, 0);
    REQUIRE(std::abs(phi[0] - phi[1]) <= 1e-10);
}

TEST_CASE("null player gets zero", "[oracle]") {
    std::mt19937_64 rng(9);
    const int n = 6;
    const TableGame base = random_game(n - 1, rng);
    // player n-1 never changes the value
    const FunctionGame game(n, [&](const CoalitionMask& s) {
        std::uint64_t packed = 0;
        for (int i = 0; i < n - 1; ++i)
            if (s.test(i)) packed |= std::uint64_t{1} << i;
        return base.value_at(packed);
    });
    const auto phi = exact_shapley(game, 0);
    REQUIRE(std::abs(phi[static_cast<std::size_t>(n - 1)]) <= 1e-10);
}

TEST_CASE("linearity over random games", "[oracle]") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 6); // up to 8
        const TableGame g1 = random_game(n, rng);
        const TableGame g2 = random_game(n, rng);
        const double a = -1.5, b = 0.75;
        const FunctionGame combo(n, [&](const CoalitionMask& s) {
            return a * g1.evaluate(s, 0) + b * g2.evaluate(s, 0);
        });
        const auto phi1 = exact_shapley(g1, 0);
        const auto phi2 = exact_shapley(g2, 0);
        const auto phic = exact_shapley(combo, 0);
        for (int i = 0; i < n; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            REQUIRE(phic[idx] == Catch::Approx(a * phi1[idx] + b * phi2[idx]).margin(1e-9));
        }
    }
}

TEST_CASE("all-classes helper matches per-class enumeration", "[oracle]") {
    // two-class game assembled from two tables
    std::mt19937_64 rng(15);
    const int n = 5;
    const TableGame g0 = random_game(n, rng);
    const TableGame g1 = random_game(n, rng);
    struct TwoClass final : GameOracle {
        const TableGame &a, &b;
        TwoClass(const TableGame& a_, const TableGame& b_) : a(a_), b(b_) {}
        int n_players() const override { return a.n_players(); }
        int n_classes() const override { return 2; }
        double evaluate(const CoalitionMask& s, int cls) const override {
            return cls == 0 ? a.evaluate(s, 0) : b.evaluate(s, 0);
        }
    } game(g0, g1);
    const auto all = exact_shapley_all_classes(game);
    REQUIRE(all.size() == 2);
    REQUIRE(all[0] == exact_shapley(g0, 0));
    REQUIRE(all[1] == exact_shapley(g1, 0));
}

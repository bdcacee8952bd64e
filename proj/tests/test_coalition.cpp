#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "sxp/coalition.hpp"

using namespace sxp;

TEST_CASE("mask construction and bit access", "[coalition]") {
    CoalitionMask m(5);
    REQUIRE(m.n_players() == 5);
    REQUIRE(m.popcount() == 0);
    m.set(0);
    m.set(3);
    REQUIRE(m.popcount() == 2);
    REQUIRE(m.test(0));
    REQUIRE_FALSE(m.test(1));
    REQUIRE(m.test(3));
    m.set(3, false);
    REQUIRE(m.popcount() == 1);

    REQUIRE_THROWS_AS(m.test(5), domain_error);
    REQUIRE_THROWS_AS(CoalitionMask(0), domain_error);
}

TEST_CASE("complement flips every bit and only those", "[coalition]") {
    CoalitionMask m = CoalitionMask::from_packed(4, 0b0101);
    const CoalitionMask c = m.complement();
    REQUIRE(c.to_string() == "0101"); // players 0,2 in m -> 1,3 in complement
    REQUIRE(m.to_string() == "1010");
    REQUIRE(m.popcount() + c.popcount() == 4);
    REQUIRE(c.complement() == m);
}

TEST_CASE("complement respects word boundaries above 64 players", "[coalition]") {
    CoalitionMask m(70);
    m.set(69);
    const CoalitionMask c = m.complement();
    REQUIRE(c.popcount() == 69);
    REQUIRE_FALSE(c.test(69));
    REQUIRE(c.test(0));
}

TEST_CASE("enumerate_coalitions yields all masks once in packed order", "[coalition]") {
    SECTION("n=2 matches binary counting with bit 0 = player 0") {
        const auto masks = enumerate_coalitions(2);
        REQUIRE(masks.size() == 4);
        REQUIRE(masks[0].to_string() == "00");
        REQUIRE(masks[1].to_string() == "10");
        REQUIRE(masks[2].to_string() == "01");
        REQUIRE(masks[3].to_string() == "11");
    }
    SECTION("n=3 has length 8, all distinct") {
        const auto masks = enumerate_coalitions(3);
        REQUIRE(masks.size() == 8);
        std::set<std::uint64_t> seen;
        for (const auto& m : masks) seen.insert(m.packed());
        REQUIRE(seen.size() == 8);
    }
    SECTION("capacity guard") {
        REQUIRE_THROWS_AS(enumerate_coalitions(21), capacity_error);
        REQUIRE_NOTHROW(enumerate_coalitions(10));
    }
}

TEST_CASE("members lists set bits in ascending order", "[coalition]") {
    const CoalitionMask m = CoalitionMask::from_packed(6, 0b101010);
    REQUIRE(m.members() == std::vector<int>{1, 3, 5});
    REQUIRE(CoalitionMask::full_set(3).members() == std::vector<int>{0, 1, 2});
    REQUIRE(CoalitionMask::empty_set(3).members().empty());
}

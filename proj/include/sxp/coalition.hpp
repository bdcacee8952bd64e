#pragma once

#include <bit>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sxp/error.hpp"

namespace sxp {

// Binary inclusion vector over N players, packed into 64-bit words.
// Bit i corresponds to player i (0-based).
class CoalitionMask {
public:
    CoalitionMask() = default;

    explicit CoalitionMask(int n_players)
        : n_(n_players), words_((static_cast<std::size_t>(n_players) + 63) / 64, 0) {
        if (n_players <= 0) throw domain_error("CoalitionMask: n_players must be positive");
    }

    static CoalitionMask empty_set(int n_players) { return CoalitionMask(n_players); }

    static CoalitionMask full_set(int n_players) {
        CoalitionMask m(n_players);
        for (int i = 0; i < n_players; ++i) m.set(i);
        return m;
    }

    static CoalitionMask singleton(int n_players, int player) {
        CoalitionMask m(n_players);
        m.set(player);
        return m;
    }

    // Interpret the low n bits of `packed` as the mask (n_players <= 64).
    static CoalitionMask from_packed(int n_players, std::uint64_t packed) {
        if (n_players > 64) throw capacity_error("CoalitionMask::from_packed: n_players > 64");
        CoalitionMask m(n_players);
        m.words_[0] = n_players == 64 ? packed : (packed & ((std::uint64_t{1} << n_players) - 1));
        return m;
    }

    int n_players() const { return n_; }

    bool test(int i) const {
        check_index(i);
        return (words_[static_cast<std::size_t>(i) / 64] >> (i % 64)) & 1u;
    }

    void set(int i, bool value = true) {
        check_index(i);
        const std::uint64_t bit = std::uint64_t{1} << (i % 64);
        if (value)
            words_[static_cast<std::size_t>(i) / 64] |= bit;
        else
            words_[static_cast<std::size_t>(i) / 64] &= ~bit;
    }

    int popcount() const {
        int c = 0;
        for (std::uint64_t w : words_) c += std::popcount(w);
        return c;
    }

    bool is_empty() const { return popcount() == 0; }
    bool is_full() const { return popcount() == n_; }

    CoalitionMask complement() const {
        CoalitionMask out(n_);
        for (std::size_t w = 0; w < words_.size(); ++w) out.words_[w] = ~words_[w];
        out.trim();
        return out;
    }

    std::uint64_t packed() const {
        if (n_ > 64) throw capacity_error("CoalitionMask::packed: n_players > 64");
        return words_[0];
    }

    std::vector<int> members() const {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(popcount()));
        for (int i = 0; i < n_; ++i)
            if (test(i)) out.push_back(i);
        return out;
    }

    // "1011" lists players left to right: player 0, 1, 2, ...
    std::string to_string() const {
        std::string s(static_cast<std::size_t>(n_), '0');
        for (int i = 0; i < n_; ++i)
            if (test(i)) s[static_cast<std::size_t>(i)] = '1';
        return s;
    }

    friend bool operator==(const CoalitionMask& a, const CoalitionMask& b) {
        return a.n_ == b.n_ && a.words_ == b.words_;
    }

    std::size_t hash() const {
        std::size_t h = std::hash<int>{}(n_);
        for (std::uint64_t w : words_) h ^= std::hash<std::uint64_t>{}(w) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        return h;
    }

private:
    void check_index(int i) const {
        if (i < 0 || i >= n_) throw domain_error("CoalitionMask: player index out of range");
    }

    void trim() {
        const int rem = n_ % 64;
        if (rem != 0 && !words_.empty()) words_.back() &= (std::uint64_t{1} << rem) - 1;
    }

    int n_ = 0;
    std::vector<std::uint64_t> words_;
};

struct CoalitionMaskHash {
    std::size_t operator()(const CoalitionMask& m) const { return m.hash(); }
};

inline constexpr int kMaxEnumerationPlayers = 20;

// All 2^n coalitions in increasing order of the packed bit representation.
inline std::vector<CoalitionMask> enumerate_coalitions(int n) {
    if (n > kMaxEnumerationPlayers)
        throw capacity_error("enumerate_coalitions: n > " + std::to_string(kMaxEnumerationPlayers));
    if (n <= 0) throw domain_error("enumerate_coalitions: n must be positive");
    std::vector<CoalitionMask> out;
    out.reserve(std::size_t{1} << n);
    for (std::uint64_t packed = 0; packed < (std::uint64_t{1} << n); ++packed)
        out.push_back(CoalitionMask::from_packed(n, packed));
    return out;
}

} // namespace sxp

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "sxp/coalition.hpp"
#include "sxp/error.hpp"

namespace sxp {

// Value function of a cooperative game over N players, per class. evaluate()
// must be deterministic: the same (mask, class) always yields the same value.
class GameOracle {
public:
    virtual ~GameOracle() = default;

    virtual int n_players() const = 0;
    virtual int n_classes() const = 0;
    virtual double evaluate(const CoalitionMask& coalition, int cls) const = 0;

    // One call for all classes; override when a single evaluation produces the
    // whole vector (the patch network does).
    virtual std::vector<double> evaluate_all(const CoalitionMask& coalition) const {
        std::vector<double> out(static_cast<std::size_t>(n_classes()));
        for (int k = 0; k < n_classes(); ++k) out[static_cast<std::size_t>(k)] = evaluate(coalition, k);
        return out;
    }
};

// Single-class game backed by a dense table indexed by the packed mask.
class TableGame final : public GameOracle {
public:
    TableGame(int n_players, std::vector<double> values) : n_(n_players), values_(std::move(values)) {
        if (values_.size() != (std::size_t{1} << n_))
            throw dimension_error("TableGame: table size must be 2^n_players");
    }

    int n_players() const override { return n_; }
    int n_classes() const override { return 1; }

    double evaluate(const CoalitionMask& coalition, int cls) const override {
        if (cls != 0) throw domain_error("TableGame: class out of range");
        return values_[coalition.packed()];
    }

    double value_at(std::uint64_t packed) const { return values_[packed]; }

private:
    int n_;
    std::vector<double> values_;
};

// Single-class game defined by a callable.
class FunctionGame final : public GameOracle {
public:
    FunctionGame(int n_players, std::function<double(const CoalitionMask&)> fn)
        : n_(n_players), fn_(std::move(fn)) {}

    int n_players() const override { return n_; }
    int n_classes() const override { return 1; }

    double evaluate(const CoalitionMask& coalition, int cls) const override {
        if (cls != 0) throw domain_error("FunctionGame: class out of range");
        return fn_(coalition);
    }

private:
    int n_;
    std::function<double(const CoalitionMask&)> fn_;
};

namespace detail {

// phi_i = sum over coalitions without i of |s|!(N-1-|s|)!/N! * (v(s+e_i) - v(s)),
// with the weight evaluated as 1/(N * C(N-1, |s|)) to stay exact in doubles.
inline std::vector<double> shapley_from_table(int n, const std::vector<double>& value) {
    std::vector<double> weight_by_size(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        double binom = 1.0; // C(n-1, k), integer-valued and small for n <= 20
        for (int j = 1; j <= k; ++j) binom = binom * (n - j) / j;
        weight_by_size[static_cast<std::size_t>(k)] = 1.0 / (n * binom);
    }

    std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
    const std::uint64_t count = std::uint64_t{1} << n;
    for (int i = 0; i < n; ++i) {
        const std::uint64_t ei = std::uint64_t{1} << i;
        double acc = 0.0;
        for (std::uint64_t s = 0; s < count; ++s) {
            if (s & ei) continue;
            const int size = std::popcount(s);
            acc += weight_by_size[static_cast<std::size_t>(size)] * (value[s | ei] - value[s]);
        }
        phi[static_cast<std::size_t>(i)] = acc;
    }
    return phi;
}

inline void check_exact_capacity(int n) {
    if (n > kMaxEnumerationPlayers)
        throw capacity_error("exact_shapley: n_players > " + std::to_string(kMaxEnumerationPlayers) +
                             " (2^n enumeration)");
}

} // namespace detail

// Exact Shapley values of one class by full coalition enumeration.
inline std::vector<double> exact_shapley(const GameOracle& game, int cls) {
    const int n = game.n_players();
    detail::check_exact_capacity(n);
    const std::uint64_t count = std::uint64_t{1} << n;
    std::vector<double> value(count);
    for (std::uint64_t s = 0; s < count; ++s)
        value[s] = game.evaluate(CoalitionMask::from_packed(n, s), cls);
    return detail::shapley_from_table(n, value);
}

// Exact Shapley values for every class at once; evaluates each coalition once.
// Returns K vectors of length N.
inline std::vector<std::vector<double>> exact_shapley_all_classes(const GameOracle& game) {
    const int n = game.n_players();
    const int k = game.n_classes();
    detail::check_exact_capacity(n);
    const std::uint64_t count = std::uint64_t{1} << n;
    std::vector<std::vector<double>> tables(static_cast<std::size_t>(k),
                                            std::vector<double>(count));
    for (std::uint64_t s = 0; s < count; ++s) {
        const std::vector<double> v = game.evaluate_all(CoalitionMask::from_packed(n, s));
        for (int c = 0; c < k; ++c) tables[static_cast<std::size_t>(c)][s] = v[static_cast<std::size_t>(c)];
    }
    std::vector<std::vector<double>> phi;
    phi.reserve(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) phi.push_back(detail::shapley_from_table(n, tables[static_cast<std::size_t>(c)]));
    return phi;
}

} // namespace sxp

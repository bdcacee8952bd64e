#pragma once

#include <random>
#include <unordered_map>
#include <vector>

#include "sxp/coalition.hpp"
#include "sxp/game.hpp"
#include "sxp/linalg.hpp"
#include "sxp/shapley_kernel.hpp"

namespace sxp {

struct WlsObservation {
    CoalitionMask mask;
    double weight = 1.0;
    double value_delta = 0.0; // v(s) - v(0)
};

// Constrained weighted least squares data for one (game, class) pair:
//   min sum_s w_s (delta_v(s) - s^T phi)^2   s.t.  1^T phi = total_delta.
struct WlsProblem {
    int n_players = 0;
    std::vector<WlsObservation> observations;
    double total_delta = 0.0; // v(1) - v(0)
};

namespace detail {

// Aggregate repeated masks by summing their weights; the optimum is unchanged
// and the Gram matrix conditioning improves.
inline std::vector<WlsObservation> deduplicate(const std::vector<WlsObservation>& obs) {
    std::unordered_map<CoalitionMask, std::size_t, CoalitionMaskHash> index;
    std::vector<WlsObservation> out;
    out.reserve(obs.size());
    for (const WlsObservation& o : obs) {
        auto [it, inserted] = index.emplace(o.mask, out.size());
        if (inserted)
            out.push_back(o);
        else
            out[it->second].weight += o.weight;
    }
    return out;
}

} // namespace detail

// KKT solution of the constrained WLS problem. With
//   A = sum w s s^T + ridge I,   b = sum w s delta_v,
// the minimizer is phi = A^-1 b - A^-1 1 * (1^T A^-1 b - total_delta) / (1^T A^-1 1).
inline std::vector<double> solve_constrained_wls(const WlsProblem& problem, double ridge = 0.0) {
    const int n = problem.n_players;
    if (n <= 0) throw domain_error("solve_constrained_wls: n_players must be positive");
    if (ridge < 0.0) throw domain_error("solve_constrained_wls: ridge must be >= 0");

    const std::vector<WlsObservation> obs = detail::deduplicate(problem.observations);
    if (static_cast<int>(obs.size()) < n)
        throw underdetermined_error("solve_constrained_wls: fewer distinct observations (" +
                                    std::to_string(obs.size()) + ") than players (" +
                                    std::to_string(n) + ")");

    Matrix a(n, n);
    std::vector<double> b(static_cast<std::size_t>(n), 0.0);
    for (const WlsObservation& o : obs) {
        if (o.mask.n_players() != n)
            throw dimension_error("solve_constrained_wls: observation mask has wrong player count");
        const int pop = o.mask.popcount();
        if (pop < 1 || pop >= n)
            throw domain_error("solve_constrained_wls: observation coalition size out of [1, N-1]");
        if (o.weight <= 0.0) throw domain_error("solve_constrained_wls: weights must be positive");
        const std::vector<int> players = o.mask.members();
        for (int i : players) {
            for (int j : players) a(i, j) += o.weight;
            b[static_cast<std::size_t>(i)] += o.weight * o.value_delta;
        }
    }
    for (int i = 0; i < n; ++i) a(i, i) += ridge;

    auto solve = [&](const std::vector<double>& rhs) {
        auto x = cholesky_solve(a, rhs);
        if (!x) x = lu_full_pivot_solve(a, rhs);
        if (!x) {
            if (ridge == 0.0)
                throw singular_error("solve_constrained_wls: Gram matrix is singular; retry with a positive ridge");
            throw singular_error("solve_constrained_wls: Gram matrix is singular despite ridge");
        }
        return *x;
    };

    const std::vector<double> x = solve(b);
    const std::vector<double> z = solve(std::vector<double>(static_cast<std::size_t>(n), 1.0));

    double sum_x = 0.0, sum_z = 0.0;
    for (int i = 0; i < n; ++i) {
        sum_x += x[static_cast<std::size_t>(i)];
        sum_z += z[static_cast<std::size_t>(i)];
    }
    const double shift = (sum_x - problem.total_delta) / sum_z;

    std::vector<double> phi(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        phi[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - shift * z[static_cast<std::size_t>(i)];
    return phi;
}

// Full-enumeration KernelSHAP: every proper coalition with its exact kernel
// weight. Recovers the exact Shapley values (up to solver roundoff).
inline WlsProblem full_enumeration_problem(const GameOracle& game, int cls) {
    const int n = game.n_players();
    if (n > kMaxEnumerationPlayers)
        throw capacity_error("full_enumeration_problem: n_players > " + std::to_string(kMaxEnumerationPlayers));
    const double v0 = game.evaluate(CoalitionMask::empty_set(n), cls);
    const double v1 = game.evaluate(CoalitionMask::full_set(n), cls);

    WlsProblem problem;
    problem.n_players = n;
    problem.total_delta = v1 - v0;
    problem.observations.reserve((std::size_t{1} << n) - 2);
    for (std::uint64_t packed = 1; packed < (std::uint64_t{1} << n) - 1; ++packed) {
        CoalitionMask mask = CoalitionMask::from_packed(n, packed);
        const int size = mask.popcount();
        const double v = game.evaluate(mask, cls);
        problem.observations.push_back({std::move(mask), kernel_weight(n, size), v - v0});
    }
    return problem;
}

inline std::vector<double> estimate_shapley_full(const GameOracle& game, int cls) {
    return solve_constrained_wls(full_enumeration_problem(game, cls), 0.0);
}

inline constexpr double kDefaultSampledRidge = 1e-6;

// Sampled KernelSHAP. Masks are drawn from the kernel distribution, so the
// regression uses unit weights; duplicates aggregate by count. With `paired`,
// draws come in complement pairs (n_samples is rounded up to even).
inline std::vector<double> estimate_shapley_sampled(const GameOracle& game, int cls, int n_samples,
                                                    std::mt19937_64& rng, bool paired,
                                                    double ridge = kDefaultSampledRidge) {
    const int n = game.n_players();
    if (n_samples < 2 * n)
        throw domain_error("estimate_shapley_sampled: need n_samples >= 2 * n_players");

    const ShapleyKernelDistribution dist(n);
    const double v0 = game.evaluate(CoalitionMask::empty_set(n), cls);
    const double v1 = game.evaluate(CoalitionMask::full_set(n), cls);

    WlsProblem problem;
    problem.n_players = n;
    problem.total_delta = v1 - v0;
    problem.observations.reserve(static_cast<std::size_t>(n_samples) + 1);
    while (static_cast<int>(problem.observations.size()) < n_samples) {
        if (paired) {
            auto [s, partner] = sample_coalition_paired(rng, dist);
            problem.observations.push_back({s, 1.0, game.evaluate(s, cls) - v0});
            problem.observations.push_back({partner, 1.0, game.evaluate(partner, cls) - v0});
        } else {
            CoalitionMask s = sample_coalition(rng, dist);
            const double v = game.evaluate(s, cls);
            problem.observations.push_back({std::move(s), 1.0, v - v0});
        }
    }
    return solve_constrained_wls(problem, ridge);
}

} // namespace sxp

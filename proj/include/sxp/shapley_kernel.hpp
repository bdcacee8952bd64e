#pragma once

#include <cmath>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "sxp/coalition.hpp"
#include "sxp/error.hpp"

namespace sxp {

// Shapley kernel weight of one coalition of the given size:
//   (n-1) (size-1)! (n-size-1)! / n!  ==  1 / (n * C(n-2, size-1)).
// The binomial form is exact in doubles for n <= 20; larger n go through
// log-gamma.
inline double kernel_weight(int n, int size) {
    if (n < 2) throw domain_error("kernel_weight: need n >= 2");
    if (size <= 0 || size >= n)
        throw domain_error("kernel_weight: size must be in (0, n); empty and full coalitions are excluded");
    if (n <= kMaxEnumerationPlayers) {
        double binom = 1.0; // C(n-2, size-1)
        for (int j = 1; j <= size - 1; ++j) binom = binom * (n - 1 - j) / j;
        return 1.0 / (n * binom);
    }
    // order-normalize so the symmetry size <-> n-size is exact in log space too
    const int a = std::min(size, n - size);
    const double log_binom = std::lgamma(n - 1.0) - std::lgamma(a) - std::lgamma(n - a);
    return std::exp(-(std::log(static_cast<double>(n)) + log_binom));
}

// Coalition-size distribution induced by the Shapley kernel: the weight of one
// coalition of size k times the number C(N,k) of such coalitions, normalized
// over sizes 1..N-1.
class ShapleyKernelDistribution {
public:
    explicit ShapleyKernelDistribution(int n_players) : n_(n_players) {
        if (n_players < 2) throw domain_error("ShapleyKernelDistribution: need n_players >= 2");
        size_weights_.resize(static_cast<std::size_t>(n_players - 1));
        size_marginals_.resize(static_cast<std::size_t>(n_players - 1));
        for (int k = 1; k < n_players; ++k)
            size_weights_[static_cast<std::size_t>(k - 1)] = kernel_weight(n_players, k);
        // marginal(k) proportional to C(N,k) * weight(k) == (N-1)/(k(N-k))
        double total = 0.0;
        for (int k = 1; k < n_players; ++k) {
            const double mass = (n_players - 1.0) / (static_cast<double>(k) * (n_players - k));
            size_marginals_[static_cast<std::size_t>(k - 1)] = mass;
            total += mass;
        }
        for (double& m : size_marginals_) m /= total;
        cumulative_.resize(size_marginals_.size());
        std::partial_sum(size_marginals_.begin(), size_marginals_.end(), cumulative_.begin());
        cumulative_.back() = 1.0;
    }

    int n_players() const { return n_; }

    // weight of one coalition of size k (k in [1, N-1])
    double size_weight(int k) const { return size_weights_.at(static_cast<std::size_t>(k - 1)); }
    // probability of drawing a coalition of size k
    double size_marginal(int k) const { return size_marginals_.at(static_cast<std::size_t>(k - 1)); }

    const std::vector<double>& size_marginals() const { return size_marginals_; }

    int sample_size(std::mt19937_64& rng) const {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        for (std::size_t k = 0; k < cumulative_.size(); ++k)
            if (u < cumulative_[k]) return static_cast<int>(k) + 1;
        return n_ - 1;
    }

private:
    int n_;
    std::vector<double> size_weights_;
    std::vector<double> size_marginals_;
    std::vector<double> cumulative_;
};

// Two-stage kernel draw: a size from the marginal, then a uniform subset of
// exactly that size (partial Fisher-Yates).
inline CoalitionMask sample_coalition(std::mt19937_64& rng, const ShapleyKernelDistribution& dist) {
    const int n = dist.n_players();
    const int size = dist.sample_size(rng);
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    CoalitionMask mask(n);
    for (int j = 0; j < size; ++j) {
        std::uniform_int_distribution<int> pick(j, n - 1);
        std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick(rng))]);
        mask.set(pool[static_cast<std::size_t>(j)]);
    }
    return mask;
}

// Antithetic draw: a kernel sample and its complement. The complement of a
// size-k coalition has size N-k, so both members are valid kernel coalitions.
inline std::pair<CoalitionMask, CoalitionMask> sample_coalition_paired(
    std::mt19937_64& rng, const ShapleyKernelDistribution& dist) {
    CoalitionMask s = sample_coalition(rng, dist);
    CoalitionMask partner = s.complement();
    return {std::move(s), std::move(partner)};
}

} // namespace sxp

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sxp/coalition.hpp"
#include "sxp/game.hpp"
#include "sxp/nn.hpp"
#include "sxp/patch_net.hpp"

namespace sxp {

// All perturbation metrics see the model through this: class probabilities
// for the input restricted to a coalition. The empty coalition maps to the
// uniform distribution (zero logits for every class).
using MaskedPredictor = std::function<std::vector<double>(const CoalitionMask&)>;

inline MaskedPredictor masked_predictor(const PatchNet& net, const PatchGrid& grid) {
    return [&net, &grid](const CoalitionMask& mask) {
        const MaskedForward fwd = forward_masked(net, grid, mask);
        return softmax(fwd.values);
    };
}

// Patch indices in descending saliency order, ties broken by lower index.
inline std::vector<int> saliency_ranking(std::span<const double> saliency) {
    std::vector<int> order(saliency.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (saliency[static_cast<std::size_t>(a)] != saliency[static_cast<std::size_t>(b)])
            return saliency[static_cast<std::size_t>(a)] > saliency[static_cast<std::size_t>(b)];
        return a < b;
    });
    return order;
}

// Average drop in class probability while removing the most salient patches
// first: mean over k = 0..steps of p(full) - p(top ceil(kN/steps) removed).
inline double aopc(const MaskedPredictor& predict, int n_patches, int cls,
                   std::span<const double> saliency, int steps = 10) {
    if (static_cast<int>(saliency.size()) != n_patches)
        throw dimension_error("aopc: saliency length != patch count");
    const std::vector<int> order = saliency_ranking(saliency);
    const double p_full = predict(CoalitionMask::full_set(n_patches))[static_cast<std::size_t>(cls)];
    double total = 0.0;
    for (int k = 0; k <= steps; ++k) {
        const int n_remove = static_cast<int>((static_cast<long>(k) * n_patches + steps - 1) / steps);
        CoalitionMask mask = CoalitionMask::full_set(n_patches);
        for (int j = 0; j < n_remove; ++j) mask.set(order[static_cast<std::size_t>(j)], false);
        const double p = n_remove == 0 ? p_full : predict(mask)[static_cast<std::size_t>(cls)];
        total += p_full - p;
    }
    return total / (steps + 1);
}

inline constexpr double kProbabilityFloor = 1e-12;

// Mean over ratios of log(p(top ceil(rN) removed) / p(full)); probabilities
// floored before the ratio.
inline double log_odds(const MaskedPredictor& predict, int n_patches, int cls,
                       std::span<const double> saliency,
                       std::span<const double> ratios = std::span<const double>()) {
    if (static_cast<int>(saliency.size()) != n_patches)
        throw dimension_error("log_odds: saliency length != patch count");
    static constexpr double kDefaultRatios[] = {0.1, 0.2, 0.3, 0.4, 0.5};
    if (ratios.empty()) ratios = kDefaultRatios;
    for (double r : ratios)
        if (r <= 0.0 || r >= 1.0) throw domain_error("log_odds: ratios must lie in (0, 1)");

    const std::vector<int> order = saliency_ranking(saliency);
    const double p_full =
        std::max(predict(CoalitionMask::full_set(n_patches))[static_cast<std::size_t>(cls)], kProbabilityFloor);
    double total = 0.0;
    for (double r : ratios) {
        const int n_remove = static_cast<int>(std::ceil(r * n_patches - 1e-9));
        CoalitionMask mask = CoalitionMask::full_set(n_patches);
        for (int j = 0; j < n_remove; ++j) mask.set(order[static_cast<std::size_t>(j)], false);
        const double p = std::max(predict(mask)[static_cast<std::size_t>(cls)], kProbabilityFloor);
        total += std::log(p / p_full);
    }
    return total / static_cast<double>(ratios.size());
}

// Salience-guided faithfulness coefficient over `groups` contiguous
// saliency-ranked patch groups (earlier groups take the remainder).
// Result lies in [-1, 1]; 0 when every group carries the same saliency mass.
inline double saco(const MaskedPredictor& predict, int n_patches, int cls,
                   std::span<const double> saliency, int groups = 10) {
    if (static_cast<int>(saliency.size()) != n_patches)
        throw dimension_error("saco: saliency length != patch count");
    if (groups < 1 || groups > n_patches)
        throw domain_error("saco: groups must be in [1, patch count]");

    const std::vector<int> order = saliency_ranking(saliency);
    const double p_full = predict(CoalitionMask::full_set(n_patches))[static_cast<std::size_t>(cls)];

    const int base = n_patches / groups;
    const int remainder = n_patches % groups;
    std::vector<double> group_saliency(static_cast<std::size_t>(groups), 0.0);
    std::vector<double> group_impact(static_cast<std::size_t>(groups), 0.0);
    int cursor = 0;
    for (int g = 0; g < groups; ++g) {
        const int size = base + (g < remainder ? 1 : 0);
        CoalitionMask mask = CoalitionMask::full_set(n_patches); // only this group masked
        for (int j = 0; j < size; ++j) {
            const int patch = order[static_cast<std::size_t>(cursor + j)];
            group_saliency[static_cast<std::size_t>(g)] += saliency[static_cast<std::size_t>(patch)];
            mask.set(patch, false);
        }
        cursor += size;
        group_impact[static_cast<std::size_t>(g)] = p_full - predict(mask)[static_cast<std::size_t>(cls)];
    }

    double numer = 0.0, denom = 0.0;
    for (int i = 0; i < groups; ++i) {
        for (int j = i + 1; j < groups; ++j) {
            const double ds = group_saliency[static_cast<std::size_t>(i)] - group_saliency[static_cast<std::size_t>(j)];
            denom += std::abs(ds);
            numer += (group_impact[static_cast<std::size_t>(i)] >= group_impact[static_cast<std::size_t>(j)]) ? ds : -ds;
        }
    }
    return denom == 0.0 ? 0.0 : numer / denom;
}

struct InsertionDeletion {
    double insertion_auc = 0.0;
    double deletion_auc = 0.0;
};

namespace detail {

inline double trapezoid_auc(const std::vector<double>& curve) {
    const std::size_t n = curve.size() - 1;
    double area = 0.0;
    for (std::size_t j = 1; j < curve.size(); ++j) area += 0.5 * (curve[j - 1] + curve[j]);
    return area / static_cast<double>(n);
}

} // namespace detail

// Deletion: remove patches one at a time in descending saliency, tracking the
// class probability from p(full) down to the empty coalition (uniform).
// Insertion: the same walk from empty to full. Both AUCs use the trapezoid
// rule over the (N+1)-point curve with x normalized to [0, 1].
inline InsertionDeletion insertion_deletion(const MaskedPredictor& predict, int n_patches, int cls,
                                            std::span<const double> saliency) {
    if (static_cast<int>(saliency.size()) != n_patches)
        throw dimension_error("insertion_deletion: saliency length != patch count");
    const std::vector<int> order = saliency_ranking(saliency);

    std::vector<double> deletion_curve;
    deletion_curve.reserve(static_cast<std::size_t>(n_patches) + 1);
    CoalitionMask mask = CoalitionMask::full_set(n_patches);
    deletion_curve.push_back(predict(mask)[static_cast<std::size_t>(cls)]);
    for (int j = 0; j < n_patches; ++j) {
        mask.set(order[static_cast<std::size_t>(j)], false);
        deletion_curve.push_back(predict(mask)[static_cast<std::size_t>(cls)]);
    }

    std::vector<double> insertion_curve;
    insertion_curve.reserve(static_cast<std::size_t>(n_patches) + 1);
    CoalitionMask grow = CoalitionMask::empty_set(n_patches);
    insertion_curve.push_back(predict(grow)[static_cast<std::size_t>(cls)]);
    for (int j = 0; j < n_patches; ++j) {
        grow.set(order[static_cast<std::size_t>(j)]);
        insertion_curve.push_back(predict(grow)[static_cast<std::size_t>(cls)]);
    }

    return {detail::trapezoid_auc(insertion_curve), detail::trapezoid_auc(deletion_curve)};
}

struct LocalizationScores {
    double pixel_accuracy = 0.0;
    double average_precision = 0.0;
    double iou = 0.0;
};

// Threshold-binarized localization of one saliency map against the
// ground-truth patch set: binarize at the map mean, then pixel accuracy,
// ranking AP, and IoU (empty-vs-empty counts as 1).
inline LocalizationScores localization_scores(std::span<const double> saliency,
                                              const CoalitionMask& ground_truth) {
    const int n = ground_truth.n_players();
    if (static_cast<int>(saliency.size()) != n)
        throw dimension_error("localization_scores: saliency length != ground truth length");

    double mean = 0.0;
    for (double v : saliency) mean += v;
    mean /= n;

    LocalizationScores out;
    int inter = 0, uni = 0, correct = 0;
    for (int i = 0; i < n; ++i) {
        const bool predicted = saliency[static_cast<std::size_t>(i)] > mean;
        const bool actual = ground_truth.test(i);
        if (predicted == actual) ++correct;
        if (predicted && actual) ++inter;
        if (predicted || actual) ++uni;
    }
    out.pixel_accuracy = static_cast<double>(correct) / n;
    out.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;

    const int n_pos = ground_truth.popcount();
    if (n_pos == 0) {
        out.average_precision = 1.0;
    } else {
        const std::vector<int> order = saliency_ranking(saliency);
        int hits = 0;
        double ap = 0.0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            if (ground_truth.test(order[k])) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(k + 1);
            }
        }
        out.average_precision = ap / n_pos;
    }
    return out;
}

inline constexpr int kMaxFidelityPlayers = 12;

// Mean absolute gap between the network's own attribution matrix and the
// exact Shapley values of its masked-input game, averaged over classes.
inline double shap_fidelity(const PatchNet& net, const PatchGrid& grid) {
    const int n = grid.n_patches();
    if (n > kMaxFidelityPlayers)
        throw capacity_error("shap_fidelity: n_patches > " + std::to_string(kMaxFidelityPlayers));
    const PatchGameOracle oracle = as_game_oracle(net, grid);
    const std::vector<std::vector<double>> exact = exact_shapley_all_classes(oracle);
    const FullForward fwd = forward_full(net, grid);
    double total = 0.0;
    for (int cls = 0; cls < net.cfg.n_classes; ++cls) {
        double class_total = 0.0;
        for (int i = 0; i < n; ++i)
            class_total += std::abs(fwd.phi(i, cls) - exact[static_cast<std::size_t>(cls)][static_cast<std::size_t>(i)]);
        total += class_total / n;
    }
    return total / net.cfg.n_classes;
}

struct MetricReport {
    std::optional<double> aopc;
    std::optional<double> lodds;
    std::optional<double> saco;
    std::optional<double> insertion_auc;
    std::optional<double> deletion_auc;
    std::optional<double> pixel_accuracy;
    std::optional<double> mean_average_precision;
    std::optional<double> mean_iou;
    std::optional<double> shap_fidelity;
    int n_examples = 0;

    static std::string csv_header() {
        return "n_examples,aopc,lodds,saco,insertion_auc,deletion_auc,pix_acc,map,miou,shap_fidelity";
    }

    std::string csv_row() const {
        auto cell = [](const std::optional<double>& v) {
            if (!v) return std::string();
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.10g", *v);
            return std::string(buf);
        };
        std::string row = std::to_string(n_examples);
        for (const auto* v : {&aopc, &lodds, &saco, &insertion_auc, &deletion_auc,
                              &pixel_accuracy, &mean_average_precision, &mean_iou, &shap_fidelity})
            row += "," + cell(*v);
        return row;
    }
};

} // namespace sxp

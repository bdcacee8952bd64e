#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sxp/checkpoint.hpp"
#include "sxp/io_util.hpp"
#include "sxp/metrics.hpp"
#include "sxp/patch_net.hpp"
#include "sxp/shapley_kernel.hpp"
#include "sxp/synth_data.hpp"

namespace sxp {

struct TrainConfig {
    double lambda = 1.0;          // weight of the Shapley loss in the total loss
    int masks_per_example = 1;    // kernel draws per example per step
    bool paired_sampling = true;  // each draw also contributes its complement
    bool shap_all_classes = false; // sum the Shapley loss over all classes instead of one sampled class
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;
    MaskingMode masking_mode = MaskingMode::removal;
    int eval_every = 0;           // validation frequency in steps; 0 = final step only
    int fidelity_examples = 8;    // validation examples for exact-oracle fidelity (needs N <= 12)

    void validate() const {
        if (!std::isfinite(lambda) || lambda < 0.0) throw domain_error("TrainConfig: lambda must be finite and >= 0");
        if (masks_per_example < 1) throw domain_error("TrainConfig: masks_per_example must be >= 1");
        if (epochs < 1) throw domain_error("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw domain_error("TrainConfig: batch_size must be >= 1");
        if (learning_rate <= 0.0) throw domain_error("TrainConfig: learning_rate must be positive");
        if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
            throw domain_error("TrainConfig: betas must lie in [0, 1)");
        if (adam_eps <= 0.0) throw domain_error("TrainConfig: adam_eps must be positive");
        if (eval_every < 0) throw domain_error("TrainConfig: eval_every must be >= 0");
        if (fidelity_examples < 0) throw domain_error("TrainConfig: fidelity_examples must be >= 0");
    }
};

class AdamOptimizer {
public:
    AdamOptimizer(std::span<Parameter* const> params, double lr, double beta1, double beta2,
                  double eps)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const Parameter* p : params) {
            m_.emplace_back(p->value.rows(), p->value.cols());
            v_.emplace_back(p->value.rows(), p->value.cols());
        }
    }

    void step(std::span<Parameter* const> params) {
        if (params.size() != m_.size()) throw dimension_error("AdamOptimizer: parameter count changed");
        ++t_;
        const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Parameter& p = *params[i];
            double* m = m_[i].data();
            double* v = v_[i].data();
            double* val = p.value.data();
            const double* g = p.grad.data();
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
                val[j] -= lr_ * (m[j] / bias1) / (std::sqrt(v[j] / bias2) + eps_);
            }
        }
    }

    long step_count() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Matrix> m_, v_;
};

// --- loss building blocks ---------------------------------------------------

struct ShapleyLossResult {
    double loss = 0.0;
    double gap = 0.0; // v_y(s) - s^T Phi[:, y]
    FullForward full;
    MaskedForward masked;
};

// Squared gap between the masked branch's class-y value and the
// coalition-selected sum of the full branch's attributions, both on the same
// parameters. The full mask is admissible here (loss is exactly 0 for it).
inline ShapleyLossResult shapley_loss(const PatchNet& net, const PatchGrid& grid,
                                      const CoalitionMask& mask, int cls) {
    if (mask.popcount() < 1) throw domain_error("shapley_loss: empty coalition");
    if (cls < 0 || cls >= net.cfg.n_classes) throw domain_error("shapley_loss: class out of range");
    ShapleyLossResult out;
    out.full = forward_full(net, grid);
    out.masked = forward_masked(net, grid, mask);
    double selected = 0.0;
    for (int i = 0; i < grid.n_patches(); ++i)
        if (mask.test(i)) selected += out.full.phi(i, cls);
    out.gap = out.masked.values[static_cast<std::size_t>(cls)] - selected;
    out.loss = out.gap * out.gap;
    return out;
}

// Backpropagate `upstream * d(loss)` through both branches.
inline void shapley_loss_backward(PatchNet& net, const ShapleyLossResult& r, int cls,
                                  double upstream = 1.0) {
    const double coeff = 2.0 * r.gap * upstream;
    std::vector<double> dvalues(static_cast<std::size_t>(net.cfg.n_classes), 0.0);
    dvalues[static_cast<std::size_t>(cls)] = coeff;
    backward_masked(net, r.masked, Matrix(), dvalues);
    Matrix dphi(r.full.phi.rows(), r.full.phi.cols());
    for (int i = 0; i < r.full.phi.rows(); ++i)
        if (r.masked.mask.test(i)) dphi(i, cls) = -coeff;
    backward_full(net, r.full, dphi, {});
}

struct ClassificationLossResult {
    double loss = 0.0;
    FullForward full;
    std::vector<double> probs;
    std::vector<double> dlogits; // softmax - onehot (unscaled)
};

inline ClassificationLossResult classification_loss(const PatchNet& net, const PatchGrid& grid,
                                                    int label) {
    if (label < 0 || label >= net.cfg.n_classes)
        throw domain_error("classification_loss: label out of range");
    ClassificationLossResult out;
    out.full = forward_full(net, grid);
    out.probs = softmax(out.full.logits);
    out.loss = -std::log(std::max(out.probs[static_cast<std::size_t>(label)], 1e-300));
    out.dlogits = out.probs;
    out.dlogits[static_cast<std::size_t>(label)] -= 1.0;
    return out;
}

inline void classification_loss_backward(PatchNet& net, const ClassificationLossResult& r,
                                         double upstream = 1.0) {
    std::vector<double> dlogits = r.dlogits;
    for (double& v : dlogits) v *= upstream;
    backward_full(net, r.full, Matrix(), dlogits);
}

// --- the training step -------------------------------------------------------

struct TrainExample {
    const PatchGrid* grid = nullptr;
    int label = 0;
};

struct StepMetrics {
    double loss_total = 0.0;
    double loss_cls = 0.0;
    double loss_shap = 0.0;
};

inline int predicted_class(std::span<const double> logits) {
    int best = 0;
    for (int k = 1; k < static_cast<int>(logits.size()); ++k)
        if (logits[static_cast<std::size_t>(k)] > logits[static_cast<std::size_t>(best)]) best = k;
    return best;
}

// One optimizer update on a batch. Per example: cross-entropy on the full
// branch; a sampled class and `masks_per_example` kernel draws (plus
// complements when paired) for the Shapley loss. The class/mask draws are
// consumed even at lambda = 0 so runs with different lambda stay
// seed-comparable, and the Shapley loss is always reported.
inline StepMetrics train_step(PatchNet& net, AdamOptimizer& optimizer,
                              std::span<const TrainExample> batch, const TrainConfig& config,
                              const ShapleyKernelDistribution& dist, std::mt19937_64& rng,
                              long step_index) {
    if (batch.empty()) throw domain_error("train_step: empty batch");
    const int n = net.cfg.n_patches;
    const int k = net.cfg.n_classes;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    net.zero_grad();
    StepMetrics metrics;

    for (const TrainExample& example : batch) {
        const PatchGrid& grid = *example.grid;
        const FullForward full = forward_full(net, grid);

        const std::vector<double> probs = softmax(full.logits);
        metrics.loss_cls += -std::log(std::max(probs[static_cast<std::size_t>(example.label)], 1e-300)) * inv_batch;
        std::vector<double> dlogits(probs);
        dlogits[static_cast<std::size_t>(example.label)] -= 1.0;
        for (double& v : dlogits) v *= inv_batch;

        std::vector<int> targets;
        if (config.shap_all_classes) {
            targets.resize(static_cast<std::size_t>(k));
            std::iota(targets.begin(), targets.end(), 0);
        } else {
            targets.push_back(std::uniform_int_distribution<int>(0, k - 1)(rng));
        }
        std::vector<CoalitionMask> masks;
        masks.reserve(static_cast<std::size_t>(config.masks_per_example) * (config.paired_sampling ? 2 : 1));
        for (int d = 0; d < config.masks_per_example; ++d) {
            if (config.paired_sampling) {
                auto [s, partner] = sample_coalition_paired(rng, dist);
                masks.push_back(std::move(s));
                masks.push_back(std::move(partner));
            } else {
                masks.push_back(sample_coalition(rng, dist));
            }
        }

        const double inv_terms = 1.0 / static_cast<double>(masks.size() * targets.size());
        const bool train_shap = config.lambda != 0.0;
        Matrix dphi;
        if (train_shap) dphi = Matrix(n, k);

        double example_shap = 0.0;
        for (const CoalitionMask& mask : masks) {
            const MaskedForward masked = forward_masked(net, grid, mask);
            std::vector<double> dvalues(static_cast<std::size_t>(k), 0.0);
            for (int cls : targets) {
                double selected = 0.0;
                for (int i = 0; i < n; ++i)
                    if (mask.test(i)) selected += full.phi(i, cls);
                const double gap = masked.values[static_cast<std::size_t>(cls)] - selected;
                example_shap += gap * gap * inv_terms;
                if (train_shap) {
                    const double coeff = 2.0 * gap * config.lambda * inv_batch * inv_terms;
                    dvalues[static_cast<std::size_t>(cls)] += coeff;
                    for (int i = 0; i < n; ++i)
                        if (mask.test(i)) dphi(i, cls) -= coeff;
                }
            }
            if (train_shap) backward_masked(net, masked, Matrix(), dvalues);
        }
        metrics.loss_shap += example_shap * inv_batch;

        backward_full(net, full, train_shap ? dphi : Matrix(), dlogits);
    }

    metrics.loss_total = metrics.loss_cls + config.lambda * metrics.loss_shap;
    if (!std::isfinite(metrics.loss_total) || !std::isfinite(metrics.loss_cls) ||
        !std::isfinite(metrics.loss_shap))
        throw divergence_error("train_step: non-finite loss at step " + std::to_string(step_index) +
                               " (cls=" + std::to_string(metrics.loss_cls) +
                               ", shap=" + std::to_string(metrics.loss_shap) + ")");

    optimizer.step(net.parameters());
    return metrics;
}

// --- evaluation helpers ------------------------------------------------------

inline std::vector<PatchGrid> decompose_all(const Dataset& dataset) {
    std::vector<PatchGrid> grids;
    grids.reserve(dataset.examples.size());
    for (const LabeledExample& ex : dataset.examples) grids.push_back(decompose(ex.image, dataset.patch_size));
    return grids;
}

inline double evaluate_accuracy(const PatchNet& net, const Dataset& dataset,
                                const std::vector<PatchGrid>& grids) {
    if (dataset.examples.empty()) return std::numeric_limits<double>::quiet_NaN();
    int correct = 0;
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
        const FullForward fwd = forward_full(net, grids[i]);
        if (predicted_class(fwd.logits) == dataset.examples[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.examples.size());
}

// Mean squared masked/full gap over fresh kernel draws; forward passes only.
inline double evaluate_mean_shapley_loss(const PatchNet& net, const std::vector<PatchGrid>& grids,
                                         int draws_per_example, std::mt19937_64& rng) {
    if (grids.empty()) return std::numeric_limits<double>::quiet_NaN();
    const ShapleyKernelDistribution dist(net.cfg.n_patches);
    std::uniform_int_distribution<int> pick_class(0, net.cfg.n_classes - 1);
    double total = 0.0;
    long terms = 0;
    for (const PatchGrid& grid : grids) {
        for (int d = 0; d < draws_per_example; ++d) {
            const CoalitionMask mask = sample_coalition(rng, dist);
            const int cls = pick_class(rng);
            total += shapley_loss(net, grid, mask, cls).loss;
            ++terms;
        }
    }
    return total / static_cast<double>(terms);
}

inline double evaluate_mean_fidelity(const PatchNet& net, const std::vector<PatchGrid>& grids,
                                     int max_examples) {
    const std::size_t count = std::min<std::size_t>(grids.size(), static_cast<std::size_t>(max_examples));
    if (count == 0) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) total += shap_fidelity(net, grids[i]);
    return total / static_cast<double>(count);
}

// --- the training loop -------------------------------------------------------

struct TrainPaths {
    std::string checkpoint; // empty = do not write
    std::string log_csv;    // empty = do not write
};

struct TrainResult {
    PatchNet net;
    long steps = 0;
    double val_accuracy = std::numeric_limits<double>::quiet_NaN();
    double val_shap_fidelity = std::numeric_limits<double>::quiet_NaN();
    double final_loss_cls = 0.0;
    double final_loss_shap = 0.0;
    std::string log; // the CSV written to log_csv

    explicit TrainResult(PatchNet trained) : net(std::move(trained)) {}
};

inline constexpr const char* kTrainLogHeader =
    "step,epoch,loss_total,loss_cls,loss_shap,val_acc,val_shap_fidelity";

// Full training run: seeded init, seeded epoch shuffles, one log row per
// step, periodic validation, atomic checkpoint/log writes at the end.
inline TrainResult train(const Dataset& train_set, const Dataset& val_set,
                         PatchNetConfig model_cfg, const TrainConfig& config,
                         const TrainPaths& paths = {}) {
    config.validate();
    if (train_set.examples.empty()) throw domain_error("train: empty training set");
    if (train_set.n_patches() != model_cfg.n_patches)
        throw dimension_error("train: dataset patch grid does not match the model");
    if (train_set.n_classes != model_cfg.n_classes)
        throw dimension_error("train: dataset class count does not match the model");
    model_cfg.masking = config.masking_mode;
    model_cfg.patch_size = train_set.patch_size;

    std::mt19937_64 rng(config.seed);
    PatchNet net(model_cfg);
    net.init_parameters(rng);

    const std::vector<PatchGrid> train_grids = decompose_all(train_set);
    const std::vector<PatchGrid> val_grids = decompose_all(val_set);
    const ShapleyKernelDistribution dist(model_cfg.n_patches);
    AdamOptimizer optimizer(net.parameters(), config.learning_rate, config.adam_beta1,
                            config.adam_beta2, config.adam_eps);

    const long per_epoch =
        (static_cast<long>(train_set.examples.size()) + config.batch_size - 1) / config.batch_size;
    const long total_steps = per_epoch * config.epochs;

    std::vector<std::size_t> order(train_set.examples.size());
    std::iota(order.begin(), order.end(), 0);

    std::string log = std::string(kTrainLogHeader) + "\n";
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };

    TrainResult result(std::move(net));
    long step = 0;
    const bool fidelity_possible =
        model_cfg.n_patches <= kMaxFidelityPlayers && config.fidelity_examples > 0 && !val_grids.empty();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (long b = 0; b < per_epoch; ++b) {
            std::vector<TrainExample> batch;
            const std::size_t begin = static_cast<std::size_t>(b) * config.batch_size;
            const std::size_t end =
                std::min(begin + static_cast<std::size_t>(config.batch_size), order.size());
            batch.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i)
                batch.push_back({&train_grids[order[i]], train_set.examples[order[i]].label});

            ++step;
            const StepMetrics metrics =
                train_step(result.net, optimizer, batch, config, dist, rng, step);

            const bool validate_now =
                step == total_steps || (config.eval_every > 0 && step % config.eval_every == 0);
            std::string val_acc_cell, val_fid_cell;
            if (validate_now) {
                const double acc = evaluate_accuracy(result.net, val_set, val_grids);
                if (!std::isnan(acc)) {
                    result.val_accuracy = acc;
                    val_acc_cell = fmt(acc);
                }
                if (fidelity_possible) {
                    const double fid =
                        evaluate_mean_fidelity(result.net, val_grids, config.fidelity_examples);
                    result.val_shap_fidelity = fid;
                    val_fid_cell = fmt(fid);
                }
            }
            log += std::to_string(step) + "," + std::to_string(epoch + 1) + "," +
                   fmt(metrics.loss_total) + "," + fmt(metrics.loss_cls) + "," +
                   fmt(metrics.loss_shap) + "," + val_acc_cell + "," + val_fid_cell + "\n";
            result.final_loss_cls = metrics.loss_cls;
            result.final_loss_shap = metrics.loss_shap;
        }
    }
    result.steps = step;
    result.log = std::move(log);

    if (!paths.checkpoint.empty()) save_checkpoint(result.net, paths.checkpoint);
    if (!paths.log_csv.empty()) write_file_atomic(paths.log_csv, result.log);
    return result;
}

} // namespace sxp

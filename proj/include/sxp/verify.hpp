#pragma once

#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "sxp/io_util.hpp"
#include "sxp/kernelshap.hpp"
#include "sxp/saliency_export.hpp"
#include "sxp/trainer.hpp"

namespace sxp {

// Self-contained verification suite behind the `verify` subcommand: oracle
// axioms, WLS-vs-oracle agreement (with a CSV report), kernel sampler
// histogram, gradient checks plus a deliberate mutation, the efficiency
// identity, and the additive-ablation zero-loss identity. Returns true iff
// every check passes.
inline bool run_verification(std::ostream& log, const std::string& out_dir) {
    bool all_ok = true;
    auto check = [&](const std::string& name, bool ok, const std::string& detail) {
        log << (ok ? "ok   " : "FAIL ") << name << " - " << detail << "\n";
        if (!ok) all_ok = false;
    };

    // oracle axioms
    {
        const FunctionGame glove(3, [](const CoalitionMask& s) {
            return (s.test(2) && (s.test(0) || s.test(1))) ? 1.0 : 0.0;
        });
        const auto phi = exact_shapley(glove, 0);
        const double err = std::max({std::abs(phi[0] - 1.0 / 6.0), std::abs(phi[1] - 1.0 / 6.0),
                                     std::abs(phi[2] - 2.0 / 3.0)});
        check("oracle.glove", err <= 1e-12, "max abs error " + format_double(err));
    }
    {
        std::mt19937_64 rng(401);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        double worst_eff = 0.0;
        for (int trial = 0; trial < 25; ++trial) {
            const int n = 3 + static_cast<int>(rng() % 8);
            std::vector<double> values(std::size_t{1} << n);
            for (double& v : values) v = dist(rng);
            const TableGame game(n, values);
            const auto phi = exact_shapley(game, 0);
            double total = 0.0;
            for (double v : phi) total += v;
            const double target = values.back() - values.front();
            worst_eff = std::max(worst_eff, std::abs(total - target) / std::max(1.0, std::abs(target)));
        }
        check("oracle.efficiency", worst_eff <= 1e-9, "worst relative gap " + format_double(worst_eff));
    }

    // WLS vs oracle, with CSV report
    {
        std::filesystem::create_directories(out_dir);
        std::string csv = "game,n_players,full_enum_max_abs_err,sampled_max_abs_err\n";
        std::mt19937_64 rng(577);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        double worst_full = 0.0, worst_sampled = 0.0;
        for (int game_idx = 0; game_idx < 20; ++game_idx) {
            const int n = 3 + game_idx % 6; // 3..8
            std::vector<double> values(std::size_t{1} << n);
            for (double& v : values) v = dist(rng);
            const TableGame game(n, values);
            const auto exact = exact_shapley(game, 0);
            const auto full = estimate_shapley_full(game, 0);
            std::mt19937_64 sample_rng(static_cast<std::uint64_t>(game_idx) + 1);
            const auto sampled = estimate_shapley_sampled(game, 0, 6000, sample_rng, true);
            double err_full = 0.0, err_sampled = 0.0;
            for (int i = 0; i < n; ++i) {
                err_full = std::max(err_full, std::abs(full[static_cast<std::size_t>(i)] - exact[static_cast<std::size_t>(i)]));
                err_sampled = std::max(err_sampled, std::abs(sampled[static_cast<std::size_t>(i)] - exact[static_cast<std::size_t>(i)]));
            }
            worst_full = std::max(worst_full, err_full);
            worst_sampled = std::max(worst_sampled, err_sampled);
            csv += std::to_string(game_idx) + "," + std::to_string(n) + "," + format_double(err_full) +
                   "," + format_double(err_sampled) + "\n";
        }
        write_file_atomic((std::filesystem::path(out_dir) / "wls_vs_oracle.csv").string(), csv);
        check("wls.full_enumeration", worst_full <= 1e-8, "worst max abs error " + format_double(worst_full));
        check("wls.sampled", worst_sampled <= 0.08, "worst max abs error " + format_double(worst_sampled));
    }

    // kernel sampler histogram
    {
        double worst_l1 = 0.0;
        for (int n : {4, 8, 16}) {
            const ShapleyKernelDistribution dist(n);
            std::mt19937_64 rng(7);
            std::vector<int> histogram(static_cast<std::size_t>(n), 0);
            const int draws = 100000;
            for (int i = 0; i < draws; ++i) ++histogram[static_cast<std::size_t>(sample_coalition(rng, dist).popcount())];
            double l1 = 0.0;
            for (int k = 1; k < n; ++k)
                l1 += std::abs(static_cast<double>(histogram[static_cast<std::size_t>(k)]) / draws -
                               dist.size_marginal(k));
            worst_l1 = std::max(worst_l1, l1);
        }
        check("kernel.histogram", worst_l1 <= 0.01, "worst L1 distance " + format_double(worst_l1));
    }

    // gradient checks on the total loss, then a deliberate mutation
    {
        PatchNetConfig cfg;
        cfg.n_patches = 16;
        cfg.patch_size = 4;
        cfg.embed_dim = 32;
        cfg.n_classes = 4;
        double worst = 0.0;
        bool mutation_caught = false;
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            std::mt19937_64 rng(seed * 7 + 3);
            PatchNet net(cfg);
            net.init_parameters(rng);
            Image img(1, 16, 16);
            std::uniform_real_distribution<double> dist(-1.0, 1.0);
            for (double& v : img.data) v = dist(rng);
            const PatchGrid grid = decompose(img, 4);
            const ShapleyKernelDistribution kernel(16);
            const CoalitionMask mask = sample_coalition(rng, kernel);
            const int label = static_cast<int>(seed % 4);
            const std::vector<Parameter*> params = net.parameters();
            auto fn = [&]() {
                net.zero_grad();
                const auto cls = classification_loss(net, grid, label);
                const auto shap = shapley_loss(net, grid, mask, (label + 1) % 4);
                classification_loss_backward(net, cls);
                shapley_loss_backward(net, shap, (label + 1) % 4, 1.0);
                return cls.loss + shap.loss;
            };
            const auto result = finite_difference_check(fn, params, rng, 1e-5, 200);
            worst = std::max(worst, result.max_rel_error);

            if (seed == 0) {
                fn();
                std::vector<double> analytic = gather_gradients(params);
                std::size_t target = 0;
                for (std::size_t i = 0; i < analytic.size(); ++i)
                    if (std::abs(analytic[i]) > std::abs(analytic[target])) target = i;
                analytic[target] *= 1.10;
                std::vector<std::size_t> coords{target};
                const auto mutated = finite_difference_compare(fn, params, analytic, coords, 1e-5);
                mutation_caught = mutated.max_rel_error > 0.05;
            }
        }
        check("gradients.total_loss", worst <= 1e-4, "worst relative error " + format_double(worst));
        check("gradients.mutation_detected", mutation_caught, "+10% single-weight corruption");
    }

    // efficiency identity and empty-mask convention
    {
        PatchNetConfig cfg;
        cfg.n_patches = 9;
        cfg.patch_size = 2;
        cfg.embed_dim = 8;
        cfg.n_classes = 3;
        bool exact = true;
        std::mt19937_64 rng(733);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        for (int trial = 0; trial < 200 && exact; ++trial) {
            PatchNet net(cfg);
            net.init_parameters(rng);
            Image img(1, 6, 6);
            for (double& v : img.data) v = dist(rng);
            const PatchGrid grid = decompose(img, 2);
            const FullForward fwd = forward_full(net, grid);
            for (int k = 0; k < 3; ++k) {
                double col = 0.0;
                for (int i = 0; i < 9; ++i) col += fwd.phi(i, k);
                if (std::memcmp(&col, &fwd.logits[static_cast<std::size_t>(k)], sizeof(double)) != 0) exact = false;
            }
            const MaskedForward empty = forward_masked(net, grid, CoalitionMask::empty_set(9));
            for (double v : empty.values)
                if (v != 0.0) exact = false;
        }
        check("model.efficiency_identity", exact, "logits == column sums, v(0) == 0, 200 random pairs");
    }

    // additive ablation: the Shapley loss vanishes identically
    {
        PatchNetConfig cfg;
        cfg.n_patches = 9;
        cfg.patch_size = 2;
        cfg.embed_dim = 8;
        cfg.n_classes = 3;
        cfg.mixing = false;
        double worst = 0.0;
        std::mt19937_64 rng(769);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        std::uniform_int_distribution<std::uint64_t> masks(1, (1u << 9) - 2);
        for (int trial = 0; trial < 200; ++trial) {
            PatchNet net(cfg);
            net.init_parameters(rng);
            Image img(1, 6, 6);
            for (double& v : img.data) v = dist(rng);
            const PatchGrid grid = decompose(img, 2);
            const auto r = shapley_loss(net, grid, CoalitionMask::from_packed(9, masks(rng)),
                                        static_cast<int>(rng() % 3));
            worst = std::max(worst, r.loss);
        }
        check("model.additive_ablation", worst <= 1e-12, "worst loss " + format_double(worst));
    }

    return all_ok;
}

} // namespace sxp

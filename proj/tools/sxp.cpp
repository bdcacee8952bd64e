// sxp - self-explaining patch-voting networks with Shapley supervision.
//
// Subcommands: gen-data, train, explain, eval, verify, sample-kernel,
// sweep-lambda. Every option can come from a flat key=value config file
// (--config); command-line flags override file values.
//
// Exit codes: 0 success, 1 unexpected error, 2 usage/config error,
// 3 file I/O error, 4 file format error, 5 numeric/domain error,
// 6 verification failure.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sxp/checkpoint.hpp"
#include "sxp/saliency_export.hpp"
#include "sxp/synth_data.hpp"
#include "sxp/trainer.hpp"
#include "sxp/verify.hpp"

namespace {

namespace fs = std::filesystem;

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const sxp::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const sxp::format_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const sxp::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

sxp::MaskingMode parse_masking(const std::string& name) {
    if (name == "removal") return sxp::MaskingMode::removal;
    if (name == "zero_fill") return sxp::MaskingMode::zero_fill;
    throw sxp::domain_error("unknown masking mode '" + name + "' (removal|zero_fill)");
}

struct GenDataOptions {
    std::string out = "data";
    sxp::SyntheticTaskSpec spec;
};

void add_gen_data(CLI::App& app, GenDataOptions& o) {
    CLI::App* sub = app.add_subcommand("gen-data", "generate a synthetic patch-pattern dataset");
    sub->set_config("--config", "", "flat key=value config file");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--grid-h", o.spec.grid_h, "patch grid height");
    sub->add_option("--grid-w", o.spec.grid_w, "patch grid width");
    sub->add_option("--patch", o.spec.patch_size, "patch side length in pixels");
    sub->add_option("--classes", o.spec.n_classes, "number of classes");
    sub->add_option("--signal-patches", o.spec.signal_patches, "stamped patches per image (q)");
    sub->add_option("--amplitude", o.spec.amplitude, "template amplitude");
    sub->add_option("--noise-std", o.spec.noise_std, "Gaussian noise standard deviation");
    sub->add_option("--n-train", o.spec.n_train, "training examples");
    sub->add_option("--n-val", o.spec.n_val, "validation examples");
    sub->add_option("--seed", o.spec.seed, "generator seed");
}

int run_gen_data(const GenDataOptions& o) {
    const sxp::GeneratedData data = sxp::generate(o.spec);
    fs::create_directories(o.out);
    const std::string train_path = (fs::path(o.out) / "train.sxpdata").string();
    const std::string val_path = (fs::path(o.out) / "val.sxpdata").string();
    sxp::write_dataset(data.train, train_path);
    sxp::write_dataset(data.val, val_path);
    std::cout << "wrote " << data.train.examples.size() << " train examples to " << train_path
              << "\nwrote " << data.val.examples.size() << " val examples to " << val_path << "\n";
    return 0;
}

struct TrainOptions {
    std::string train_data = "data/train.sxpdata";
    std::string val_data = "data/val.sxpdata";
    std::string out = "run";
    int embed_dim = 32;
    std::string masking = "removal";
    sxp::TrainConfig config;
};

void add_train_flags(CLI::App* sub, TrainOptions& o) {
    sub->add_option("--train-data", o.train_data, "training dataset (SXPDATA1)");
    sub->add_option("--val-data", o.val_data, "validation dataset (SXPDATA1)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--embed-dim", o.embed_dim, "per-patch embedding width");
    sub->add_option("--masking", o.masking, "masked-forward strategy (removal|zero_fill)");
    sub->add_option("--lambda", o.config.lambda, "Shapley loss weight");
    sub->add_option("--masks-per-example", o.config.masks_per_example, "kernel draws per example per step");
    sub->add_flag("--paired,!--no-paired", o.config.paired_sampling, "antithetic coalition pairs");
    sub->add_flag("--shap-all-classes", o.config.shap_all_classes, "Shapley loss over every class");
    sub->add_option("--epochs", o.config.epochs, "training epochs");
    sub->add_option("--batch-size", o.config.batch_size, "examples per optimizer step");
    sub->add_option("--lr", o.config.learning_rate, "Adam learning rate");
    sub->add_option("--beta1", o.config.adam_beta1, "Adam beta1");
    sub->add_option("--beta2", o.config.adam_beta2, "Adam beta2");
    sub->add_option("--eps", o.config.adam_eps, "Adam epsilon");
    sub->add_option("--seed", o.config.seed, "training seed");
    sub->add_option("--eval-every", o.config.eval_every, "validation frequency in steps (0 = final only)");
    sub->add_option("--fidelity-examples", o.config.fidelity_examples,
                    "validation examples for exact-oracle fidelity (N <= 12)");
}

void add_train(CLI::App& app, TrainOptions& o) {
    CLI::App* sub = app.add_subcommand("train", "train the patch-voting network");
    sub->set_config("--config", "", "flat key=value config file");
    add_train_flags(sub, o);
}

sxp::PatchNetConfig model_config_for(const sxp::Dataset& data, int embed_dim,
                                     sxp::MaskingMode masking) {
    sxp::PatchNetConfig cfg;
    cfg.n_patches = data.n_patches();
    cfg.patch_size = data.patch_size;
    cfg.channels = 1;
    cfg.embed_dim = embed_dim;
    cfg.n_classes = data.n_classes;
    cfg.masking = masking;
    return cfg;
}

int run_train(TrainOptions o) {
    o.config.masking_mode = parse_masking(o.masking);
    const sxp::Dataset train_set = sxp::read_dataset(o.train_data);
    const sxp::Dataset val_set = sxp::read_dataset(o.val_data);
    fs::create_directories(o.out);
    sxp::TrainPaths paths;
    paths.checkpoint = (fs::path(o.out) / "model.sxpnet").string();
    paths.log_csv = (fs::path(o.out) / "train_log.csv").string();

    const sxp::PatchNetConfig model_cfg =
        model_config_for(train_set, o.embed_dim, o.config.masking_mode);
    const sxp::TrainResult result = sxp::train(train_set, val_set, model_cfg, o.config, paths);
    std::cout << "trained " << result.steps << " steps; wrote " << paths.checkpoint << "\n";
    if (!std::isnan(result.val_accuracy))
        std::cout << "validation accuracy " << sxp::format_double(result.val_accuracy) << "\n";
    if (!std::isnan(result.val_shap_fidelity))
        std::cout << "validation shapley fidelity " << sxp::format_double(result.val_shap_fidelity)
                  << "\n";
    return 0;
}

struct ExplainOptions {
    std::string model = "run/model.sxpnet";
    std::string data = "data/val.sxpdata";
    std::string out = "run/explanations";
    int limit = -1;
};

void add_explain(CLI::App& app, ExplainOptions& o) {
    CLI::App* sub = app.add_subcommand("explain", "export saliency CSV and PGM heatmaps");
    sub->set_config("--config", "", "flat key=value config file");
    sub->add_option("--model", o.model, "checkpoint (SXPNET1)");
    sub->add_option("--data", o.data, "dataset to explain");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--limit", o.limit, "max examples (-1 = all)");
}

int run_explain(const ExplainOptions& o) {
    const sxp::PatchNet net = sxp::load_checkpoint(o.model);
    const sxp::Dataset data = sxp::read_dataset(o.data);
    if (data.n_patches() != net.cfg.n_patches)
        throw sxp::dimension_error("explain: dataset patch grid does not match the model");
    const int count = sxp::export_explanations(net, data, o.out, o.limit);
    std::cout << "explained " << count << " examples into " << o.out << "\n";
    return 0;
}

struct EvalCliOptions {
    std::string model = "run/model.sxpnet";
    std::string data = "data/val.sxpdata";
    std::string out = "run";
    std::string saliency = "phi";
    sxp::EvalOptions options;
};

void add_eval(CLI::App& app, EvalCliOptions& o) {
    CLI::App* sub = app.add_subcommand("eval", "faithfulness and localization metrics");
    sub->set_config("--config", "", "flat key=value config file");
    sub->add_option("--model", o.model, "checkpoint (SXPNET1)");
    sub->add_option("--data", o.data, "dataset to evaluate on");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--saliency", o.saliency, "saliency source (phi|random)");
    sub->add_option("--seed", o.options.seed, "seed for random saliency");
    sub->add_option("--limit", o.options.limit, "max examples (-1 = all)");
    sub->add_option("--aopc-steps", o.options.aopc_steps, "AOPC perturbation steps");
    sub->add_option("--saco-groups", o.options.saco_groups, "SaCo patch groups");
    sub->add_option("--fidelity-examples", o.options.fidelity_examples,
                    "examples for exact-oracle fidelity (0 = skip, needs N <= 12)");
    sub->add_flag("--per-example", o.options.per_example, "also write per-example rows");
}

int run_eval(EvalCliOptions o) {
    if (o.saliency == "phi")
        o.options.saliency = sxp::SaliencySource::phi;
    else if (o.saliency == "random")
        o.options.saliency = sxp::SaliencySource::random;
    else
        throw sxp::domain_error("unknown saliency source '" + o.saliency + "' (phi|random)");

    const sxp::PatchNet net = sxp::load_checkpoint(o.model);
    const sxp::Dataset data = sxp::read_dataset(o.data);
    if (data.n_patches() != net.cfg.n_patches)
        throw sxp::dimension_error("eval: dataset patch grid does not match the model");
    const sxp::EvalResult result = sxp::evaluate_dataset(net, data, o.options);

    fs::create_directories(o.out);
    const std::string metrics_path = (fs::path(o.out) / "metrics.csv").string();
    sxp::write_file_atomic(metrics_path,
                           sxp::MetricReport::csv_header() + "\n" + result.report.csv_row() + "\n");
    if (o.options.per_example)
        sxp::write_file_atomic((fs::path(o.out) / "per_example.csv").string(), result.per_example_csv);
    std::cout << sxp::MetricReport::csv_header() << "\n" << result.report.csv_row() << "\n";
    return 0;
}

struct VerifyOptions {
    std::string out = "verify-out";
};

void add_verify(CLI::App& app, VerifyOptions& o) {
    CLI::App* sub = app.add_subcommand("verify", "run the verification suite");
    sub->set_config("--config", "", "flat key=value config file");
    sub->add_option("--out", o.out, "output directory for the WLS-vs-oracle report");
}

int run_verify(const VerifyOptions& o) {
    const bool ok = sxp::run_verification(std::cout, o.out);
    std::cout << (ok ? "verification passed" : "verification FAILED") << "\n";
    return ok ? 0 : 6;
}

struct SampleKernelOptions {
    int n_players = 16;
    int draws = 100000;
    std::uint64_t seed = 1;
    std::string out = "kernel-out";
};

void add_sample_kernel(CLI::App& app, SampleKernelOptions& o) {
    CLI::App* sub = app.add_subcommand("sample-kernel", "kernel sampler size histogram vs analytic marginals");
    sub->set_config("--config", "", "flat key=value config file");
    sub->add_option("--n", o.n_players, "number of players");
    sub->add_option("--draws", o.draws, "number of coalition draws");
    sub->add_option("--seed", o.seed, "sampler seed");
    sub->add_option("--out", o.out, "output directory");
}

int run_sample_kernel(const SampleKernelOptions& o) {
    if (o.draws < 1) throw sxp::domain_error("sample-kernel: draws must be >= 1");
    const sxp::ShapleyKernelDistribution dist(o.n_players);
    std::mt19937_64 rng(o.seed);
    std::vector<long> histogram(static_cast<std::size_t>(o.n_players), 0);
    for (int i = 0; i < o.draws; ++i)
        ++histogram[static_cast<std::size_t>(sample_coalition(rng, dist).popcount())];

    std::string csv = "size,empirical,analytic\n";
    double l1 = 0.0;
    for (int k = 1; k < o.n_players; ++k) {
        const double empirical = static_cast<double>(histogram[static_cast<std::size_t>(k)]) / o.draws;
        l1 += std::abs(empirical - dist.size_marginal(k));
        csv += std::to_string(k) + "," + sxp::format_double(empirical) + "," +
               sxp::format_double(dist.size_marginal(k)) + "\n";
    }
    fs::create_directories(o.out);
    const std::string path = (fs::path(o.out) / "kernel_histogram.csv").string();
    sxp::write_file_atomic(path, csv);
    std::cout << "wrote " << path << "\nL1 distance to analytic marginals: " << sxp::format_double(l1)
              << "\n";
    return 0;
}

struct SweepOptions {
    TrainOptions train;
    std::vector<double> lambdas{0.0, 0.5, 1.0, 2.0};
    int shap_eval_draws = 4;
};

void add_sweep(CLI::App& app, SweepOptions& o) {
    CLI::App* sub = app.add_subcommand("sweep-lambda", "train across a lambda grid and tabulate accuracy/fidelity");
    sub->set_config("--config", "", "flat key=value config file");
    add_train_flags(sub, o.train);
    sub->add_option("--lambdas", o.lambdas, "lambda grid")->delimiter(',');
    sub->add_option("--shap-eval-draws", o.shap_eval_draws, "kernel draws per example for the validation Shapley loss");
}

int run_sweep(SweepOptions o) {
    o.train.config.masking_mode = parse_masking(o.train.masking);
    if (o.lambdas.empty()) throw sxp::domain_error("sweep-lambda: empty lambda grid");
    const sxp::Dataset train_set = sxp::read_dataset(o.train.train_data);
    const sxp::Dataset val_set = sxp::read_dataset(o.train.val_data);
    const sxp::PatchNetConfig model_cfg =
        model_config_for(train_set, o.train.embed_dim, o.train.config.masking_mode);
    const std::vector<sxp::PatchGrid> val_grids = sxp::decompose_all(val_set);

    std::string csv = "lambda,val_acc,val_shap_fidelity,val_shap_loss\n";
    for (double lambda : o.lambdas) {
        sxp::TrainConfig config = o.train.config;
        config.lambda = lambda;
        const sxp::TrainResult result = sxp::train(train_set, val_set, model_cfg, config);
        std::mt19937_64 rng(4096);
        const double shap_loss =
            sxp::evaluate_mean_shapley_loss(result.net, val_grids, o.shap_eval_draws, rng);
        csv += sxp::format_double(lambda) + "," + sxp::format_double(result.val_accuracy) + "," +
               (std::isnan(result.val_shap_fidelity) ? std::string()
                                                     : sxp::format_double(result.val_shap_fidelity)) +
               "," + sxp::format_double(shap_loss) + "\n";
        std::cout << "lambda " << sxp::format_double(lambda) << ": accuracy "
                  << sxp::format_double(result.val_accuracy) << "\n";
    }
    fs::create_directories(o.train.out);
    const std::string path = (fs::path(o.train.out) / "sweep_lambda.csv").string();
    sxp::write_file_atomic(path, csv);
    std::cout << "wrote " << path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-explaining patch-voting networks with Shapley supervision"};
    app.require_subcommand(1);

    GenDataOptions gen_data;
    TrainOptions train;
    ExplainOptions explain;
    EvalCliOptions eval;
    VerifyOptions verify;
    SampleKernelOptions sample_kernel;
    SweepOptions sweep;

    add_gen_data(app, gen_data);
    add_train(app, train);
    add_explain(app, explain);
    add_eval(app, eval);
    add_verify(app, verify);
    add_sample_kernel(app, sample_kernel);
    add_sweep(app, sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (app.got_subcommand("gen-data")) return guarded([&] { return run_gen_data(gen_data); });
    if (app.got_subcommand("train")) return guarded([&] { return run_train(train); });
    if (app.got_subcommand("explain")) return guarded([&] { return run_explain(explain); });
    if (app.got_subcommand("eval")) return guarded([&] { return run_eval(eval); });
    if (app.got_subcommand("verify")) return guarded([&] { return run_verify(verify); });
    if (app.got_subcommand("sample-kernel"))
        return guarded([&] { return run_sample_kernel(sample_kernel); });
    if (app.got_subcommand("sweep-lambda")) return guarded([&] { return run_sweep(sweep); });
    return 2;
}

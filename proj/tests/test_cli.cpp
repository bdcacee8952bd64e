#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "sxp/io_util.hpp"
#include "sxp/synth_data.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = SXP_CLI_PATH;

struct RunResult {
    int exit_code = -1;
    std::string output; // stdout + stderr
};

RunResult run(const std::string& args) {
    static int counter = 0;
    const fs::path capture = fs::temp_directory_path() / ("sxp_cli_out_" + std::to_string(counter++) + ".txt");
    const std::string cmd = kCli + " " + args + " > " + capture.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(capture);
    result.output.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    fs::remove(capture);
    return result;
}

// one tiny dataset shared across the suite
struct Workspace {
    fs::path root;
    std::string data_dir;
    Workspace() {
        root = fs::temp_directory_path() / "sxp_cli_workspace";
        fs::remove_all(root);
        fs::create_directories(root);
        data_dir = (root / "data").string();
        const RunResult r = run("gen-data --out " + data_dir +
                                " --grid-h 3 --grid-w 3 --patch 2 --classes 2 --signal-patches 2"
                                " --n-train 120 --n-val 40 --seed 11");
        REQUIRE(r.exit_code == 0);
    }
};

Workspace& workspace() {
    static Workspace w;
    return w;
}

std::string train_args(const Workspace& w, const std::string& out, const std::string& extra = "") {
    return "train --train-data " + w.data_dir + "/train.sxpdata --val-data " + w.data_dir +
           "/val.sxpdata --out " + out + " --embed-dim 8 --epochs 2 --batch-size 20 --seed 9 " + extra;
}

} // namespace

TEST_CASE("usage errors exit with code 2", "[cli]") {
    SECTION("unknown flag") {
        const RunResult r = run("gen-data --definitely-not-a-flag 3");
        REQUIRE(r.exit_code == 2);
        REQUIRE(r.output.find("--help") != std::string::npos);
    }
    SECTION("unknown subcommand") {
        REQUIRE(run("frobnicate").exit_code == 2);
    }
    SECTION("missing subcommand") {
        REQUIRE(run("").exit_code == 2);
    }
    SECTION("help exits zero") {
        const RunResult r = run("--help");
        REQUIRE(r.exit_code == 0);
        REQUIRE(r.output.find("sweep-lambda") != std::string::npos);
    }
}

TEST_CASE("gen-data writes deterministic datasets", "[cli]") {
    Workspace& w = workspace();
    const std::string again = (w.root / "data2").string();
    REQUIRE(run("gen-data --out " + again +
                " --grid-h 3 --grid-w 3 --patch 2 --classes 2 --signal-patches 2"
                " --n-train 120 --n-val 40 --seed 11").exit_code == 0);
    REQUIRE(sxp::read_file_bytes(w.data_dir + "/train.sxpdata") ==
            sxp::read_file_bytes(again + "/train.sxpdata"));
    REQUIRE(sxp::read_file_bytes(w.data_dir + "/val.sxpdata") ==
            sxp::read_file_bytes(again + "/val.sxpdata"));
}

TEST_CASE("train produces a checkpoint, a log, and is byte-reproducible", "[cli]") {
    Workspace& w = workspace();
    const std::string run_a = (w.root / "run_a").string();
    const std::string run_b = (w.root / "run_b").string();
    REQUIRE(run(train_args(w, run_a)).exit_code == 0);
    REQUIRE(run(train_args(w, run_b)).exit_code == 0);

    REQUIRE(sxp::read_file_bytes(run_a + "/model.sxpnet") == sxp::read_file_bytes(run_b + "/model.sxpnet"));
    REQUIRE(sxp::read_file_bytes(run_a + "/train_log.csv") == sxp::read_file_bytes(run_b + "/train_log.csv"));

    // 120 train examples, batch 20, 2 epochs -> 12 log rows + header
    const std::string log = sxp::read_file_bytes(run_a + "/train_log.csv");
    REQUIRE(std::count(log.begin(), log.end(), '\n') == 13);
    REQUIRE(log.rfind("step,epoch,loss_total,loss_cls,loss_shap,val_acc,val_shap_fidelity", 0) == 0);
}

TEST_CASE("explain emits N rows per example and reproducible heatmaps", "[cli]") {
    Workspace& w = workspace();
    const std::string run_dir = (w.root / "run_explain").string();
    REQUIRE(run(train_args(w, run_dir)).exit_code == 0);

    const std::string out_a = (w.root / "expl_a").string();
    const std::string out_b = (w.root / "expl_b").string();
    for (const std::string& out : {out_a, out_b})
        REQUIRE(run("explain --model " + run_dir + "/model.sxpnet --data " + w.data_dir +
                    "/val.sxpdata --out " + out + " --limit 5").exit_code == 0);

    const std::string csv = sxp::read_file_bytes(out_a + "/saliency.csv");
    // header + 5 examples x 9 patches
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 1 + 5 * 9);
    REQUIRE(csv == sxp::read_file_bytes(out_b + "/saliency.csv"));
    REQUIRE(sxp::read_file_bytes(out_a + "/heatmap_00003.pgm") ==
            sxp::read_file_bytes(out_b + "/heatmap_00003.pgm"));
    // P5 header with upscaled dimensions (3x3 grid, patch 2 -> 6x6)
    REQUIRE(sxp::read_file_bytes(out_a + "/heatmap_00000.pgm").rfind("P5\n6 6\n255\n", 0) == 0);
}

TEST_CASE("eval writes a metric report row", "[cli]") {
    Workspace& w = workspace();
    const std::string run_dir = (w.root / "run_eval").string();
    REQUIRE(run(train_args(w, run_dir)).exit_code == 0);

    const std::string out = (w.root / "eval_out").string();
    const RunResult r = run("eval --model " + run_dir + "/model.sxpnet --data " + w.data_dir +
                            "/val.sxpdata --out " + out + " --saco-groups 9 --fidelity-examples 2 --per-example");
    REQUIRE(r.exit_code == 0);
    const std::string metrics = sxp::read_file_bytes(out + "/metrics.csv");
    REQUIRE(metrics.rfind("n_examples,", 0) == 0);
    REQUIRE(std::count(metrics.begin(), metrics.end(), '\n') == 2);
    const std::string per_example = sxp::read_file_bytes(out + "/per_example.csv");
    REQUIRE(std::count(per_example.begin(), per_example.end(), '\n') == 1 + 40);

    SECTION("random saliency source") {
        REQUIRE(run("eval --model " + run_dir + "/model.sxpnet --data " + w.data_dir +
                    "/val.sxpdata --out " + out + " --saliency random --seed 4 --fidelity-examples 0")
                    .exit_code == 0);
    }
    SECTION("unknown saliency source is a domain error") {
        REQUIRE(run("eval --model " + run_dir + "/model.sxpnet --data " + w.data_dir +
                    "/val.sxpdata --out " + out + " --saliency gradcam").exit_code == 5);
    }
}

TEST_CASE("file errors map to distinct exit codes", "[cli]") {
    Workspace& w = workspace();
    SECTION("missing dataset file") {
        REQUIRE(run("train --train-data /nonexistent/x.sxpdata --val-data /nonexistent/y.sxpdata --out " +
                    (w.root / "r").string()).exit_code == 3);
    }
    SECTION("corrupt dataset file") {
        const std::string bad = (w.root / "bad.sxpdata").string();
        std::string bytes = sxp::read_file_bytes(w.data_dir + "/val.sxpdata");
        bytes[bytes.size() / 2] ^= 0x10;
        std::ofstream(bad, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        REQUIRE(run("explain --model missing.sxpnet --data " + bad + " --out " + (w.root / "r2").string())
                    .exit_code == 3); // model missing reported first
        const std::string run_dir = (w.root / "run_corrupt").string();
        REQUIRE(run(train_args(w, run_dir)).exit_code == 0);
        REQUIRE(run("explain --model " + run_dir + "/model.sxpnet --data " + bad + " --out " +
                    (w.root / "r3").string()).exit_code == 4);
    }
    SECTION("dataset/model mismatch is a numeric error") {
        const std::string other = (w.root / "data_other").string();
        REQUIRE(run("gen-data --out " + other +
                    " --grid-h 2 --grid-w 2 --patch 2 --classes 2 --signal-patches 1"
                    " --n-train 20 --n-val 10 --seed 1").exit_code == 0);
        const std::string run_dir = (w.root / "run_mismatch").string();
        REQUIRE(run(train_args(w, run_dir)).exit_code == 0);
        REQUIRE(run("explain --model " + run_dir + "/model.sxpnet --data " + other +
                    "/val.sxpdata --out " + (w.root / "r4").string()).exit_code == 5);
    }
}

TEST_CASE("config file values are read and flags override them", "[cli]") {
    Workspace& w = workspace();
    const std::string cfg_path = (w.root / "train.cfg").string();
    {
        std::ofstream cfg(cfg_path);
        cfg << "train-data=" << w.data_dir << "/train.sxpdata\n"
            << "val-data=" << w.data_dir << "/val.sxpdata\n"
            << "embed-dim=8\nepochs=2\nbatch-size=20\nseed=9\nlambda=0.5\n";
    }
    const std::string out_cfg = (w.root / "run_cfg").string();
    REQUIRE(run("train --config " + cfg_path + " --out " + out_cfg).exit_code == 0);
    // flag overrides the config's seed: output differs from the config-only run
    const std::string out_override = (w.root / "run_cfg_override").string();
    REQUIRE(run("train --config " + cfg_path + " --out " + out_override + " --seed 10").exit_code == 0);
    REQUIRE(sxp::read_file_bytes(out_cfg + "/model.sxpnet") !=
            sxp::read_file_bytes(out_override + "/model.sxpnet"));

    SECTION("unknown config key is rejected before any work") {
        const std::string bad_cfg = (w.root / "bad.cfg").string();
        std::ofstream(bad_cfg) << "not-a-real-key=3\n";
        const RunResult r = run("train --config " + bad_cfg + " --out " + (w.root / "rx").string());
        REQUIRE(r.exit_code == 2);
    }
}

TEST_CASE("verify passes on a fresh build", "[cli]") {
    Workspace& w = workspace();
    const RunResult r = run("verify --out " + (w.root / "verify_out").string());
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("verification passed") != std::string::npos);
    REQUIRE(fs::exists(w.root / "verify_out" / "wls_vs_oracle.csv"));
}

TEST_CASE("sample-kernel writes the histogram CSV", "[cli]") {
    Workspace& w = workspace();
    const std::string out = (w.root / "kernel_out").string();
    const RunResult r = run("sample-kernel --n 8 --draws 20000 --seed 7 --out " + out);
    REQUIRE(r.exit_code == 0);
    const std::string csv = sxp::read_file_bytes(out + "/kernel_histogram.csv");
    REQUIRE(csv.rfind("size,empirical,analytic", 0) == 0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 8); // header + sizes 1..7
}

TEST_CASE("sweep-lambda tabulates the grid", "[cli]") {
    Workspace& w = workspace();
    const std::string out = (w.root / "sweep_out").string();
    const RunResult r = run("sweep-lambda --train-data " + w.data_dir + "/train.sxpdata --val-data " +
                            w.data_dir + "/val.sxpdata --out " + out +
                            " --embed-dim 8 --epochs 2 --batch-size 20 --seed 9 --lambdas 0,1");
    REQUIRE(r.exit_code == 0);
    const std::string csv = sxp::read_file_bytes(out + "/sweep_lambda.csv");
    REQUIRE(csv.rfind("lambda,val_acc,val_shap_fidelity,val_shap_loss", 0) == 0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 3);
}

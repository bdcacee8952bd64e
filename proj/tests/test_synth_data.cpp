#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "sxp/synth_data.hpp"
#include "sxp/trainer.hpp"

using namespace sxp;

namespace {

SyntheticTaskSpec small_spec() {
    SyntheticTaskSpec spec;
    spec.grid_h = spec.grid_w = 4;
    spec.patch_size = 4;
    spec.n_classes = 4;
    spec.signal_patches = 4;
    spec.n_train = 64;
    spec.n_val = 32;
    spec.seed = 9;
    return spec;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
    if (a.examples.size() != b.examples.size()) return false;
    for (std::size_t i = 0; i < a.examples.size(); ++i) {
        if (a.examples[i].label != b.examples[i].label) return false;
        if (!(a.examples[i].gt_mask == b.examples[i].gt_mask)) return false;
        if (a.examples[i].image.data != b.examples[i].image.data) return false;
    }
    return true;
}

} // namespace

TEST_CASE("generation invariants", "[data]") {
    const SyntheticTaskSpec spec = small_spec();
    const GeneratedData data = generate(spec);
    REQUIRE(data.train.examples.size() == 64);
    REQUIRE(data.val.examples.size() == 32);

    SECTION("every ground-truth mask has exactly q bits") {
        for (const auto& ex : data.train.examples) REQUIRE(ex.gt_mask.popcount() == spec.signal_patches);
        for (const auto& ex : data.val.examples) REQUIRE(ex.gt_mask.popcount() == spec.signal_patches);
    }
    SECTION("label histogram is uniform within one") {
        std::vector<int> counts(4, 0);
        for (const auto& ex : data.train.examples) ++counts[static_cast<std::size_t>(ex.label)];
        const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
        REQUIRE(*hi - *lo <= 1);
    }
    SECTION("same seed regenerates identical datasets") {
        const GeneratedData again = generate(spec);
        REQUIRE(datasets_equal(data.train, again.train));
        REQUIRE(datasets_equal(data.val, again.val));
    }
    SECTION("different seeds differ") {
        SyntheticTaskSpec other = spec;
        other.seed = 10;
        REQUIRE_FALSE(datasets_equal(data.train, generate(other).train));
    }
}

TEST_CASE("noise-free signals are linearly separable by matched filters", "[data]") {
    SyntheticTaskSpec spec = small_spec();
    spec.noise_std = 0.0;
    spec.signal_patches = 1;
    const GeneratedData data = generate(spec);

    // reconstruct the templates from the noise-free stamped patches
    std::vector<std::vector<double>> templates(4);
    for (const auto& ex : data.train.examples) {
        if (!templates[static_cast<std::size_t>(ex.label)].empty()) continue;
        const PatchGrid grid = decompose(ex.image, spec.patch_size);
        const int pos = ex.gt_mask.members().front();
        const auto row = grid.patches.row(pos);
        templates[static_cast<std::size_t>(ex.label)].assign(row.begin(), row.end());
    }
    for (const auto& t : templates) REQUIRE_FALSE(t.empty());

    // orthogonal sign patterns: matched filter on the stamped patch wins by a margin
    for (const auto& ex : data.val.examples) {
        const PatchGrid grid = decompose(ex.image, spec.patch_size);
        const int pos = ex.gt_mask.members().front();
        const auto row = grid.patches.row(pos);
        int best = -1;
        double best_score = -1e300;
        for (int k = 0; k < 4; ++k) {
            double score = 0.0;
            for (int j = 0; j < grid.patch_dim(); ++j)
                score += row[static_cast<std::size_t>(j)] * templates[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
            if (score > best_score) { best_score = score; best = k; }
        }
        REQUIRE(best == ex.label);
    }
}

TEST_CASE("logistic regression on flattened pixels clears 0.7 accuracy", "[data]") {
    SyntheticTaskSpec spec;
    spec.seed = 4;
    spec.n_train = 1200;
    spec.n_val = 300;
    const GeneratedData data = generate(spec);
    const int dim = data.train.height * data.train.width;

    Parameter w(dim, spec.n_classes), b(1, spec.n_classes);
    std::vector<Parameter*> params{&w, &b};
    AdamOptimizer opt(params, 1e-2, 0.9, 0.999, 1e-8);

    Matrix batch(static_cast<int>(data.train.examples.size()), dim);
    std::vector<int> labels;
    for (std::size_t i = 0; i < data.train.examples.size(); ++i) {
        const auto& img = data.train.examples[i].image.data;
        std::copy(img.begin(), img.end(), batch.row(static_cast<int>(i)).begin());
        labels.push_back(data.train.examples[i].label);
    }
    for (int iter = 0; iter < 60; ++iter) {
        w.zero_grad();
        b.zero_grad();
        const Matrix logits = linear_forward(batch, w, b);
        const auto ce = softmax_cross_entropy(logits, labels);
        linear_backward(ce.grad_logits, batch, w, b);
        opt.step(params);
    }

    int correct = 0;
    for (const auto& ex : data.val.examples) {
        Matrix x(1, dim);
        std::copy(ex.image.data.begin(), ex.image.data.end(), x.row(0).begin());
        const Matrix logits = linear_forward(x, w, b);
        if (predicted_class(logits.row(0)) == ex.label) ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(data.val.examples.size());
    INFO("logistic baseline accuracy " << acc);
    REQUIRE(acc >= 0.7);
}

TEST_CASE("dataset file round trip is bit-exact", "[data]") {
    const GeneratedData data = generate(small_spec());
    const auto path = (std::filesystem::temp_directory_path() / "sxp_data_test.sxpdata").string();
    write_dataset(data.train, path);
    const Dataset loaded = read_dataset(path);
    REQUIRE(loaded.height == data.train.height);
    REQUIRE(loaded.patch_size == data.train.patch_size);
    REQUIRE(loaded.n_classes == data.train.n_classes);
    REQUIRE(loaded.signal_patches == data.train.signal_patches);
    REQUIRE(datasets_equal(loaded, data.train));

    SECTION("two writes produce identical bytes") {
        const std::string twice = path + ".2";
        write_dataset(data.train, twice);
        REQUIRE(read_file_bytes(path) == read_file_bytes(twice));
        std::filesystem::remove(twice);
    }
    std::filesystem::remove(path);
}

TEST_CASE("empty dataset round-trips", "[data]") {
    Dataset empty;
    empty.height = empty.width = 16;
    empty.patch_size = 4;
    empty.n_classes = 4;
    empty.signal_patches = 4;
    const auto path = (std::filesystem::temp_directory_path() / "sxp_data_empty.sxpdata").string();
    write_dataset(empty, path);
    const Dataset loaded = read_dataset(path);
    REQUIRE(loaded.examples.empty());
    REQUIRE(loaded.height == 16);
    std::filesystem::remove(path);
}

TEST_CASE("dataset corruption is rejected", "[data]") {
    const GeneratedData data = generate(small_spec());
    const auto path = (std::filesystem::temp_directory_path() / "sxp_data_bad.sxpdata").string();
    write_dataset(data.train, path);
    std::string bytes = read_file_bytes(path);

    SECTION("flipped payload byte") {
        bytes[bytes.size() / 3] ^= 0x40;
        std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        REQUIRE_THROWS_MATCHES(read_dataset(path), format_error,
                               Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("CRC32")));
    }
    SECTION("wrong magic") {
        bytes[0] = 'Z';
        std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        REQUIRE_THROWS_MATCHES(read_dataset(path), format_error,
                               Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("magic")));
    }
    SECTION("truncated file") {
        std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
        REQUIRE_THROWS_AS(read_dataset(path), format_error);
    }
    std::filesystem::remove(path);
}

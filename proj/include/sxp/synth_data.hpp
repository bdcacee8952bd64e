#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sxp/coalition.hpp"
#include "sxp/io_util.hpp"
#include "sxp/patch_net.hpp"

namespace sxp {

// Synthetic patch-pattern task: each class has a fixed orthogonal sign
// template; q patches per image carry the label's template on top of
// Gaussian noise. The stamped positions are the ground-truth salient patches.
struct SyntheticTaskSpec {
    int grid_h = 4;
    int grid_w = 4;
    int patch_size = 4;
    int n_classes = 4;
    int signal_patches = 4; // q
    double amplitude = 2.0;
    double noise_std = 0.5;
    int n_train = 2000;
    int n_val = 500;
    std::uint64_t seed = 1;

    int n_patches() const { return grid_h * grid_w; }
    int patch_dim() const { return patch_size * patch_size; } // single channel

    void validate() const {
        if (grid_h <= 0 || grid_w <= 0 || patch_size <= 0)
            throw domain_error("SyntheticTaskSpec: grid and patch size must be positive");
        if (n_classes <= 0) throw domain_error("SyntheticTaskSpec: n_classes must be positive");
        if (signal_patches < 1 || signal_patches > n_patches())
            throw domain_error("SyntheticTaskSpec: signal_patches must be in [1, N]");
        if (amplitude <= 0.0) throw domain_error("SyntheticTaskSpec: amplitude must be positive");
        if (noise_std < 0.0) throw domain_error("SyntheticTaskSpec: noise_std must be >= 0");
        if (n_train < 0 || n_val < 0) throw domain_error("SyntheticTaskSpec: negative set size");
        if (n_classes > patch_dim())
            throw domain_error("SyntheticTaskSpec: need n_classes <= patch pixels for orthogonal templates");
    }
};

struct LabeledExample {
    Image image;            // 1 x H x W
    int label = 0;          // 0-based class index
    CoalitionMask gt_mask;  // stamped patch positions, popcount == q
};

struct Dataset {
    int height = 0, width = 0;
    int patch_size = 0;
    int n_classes = 0;
    int signal_patches = 0;
    std::vector<LabeledExample> examples;

    int grid_h() const { return patch_size ? height / patch_size : 0; }
    int grid_w() const { return patch_size ? width / patch_size : 0; }
    int n_patches() const { return grid_h() * grid_w(); }
};

namespace detail {

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// K mutually orthogonal patch templates of dimension D, one per class.
// For D a power of two these are Hadamard sign rows scaled to +-amplitude
// (seed-shuffled, skipping the all-ones row while possible); otherwise a
// seeded orthonormal basis scaled to the same total energy.
inline std::vector<std::vector<double>> class_templates(int d, int k, double amplitude,
                                                        std::mt19937_64& rng) {
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(k));
    if (is_power_of_two(d)) {
        std::vector<int> rows(static_cast<std::size_t>(d - 1));
        std::iota(rows.begin(), rows.end(), 1);
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.push_back(0);
        for (int c = 0; c < k; ++c) {
            const int row = rows[static_cast<std::size_t>(c)];
            std::vector<double> t(static_cast<std::size_t>(d));
            for (int j = 0; j < d; ++j)
                t[static_cast<std::size_t>(j)] = (std::popcount(static_cast<unsigned>(row & j)) % 2 == 0)
                                                      ? amplitude
                                                      : -amplitude;
            out.push_back(std::move(t));
        }
        return out;
    }
    // Gram-Schmidt on seeded Gaussians, scaled so ||t||^2 == amplitude^2 * d.
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int c = 0; c < k; ++c) {
        std::vector<double> t(static_cast<std::size_t>(d));
        for (;;) {
            for (double& v : t) v = gauss(rng);
            for (const auto& prev : out) {
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += t[static_cast<std::size_t>(j)] * prev[static_cast<std::size_t>(j)];
                const double prev_norm2 = amplitude * amplitude * d;
                for (int j = 0; j < d; ++j) t[static_cast<std::size_t>(j)] -= dot / prev_norm2 * prev[static_cast<std::size_t>(j)];
            }
            double norm2 = 0.0;
            for (double v : t) norm2 += v * v;
            if (norm2 > 1e-12) {
                const double scale = amplitude * std::sqrt(static_cast<double>(d) / norm2);
                for (double& v : t) v *= scale;
                break;
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

inline LabeledExample make_example(const SyntheticTaskSpec& spec,
                                   const std::vector<std::vector<double>>& templates, int label,
                                   std::mt19937_64& rng, std::normal_distribution<double>& gauss) {
    const int n = spec.n_patches();
    LabeledExample ex;
    ex.label = label;
    ex.image = Image(1, spec.grid_h * spec.patch_size, spec.grid_w * spec.patch_size);
    for (double& v : ex.image.data) v = spec.noise_std * gauss(rng);

    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    ex.gt_mask = CoalitionMask(n);
    const std::vector<double>& t = templates[static_cast<std::size_t>(label)];
    for (int j = 0; j < spec.signal_patches; ++j) {
        std::uniform_int_distribution<int> pick(j, n - 1);
        std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick(rng))]);
        const int pos = pool[static_cast<std::size_t>(j)];
        ex.gt_mask.set(pos);
        const int gy = pos / spec.grid_w, gx = pos % spec.grid_w;
        int idx = 0;
        for (int py = 0; py < spec.patch_size; ++py)
            for (int px = 0; px < spec.patch_size; ++px)
                ex.image.at(0, gy * spec.patch_size + py, gx * spec.patch_size + px) += t[static_cast<std::size_t>(idx++)];
    }
    return ex;
}

} // namespace detail

struct GeneratedData {
    Dataset train;
    Dataset val;
};

inline GeneratedData generate(const SyntheticTaskSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const auto templates = detail::class_templates(spec.patch_dim(), spec.n_classes, spec.amplitude, rng);
    std::normal_distribution<double> gauss(0.0, 1.0);

    auto make_split = [&](int count) {
        Dataset d;
        d.height = spec.grid_h * spec.patch_size;
        d.width = spec.grid_w * spec.patch_size;
        d.patch_size = spec.patch_size;
        d.n_classes = spec.n_classes;
        d.signal_patches = spec.signal_patches;
        d.examples.reserve(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i)
            d.examples.push_back(detail::make_example(spec, templates, i % spec.n_classes, rng, gauss));
        return d;
    };

    GeneratedData out;
    out.train = make_split(spec.n_train);
    out.val = make_split(spec.n_val);
    return out;
}

// Dataset file format, little-endian:
//   magic "SXPDATA1"
//   int32 x6: count, H, W, P, K, q
//   per example: H*W float64 image values row-major, uint16 label,
//     ceil(N/8) bytes of gt_mask (patch i at byte i/8, bit i%8)
//   uint32 CRC32 of everything between the magic and the CRC
inline constexpr const char* kDatasetMagic = "SXPDATA1";

inline void write_dataset(const Dataset& dataset, const std::string& path) {
    PayloadWriter w;
    w.i32(static_cast<std::int32_t>(dataset.examples.size()));
    w.i32(dataset.height);
    w.i32(dataset.width);
    w.i32(dataset.patch_size);
    w.i32(dataset.n_classes);
    w.i32(dataset.signal_patches);
    const int n = dataset.n_patches();
    const std::size_t mask_bytes = (static_cast<std::size_t>(n) + 7) / 8;
    for (const LabeledExample& ex : dataset.examples) {
        w.bytes(ex.image.data.data(), ex.image.data.size() * sizeof(double));
        w.u16(static_cast<std::uint16_t>(ex.label));
        std::vector<std::uint8_t> packed(mask_bytes, 0);
        for (int i = 0; i < n; ++i)
            if (ex.gt_mask.test(i)) packed[static_cast<std::size_t>(i) / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
        w.bytes(packed.data(), packed.size());
    }
    write_checksummed_file(path, kDatasetMagic, w.str());
}

inline Dataset read_dataset(const std::string& path) {
    const std::string payload = read_checksummed_file(path, kDatasetMagic);
    PayloadReader r(payload.data(), payload.size(), path);

    Dataset d;
    const std::int32_t count = r.i32();
    d.height = r.i32();
    d.width = r.i32();
    d.patch_size = r.i32();
    d.n_classes = r.i32();
    d.signal_patches = r.i32();
    if (count < 0 || d.height < 0 || d.width < 0 || d.patch_size <= 0 || d.n_classes <= 0)
        throw format_error(path + ": invalid header fields");
    if (d.height % d.patch_size != 0 || d.width % d.patch_size != 0)
        throw format_error(path + ": image dimensions not divisible by patch size");

    const int n = d.n_patches();
    if (count > 0 && n <= 0) throw format_error(path + ": examples present but patch grid is empty");
    const std::size_t mask_bytes = (static_cast<std::size_t>(n) + 7) / 8;
    d.examples.reserve(static_cast<std::size_t>(count));
    for (std::int32_t i = 0; i < count; ++i) {
        LabeledExample ex;
        ex.image = Image(1, d.height, d.width);
        r.bytes(ex.image.data.data(), ex.image.data.size() * sizeof(double));
        ex.label = r.u16();
        if (ex.label >= d.n_classes) throw format_error(path + ": label out of range");
        std::vector<std::uint8_t> packed(mask_bytes);
        r.bytes(packed.data(), packed.size());
        ex.gt_mask = CoalitionMask(n);
        for (int b = 0; b < n; ++b)
            if (packed[static_cast<std::size_t>(b) / 8] & (1u << (b % 8))) ex.gt_mask.set(b);
        d.examples.push_back(std::move(ex));
    }
    r.expect_end();
    return d;
}

} // namespace sxp

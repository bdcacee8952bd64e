#pragma once

#include <random>
#include <span>
#include <vector>

#include "sxp/coalition.hpp"
#include "sxp/game.hpp"
#include "sxp/matrix.hpp"
#include "sxp/nn.hpp"

namespace sxp {

// Planar C x H x W image of 64-bit reals.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Image() = default;
    Image(int c, int h, int w) : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

// Non-overlapping patch decomposition: N = grid_h * grid_w patches in raster
// order, each flattened to a row of C*P*P values (channel-major).
struct PatchGrid {
    int channels = 0;
    int patch_size = 0;
    int grid_h = 0;
    int grid_w = 0;
    Matrix patches; // N x (C*P*P)

    int n_patches() const { return grid_h * grid_w; }
    int patch_dim() const { return channels * patch_size * patch_size; }
};

inline PatchGrid decompose(const Image& image, int patch_size) {
    if (patch_size <= 0) throw domain_error("decompose: patch size must be positive");
    if (image.height % patch_size != 0 || image.width % patch_size != 0)
        throw dimension_error("decompose: image dimensions must be divisible by the patch size");
    PatchGrid grid;
    grid.channels = image.channels;
    grid.patch_size = patch_size;
    grid.grid_h = image.height / patch_size;
    grid.grid_w = image.width / patch_size;
    grid.patches = Matrix(grid.n_patches(), grid.patch_dim());
    for (int gy = 0; gy < grid.grid_h; ++gy) {
        for (int gx = 0; gx < grid.grid_w; ++gx) {
            double* row = grid.patches.row(gy * grid.grid_w + gx).data();
            int idx = 0;
            for (int c = 0; c < image.channels; ++c)
                for (int py = 0; py < patch_size; ++py)
                    for (int px = 0; px < patch_size; ++px)
                        row[idx++] = image.at(c, gy * patch_size + py, gx * patch_size + px);
        }
    }
    return grid;
}

inline Image reassemble(const PatchGrid& grid) {
    Image image(grid.channels, grid.grid_h * grid.patch_size, grid.grid_w * grid.patch_size);
    for (int gy = 0; gy < grid.grid_h; ++gy) {
        for (int gx = 0; gx < grid.grid_w; ++gx) {
            const double* row = grid.patches.row(gy * grid.grid_w + gx).data();
            int idx = 0;
            for (int c = 0; c < grid.channels; ++c)
                for (int py = 0; py < grid.patch_size; ++py)
                    for (int px = 0; px < grid.patch_size; ++px)
                        image.at(c, gy * grid.patch_size + py, gx * grid.patch_size + px) = row[idx++];
        }
    }
    return image;
}

enum class MaskingMode : int {
    removal = 0,   // excluded patches are dropped from the computation entirely
    zero_fill = 1, // excluded patches' pixels are zeroed; outputs gathered at included positions
};

struct PatchNetConfig {
    int n_patches = 16;  // N
    int patch_size = 4;  // P
    int channels = 1;    // C
    int embed_dim = 32;  // L
    int n_classes = 4;   // K
    MaskingMode masking = MaskingMode::removal;
    // false swaps the mixing layer for identity-on-embedding (additive
    // ablation). Runtime-only; not part of the checkpoint format.
    bool mixing = true;

    int patch_dim() const { return channels * patch_size * patch_size; }
};

// The self-explaining patch-voting network. Each patch is embedded, mixed
// with the mean embedding of the present patches, and mapped to one score
// per class; image logits are the column sums of those scores.
struct PatchNet {
    PatchNetConfig cfg;
    Parameter embed_w, embed_b; // D x L, 1 x L
    Parameter mix_w, mix_b;     // 2L x L, 1 x L
    Parameter head_w, head_b;   // L x K, 1 x K

    explicit PatchNet(const PatchNetConfig& config)
        : cfg(config),
          embed_w(config.patch_dim(), config.embed_dim), embed_b(1, config.embed_dim),
          mix_w(2 * config.embed_dim, config.embed_dim), mix_b(1, config.embed_dim),
          head_w(config.embed_dim, config.n_classes), head_b(1, config.n_classes) {}

    void init_parameters(std::mt19937_64& rng) {
        init_uniform(embed_w, cfg.patch_dim(), cfg.embed_dim, rng);
        init_uniform(mix_w, 2 * cfg.embed_dim, cfg.embed_dim, rng);
        init_uniform(head_w, cfg.embed_dim, cfg.n_classes, rng);
        embed_b.value.zero();
        mix_b.value.zero();
        head_b.value.zero();
    }

    std::vector<Parameter*> parameters() {
        return {&embed_w, &embed_b, &mix_w, &mix_b, &head_w, &head_b};
    }

    void zero_grad() {
        for (Parameter* p : parameters()) p->zero_grad();
    }
};

inline void check_grid(const PatchNet& net, const PatchGrid& grid) {
    if (grid.n_patches() != net.cfg.n_patches)
        throw dimension_error("PatchNet: grid has " + std::to_string(grid.n_patches()) +
                              " patches, network expects " + std::to_string(net.cfg.n_patches));
    if (grid.patch_dim() != net.cfg.patch_dim())
        throw dimension_error("PatchNet: patch dimension mismatch");
}

// Activations saved by a forward pass; backward consumes them together with
// the same parameters. `inputs` holds the rows actually fed to the embedding.
struct ForwardCache {
    Matrix inputs;    // rows x D
    Matrix embed_act; // rows x L
    Matrix context;   // 1 x L
    Matrix mix_in;    // rows x 2L (empty when mixing is disabled)
    Matrix mix_act;   // rows x L
};

struct FullForward {
    Matrix phi;                 // N x K
    std::vector<double> logits; // K, == column sums of phi
    ForwardCache cache;
};

struct MaskedForward {
    CoalitionMask mask;
    Matrix phi;                 // rows x K (rows = M for removal, N for zero_fill)
    std::vector<double> values; // K, the v_y(s) vector
    std::vector<int> included;  // row index -> patch index (removal mode)
    bool evaluated = false;     // false for the empty mask (values are all zero)
    ForwardCache cache;
};

namespace detail {

// Shared encoder: embed rows, append the mean embedding as context, mix, head.
inline void encode_rows(const PatchNet& net, Matrix inputs, ForwardCache& cache, Matrix& phi) {
    const int rows = inputs.rows();
    const int l = net.cfg.embed_dim;
    cache.inputs = std::move(inputs);
    cache.embed_act = tanh_forward(linear_forward(cache.inputs, net.embed_w, net.embed_b));
    cache.context = masked_mean_rows(cache.embed_act, CoalitionMask::full_set(rows));
    if (net.cfg.mixing) {
        cache.mix_in = Matrix(rows, 2 * l);
        for (int r = 0; r < rows; ++r) {
            double* dst = cache.mix_in.row(r).data();
            const double* e = cache.embed_act.row(r).data();
            const double* c = cache.context.row(0).data();
            for (int j = 0; j < l; ++j) dst[j] = e[j];
            for (int j = 0; j < l; ++j) dst[l + j] = c[j];
        }
        cache.mix_act = tanh_forward(linear_forward(cache.mix_in, net.mix_w, net.mix_b));
    } else {
        cache.mix_act = cache.embed_act;
    }
    phi = linear_forward(cache.mix_act, net.head_w, net.head_b);
}

// Reverse of encode_rows given the total upstream gradient on phi.
inline void backward_rows(PatchNet& net, const ForwardCache& cache, const Matrix& dphi_total) {
    const int rows = cache.inputs.rows();
    const int l = net.cfg.embed_dim;
    const Matrix d_mix_act = linear_backward(dphi_total, cache.mix_act, net.head_w, net.head_b);
    Matrix d_embed;
    if (net.cfg.mixing) {
        const Matrix dz_m = tanh_backward(d_mix_act, cache.mix_act);
        const Matrix du = linear_backward(dz_m, cache.mix_in, net.mix_w, net.mix_b);
        d_embed = Matrix(rows, l);
        Matrix d_context(1, l);
        for (int r = 0; r < rows; ++r) {
            const double* src = du.row(r).data();
            double* dst = d_embed.row(r).data();
            double* dc = d_context.row(0).data();
            for (int j = 0; j < l; ++j) dst[j] = src[j];
            for (int j = 0; j < l; ++j) dc[j] += src[l + j];
        }
        add_inplace(d_embed, masked_mean_rows_backward(d_context, rows, CoalitionMask::full_set(rows)));
    } else {
        d_embed = d_mix_act;
    }
    const Matrix dz_e = tanh_backward(d_embed, cache.embed_act);
    linear_backward(dz_e, cache.inputs, net.embed_w, net.embed_b);
}

} // namespace detail

inline FullForward forward_full(const PatchNet& net, const PatchGrid& grid) {
    check_grid(net, grid);
    FullForward out;
    detail::encode_rows(net, grid.patches, out.cache, out.phi);
    out.logits = column_sums(out.phi); // soft vote: efficiency holds by construction
    return out;
}

inline MaskedForward forward_masked(const PatchNet& net, const PatchGrid& grid,
                                    const CoalitionMask& mask) {
    check_grid(net, grid);
    if (mask.n_players() != grid.n_patches())
        throw dimension_error("forward_masked: mask length != patch count");

    MaskedForward out;
    out.mask = mask;
    out.values.assign(static_cast<std::size_t>(net.cfg.n_classes), 0.0);
    if (mask.is_empty()) {
        // v(0) = 0 by convention; the network is not evaluated.
        out.phi = Matrix(0, net.cfg.n_classes);
        return out;
    }
    out.evaluated = true;

    if (net.cfg.masking == MaskingMode::removal) {
        out.included = mask.members();
        Matrix selected(static_cast<int>(out.included.size()), grid.patch_dim());
        for (std::size_t r = 0; r < out.included.size(); ++r) {
            const auto src = grid.patches.row(out.included[r]);
            std::copy(src.begin(), src.end(), selected.row(static_cast<int>(r)).begin());
        }
        detail::encode_rows(net, std::move(selected), out.cache, out.phi);
        out.values = column_sums(out.phi);
    } else {
        Matrix zero_filled = grid.patches;
        for (int r = 0; r < zero_filled.rows(); ++r)
            if (!mask.test(r)) std::fill(zero_filled.row(r).begin(), zero_filled.row(r).end(), 0.0);
        detail::encode_rows(net, std::move(zero_filled), out.cache, out.phi);
        // Gather: only included positions vote.
        for (int r = 0; r < out.phi.rows(); ++r) {
            if (!mask.test(r)) continue;
            const double* row = out.phi.row(r).data();
            for (int k = 0; k < net.cfg.n_classes; ++k) out.values[static_cast<std::size_t>(k)] += row[k];
        }
    }
    return out;
}

// dphi may be empty (treated as zero); dlogits likewise. Gradients accumulate
// into the parameter .grad fields.
inline void backward_full(PatchNet& net, const FullForward& fwd, const Matrix& dphi,
                          std::span<const double> dlogits) {
    const int rows = fwd.phi.rows();
    const int k = net.cfg.n_classes;
    Matrix dphi_total(rows, k);
    if (dphi.rows() != 0) {
        require_shape(dphi, rows, k, "backward_full dphi");
        dphi_total = dphi;
    }
    if (!dlogits.empty()) {
        if (static_cast<int>(dlogits.size()) != k) throw dimension_error("backward_full: dlogits length != K");
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < k; ++c) dphi_total(r, c) += dlogits[static_cast<std::size_t>(c)];
    }
    detail::backward_rows(net, fwd.cache, dphi_total);
}

inline void backward_masked(PatchNet& net, const MaskedForward& fwd, const Matrix& dphi,
                            std::span<const double> dvalues) {
    if (!fwd.evaluated) return; // empty mask: constant zero output, no gradient
    const int rows = fwd.phi.rows();
    const int k = net.cfg.n_classes;
    Matrix dphi_total(rows, k);
    if (dphi.rows() != 0) {
        require_shape(dphi, rows, k, "backward_masked dphi");
        dphi_total = dphi;
    }
    if (!dvalues.empty()) {
        if (static_cast<int>(dvalues.size()) != k)
            throw dimension_error("backward_masked: dvalues length != K");
        for (int r = 0; r < rows; ++r) {
            // zero_fill: only gathered (included) rows feed the value sums
            if (net.cfg.masking == MaskingMode::zero_fill && !fwd.mask.test(r)) continue;
            for (int c = 0; c < k; ++c) dphi_total(r, c) += dvalues[static_cast<std::size_t>(c)];
        }
    }
    detail::backward_rows(net, fwd.cache, dphi_total);
}

// Value-function adapter: evaluate(s, y) is the masked forward's class-y
// output, with v(0) = 0. Holds references; keep net and grid alive.
class PatchGameOracle final : public GameOracle {
public:
    PatchGameOracle(const PatchNet& net, const PatchGrid& grid) : net_(net), grid_(grid) {
        check_grid(net, grid);
    }

    int n_players() const override { return grid_.n_patches(); }
    int n_classes() const override { return net_.cfg.n_classes; }

    double evaluate(const CoalitionMask& coalition, int cls) const override {
        if (cls < 0 || cls >= net_.cfg.n_classes) throw domain_error("PatchGameOracle: class out of range");
        return forward_masked(net_, grid_, coalition).values[static_cast<std::size_t>(cls)];
    }

    std::vector<double> evaluate_all(const CoalitionMask& coalition) const override {
        return forward_masked(net_, grid_, coalition).values;
    }

private:
    const PatchNet& net_;
    const PatchGrid& grid_;
};

inline PatchGameOracle as_game_oracle(const PatchNet& net, const PatchGrid& grid) {
    return PatchGameOracle(net, grid);
}

} // namespace sxp

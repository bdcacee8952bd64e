#pragma once

#include <string>

#include "sxp/io_util.hpp"
#include "sxp/patch_net.hpp"

namespace sxp {

// Checkpoint format, little-endian throughout:
//   magic "SXPNET1\n"
//   int32 x5: N, L, K, P, masking mode code (0 removal, 1 zero_fill)
//   six matrices in order embed_w, embed_b, mix_w, mix_b, head_w, head_b,
//     each as int32 rows, int32 cols, then rows*cols float64 values row-major
//   uint32 CRC32 of everything between the magic and the CRC
inline constexpr const char* kCheckpointMagic = "SXPNET1\n";

namespace detail {

inline void write_matrix(PayloadWriter& w, const Matrix& m) {
    w.i32(m.rows());
    w.i32(m.cols());
    w.bytes(m.data(), m.size() * sizeof(double));
}

inline Matrix read_matrix(PayloadReader& r) {
    const std::int32_t rows = r.i32();
    const std::int32_t cols = r.i32();
    if (rows < 0 || cols < 0 || (rows > 0 && cols > 0 && static_cast<std::uint64_t>(rows) * cols > (1u << 28)))
        throw format_error("checkpoint: implausible matrix dimensions");
    Matrix m(rows, cols);
    r.bytes(m.data(), m.size() * sizeof(double));
    return m;
}

} // namespace detail

inline void save_checkpoint(const PatchNet& net, const std::string& path) {
    PayloadWriter w;
    w.i32(net.cfg.n_patches);
    w.i32(net.cfg.embed_dim);
    w.i32(net.cfg.n_classes);
    w.i32(net.cfg.patch_size);
    w.i32(static_cast<std::int32_t>(net.cfg.masking));
    detail::write_matrix(w, net.embed_w.value);
    detail::write_matrix(w, net.embed_b.value);
    detail::write_matrix(w, net.mix_w.value);
    detail::write_matrix(w, net.mix_b.value);
    detail::write_matrix(w, net.head_w.value);
    detail::write_matrix(w, net.head_b.value);
    write_checksummed_file(path, kCheckpointMagic, w.str());
}

inline PatchNet load_checkpoint(const std::string& path) {
    const std::string payload = read_checksummed_file(path, kCheckpointMagic);
    PayloadReader r(payload.data(), payload.size(), path);

    PatchNetConfig cfg;
    cfg.n_patches = r.i32();
    cfg.embed_dim = r.i32();
    cfg.n_classes = r.i32();
    cfg.patch_size = r.i32();
    const std::int32_t mode = r.i32();
    if (mode != 0 && mode != 1) throw format_error(path + ": unknown masking mode code");
    cfg.masking = static_cast<MaskingMode>(mode);

    Matrix embed_w = detail::read_matrix(r);
    Matrix embed_b = detail::read_matrix(r);
    Matrix mix_w = detail::read_matrix(r);
    Matrix mix_b = detail::read_matrix(r);
    Matrix head_w = detail::read_matrix(r);
    Matrix head_b = detail::read_matrix(r);
    r.expect_end();

    const int p2 = cfg.patch_size * cfg.patch_size;
    if (p2 <= 0 || embed_w.rows() % p2 != 0)
        throw format_error(path + ": embedding rows not a multiple of patch pixels");
    cfg.channels = embed_w.rows() / p2;

    PatchNet net(cfg);
    auto expect = [&](const Matrix& got, const Parameter& slot, const char* name) {
        if (!got.same_shape(slot.value))
            throw format_error(std::string(path) + ": " + name + " has inconsistent shape");
    };
    expect(embed_w, net.embed_w, "embed_w");
    expect(embed_b, net.embed_b, "embed_b");
    expect(mix_w, net.mix_w, "mix_w");
    expect(mix_b, net.mix_b, "mix_b");
    expect(head_w, net.head_w, "head_w");
    expect(head_b, net.head_b, "head_b");
    net.embed_w.value = std::move(embed_w);
    net.embed_b.value = std::move(embed_b);
    net.mix_w.value = std::move(mix_w);
    net.mix_b.value = std::move(mix_b);
    net.head_w.value = std::move(head_w);
    net.head_b.value = std::move(head_b);
    return net;
}

} // namespace sxp

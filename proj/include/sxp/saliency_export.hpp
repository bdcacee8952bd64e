#pragma once

#include <cstdio>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sxp/io_util.hpp"
#include "sxp/metrics.hpp"
#include "sxp/patch_net.hpp"
#include "sxp/synth_data.hpp"
#include "sxp/trainer.hpp"

namespace sxp {

// 8-bit binary PGM of a patch-level map, min-max normalized per map, each
// patch rendered as an upscale x upscale block. A constant map renders black.
inline std::string render_pgm(std::span<const double> values, int grid_h, int grid_w, int upscale) {
    if (static_cast<int>(values.size()) != grid_h * grid_w)
        throw dimension_error("render_pgm: value count != grid size");
    if (upscale < 1) throw domain_error("render_pgm: upscale must be >= 1");
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;

    const int h = grid_h * upscale, w = grid_w * upscale;
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = values[static_cast<std::size_t>((y / upscale) * grid_w + (x / upscale))];
            const int level = span == 0.0 ? 0 : static_cast<int>(std::lround(255.0 * (v - lo) / span));
            out.push_back(static_cast<char>(static_cast<unsigned char>(level)));
        }
    }
    return out;
}

inline void write_pgm(const std::string& path, std::span<const double> values, int grid_h,
                      int grid_w, int upscale) {
    write_file_atomic(path, render_pgm(values, grid_h, grid_w, upscale));
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
}

inline constexpr const char* kSaliencyCsvHeader = "example,label,predicted,patch,row,col,phi";

// The model's intrinsic explanation of one input: the attribution column of
// the predicted class on the full forward pass.
struct Explanation {
    int predicted = 0;
    std::vector<double> saliency; // N signed values
};

inline Explanation explain_example(const PatchNet& net, const PatchGrid& grid) {
    const FullForward fwd = forward_full(net, grid);
    Explanation out;
    out.predicted = predicted_class(fwd.logits);
    out.saliency.resize(static_cast<std::size_t>(grid.n_patches()));
    for (int i = 0; i < grid.n_patches(); ++i)
        out.saliency[static_cast<std::size_t>(i)] = fwd.phi(i, out.predicted);
    return out;
}

// Writes saliency.csv (one row per patch per example, signed values) and one
// heatmap_NNNNN.pgm per example under out_dir. Returns the example count.
inline int export_explanations(const PatchNet& net, const Dataset& data,
                               const std::string& out_dir, int limit = -1) {
    std::filesystem::create_directories(out_dir);
    const int count = limit < 0 ? static_cast<int>(data.examples.size())
                                : std::min<int>(limit, static_cast<int>(data.examples.size()));
    std::string csv = std::string(kSaliencyCsvHeader) + "\n";
    for (int e = 0; e < count; ++e) {
        const PatchGrid grid = decompose(data.examples[static_cast<std::size_t>(e)].image, data.patch_size);
        const Explanation ex = explain_example(net, grid);
        for (int i = 0; i < grid.n_patches(); ++i) {
            csv += std::to_string(e) + "," + std::to_string(data.examples[static_cast<std::size_t>(e)].label) +
                   "," + std::to_string(ex.predicted) + "," + std::to_string(i) + "," +
                   std::to_string(i / grid.grid_w) + "," + std::to_string(i % grid.grid_w) + "," +
                   format_double(ex.saliency[static_cast<std::size_t>(i)]) + "\n";
        }
        char name[32];
        std::snprintf(name, sizeof name, "heatmap_%05d.pgm", e);
        write_pgm((std::filesystem::path(out_dir) / name).string(), ex.saliency, grid.grid_h,
                  grid.grid_w, data.patch_size);
    }
    write_file_atomic((std::filesystem::path(out_dir) / "saliency.csv").string(), csv);
    return count;
}

enum class SaliencySource { phi, random };

struct EvalOptions {
    SaliencySource saliency = SaliencySource::phi;
    std::uint64_t seed = 1;      // for random saliency
    int limit = -1;              // examples to evaluate; -1 = all
    int aopc_steps = 10;
    int saco_groups = 10;
    int fidelity_examples = 8;   // 0 disables; requires N <= 12
    bool per_example = false;
};

struct EvalResult {
    MetricReport report;
    std::string per_example_csv;
};

// Faithfulness + localization of one saliency source over a dataset. The
// explained class is the model's prediction; perturbations follow the model's
// masking mode through the game the network defines.
inline EvalResult evaluate_dataset(const PatchNet& net, const Dataset& data,
                                   const EvalOptions& options = {}) {
    const int count = options.limit < 0 ? static_cast<int>(data.examples.size())
                                        : std::min<int>(options.limit, static_cast<int>(data.examples.size()));
    if (count == 0) throw domain_error("evaluate_dataset: no examples");
    const int n = data.n_patches();
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    EvalResult out;
    out.per_example_csv = "example,label,predicted,aopc,lodds,saco,insertion_auc,deletion_auc,"
                          "pix_acc,ap,iou\n";
    double sum_aopc = 0, sum_lodds = 0, sum_saco = 0, sum_ins = 0, sum_del = 0;
    double sum_pix = 0, sum_ap = 0, sum_iou = 0, sum_fid = 0;
    int fid_count = 0;

    for (int e = 0; e < count; ++e) {
        const LabeledExample& example = data.examples[static_cast<std::size_t>(e)];
        const PatchGrid grid = decompose(example.image, data.patch_size);
        const Explanation intrinsic = explain_example(net, grid);
        std::vector<double> saliency = intrinsic.saliency;
        if (options.saliency == SaliencySource::random)
            for (double& v : saliency) v = unit(rng);

        const MaskedPredictor predict = masked_predictor(net, grid);
        const int cls = intrinsic.predicted;
        const double v_aopc = aopc(predict, n, cls, saliency, options.aopc_steps);
        const double v_lodds = log_odds(predict, n, cls, saliency);
        const double v_saco = saco(predict, n, cls, saliency, std::min(options.saco_groups, n));
        const InsertionDeletion id = insertion_deletion(predict, n, cls, saliency);
        const LocalizationScores loc = localization_scores(saliency, example.gt_mask);
        sum_aopc += v_aopc;
        sum_lodds += v_lodds;
        sum_saco += v_saco;
        sum_ins += id.insertion_auc;
        sum_del += id.deletion_auc;
        sum_pix += loc.pixel_accuracy;
        sum_ap += loc.average_precision;
        sum_iou += loc.iou;
        if (options.fidelity_examples > 0 && fid_count < options.fidelity_examples &&
            n <= kMaxFidelityPlayers) {
            sum_fid += shap_fidelity(net, grid);
            ++fid_count;
        }
        if (options.per_example) {
            out.per_example_csv += std::to_string(e) + "," + std::to_string(example.label) + "," +
                                   std::to_string(cls) + "," + format_double(v_aopc) + "," +
                                   format_double(v_lodds) + "," + format_double(v_saco) + "," +
                                   format_double(id.insertion_auc) + "," + format_double(id.deletion_auc) +
                                   "," + format_double(loc.pixel_accuracy) + "," +
                                   format_double(loc.average_precision) + "," + format_double(loc.iou) + "\n";
        }
    }

    out.report.n_examples = count;
    out.report.aopc = sum_aopc / count;
    out.report.lodds = sum_lodds / count;
    out.report.saco = sum_saco / count;
    out.report.insertion_auc = sum_ins / count;
    out.report.deletion_auc = sum_del / count;
    out.report.pixel_accuracy = sum_pix / count;
    out.report.mean_average_precision = sum_ap / count;
    out.report.mean_iou = sum_iou / count;
    if (fid_count > 0) out.report.shap_fidelity = sum_fid / fid_count;
    return out;
}

} // namespace sxp

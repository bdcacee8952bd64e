#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "sxp/coalition.hpp"
#include "sxp/matrix.hpp"

namespace sxp {

// A weight matrix plus its gradient accumulator. Gradients are zeroed at the
// start of a step and accumulated across backward calls within it.
struct Parameter {
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(int rows, int cols) : value(rows, cols), grad(rows, cols) {}

    void zero_grad() { grad.zero(); }
};

// Fan-based uniform init in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
inline void init_uniform(Parameter& p, int fan_in, int fan_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int r = 0; r < p.value.rows(); ++r)
        for (int c = 0; c < p.value.cols(); ++c) p.value(r, c) = dist(rng);
}

// out = input * W + bias (bias broadcast over rows)
inline Matrix linear_forward(const Matrix& input, const Parameter& weight, const Parameter& bias) {
    if (input.cols() != weight.value.rows())
        throw dimension_error("linear_forward: input cols != weight rows");
    require_shape(bias.value, 1, weight.value.cols(), "linear_forward bias");
    Matrix out = matmul(input, weight.value);
    const double* b = bias.value.row(0).data();
    for (int r = 0; r < out.rows(); ++r) {
        double* row = out.row(r).data();
        for (int c = 0; c < out.cols(); ++c) row[c] += b[c];
    }
    return out;
}

// grad_input = grad_out * W^T;  W.grad += input^T * grad_out;
// bias.grad += column sums of grad_out.
inline Matrix linear_backward(const Matrix& grad_out, const Matrix& input, Parameter& weight,
                              Parameter& bias) {
    if (grad_out.rows() != input.rows() || grad_out.cols() != weight.value.cols() ||
        input.cols() != weight.value.rows())
        throw dimension_error("linear_backward: shapes inconsistent with forward call");
    add_inplace(weight.grad, matmul_at(input, grad_out));
    const std::vector<double> bias_grad = column_sums(grad_out);
    for (int c = 0; c < bias.grad.cols(); ++c) bias.grad(0, c) += bias_grad[static_cast<std::size_t>(c)];
    return matmul_bt(grad_out, weight.value);
}

inline Matrix tanh_forward(const Matrix& input) {
    Matrix out = input;
    double* d = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) d[i] = std::tanh(d[i]);
    return out;
}

// `activated` is the tanh output saved from the forward pass.
inline Matrix tanh_backward(const Matrix& grad_out, const Matrix& activated) {
    if (!grad_out.same_shape(activated)) throw dimension_error("tanh_backward: shape mismatch");
    Matrix out = grad_out;
    double* d = out.data();
    const double* a = activated.data();
    for (std::size_t i = 0; i < out.size(); ++i) d[i] *= 1.0 - a[i] * a[i];
    return out;
}

// Mean over the rows selected by the mask; 1 x L output.
inline Matrix masked_mean_rows(const Matrix& input, const CoalitionMask& mask) {
    if (mask.n_players() != input.rows()) throw dimension_error("masked_mean_rows: mask length != rows");
    const int m = mask.popcount();
    if (m == 0) throw domain_error("masked_mean_rows: empty mask");
    Matrix out(1, input.cols());
    double* o = out.row(0).data();
    for (int r = 0; r < input.rows(); ++r) {
        if (!mask.test(r)) continue;
        const double* row = input.row(r).data();
        for (int c = 0; c < input.cols(); ++c) o[c] += row[c];
    }
    for (int c = 0; c < input.cols(); ++c) o[c] /= m;
    return out;
}

// Scatter grad/popcount back to the selected rows.
inline Matrix masked_mean_rows_backward(const Matrix& grad_out, int n_rows, const CoalitionMask& mask) {
    if (mask.n_players() != n_rows) throw dimension_error("masked_mean_rows_backward: mask length != rows");
    require_shape(grad_out, 1, grad_out.cols(), "masked_mean_rows_backward grad");
    const int m = mask.popcount();
    if (m == 0) throw domain_error("masked_mean_rows_backward: empty mask");
    Matrix out(n_rows, grad_out.cols());
    const double* g = grad_out.row(0).data();
    for (int r = 0; r < n_rows; ++r) {
        if (!mask.test(r)) continue;
        double* row = out.row(r).data();
        for (int c = 0; c < grad_out.cols(); ++c) row[c] = g[c] / m;
    }
    return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    double max_logit = logits[0];
    for (double v : logits) max_logit = std::max(max_logit, v);
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - max_logit);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

struct SoftmaxCrossEntropy {
    double loss = 0.0;
    Matrix grad_logits; // (softmax - onehot) / batch
    Matrix probs;
};

// Mean over the batch of -log softmax(logits)[label], max-subtraction stabilized.
inline SoftmaxCrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (static_cast<int>(labels.size()) != logits.rows())
        throw dimension_error("softmax_cross_entropy: one label per row required");
    const int batch = logits.rows();
    const int k = logits.cols();
    SoftmaxCrossEntropy out;
    out.grad_logits = Matrix(batch, k);
    out.probs = Matrix(batch, k);
    for (int r = 0; r < batch; ++r) {
        const int label = labels[static_cast<std::size_t>(r)];
        if (label < 0 || label >= k) throw domain_error("softmax_cross_entropy: label out of range");
        const std::vector<double> p = softmax(logits.row(r));
        for (int c = 0; c < k; ++c) {
            out.probs(r, c) = p[static_cast<std::size_t>(c)];
            out.grad_logits(r, c) = (p[static_cast<std::size_t>(c)] - (c == label ? 1.0 : 0.0)) / batch;
        }
        out.loss += -std::log(std::max(p[static_cast<std::size_t>(label)], 1e-300)) / batch;
    }
    return out;
}

// --- finite-difference gradient checking -----------------------------------

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_coordinate = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

inline std::size_t total_coordinates(std::span<Parameter* const> params) {
    std::size_t n = 0;
    for (const Parameter* p : params) n += p->value.size();
    return n;
}

inline std::vector<double> gather_gradients(std::span<Parameter* const> params) {
    std::vector<double> out;
    out.reserve(total_coordinates(params));
    for (const Parameter* p : params)
        out.insert(out.end(), p->grad.data(), p->grad.data() + p->grad.size());
    return out;
}

// Central differences at the given flat coordinates against a supplied
// analytic gradient. `loss_fn` re-evaluates the scalar at the current
// parameter values (forward pass only is enough). Relative error uses
// max(|analytic|, |numeric|, 1e-8) as denominator.
inline GradCheckResult finite_difference_compare(const std::function<double()>& loss_fn,
                                                 std::span<Parameter* const> params,
                                                 const std::vector<double>& analytic,
                                                 std::span<const std::size_t> coordinates,
                                                 double h = 1e-5) {
    if (h <= 0.0) throw domain_error("finite_difference_compare: h must be positive");
    if (analytic.size() != total_coordinates(params))
        throw dimension_error("finite_difference_compare: analytic gradient length mismatch");

    auto coord_ref = [&](std::size_t flat) -> double* {
        for (Parameter* p : params) {
            if (flat < p->value.size()) return p->value.data() + flat;
            flat -= p->value.size();
        }
        throw domain_error("finite_difference_compare: coordinate out of range");
    };

    GradCheckResult result;
    for (std::size_t flat : coordinates) {
        double* coord = coord_ref(flat);
        const double saved = *coord;
        *coord = saved + h;
        const double f_plus = loss_fn();
        *coord = saved - h;
        const double f_minus = loss_fn();
        *coord = saved;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
            throw divergence_error("finite_difference_compare: non-finite function value");
        const double numeric = (f_plus - f_minus) / (2.0 * h);
        const double a = analytic[flat];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        if (rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_coordinate = flat;
            result.worst_analytic = a;
            result.worst_numeric = numeric;
        }
    }
    return result;
}

// Pick a random coordinate subset of at least `min_coords` (all of them when
// few enough).
inline std::vector<std::size_t> sample_coordinates(std::size_t total, std::size_t min_coords,
                                                   std::mt19937_64& rng) {
    std::vector<std::size_t> all(total);
    for (std::size_t i = 0; i < total; ++i) all[i] = i;
    if (total <= min_coords) return all;
    for (std::size_t i = 0; i < min_coords; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(all[i], all[pick(rng)]);
    }
    all.resize(min_coords);
    return all;
}

// Convenience wrapper: run `loss_and_grad_fn` once (it must zero + fill the
// parameter gradients and return the loss), then compare against central
// differences on a random coordinate subset.
inline GradCheckResult finite_difference_check(const std::function<double()>& loss_and_grad_fn,
                                               std::span<Parameter* const> params,
                                               std::mt19937_64& rng, double h = 1e-5,
                                               std::size_t min_coords = 200) {
    loss_and_grad_fn();
    const std::vector<double> analytic = gather_gradients(params);
    const std::vector<std::size_t> coords = sample_coordinates(analytic.size(), min_coords, rng);
    return finite_difference_compare(loss_and_grad_fn, params, analytic, coords, h);
}

} // namespace sxp

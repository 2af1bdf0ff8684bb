#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "fedvisor/grid.hpp"
#include "fedvisor/model.hpp"
#include "fedvisor/tensor.hpp"

namespace fedvisor {

struct LossBreakdown {
    double class_term = 0.0;
    double coord = 0.0;
    double conf = 0.0;
    double total = 0.0;
};

struct TrainSample {
    Matrix image;       // input_side x input_side, pixels in [0,1]
    GridTarget target;
};

namespace detail {

// Hidden layers use tanh (smooth, keeps finite-difference checks honest);
// the output layer is sigmoid so every channel lands in [0,1].
struct ForwardTrace {
    std::vector<std::vector<double>> activations;  // a0 = input .. aL = output
};

inline ForwardTrace forward_trace(const ModelParams& params, const Matrix& image) {
    if (image.rows != params.arch.input_side || image.cols != params.arch.input_side)
        throw ShapeError("forward: image side does not match arch");
    ForwardTrace trace;
    trace.activations.reserve(params.layers.size() + 1);
    trace.activations.push_back(image.data);
    std::vector<double> z;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        affine(params.layers[l].w, params.layers[l].b, trace.activations.back(), z);
        std::vector<double> a(z.size());
        const bool last = (l + 1 == params.layers.size());
        for (std::size_t i = 0; i < z.size(); ++i)
            a[i] = last ? sigmoid(z[i]) : std::tanh(z[i]);
        trace.activations.push_back(std::move(a));
    }
    return trace;
}

// dL/d(output activation) for Eqs. 2-4 given one sample; written into grad.
inline void loss_output_grad(const GridPrediction& pred, const GridTarget& target,
                             const ArchConfig& arch, std::vector<double>& grad) {
    grad.assign(pred.values.size(), 0.0);
    const std::size_t cells = arch.num_cells();
    const std::size_t B = arch.boxes_per_cell;
    const std::size_t C = arch.num_classes;
    for (std::size_t i = 0; i < cells; ++i) {
        const CellTarget& cell = target.cells[i];
        if (cell.has_object) {
            for (std::size_t c = 0; c < C; ++c) {
                std::size_t o = pred.class_offset(i, c);
                grad[o] += 2.0 * (pred.values[o] - target.class_prob(i, c));
            }
        }
        for (std::size_t j = 0; j < B; ++j) {
            std::size_t o = pred.slot_offset(i, j);
            if (target.is_responsible(i, j)) {
                grad[o + 0] += 2.0 * arch.lambda_coord * (pred.values[o + 0] - cell.truth.x);
                grad[o + 1] += 2.0 * arch.lambda_coord * (pred.values[o + 1] - cell.truth.y);
                grad[o + 2] += 2.0 * arch.lambda_coord * (pred.values[o + 2] - cell.truth.w);
                grad[o + 3] += 2.0 * arch.lambda_coord * (pred.values[o + 3] - cell.truth.h);
                grad[o + 4] += 2.0 * (pred.values[o + 4] - cell.confidence);
            } else {
                grad[o + 4] += 2.0 * arch.lambda_noobj * (pred.values[o + 4] - cell.confidence);
            }
        }
    }
}

}  // namespace detail

inline GridPrediction forward(const ModelParams& params, const Matrix& image) {
    auto trace = detail::forward_trace(params, image);
    GridPrediction pred;
    pred.grid_side = params.arch.grid_side;
    pred.boxes_per_cell = params.arch.boxes_per_cell;
    pred.num_classes = params.arch.num_classes;
    pred.values = std::move(trace.activations.back());
    return pred;
}

// YOLO loss, implemented exactly as printed: squared class-probability error
// over object cells, lambda_coord-weighted squared coordinate error of
// responsible slots (no square roots on w,h), and squared confidence error
// with lambda_noobj on non-responsible slots. The confidence truth theta_i
// is per cell; each slot's prediction is scored against it.
inline LossBreakdown yolo_loss(const GridPrediction& pred, const GridTarget& target,
                               const ArchConfig& arch) {
    if (pred.grid_side != arch.grid_side || pred.boxes_per_cell != arch.boxes_per_cell ||
        pred.num_classes != arch.num_classes || pred.values.size() != arch.output_size())
        throw ShapeError("yolo_loss: prediction shape does not match arch");
    if (target.grid_side != arch.grid_side || target.boxes_per_cell != arch.boxes_per_cell ||
        target.cells.size() != arch.num_cells() ||
        target.responsible.size() != arch.num_cells() * arch.boxes_per_cell)
        throw ShapeError("yolo_loss: target shape does not match arch");

    LossBreakdown out;
    const std::size_t cells = arch.num_cells();
    const std::size_t B = arch.boxes_per_cell;
    const std::size_t C = arch.num_classes;
    for (std::size_t i = 0; i < cells; ++i) {
        const CellTarget& cell = target.cells[i];
        if (cell.has_object) {
            for (std::size_t c = 0; c < C; ++c) {
                double d = target.class_prob(i, c) - pred.class_prob(i, c);
                out.class_term += d * d;
            }
        }
        for (std::size_t j = 0; j < B; ++j) {
            Box p = pred.box(i, j);
            double dconf = cell.confidence - pred.confidence(i, j);
            if (target.is_responsible(i, j)) {
                double dx = cell.truth.x - p.x, dy = cell.truth.y - p.y;
                double dw = cell.truth.w - p.w, dh = cell.truth.h - p.h;
                out.coord += arch.lambda_coord * (dx * dx + dy * dy);
                out.coord += arch.lambda_coord * (dw * dw + dh * dh);
                out.conf += dconf * dconf;
            } else {
                out.conf += arch.lambda_noobj * dconf * dconf;
            }
        }
    }
    out.total = out.class_term + out.coord + out.conf;
    return out;
}

// Gradient of the model parameters, congruent in shape to ModelParams.
struct ModelGradients {
    std::vector<Layer> layers;
};

// Analytic gradient of the mean total loss over the batch.
inline ModelGradients loss_gradient(const ModelParams& params,
                                    std::span<const TrainSample> batch,
                                    const ArchConfig& arch) {
    if (batch.empty()) throw ShapeError("loss_gradient: empty batch");

    ModelGradients grads;
    grads.layers.reserve(params.layers.size());
    for (const auto& l : params.layers) {
        Layer g;
        g.w = Matrix(l.w.rows, l.w.cols);
        g.b.assign(l.b.size(), 0.0);
        grads.layers.push_back(std::move(g));
    }

    const double scale = 1.0 / static_cast<double>(batch.size());
    std::vector<double> delta, next_delta;
    for (const TrainSample& sample : batch) {
        auto trace = detail::forward_trace(params, sample.image);
        GridPrediction pred;
        pred.grid_side = arch.grid_side;
        pred.boxes_per_cell = arch.boxes_per_cell;
        pred.num_classes = arch.num_classes;
        pred.values = trace.activations.back();

        detail::loss_output_grad(pred, sample.target, arch, delta);
        // chain through the output sigmoid
        for (std::size_t i = 0; i < delta.size(); ++i)
            delta[i] *= pred.values[i] * (1.0 - pred.values[i]);

        for (std::size_t l = params.layers.size(); l-- > 0;) {
            const auto& a_prev = trace.activations[l];
            Layer& g = grads.layers[l];
            for (std::size_t r = 0; r < g.w.rows; ++r) {
                const double d = delta[r] * scale;
                double* gw = &g.w.data[r * g.w.cols];
                for (std::size_t c = 0; c < g.w.cols; ++c) gw[c] += d * a_prev[c];
                g.b[r] += d;
            }
            if (l == 0) break;
            const Matrix& w = params.layers[l].w;
            next_delta.assign(w.cols, 0.0);
            for (std::size_t r = 0; r < w.rows; ++r) {
                const double d = delta[r];
                const double* wr = &w.data[r * w.cols];
                for (std::size_t c = 0; c < w.cols; ++c) next_delta[c] += wr[c] * d;
            }
            // chain through the hidden tanh
            for (std::size_t c = 0; c < w.cols; ++c)
                next_delta[c] *= 1.0 - a_prev[c] * a_prev[c];
            std::swap(delta, next_delta);
        }
    }
    return grads;
}

// One plain gradient-descent step: params - lr * grads, elementwise.
inline ModelParams sgd_step(const ModelParams& params, const ModelGradients& grads,
                            double lr) {
    if (grads.layers.size() != params.layers.size())
        throw ShapeError("sgd_step: gradient layer count mismatch");
    ModelParams out = params;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        Layer& dst = out.layers[l];
        const Layer& g = grads.layers[l];
        if (!dst.w.same_shape(g.w) || dst.b.size() != g.b.size())
            throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
        for (std::size_t i = 0; i < dst.w.data.size(); ++i) dst.w.data[i] -= lr * g.w.data[i];
        for (std::size_t i = 0; i < dst.b.size(); ++i) dst.b[i] -= lr * g.b[i];
    }
    return out;
}

}  // namespace fedvisor

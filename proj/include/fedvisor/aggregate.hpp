#pragma once

#include <span>
#include <vector>

#include "fedvisor/model.hpp"
#include "fedvisor/serialize.hpp"

namespace fedvisor {

// Unweighted federated averaging: elementwise mean over the N updates,
// every layer.
inline ModelParams federated_average(std::span<const ModelParams> updates) {
    if (updates.empty()) throw ShapeError("federated_average: no updates");
    for (std::size_t i = 1; i < updates.size(); ++i)
        if (!updates[0].same_shape(updates[i]))
            throw ShapeError("federated_average: update " + std::to_string(i) +
                             " has mismatched shape");

    ModelParams out = updates[0];
    for (std::size_t i = 1; i < updates.size(); ++i) {
        for (std::size_t l = 0; l < out.layers.size(); ++l) {
            const Layer& src = updates[i].layers[l];
            Layer& dst = out.layers[l];
            for (std::size_t k = 0; k < dst.w.data.size(); ++k) dst.w.data[k] += src.w.data[k];
            for (std::size_t k = 0; k < dst.b.size(); ++k) dst.b[k] += src.b[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(updates.size());
    for (Layer& l : out.layers) {
        for (double& v : l.w.data) v *= inv;
        for (double& v : l.b) v *= inv;
    }
    return out;
}

// Merge pruned uploads into the previous global model: a layer uploaded by
// k >= 1 clients becomes the mean of those k contributions; a layer nobody
// uploaded stays at its previous global value.
inline ModelParams merge_partial_updates(const ModelParams& global_prev,
                                         std::span<const CompressedUpdate> updates) {
    ModelParams out = global_prev;
    const std::size_t L = global_prev.layers.size();

    std::vector<std::size_t> contributors(L, 0);
    std::vector<Layer> sums(L);

    for (const CompressedUpdate& u : updates) {
        for (const auto& [idx, layer] : u.included) {
            if (idx >= L)
                throw ShapeError("merge: layer index " + std::to_string(idx) + " out of range");
            const Layer& ref = global_prev.layers[idx];
            if (!layer.w.same_shape(ref.w) || layer.b.size() != ref.b.size())
                throw ShapeError("merge: layer " + std::to_string(idx) +
                                 " shape mismatch from client " + u.client_id);
            if (contributors[idx] == 0) {
                sums[idx] = layer;
            } else {
                Layer& dst = sums[idx];
                for (std::size_t k = 0; k < dst.w.data.size(); ++k)
                    dst.w.data[k] += layer.w.data[k];
                for (std::size_t k = 0; k < dst.b.size(); ++k) dst.b[k] += layer.b[k];
            }
            ++contributors[idx];
        }
    }

    for (std::size_t j = 0; j < L; ++j) {
        if (contributors[j] == 0) continue;  // fall back to previous global layer
        const double inv = 1.0 / static_cast<double>(contributors[j]);
        Layer& dst = sums[j];
        for (double& v : dst.w.data) v *= inv;
        for (double& v : dst.b) v *= inv;
        out.layers[j] = std::move(dst);
    }
    return out;
}

}  // namespace fedvisor

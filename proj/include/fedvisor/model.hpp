#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "fedvisor/arch.hpp"
#include "fedvisor/tensor.hpp"

namespace fedvisor {

struct Layer {
    Matrix w;                // out x in
    std::vector<double> b;   // out

    std::size_t param_count() const { return w.size() + b.size(); }

    bool operator==(const Layer& o) const = default;
};

// Full parameter set of one detector. Layers chain from input_size to
// output_size; at least two layers so that partial uploads are meaningful.
struct ModelParams {
    ArchConfig arch;
    std::vector<Layer> layers;

    std::size_t layer_count() const { return layers.size(); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.param_count();
        return n;
    }

    void validate() const {
        arch.validate();
        auto dims = arch.layer_dims();
        if (layers.size() + 1 != dims.size())
            throw ShapeError("model: layer count does not match arch");
        if (layers.size() < 2) throw ShapeError("model: needs at least two layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].w.rows != dims[i + 1] || layers[i].w.cols != dims[i])
                throw ShapeError("model: layer " + std::to_string(i) + " has wrong shape");
            if (layers[i].b.size() != dims[i + 1])
                throw ShapeError("model: layer " + std::to_string(i) + " bias has wrong size");
            if (!all_finite(layers[i].w) || !all_finite(layers[i].b))
                throw ShapeError("model: layer " + std::to_string(i) + " has non-finite entries");
        }
    }

    bool same_shape(const ModelParams& o) const {
        if (layers.size() != o.layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (!layers[i].w.same_shape(o.layers[i].w)) return false;
            if (layers[i].b.size() != o.layers[i].b.size()) return false;
        }
        return true;
    }

    bool operator==(const ModelParams& o) const = default;
};

// Deterministic initialization: weights uniform in +-1/sqrt(fan_in), biases
// zero. Same (seed, arch) always yields the same parameters.
inline ModelParams init_model(std::uint64_t seed, const ArchConfig& arch) {
    arch.validate();
    std::mt19937_64 rng(seed);
    ModelParams params;
    params.arch = arch;
    auto dims = arch.layer_dims();
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        Layer layer;
        layer.w = Matrix(dims[i + 1], dims[i]);
        layer.b.assign(dims[i + 1], 0.0);
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : layer.w.data) v = dist(rng);
        params.layers.push_back(std::move(layer));
    }
    params.validate();
    return params;
}

}  // namespace fedvisor

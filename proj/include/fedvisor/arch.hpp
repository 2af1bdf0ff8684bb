#pragma once

#include <cstddef>
#include <vector>

#include "fedvisor/common.hpp"

namespace fedvisor {

// Network and grid geometry for the detector. The output tensor is
// S x S x (B*5 + C): per cell, B box tuples <x,y,w,h,conf> plus C class
// probabilities.
struct ArchConfig {
    std::size_t input_side = 0;            // square grayscale input, pixels
    std::vector<std::size_t> hidden_sizes; // at least one hidden layer
    std::size_t grid_side = 1;             // S
    std::size_t boxes_per_cell = 1;        // B
    std::size_t num_classes = 1;           // C
    double lambda_coord = 5.0;
    double lambda_noobj = 0.5;

    std::size_t input_size() const { return input_side * input_side; }
    std::size_t cell_channels() const { return boxes_per_cell * 5 + num_classes; }
    std::size_t num_cells() const { return grid_side * grid_side; }
    std::size_t output_size() const { return num_cells() * cell_channels(); }

    void validate() const {
        if (input_side == 0) throw ConfigError("arch: input_side must be positive");
        if (hidden_sizes.empty())
            throw ConfigError("arch: at least one hidden layer required");
        for (std::size_t h : hidden_sizes)
            if (h == 0) throw ConfigError("arch: hidden layer size must be positive");
        if (grid_side == 0 || boxes_per_cell == 0 || num_classes == 0)
            throw ConfigError("arch: S, B and C must all be >= 1");
        if (lambda_coord < 0.0 || lambda_noobj < 0.0)
            throw ConfigError("arch: lambda weights must be non-negative");
    }

    // Layer dimensions from input to output: input -> hidden... -> output.
    std::vector<std::size_t> layer_dims() const {
        std::vector<std::size_t> dims;
        dims.push_back(input_size());
        for (std::size_t h : hidden_sizes) dims.push_back(h);
        dims.push_back(output_size());
        return dims;
    }

    bool operator==(const ArchConfig& o) const = default;
};

}  // namespace fedvisor

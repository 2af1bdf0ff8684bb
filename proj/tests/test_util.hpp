#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fedvisor/detect.hpp"
#include "fedvisor/grid.hpp"
#include "fedvisor/model.hpp"

namespace testutil {

using namespace fedvisor;

inline ArchConfig small_arch() {
    ArchConfig arch;
    arch.input_side = 6;
    arch.hidden_sizes = {8};
    arch.grid_side = 2;
    arch.boxes_per_cell = 1;
    arch.num_classes = 2;
    arch.lambda_coord = 5.0;
    arch.lambda_noobj = 0.5;
    return arch;
}

inline Matrix random_image(std::mt19937& rng, std::size_t side) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Matrix m(side, side);
    for (double& v : m.data) v = dist(rng);
    return m;
}

// Random target with a few object cells; slot 0 responsible.
inline GridTarget random_target(std::mt19937& rng, const ArchConfig& arch) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, static_cast<int>(arch.num_classes) - 1);
    GridTarget t = make_empty_target(arch);
    for (std::size_t i = 0; i < arch.num_cells(); ++i) {
        if (unit(rng) < 0.4) {
            CellTarget& cell = t.cells[i];
            cell.has_object = true;
            cell.truth = Box{unit(rng), unit(rng), 0.05 + 0.9 * unit(rng), 0.05 + 0.9 * unit(rng)};
            cell.confidence = 1.0;
            cell.label = cls(rng);
            t.responsible[i * arch.boxes_per_cell] = 1;
        }
    }
    return t;
}

inline ModelParams random_model(std::mt19937& rng, const ArchConfig& arch) {
    return init_model(rng(), arch);
}

inline double batch_mean_loss(const ModelParams& params,
                              const std::vector<TrainSample>& batch) {
    double sum = 0.0;
    for (const auto& s : batch)
        sum += yolo_loss(forward(params, s.image), s.target, params.arch).total;
    return sum / static_cast<double>(batch.size());
}

// Central finite differences over every parameter. Returns the max relative
// error against the analytic gradient; coordinates whose absolute
// discrepancy sits below the finite-difference noise floor are skipped.
inline double max_grad_rel_error(const ModelParams& params,
                                 const std::vector<TrainSample>& batch,
                                 double step = 1e-5) {
    ModelGradients analytic = loss_gradient(params, batch, params.arch);
    double worst = 0.0;
    ModelParams probe = params;
    auto check = [&](double& slot, double analytic_val) {
        const double orig = slot;
        slot = orig + step;
        const double lp = batch_mean_loss(probe, batch);
        slot = orig - step;
        const double lm = batch_mean_loss(probe, batch);
        slot = orig;
        const double numeric = (lp - lm) / (2.0 * step);
        const double diff = std::fabs(analytic_val - numeric);
        const double denom = std::max(std::fabs(analytic_val), std::fabs(numeric));
        // near-zero gradients compare absolutely against the difference
        // noise floor instead of blowing up the ratio
        if (denom < 1e-4 && diff < 1e-9) return;
        worst = std::max(worst, diff / std::max(denom, 1e-12));
    };
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        for (std::size_t i = 0; i < probe.layers[l].w.data.size(); ++i)
            check(probe.layers[l].w.data[i], analytic.layers[l].w.data[i]);
        for (std::size_t i = 0; i < probe.layers[l].b.size(); ++i)
            check(probe.layers[l].b[i], analytic.layers[l].b[i]);
    }
    return worst;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0; i < 10000; ++i) {
            auto candidate = base / (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(i));
            std::error_code ec;
            if (std::filesystem::create_directories(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("TempDir: could not create a fresh directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil

#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "fedvisor/annotation.hpp"
#include "fedvisor/tensor.hpp"

namespace fedvisor {

struct SceneSpec {
    std::size_t side = 24;        // image side in pixels, >= 8
    std::size_t num_classes = 2;  // 2..5 shape families
    std::size_t max_objects = 1;
};

struct LabeledSample {
    std::string sample_id;
    Matrix image;  // grayscale, values in [0,1]
    std::vector<BoxAnnotation> boxes;
};

// Shape family names double as the task's class set. Ordered so small class
// counts pair visually distinct families.
inline std::vector<std::string> shape_class_names(std::size_t num_classes) {
    static const char* names[] = {"square", "cross", "disc", "diamond", "ring"};
    std::vector<std::string> out;
    for (std::size_t i = 0; i < num_classes && i < 5; ++i) out.emplace_back(names[i]);
    return out;
}

namespace detail {

struct PixelRect {
    std::size_t x0, y0, x1, y1;  // half-open, x = col, y = row
};

inline bool rects_overlap(const PixelRect& a, const PixelRect& b) {
    return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

// Draw one filled primitive strictly inside `rect`. Intensity per object is
// high against the dim noise background so the pixel-vs-box relationship is
// unambiguous.
inline void draw_shape(Matrix& img, const PixelRect& rect, int cls, double intensity,
                       std::mt19937& rng) {
    std::uniform_real_distribution<double> jitter(-0.04, 0.04);
    const double cx = (rect.x0 + rect.x1) / 2.0;
    const double cy = (rect.y0 + rect.y1) / 2.0;
    const double rx = (rect.x1 - rect.x0) / 2.0;
    const double ry = (rect.y1 - rect.y0) / 2.0;
    for (std::size_t r = rect.y0; r < rect.y1; ++r) {
        for (std::size_t c = rect.x0; c < rect.x1; ++c) {
            const double dx = (c + 0.5 - cx) / rx;
            const double dy = (r + 0.5 - cy) / ry;
            bool on = false;
            switch (cls) {
                case 0: on = true; break;                                  // square
                case 1: on = std::fabs(dx) < 0.34 || std::fabs(dy) < 0.34; break;  // cross
                case 2: on = dx * dx + dy * dy <= 1.0; break;              // disc
                case 3: on = std::fabs(dx) + std::fabs(dy) <= 1.0; break;  // diamond
                default: {                                                 // ring
                    double rho = dx * dx + dy * dy;
                    on = rho <= 1.0 && rho >= 0.30;
                    break;
                }
            }
            if (on) img.at(r, c) = clamp01(intensity + jitter(rng));
        }
    }
}

}  // namespace detail

// Deterministic synthetic labeled scene: 1..max_objects filled shapes on a
// noisy background, exact bounding boxes, shape family = class index.
inline LabeledSample generate_scene(std::uint64_t seed, const SceneSpec& spec) {
    if (spec.side < 8) throw ConfigError("scene: side must be >= 8");
    if (spec.num_classes < 2 || spec.num_classes > 5)
        throw ConfigError("scene: num_classes must be in 2..5");
    if (spec.max_objects == 0) throw ConfigError("scene: max_objects must be >= 1");

    std::mt19937 rng(static_cast<std::uint32_t>(seed ^ (seed >> 32)));
    LabeledSample sample;
    sample.sample_id = "s" + std::to_string(seed);
    sample.image = Matrix(spec.side, spec.side);

    std::uniform_real_distribution<double> noise(0.0, 0.15);
    for (double& v : sample.image.data) v = noise(rng);

    std::uniform_int_distribution<std::size_t> nobj_dist(1, spec.max_objects);
    std::uniform_int_distribution<int> cls_dist(0, static_cast<int>(spec.num_classes) - 1);
    // objects stay big enough that shape families are tellable apart
    const std::size_t min_px = std::max<std::size_t>(5, spec.side / 3);
    const std::size_t max_px = std::max(min_px + 1, spec.side / 2);
    std::uniform_int_distribution<std::size_t> size_dist(min_px, max_px);
    std::uniform_real_distribution<double> intensity_dist(0.65, 0.95);

    const std::size_t n_objects = nobj_dist(rng);
    std::vector<detail::PixelRect> placed;
    for (std::size_t k = 0; k < n_objects; ++k) {
        const int cls = cls_dist(rng);
        detail::PixelRect rect{};
        bool ok = false;
        for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
            const std::size_t w = size_dist(rng);
            const std::size_t h = size_dist(rng);
            std::uniform_int_distribution<std::size_t> xd(0, spec.side - w);
            std::uniform_int_distribution<std::size_t> yd(0, spec.side - h);
            rect = detail::PixelRect{0, 0, 0, 0};
            rect.x0 = xd(rng);
            rect.y0 = yd(rng);
            rect.x1 = rect.x0 + w;
            rect.y1 = rect.y0 + h;
            ok = std::none_of(placed.begin(), placed.end(), [&](const detail::PixelRect& p) {
                return detail::rects_overlap(rect, p);
            });
        }
        if (!ok) continue;  // scene crowded; keep the objects that fit
        placed.push_back(rect);
        detail::draw_shape(sample.image, rect, cls, intensity_dist(rng), rng);

        // coordinates are snapped to the annotation file precision (six
        // fractional digits) so in-memory boxes equal their disk form
        const double side = static_cast<double>(spec.side);
        auto q6 = [](double v) { return std::round(v * 1e6) / 1e6; };
        BoxAnnotation box;
        box.label = cls;
        box.x = q6((rect.x0 + rect.x1) / (2.0 * side));
        box.y = q6((rect.y0 + rect.y1) / (2.0 * side));
        box.w = q6((rect.x1 - rect.x0) / side);
        box.h = q6((rect.y1 - rect.y0) / side);
        sample.boxes.push_back(box);
    }
    return sample;
}

}  // namespace fedvisor

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "fedvisor/arch.hpp"
#include "fedvisor/common.hpp"

namespace fedvisor {

// Axis-aligned box in normalized center format.
struct Box {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    bool operator==(const Box& o) const = default;
};

// Intersection over union of two center-format boxes. Zero when the union
// has no area.
inline double iou(const Box& a, const Box& b) {
    if (a.w < 0.0 || a.h < 0.0 || b.w < 0.0 || b.h < 0.0)
        throw ShapeError("iou: negative box extent");
    const double ax0 = a.x - a.w / 2.0, ax1 = a.x + a.w / 2.0;
    const double ay0 = a.y - a.h / 2.0, ay1 = a.y + a.h / 2.0;
    const double bx0 = b.x - b.w / 2.0, bx1 = b.x + b.w / 2.0;
    const double by0 = b.y - b.h / 2.0, by1 = b.y + b.h / 2.0;
    const double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    const double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    const double inter = ix * iy;
    // areas from the same edge values as the intersection, so iou(a,a) == 1
    const double area_a = (ax1 - ax0) * (ay1 - ay0);
    const double area_b = (bx1 - bx0) * (by1 - by0);
    const double uni = area_a + area_b - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

// Confidence target: p(obj) * IOU, where p(obj) is 1 only when the cell
// holds an object.
inline double encode_confidence(int has_obj, double iou_value) {
    return has_obj ? iou_value : 0.0;
}

// Model output over the grid. Values are the squashed network outputs, laid
// out per cell: B slots of <x,y,w,h,conf> followed by C class probabilities.
struct GridPrediction {
    std::size_t grid_side = 0;
    std::size_t boxes_per_cell = 0;
    std::size_t num_classes = 0;
    std::vector<double> values;

    std::size_t cell_channels() const { return boxes_per_cell * 5 + num_classes; }
    std::size_t num_cells() const { return grid_side * grid_side; }

    std::size_t slot_offset(std::size_t cell, std::size_t slot) const {
        return cell * cell_channels() + slot * 5;
    }
    std::size_t class_offset(std::size_t cell, std::size_t cls) const {
        return cell * cell_channels() + boxes_per_cell * 5 + cls;
    }

    Box box(std::size_t cell, std::size_t slot) const {
        std::size_t o = slot_offset(cell, slot);
        return Box{values[o], values[o + 1], values[o + 2], values[o + 3]};
    }
    double confidence(std::size_t cell, std::size_t slot) const {
        return values[slot_offset(cell, slot) + 4];
    }
    double class_prob(std::size_t cell, std::size_t cls) const {
        return values[class_offset(cell, cls)];
    }

    bool operator==(const GridPrediction& o) const = default;
};

// Ground truth for one image on the same grid.
struct CellTarget {
    bool has_object = false;  // 1_i^obj
    Box truth;                // ground-truth tuple for the responsible slot
    double confidence = 0.0;  // theta_i; zero on non-object cells
    int label = -1;           // class index; one-hot p_i(c) = (c == label)

    bool operator==(const CellTarget& o) const = default;
};

struct GridTarget {
    std::size_t grid_side = 0;
    std::size_t boxes_per_cell = 0;
    std::size_t num_classes = 0;
    std::vector<CellTarget> cells;          // S*S
    std::vector<std::uint8_t> responsible;  // S*S x B, 1_ij^obj; <=1 per cell

    std::size_t num_cells() const { return grid_side * grid_side; }

    bool is_responsible(std::size_t cell, std::size_t slot) const {
        return responsible[cell * boxes_per_cell + slot] != 0;
    }
    double class_prob(std::size_t cell, std::size_t cls) const {
        return cells[cell].label == static_cast<int>(cls) ? 1.0 : 0.0;
    }

    bool operator==(const GridTarget& o) const = default;
};

inline GridTarget make_empty_target(const ArchConfig& arch) {
    GridTarget t;
    t.grid_side = arch.grid_side;
    t.boxes_per_cell = arch.boxes_per_cell;
    t.num_classes = arch.num_classes;
    t.cells.assign(arch.num_cells(), CellTarget{});
    t.responsible.assign(arch.num_cells() * arch.boxes_per_cell, 0);
    return t;
}

}  // namespace fedvisor

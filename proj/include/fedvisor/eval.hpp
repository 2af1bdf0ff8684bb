#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "fedvisor/dataset.hpp"
#include "fedvisor/detect.hpp"

namespace fedvisor {

inline double mean_shard_loss(const ModelParams& params, const ClientShard& shard) {
    if (shard.samples.empty()) throw ConfigError("mean_shard_loss: empty shard");
    double sum = 0.0;
    for (const auto& s : shard.samples) {
        auto target = encode_grid_target(s.boxes, params.arch);
        sum += yolo_loss(forward(params, s.image), target, params.arch).total;
    }
    return sum / static_cast<double>(shard.samples.size());
}

struct PredictedBox {
    Box box;
    double confidence = 0.0;
    int label = 0;
};

// Thin detection decode: every slot whose confidence clears the threshold
// emits a box labeled with the cell's argmax class.
inline std::vector<PredictedBox> decode_predictions(const GridPrediction& pred,
                                                    double threshold) {
    std::vector<PredictedBox> out;
    for (std::size_t i = 0; i < pred.num_cells(); ++i) {
        int best_cls = 0;
        for (std::size_t c = 1; c < pred.num_classes; ++c)
            if (pred.class_prob(i, c) > pred.class_prob(i, best_cls))
                best_cls = static_cast<int>(c);
        for (std::size_t j = 0; j < pred.boxes_per_cell; ++j) {
            double conf = pred.confidence(i, j);
            if (conf > threshold)
                out.push_back({pred.box(i, j), conf, best_cls});
        }
    }
    return out;
}

struct EvalRow {
    std::string sample_id;
    std::size_t gt_boxes = 0;
    std::size_t pred_boxes = 0;
    double mean_iou = 0.0;     // over ground-truth boxes, best-match IOU
    double class_acc = 0.0;    // center-cell argmax class == label
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_iou = 0.0;
    double class_accuracy = 0.0;
};

// Per ground-truth box: the best IOU among predicted boxes (0 if none), and
// whether the argmax class of the box's center cell matches the label.
inline EvalReport evaluate_detection(const ModelParams& params, const ClientShard& shard,
                                     double threshold = 0.5) {
    EvalReport report;
    double iou_sum = 0.0, cls_sum = 0.0;
    std::size_t gt_total = 0;
    const ArchConfig& arch = params.arch;
    for (const auto& s : shard.samples) {
        auto pred = forward(params, s.image);
        auto detections = decode_predictions(pred, threshold);
        EvalRow row;
        row.sample_id = s.sample_id;
        row.gt_boxes = s.boxes.size();
        row.pred_boxes = detections.size();
        double row_iou = 0.0, row_cls = 0.0;
        for (const auto& gt : s.boxes) {
            Box truth{gt.x, gt.y, gt.w, gt.h};
            double best = 0.0;
            for (const auto& d : detections) best = std::max(best, iou(truth, d.box));
            row_iou += best;

            const std::size_t S = arch.grid_side;
            std::size_t col = std::min(static_cast<std::size_t>(gt.x * S), S - 1);
            std::size_t row_idx = std::min(static_cast<std::size_t>(gt.y * S), S - 1);
            std::size_t cell = row_idx * S + col;
            int best_cls = 0;
            for (std::size_t c = 1; c < arch.num_classes; ++c)
                if (pred.class_prob(cell, c) > pred.class_prob(cell, best_cls))
                    best_cls = static_cast<int>(c);
            row_cls += (best_cls == gt.label) ? 1.0 : 0.0;
        }
        iou_sum += row_iou;
        cls_sum += row_cls;
        gt_total += s.boxes.size();
        if (!s.boxes.empty()) {
            row.mean_iou = row_iou / s.boxes.size();
            row.class_acc = row_cls / s.boxes.size();
        }
        report.rows.push_back(std::move(row));
    }
    if (gt_total > 0) {
        report.mean_iou = iou_sum / gt_total;
        report.class_accuracy = cls_sum / gt_total;
    }
    return report;
}

}  // namespace fedvisor

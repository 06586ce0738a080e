// Copyright (c) 2026 the tss project
// Licensed under the Apache License 2.0.

/**
 * @file metrics.hpp
 * @brief Counting and segmentation metrics: MAE, mIoU, and their ratio Q_cs.
 */

#pragma once

#include "tss/core.hpp"
#include "tss/losses.hpp"
#include "tss/morphology.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace tss {
namespace metrics {

struct EmptyInput : Error {
    explicit EmptyInput(const std::string& where) : Error(where + ": empty input") {}
};

struct ZeroMAE : Error {
    ZeroMAE() : Error("qcs: undefined for MAE = 0") {}
};

struct MetricReport {
    double mae = 0.0;
    double miou_percent = 0.0;
    double qcs = 0.0;          // valid only when !qcs_infinite
    bool qcs_infinite = false;  // MAE = 0 with a defined mIoU
    int n_images = 0;
};

/// Predicted object count: number of 4-connected components in the mask.
inline int count_from_mask(const BinaryMask& pred) {
    return morphology::connected_components(pred).max_label();
}

/// Mean absolute count error over a batch.
inline double mae(const std::vector<losses::CountPair>& pairs) {
    if (pairs.empty()) throw EmptyInput("mae");
    double acc = 0.0;
    for (const losses::CountPair& p : pairs) acc += std::abs(p.predicted - p.truth);
    return acc / static_cast<double>(pairs.size());
}

/// Intersection over union of two binary masks; both empty counts as 1.
inline double iou(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw ShapeMismatch("iou: mask shapes differ");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const bool a = pred.at(i);
        const bool b = gt.at(i);
        inter += a && b;
        uni += a || b;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Mean IoU over images, in percent.
inline double miou(const std::vector<BinaryMask>& preds, const std::vector<BinaryMask>& gts) {
    if (preds.empty()) throw EmptyInput("miou");
    if (preds.size() != gts.size()) throw ShapeMismatch("miou: list lengths differ");
    double acc = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) acc += iou(preds[i], gts[i]);
    return 100.0 * acc / static_cast<double>(preds.size());
}

/// Joint indicator: mIoU (percent) divided by MAE. Throws ZeroMAE at MAE = 0.
inline double qcs(double miou_percent, double mae_value) {
    if (mae_value <= 0.0) throw ZeroMAE();
    return miou_percent / mae_value;
}

/// Aggregates count pairs and mask pairs into one report.
inline MetricReport evaluate(const std::vector<losses::CountPair>& pairs,
                             const std::vector<BinaryMask>& preds,
                             const std::vector<BinaryMask>& gts) {
    MetricReport report;
    report.n_images = static_cast<int>(pairs.size());
    report.mae = mae(pairs);
    report.miou_percent = miou(preds, gts);
    if (report.mae > 0.0) {
        report.qcs = qcs(report.miou_percent, report.mae);
    } else {
        report.qcs_infinite = true;
        report.qcs = std::numeric_limits<double>::infinity();
    }
    return report;
}

}  // namespace metrics
}  // namespace tss

// Copyright (c) 2026 the tss project
// Licensed under the Apache License 2.0.

/**
 * @file losses.hpp
 * @brief Point-supervised loss terms and the weighted total.
 *
 * Every term reports its value together with the gradient with respect to
 * the per-pixel foreground probability. Discrete selections (watershed
 * regions, component supports, hulls, boundaries) are treated as constants:
 * gradients flow only through the probability values on the selected pixel
 * sets. The *_on_regions / *_on_blobs variants take those selections as
 * arguments so callers (and finite-difference checks) can hold them frozen.
 */

#pragma once

#include "tss/core.hpp"
#include "tss/morphology.hpp"
#include "tss/shape.hpp"
#include "tss/watershed.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tss {
namespace losses {

/// Value of one loss term plus d(value)/d(foreground probability) per pixel.
struct TermResult {
    double value = 0.0;
    std::vector<double> grad;
};

/// True count paired with the predicted component count for one image.
struct CountPair {
    int truth = 0;
    int predicted = 0;
};

struct EmptyPairList : Error {
    EmptyPairList() : Error("count_loss: empty pair list") {}
};

/**
 * Negative-point handling in the segmentation term. CrossEntropy is the
 * default: -log(1 - fg) at negatives. Literal reproduces the published
 * (1 - log s) form verbatim with the foreground channel substituted; it is
 * not a proper loss (unbounded below before clamping) and exists only to
 * document the divergence.
 */
enum class SegForm { CrossEntropy, Literal };

/**
 * @brief Point cross-entropy: -sum log fg at positives, -sum log(1-fg) at
 * negatives, log arguments clamped to [1e-7, 1 - 1e-7].
 */
inline TermResult seg_loss(const ProbabilityMap& prob, const AnnotationSet& ann,
                           SegForm form = SegForm::CrossEntropy) {
    if (auto issue = validate(ann, prob.height(), prob.width()))
        throw std::invalid_argument("seg_loss: " + issue->message());
    TermResult out;
    out.grad.assign(prob.size(), 0.0);
    for (const PixelCoord& p : ann.positives) {
        const size_t i = static_cast<size_t>(p.u) * prob.width() + p.v;
        const double fg = clamp_log_arg(prob.fg(i));
        out.value -= std::log(fg);
        out.grad[i] -= 1.0 / fg;
    }
    for (const PixelCoord& p : ann.negatives) {
        const size_t i = static_cast<size_t>(p.u) * prob.width() + p.v;
        const double fg = clamp_log_arg(prob.fg(i));
        if (form == SegForm::CrossEntropy) {
            const double bg = clamp_log_arg(1.0 - prob.fg(i));
            out.value -= std::log(bg);
            out.grad[i] += 1.0 / bg;
        } else {
            out.value -= 1.0 - std::log(fg);
            out.grad[i] += 1.0 / fg;
        }
    }
    return out;
}

/// Split cross-entropy over fixed region sets (the frozen-selection core).
inline TermResult split_loss_on_regions(const ProbabilityMap& prob,
                                        const std::vector<BinaryMask>& positive_regions,
                                        const std::vector<BinaryMask>& negative_regions) {
    TermResult out;
    out.grad.assign(prob.size(), 0.0);
    for (const BinaryMask& region : positive_regions) {
        if (region.height() != prob.height() || region.width() != prob.width())
            throw ShapeMismatch("split_loss: region shape mismatch");
        for (size_t i = 0; i < region.size(); ++i) {
            if (!region.at(i)) continue;
            const double fg = clamp_log_arg(prob.fg(i));
            out.value -= std::log(fg);
            out.grad[i] -= 1.0 / fg;
        }
    }
    for (const BinaryMask& region : negative_regions) {
        if (region.height() != prob.height() || region.width() != prob.width())
            throw ShapeMismatch("split_loss: region shape mismatch");
        for (size_t i = 0; i < region.size(); ++i) {
            if (!region.at(i)) continue;
            const double bg = clamp_log_arg(1.0 - prob.fg(i));
            out.value -= std::log(bg);
            out.grad[i] += 1.0 / bg;
        }
    }
    return out;
}

/**
 * @brief Split loss: cross-entropy over the eroded selective-watershed
 * regions. Region selection carries no gradient. Empty annotations yield
 * zero value and gradient.
 */
inline TermResult split_loss(const ProbabilityMap& prob, const BinaryMask& pred,
                             const AnnotationSet& ann) {
    if (ann.positives.empty() && ann.negatives.empty()) {
        TermResult out;
        out.grad.assign(prob.size(), 0.0);
        return out;
    }
    auto [pos, neg] = watershed::expandable_regions(pred, prob, ann);
    return split_loss_on_regions(prob, pos, neg);
}

/// Convexity loss over fixed blobs (supports and hulls frozen).
inline TermResult convex_loss_on_blobs(const ProbabilityMap& prob,
                                       const std::vector<morphology::Blob>& blobs) {
    TermResult out;
    out.grad.assign(prob.size(), 0.0);
    if (blobs.empty()) return out;
    const double n = static_cast<double>(blobs.size());
    for (const morphology::Blob& b : blobs) {
        double mass = 0.0;
        for (const PixelCoord& p : b.pixels) mass += prob.fg(p.u, p.v);
        const double soft_convexity = mass / b.hull_area;
        out.value += shape::huber_z(soft_convexity, 1.0) / n;
        const double g = shape::huber_z_derivative(soft_convexity, 1.0) / (n * b.hull_area);
        for (const PixelCoord& p : b.pixels)
            out.grad[static_cast<size_t>(p.u) * prob.width() + p.v] += g;
    }
    return out;
}

/**
 * @brief Convexity loss: per predicted blob, the Huber residual between its
 * soft convexity (probability mass over hull area) and the constant target 1.
 */
inline TermResult convex_loss(const ProbabilityMap& prob, const BinaryMask& pred) {
    const auto blobs = morphology::extract_blobs(morphology::connected_components(pred));
    return convex_loss_on_blobs(prob, blobs);
}

/// Circularity loss over fixed blobs; see circ_loss.
inline TermResult circ_loss_on_blobs(const ProbabilityMap& prob,
                                     const std::vector<morphology::Blob>& blobs) {
    TermResult out;
    out.grad.assign(prob.size(), 0.0);
    if (blobs.empty()) return out;
    const double n = static_cast<double>(blobs.size());
    for (const morphology::Blob& b : blobs) {
        const double spread = shape::lsc(b);
        out.value += shape::huber_z(spread, 0.0) / n;
        if (b.boundary.empty()) continue;

        // Surrogate gradient: push far boundary pixels toward background and
        // near ones toward foreground, scaled to the spread of distances.
        double d_min = std::numeric_limits<double>::infinity();
        double d_max = 0.0;
        double d_sum = 0.0;
        std::vector<double> dist(b.boundary.size());
        for (size_t k = 0; k < b.boundary.size(); ++k) {
            const PixelCoord& p = b.boundary[k];
            dist[k] = std::hypot(p.u - b.centroid_u, p.v - b.centroid_v);
            d_min = std::min(d_min, dist[k]);
            d_max = std::max(d_max, dist[k]);
            d_sum += dist[k];
        }
        const double d_mean = d_sum / static_cast<double>(b.boundary.size());
        const double scale = shape::huber_z_derivative(spread, 0.0) / (n * (d_max - d_min + 1e-9));
        for (size_t k = 0; k < b.boundary.size(); ++k) {
            const PixelCoord& p = b.boundary[k];
            out.grad[static_cast<size_t>(p.u) * prob.width() + p.v] += scale * (dist[k] - d_mean);
        }
    }
    return out;
}

/**
 * @brief Circularity loss: per predicted blob, the Huber residual between its
 * boundary-distance spread and the constant target 0 (a perfect circle).
 */
inline TermResult circ_loss(const ProbabilityMap& prob, const BinaryMask& pred) {
    const auto blobs = morphology::extract_blobs(morphology::connected_components(pred));
    return circ_loss_on_blobs(prob, blobs);
}

/// Mean Huber residual between predicted and true counts over a batch.
inline double count_loss(const std::vector<CountPair>& pairs) {
    if (pairs.empty()) throw EmptyPairList();
    double acc = 0.0;
    for (const CountPair& p : pairs) acc += shape::huber_z(p.predicted, p.truth);
    return acc / static_cast<double>(pairs.size());
}

/**
 * @brief Surrogate count gradient for one image.
 *
 * Over-counting (predicted > truth) puts a positive gradient on every pixel
 * of the excess smallest blobs, suppressing spurious components; each blob's
 * push is normalized by its own pixel area. Under-counting carries no pixel
 * evidence without annotations, so the gradient is zero.
 */
inline std::vector<double> count_grad(const ProbabilityMap& prob, const BinaryMask& pred,
                                      int truth) {
    if (pred.height() != prob.height() || pred.width() != prob.width())
        throw ShapeMismatch("count_grad: mask does not match the probability map");
    std::vector<double> grad(prob.size(), 0.0);
    auto blobs = morphology::extract_blobs(morphology::connected_components(pred));
    const int predicted = static_cast<int>(blobs.size());
    if (predicted <= truth) return grad;

    std::sort(blobs.begin(), blobs.end(), [](const morphology::Blob& a, const morphology::Blob& b) {
        return a.pixel_area != b.pixel_area ? a.pixel_area < b.pixel_area : a.id < b.id;
    });
    const double g = shape::huber_z_derivative(predicted, truth);
    const int excess = predicted - truth;
    for (int k = 0; k < excess; ++k) {
        const morphology::Blob& b = blobs[static_cast<size_t>(k)];
        for (const PixelCoord& p : b.pixels)
            grad[static_cast<size_t>(p.u) * prob.width() + p.v] += g / b.pixel_area;
    }
    return grad;
}

/// Per-term values (unweighted), the weighted total, and its map gradient.
struct LossReport {
    double seg = 0.0;
    double split = 0.0;
    double shape = 0.0;
    double count = 0.0;
    double total = 0.0;
    std::vector<double> grad;
};

/**
 * @brief Weighted total of the enabled terms.
 *
 * Terms with zero weight are skipped entirely (their machinery never runs).
 * The shape term dispatches on weights.shape_kind.
 */
inline LossReport total_loss(const ProbabilityMap& prob, const BinaryMask& pred,
                             const AnnotationSet& ann, int truth_count,
                             const LossWeights& weights,
                             SegForm seg_form = SegForm::CrossEntropy) {
    weights.check();
    if (pred.height() != prob.height() || pred.width() != prob.width())
        throw ShapeMismatch("total_loss: mask does not match the probability map");

    LossReport report;
    report.grad.assign(prob.size(), 0.0);
    auto accumulate = [&report](double weight, const std::vector<double>& grad) {
        for (size_t i = 0; i < grad.size(); ++i) report.grad[i] += weight * grad[i];
    };

    if (weights.lambda_seg > 0.0) {
        TermResult t = seg_loss(prob, ann, seg_form);
        report.seg = t.value;
        accumulate(weights.lambda_seg, t.grad);
    }
    if (weights.lambda_split > 0.0) {
        TermResult t = split_loss(prob, pred, ann);
        report.split = t.value;
        accumulate(weights.lambda_split, t.grad);
    }

    const bool want_shape = weights.lambda_shape > 0.0 && weights.shape_kind != ShapeKind::None;
    const bool want_count = weights.lambda_count > 0.0;
    if (want_shape || want_count) {
        const auto blobs = morphology::extract_blobs(morphology::connected_components(pred));
        if (want_shape) {
            TermResult t = weights.shape_kind == ShapeKind::Convex
                               ? convex_loss_on_blobs(prob, blobs)
                               : circ_loss_on_blobs(prob, blobs);
            report.shape = t.value;
            accumulate(weights.lambda_shape, t.grad);
        }
        if (want_count) {
            const int predicted = static_cast<int>(blobs.size());
            report.count = shape::huber_z(predicted, truth_count);
            accumulate(weights.lambda_count, count_grad(prob, pred, truth_count));
        }
    }

    report.total = weights.lambda_seg * report.seg + weights.lambda_split * report.split +
                   weights.lambda_shape * report.shape + weights.lambda_count * report.count;
    return report;
}

}  // namespace losses
}  // namespace tss

// Copyright (c) 2026 the tss project
// Licensed under the Apache License 2.0.

/**
 * @file shape.hpp
 * @brief Shape-prior measures on blobs: convexity and reference-circle spread.
 */

#pragma once

#include "tss/morphology.hpp"

#include <cmath>
#include <limits>

namespace tss {
namespace shape {

/**
 * @brief Blob pixel area divided by its corner-point hull area.
 *
 * Exactly 1 for axis-aligned rectangles; below 1 for concave shapes.
 * Returns exactly 1 when the two areas agree within 1e-9.
 */
inline double convexity(const morphology::Blob& blob) {
    if (blob.pixel_area <= 0) throw std::invalid_argument("convexity: empty blob");
    if (std::abs(blob.hull_area - blob.pixel_area) <= 1e-9) return 1.0;
    return blob.pixel_area / blob.hull_area;
}

enum class LscDomain {
    Boundary,  // distances over boundary pixels (default)
    AllPixels  // distances over every blob pixel; min collapses toward 0
};

/**
 * @brief Reference-circle spread: max minus min distance from the blob
 * centroid to its boundary pixel centers. Zero for a perfect circle and for
 * single-pixel blobs.
 */
inline double lsc(const morphology::Blob& blob, LscDomain domain = LscDomain::Boundary) {
    const std::vector<PixelCoord>& pts =
        domain == LscDomain::Boundary ? blob.boundary : blob.pixels;
    if (pts.empty()) throw std::invalid_argument("lsc: empty blob");
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const PixelCoord& p : pts) {
        const double d = std::hypot(p.u - blob.centroid_u, p.v - blob.centroid_v);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    return hi - lo;
}

/// Huber residual: quadratic below residual 1, linear above.
inline double huber_z(double pred, double target) {
    const double r = pred - target;
    const double a = std::abs(r);
    return a < 1.0 ? 0.5 * r * r : a - 0.5;
}

/// Derivative of huber_z with respect to the prediction; sign branch at |r| = 1.
inline double huber_z_derivative(double pred, double target) {
    const double r = pred - target;
    if (std::abs(r) < 1.0) return r;
    return r > 0.0 ? 1.0 : -1.0;
}

}  // namespace shape
}  // namespace tss

// Copyright (c) 2026 the tss project
// Licensed under the Apache License 2.0.

/**
 * @file morphology.hpp
 * @brief Connected components, binary erosion, and blob geometry.
 *
 * Connectivity is 4-neighborhood throughout. Blob hulls are computed over
 * pixel-square corner points (each pixel contributes the four corners of its
 * unit square centered on the pixel), so axis-aligned rectangles are exactly
 * convex while plus-shapes are not.
 */

#pragma once

#include "tss/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace tss {

/// Per-pixel component labels: 0 = background, 1..K = component ids.
class InstanceLabelMap {
public:
    InstanceLabelMap() = default;
    InstanceLabelMap(int height, int width)
        : height_(height), width_(width), labels_(static_cast<size_t>(height) * width, 0) {
        if (height <= 0 || width <= 0)
            throw std::invalid_argument("InstanceLabelMap: non-positive dimensions");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    size_t size() const { return labels_.size(); }

    int at(int u, int v) const { return labels_[static_cast<size_t>(u) * width_ + v]; }
    void set(int u, int v, int label) { labels_[static_cast<size_t>(u) * width_ + v] = label; }
    int at(size_t i) const { return labels_[i]; }
    void set(size_t i, int label) { labels_[i] = label; }

    int max_label() const { return labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end()); }

    friend bool operator==(const InstanceLabelMap& a, const InstanceLabelMap& b) {
        return a.height_ == b.height_ && a.width_ == b.width_ && a.labels_ == b.labels_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<int> labels_;
};

/// 2-D real point in (u, v) = (row, column) coordinates.
struct Point2 {
    double u = 0.0;
    double v = 0.0;

    friend bool operator==(const Point2& a, const Point2& b) { return a.u == b.u && a.v == b.v; }
};

namespace morphology {

struct EmptyInput : Error {
    EmptyInput() : Error("convex_hull: empty input") {}
};

struct RegionsOverlap : Error {
    RegionsOverlap() : Error("erode_regions: input regions overlap") {}
};

/// Cross product of (a - o) x (b - o); positive for a counter-clockwise turn.
inline double cross(const Point2& o, const Point2& a, const Point2& b) {
    return (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u);
}

/// Signed shoelace area; positive for counter-clockwise polygons.
inline double signed_area(const std::vector<Point2>& polygon) {
    if (polygon.size() < 3) return 0.0;
    double acc = 0.0;
    for (size_t i = 0; i < polygon.size(); ++i) {
        const Point2& p = polygon[i];
        const Point2& q = polygon[(i + 1) % polygon.size()];
        acc += p.u * q.v - q.u * p.v;
    }
    return acc / 2.0;
}

inline double polygon_area(const std::vector<Point2>& polygon) {
    return std::abs(signed_area(polygon));
}

/**
 * @brief Convex hull of a point set (monotone chain).
 *
 * Returns the extreme points in counter-clockwise order; collinear interior
 * points are excluded. Degenerate inputs yield a 1- or 2-vertex polygon with
 * area zero.
 */
inline std::vector<Point2> convex_hull(std::vector<Point2> points) {
    if (points.empty()) throw EmptyInput();
    std::sort(points.begin(), points.end(), [](const Point2& a, const Point2& b) {
        return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    points.erase(std::unique(points.begin(), points.end()), points.end());
    const size_t n = points.size();
    if (n <= 2) return points;

    std::vector<Point2> hull(2 * n);
    size_t k = 0;
    for (size_t i = 0; i < n; ++i) {  // lower chain
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], points[i]) <= 0.0) --k;
        hull[k++] = points[i];
    }
    const size_t lower = k + 1;
    for (size_t i = n - 1; i-- > 0;) {  // upper chain
        while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0.0) --k;
        hull[k++] = points[i];
    }
    hull.resize(k - 1);  // last point equals the first
    return hull;
}

/**
 * @brief Labels 4-connected foreground components.
 *
 * Two-pass union-find; final labels are 1..K in raster-scan order of each
 * component's first pixel.
 */
inline InstanceLabelMap connected_components(const BinaryMask& mask) {
    const int h = mask.height();
    const int w = mask.width();
    InstanceLabelMap out(h, w);

    std::vector<int> parent;
    parent.reserve(256);
    auto find = [&](int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    auto unite = [&](int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    };

    std::vector<int> provisional(mask.size(), -1);
    for (int u = 0; u < h; ++u) {
        for (int v = 0; v < w; ++v) {
            if (!mask.at(u, v)) continue;
            const size_t i = static_cast<size_t>(u) * w + v;
            const int left = (v > 0 && mask.at(u, v - 1)) ? provisional[i - 1] : -1;
            const int up = (u > 0 && mask.at(u - 1, v)) ? provisional[i - w] : -1;
            if (left < 0 && up < 0) {
                provisional[i] = static_cast<int>(parent.size());
                parent.push_back(provisional[i]);
            } else if (left >= 0 && up < 0) {
                provisional[i] = left;
            } else if (left < 0) {
                provisional[i] = up;
            } else {
                provisional[i] = std::min(find(left), find(up));
                unite(left, up);
            }
        }
    }

    std::vector<int> compact(parent.size(), 0);
    int next = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (provisional[i] < 0) continue;
        const int root = find(provisional[i]);
        if (compact[root] == 0) compact[root] = ++next;
        out.set(i, compact[root]);
    }
    return out;
}

/// One connected component with its geometric measures.
struct Blob {
    int id = 0;
    std::vector<PixelCoord> pixels;
    double centroid_u = 0.0;
    double centroid_v = 0.0;
    std::vector<PixelCoord> boundary;  // pixels with a background 4-neighbor or on the border
    int pixel_area = 0;
    std::vector<Point2> hull;  // over pixel-square corner points, counter-clockwise
    double hull_area = 0.0;
};

/// One Blob per label, ordered by id, all geometry fields populated.
inline std::vector<Blob> extract_blobs(const InstanceLabelMap& labels) {
    const int h = labels.height();
    const int w = labels.width();
    const int k = labels.max_label();
    std::vector<Blob> blobs(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) blobs[static_cast<size_t>(i)].id = i + 1;

    for (int u = 0; u < h; ++u) {
        for (int v = 0; v < w; ++v) {
            const int label = labels.at(u, v);
            if (label == 0) continue;
            Blob& b = blobs[static_cast<size_t>(label - 1)];
            b.pixels.push_back({u, v});
            const bool edge = u == 0 || v == 0 || u == h - 1 || v == w - 1 ||
                              labels.at(u - 1, v) == 0 || labels.at(u + 1, v) == 0 ||
                              labels.at(u, v - 1) == 0 || labels.at(u, v + 1) == 0;
            if (edge) b.boundary.push_back({u, v});
        }
    }

    for (Blob& b : blobs) {
        b.pixel_area = static_cast<int>(b.pixels.size());
        if (b.pixels.empty()) continue;  // labels are consecutive, should not happen
        double su = 0.0, sv = 0.0;
        std::vector<Point2> corners;
        corners.reserve(b.pixels.size() * 4);
        for (const PixelCoord& p : b.pixels) {
            su += p.u;
            sv += p.v;
            corners.push_back({p.u - 0.5, p.v - 0.5});
            corners.push_back({p.u - 0.5, p.v + 0.5});
            corners.push_back({p.u + 0.5, p.v - 0.5});
            corners.push_back({p.u + 0.5, p.v + 0.5});
        }
        b.centroid_u = su / b.pixel_area;
        b.centroid_v = sv / b.pixel_area;
        b.hull = convex_hull(std::move(corners));
        b.hull_area = polygon_area(b.hull);
    }
    return blobs;
}

/**
 * @brief Binary erosion with the full 3x3 structuring element, one iteration.
 *
 * A pixel survives iff it and all 8 neighbors are foreground; pixels outside
 * the image count as background, so the border always erodes.
 */
inline BinaryMask erode(const BinaryMask& mask) {
    const int h = mask.height();
    const int w = mask.width();
    BinaryMask out(h, w);
    for (int u = 1; u < h - 1; ++u) {
        for (int v = 1; v < w - 1; ++v) {
            bool keep = true;
            for (int du = -1; du <= 1 && keep; ++du)
                for (int dv = -1; dv <= 1; ++dv)
                    if (!mask.at(u + du, v + dv)) {
                        keep = false;
                        break;
                    }
            if (keep) out.set(u, v, true);
        }
    }
    return out;
}

enum class ErosionScope {
    PerRegion,  // erode each region mask independently (default)
    Union       // erode the union once, then intersect back per region
};

/**
 * @brief Erodes a set of pairwise-disjoint region masks.
 *
 * The Union scope exists for comparison runs; it keeps shared walls between
 * touching regions intact instead of shaving both sides.
 */
inline std::vector<BinaryMask> erode_regions(const std::vector<BinaryMask>& regions,
                                             ErosionScope scope = ErosionScope::PerRegion) {
    if (regions.empty()) return {};
    const int h = regions.front().height();
    const int w = regions.front().width();
    std::vector<uint8_t> seen(static_cast<size_t>(h) * w, 0);
    for (const BinaryMask& r : regions) {
        if (r.height() != h || r.width() != w)
            throw ShapeMismatch("erode_regions: region shape mismatch");
        for (size_t i = 0; i < r.size(); ++i)
            if (r.at(i)) {
                if (seen[i]) throw RegionsOverlap();
                seen[i] = 1;
            }
    }

    std::vector<BinaryMask> out;
    out.reserve(regions.size());
    if (scope == ErosionScope::PerRegion) {
        for (const BinaryMask& r : regions) out.push_back(erode(r));
    } else {
        BinaryMask merged(h, w);
        for (size_t i = 0; i < merged.size(); ++i) merged.set(i, seen[i] != 0);
        const BinaryMask eroded = erode(merged);
        for (const BinaryMask& r : regions) {
            BinaryMask m(h, w);
            for (size_t i = 0; i < m.size(); ++i) m.set(i, r.at(i) && eroded.at(i));
            out.push_back(std::move(m));
        }
    }
    return out;
}

}  // namespace morphology
}  // namespace tss

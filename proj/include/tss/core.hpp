// Copyright (c) 2026 the tss project
// Licensed under the Apache License 2.0.

/**
 * @file core.hpp
 * @brief Shared domain types and prediction-mask derivation.
 *
 * Coordinate convention used across the library: (u, v) = (row, column),
 * origin at the top-left pixel. All pixel data is stored row-major.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tss {

/// Base class for library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& what) : Error(what) {}
};

/// Integer pixel location, u = row, v = column.
struct PixelCoord {
    int u = 0;
    int v = 0;

    friend bool operator==(const PixelCoord& a, const PixelCoord& b) {
        return a.u == b.u && a.v == b.v;
    }
    friend bool operator!=(const PixelCoord& a, const PixelCoord& b) { return !(a == b); }
    friend bool operator<(const PixelCoord& a, const PixelCoord& b) {
        return a.u != b.u ? a.u < b.u : a.v < b.v;
    }
};

/**
 * @brief RGB image with channel values in [0, 1].
 *
 * Planar storage: channel c occupies data[c*h*w .. (c+1)*h*w).
 */
class ImageRGB {
public:
    ImageRGB() = default;
    ImageRGB(int height, int width)
        : height_(height), width_(width), data_(static_cast<size_t>(3) * height * width, 0.0) {
        if (height <= 0 || width <= 0)
            throw std::invalid_argument("ImageRGB: non-positive dimensions");
    }

    int height() const { return height_; }
    int width() const { return width_; }

    double& at(int u, int v, int c) { return data_[plane_offset(c) + static_cast<size_t>(u) * width_ + v]; }
    double at(int u, int v, int c) const { return data_[plane_offset(c) + static_cast<size_t>(u) * width_ + v]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    /// Checks finiteness and the [0,1] range; throws on violation.
    void check() const {
        for (double x : data_)
            if (!std::isfinite(x) || x < 0.0 || x > 1.0)
                throw std::invalid_argument("ImageRGB: value outside [0,1]");
    }

private:
    size_t plane_offset(int c) const { return static_cast<size_t>(c) * height_ * width_; }

    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

/**
 * @brief Two-channel per-pixel softmax output (background, foreground).
 *
 * Invariant: per pixel, bg + fg = 1 within 1e-6, all values finite.
 */
class ProbabilityMap {
public:
    ProbabilityMap() = default;

    ProbabilityMap(int height, int width, std::vector<double> background, std::vector<double> foreground)
        : height_(height), width_(width), bg_(std::move(background)), fg_(std::move(foreground)) {
        const size_t n = static_cast<size_t>(height_) * width_;
        if (bg_.size() != n || fg_.size() != n)
            throw std::invalid_argument("ProbabilityMap: channel size mismatch");
        for (size_t i = 0; i < n; ++i) {
            if (!std::isfinite(bg_[i]) || !std::isfinite(fg_[i]) || bg_[i] < 0.0 || fg_[i] < 0.0 ||
                bg_[i] > 1.0 || fg_[i] > 1.0)
                throw std::invalid_argument("ProbabilityMap: value outside [0,1]");
            if (std::abs(bg_[i] + fg_[i] - 1.0) > 1e-6)
                throw std::invalid_argument("ProbabilityMap: channel sum differs from 1");
        }
    }

    /// Builds a map from the foreground channel alone, bg = 1 - fg.
    static ProbabilityMap from_foreground(int height, int width, std::vector<double> foreground) {
        std::vector<double> bg(foreground.size());
        for (size_t i = 0; i < foreground.size(); ++i) bg[i] = 1.0 - foreground[i];
        return ProbabilityMap(height, width, std::move(bg), std::move(foreground));
    }

    int height() const { return height_; }
    int width() const { return width_; }
    size_t size() const { return fg_.size(); }

    double bg(int u, int v) const { return bg_[static_cast<size_t>(u) * width_ + v]; }
    double fg(int u, int v) const { return fg_[static_cast<size_t>(u) * width_ + v]; }
    double fg(size_t i) const { return fg_[i]; }
    double bg(size_t i) const { return bg_[i]; }

    const std::vector<double>& foreground() const { return fg_; }
    const std::vector<double>& background() const { return bg_; }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> bg_;
    std::vector<double> fg_;
};

/// Per-pixel boolean mask; 1 = foreground.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int height, int width, bool fill = false)
        : height_(height), width_(width), data_(static_cast<size_t>(height) * width, fill ? 1 : 0) {
        if (height <= 0 || width <= 0)
            throw std::invalid_argument("BinaryMask: non-positive dimensions");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    size_t size() const { return data_.size(); }

    bool at(int u, int v) const { return data_[static_cast<size_t>(u) * width_ + v] != 0; }
    void set(int u, int v, bool value) { data_[static_cast<size_t>(u) * width_ + v] = value ? 1 : 0; }
    bool at(size_t i) const { return data_[i] != 0; }
    void set(size_t i, bool value) { data_[i] = value ? 1 : 0; }

    /// Number of foreground pixels.
    size_t count() const {
        size_t n = 0;
        for (uint8_t x : data_) n += x;
        return n;
    }

    friend bool operator==(const BinaryMask& a, const BinaryMask& b) {
        return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<uint8_t> data_;
};

/// Point supervision: positive clicks on objects, negative clicks on background.
struct AnnotationSet {
    std::vector<PixelCoord> positives;
    std::vector<PixelCoord> negatives;
};

enum class ShapeKind { Convex, Circ, None };

/// Weights of the loss terms; the count weight enables the count ablation rows.
struct LossWeights {
    double lambda_seg = 1.0;
    double lambda_split = 1.0;
    double lambda_shape = 1.0;
    double lambda_count = 1.0;
    ShapeKind shape_kind = ShapeKind::Convex;

    void check() const {
        for (double w : {lambda_seg, lambda_split, lambda_shape, lambda_count})
            if (!std::isfinite(w) || w < 0.0)
                throw std::invalid_argument("LossWeights: weights must be finite and non-negative");
    }
};

/// Reason a point annotation set failed validation.
struct AnnotationIssue {
    enum class Kind { OutOfBounds, PositiveNegativeOverlap };

    Kind kind = Kind::OutOfBounds;
    PixelCoord point;
    bool in_positives = true;  // for OutOfBounds, which list the point came from

    std::string message() const {
        const std::string at = "(" + std::to_string(point.u) + "," + std::to_string(point.v) + ")";
        if (kind == Kind::OutOfBounds)
            return std::string(in_positives ? "positive" : "negative") + " point " + at + " out of bounds";
        return "point " + at + " appears in both positives and negatives";
    }
};

/**
 * @brief Validates annotations against an image shape.
 *
 * Returns the first out-of-bounds point (positives scanned before negatives)
 * or the first point duplicated across the two lists; empty optional when ok.
 */
inline std::optional<AnnotationIssue> validate(const AnnotationSet& ann, int height, int width) {
    auto in_bounds = [&](const PixelCoord& p) {
        return p.u >= 0 && p.v >= 0 && p.u < height && p.v < width;
    };
    for (const PixelCoord& p : ann.positives)
        if (!in_bounds(p)) return AnnotationIssue{AnnotationIssue::Kind::OutOfBounds, p, true};
    for (const PixelCoord& p : ann.negatives)
        if (!in_bounds(p)) return AnnotationIssue{AnnotationIssue::Kind::OutOfBounds, p, false};
    for (const PixelCoord& p : ann.positives)
        for (const PixelCoord& q : ann.negatives)
            if (p == q) return AnnotationIssue{AnnotationIssue::Kind::PositiveNegativeOverlap, p, true};
    return std::nullopt;
}

/**
 * @brief Derives the hard mask from a probability map.
 *
 * A pixel is foreground iff its foreground channel strictly exceeds the
 * background channel; an exact tie goes to background.
 */
inline BinaryMask threshold_prediction(const ProbabilityMap& prob) {
    BinaryMask mask(prob.height(), prob.width());
    for (size_t i = 0; i < prob.size(); ++i) mask.set(i, prob.fg(i) > prob.bg(i));
    return mask;
}

/// Clamp for log arguments; keeps the cross-entropy terms finite.
inline double clamp_log_arg(double p) {
    constexpr double lo = 1e-7;
    constexpr double hi = 1.0 - 1e-7;
    return p < lo ? lo : (p > hi ? hi : p);
}

}  // namespace tss

// Copyright (c) 2026 the tss project
// Licensed under the Apache License 2.0.

/**
 * @file synthgen.hpp
 * @brief Deterministic synthetic berry-scene generator.
 *
 * Scenes contain shaded elliptical berries over a green-brown textured
 * background, leaf-shaped distractors (a configurable fraction tinted red),
 * and optional leaf occluders that clip berry visibility. Instance masks
 * record visible berry pixels only. All randomness flows from the configured
 * seed through one generator, so identical configs reproduce scenes
 * bit-identically.
 */

#pragma once

#include "tss/core.hpp"
#include "tss/morphology.hpp"
#include "tss/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace tss {
namespace synthgen {

struct ConfigInvalid : Error {
    explicit ConfigInvalid(const std::string& what) : Error("SceneConfig: " + what) {}
};

struct NoBackgroundPixels : Error {
    NoBackgroundPixels() : Error("sample_annotations: no background pixels available") {}
};

struct SceneConfig {
    int height = 64;
    int width = 64;
    int berry_count_min = 3;
    int berry_count_max = 8;
    int radius_min = 3;
    int radius_max = 7;
    double occluder_probability = 0.25;
    int distractor_count_min = 4;
    int distractor_count_max = 10;
    double distractor_red_fraction = 0.5;
    bool separated = false;  // enforce center distance >= 2*radius_max + 1
    uint64_t seed = 0;

    void check() const {
        if (height < 8 || width < 8) throw ConfigInvalid("frame smaller than 8x8");
        if (berry_count_min < 0 || berry_count_min > berry_count_max)
            throw ConfigInvalid("invalid berry count range");
        if (radius_min < 2 || radius_min > radius_max) throw ConfigInvalid("invalid radius range");
        if (2 * radius_max + 1 > std::min(height, width))
            throw ConfigInvalid("berries do not fit inside the frame");
        if (occluder_probability < 0.0 || occluder_probability > 1.0)
            throw ConfigInvalid("occluder probability outside [0,1]");
        if (distractor_count_min < 0 || distractor_count_min > distractor_count_max)
            throw ConfigInvalid("invalid distractor count range");
        if (distractor_red_fraction < 0.0 || distractor_red_fraction > 1.0)
            throw ConfigInvalid("red fraction outside [0,1]");
    }
};

struct Scene {
    ImageRGB image;
    InstanceLabelMap instance_mask;  // visible berry pixels, labels 1..K
    int count = 0;
    AnnotationSet annotations;
};

namespace detail {

struct Rgb {
    double r, g, b;
};

inline Rgb lerp(const Rgb& a, const Rgb& b, double t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

// Palette. Berry rims are deliberately close in hue to the dry-brown
// background patches and the reddened distractor leaves, so point-only
// supervision underdetermines them.
constexpr Rgb kGreenDeep{0.14, 0.36, 0.12};
constexpr Rgb kGreenLight{0.26, 0.44, 0.18};
constexpr Rgb kBrown{0.34, 0.26, 0.14};
constexpr Rgb kDryPatch{0.32, 0.16, 0.09};
constexpr Rgb kBerry{0.80, 0.13, 0.09};
constexpr Rgb kLeafGreen{0.22, 0.46, 0.15};
constexpr Rgb kLeafRed{0.52, 0.19, 0.10};
constexpr double kBerryRimShade = 0.40;  // shade factor at the rim (1.0 at center)
constexpr double kJitter = 0.035;        // per-channel pixel noise amplitude

struct Ellipse {
    double cu, cv;      // center
    double a, b;        // semi-axes, a along the rotated u' axis
    double cos_t, sin_t;

    // Squared normalized radius; <= 1 inside.
    double rho2(double u, double v) const {
        const double du = u - cu;
        const double dv = v - cv;
        const double x = du * cos_t + dv * sin_t;
        const double y = -du * sin_t + dv * cos_t;
        return (x / a) * (x / a) + (y / b) * (y / b);
    }
};

struct SmoothField {
    double ku[3], kv[3], phase[3];

    static SmoothField draw(Rng& rng) {
        SmoothField f;
        for (int k = 0; k < 3; ++k) {
            f.ku[k] = rng.uniform(0.06, 0.40);
            f.kv[k] = rng.uniform(0.06, 0.40);
            f.phase[k] = rng.uniform(0.0, 6.283185307179586);
        }
        return f;
    }

    // Smooth value in [0, 1].
    double at(int u, int v) const {
        static constexpr double amp[3] = {0.5, 0.3, 0.2};
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += amp[k] * std::sin(ku[k] * u + kv[k] * v + phase[k]);
        return std::clamp(0.5 + 0.5 * s, 0.0, 1.0);
    }
};

inline void paint(ImageRGB& img, int u, int v, const Rgb& c) {
    img.at(u, v, 0) = std::clamp(c.r, 0.0, 1.0);
    img.at(u, v, 1) = std::clamp(c.g, 0.0, 1.0);
    img.at(u, v, 2) = std::clamp(c.b, 0.0, 1.0);
}

inline void paint_ellipse(ImageRGB& img, const Ellipse& e, const Rgb& base, double rim_shade,
                          std::vector<int>* owner, int owner_value) {
    const int h = img.height();
    const int w = img.width();
    const double reach = std::max(e.a, e.b);
    const int u0 = std::max(0, static_cast<int>(std::floor(e.cu - reach)));
    const int u1 = std::min(h - 1, static_cast<int>(std::ceil(e.cu + reach)));
    const int v0 = std::max(0, static_cast<int>(std::floor(e.cv - reach)));
    const int v1 = std::min(w - 1, static_cast<int>(std::ceil(e.cv + reach)));
    for (int u = u0; u <= u1; ++u) {
        for (int v = v0; v <= v1; ++v) {
            const double r2 = e.rho2(u, v);
            if (r2 > 1.0) continue;
            const double shade = 1.0 - (1.0 - rim_shade) * std::sqrt(r2);
            paint(img, u, v, {base.r * shade, base.g * shade, base.b * shade});
            if (owner) (*owner)[static_cast<size_t>(u) * w + v] = owner_value;
        }
    }
}

}  // namespace detail

/**
 * @brief CRAID-convention point annotations for an instance mask.
 *
 * One positive per instance at its visible centroid, snapped to the nearest
 * pixel of that instance. For each positive, 32 uniform background candidates
 * are drawn and the one farthest from its nearest positive is kept, so
 * |negatives| = |positives|. Pixels set in @p exclude are additionally banned
 * from the background candidate pool.
 */
inline AnnotationSet sample_annotations(const InstanceLabelMap& mask, uint64_t seed,
                                        const BinaryMask* exclude = nullptr) {
    const int h = mask.height();
    const int w = mask.width();
    const int k = mask.max_label();
    AnnotationSet ann;
    if (k == 0) return ann;

    std::vector<double> sum_u(static_cast<size_t>(k), 0.0), sum_v(static_cast<size_t>(k), 0.0);
    std::vector<int> area(static_cast<size_t>(k), 0);
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v) {
            const int label = mask.at(u, v);
            if (label == 0) continue;
            sum_u[label - 1] += u;
            sum_v[label - 1] += v;
            ++area[label - 1];
        }

    for (int label = 1; label <= k; ++label) {
        if (area[label - 1] == 0) continue;
        const double cu = sum_u[label - 1] / area[label - 1];
        const double cv = sum_v[label - 1] / area[label - 1];
        PixelCoord best{-1, -1};
        double best_d = std::numeric_limits<double>::infinity();
        for (int u = 0; u < h; ++u)
            for (int v = 0; v < w; ++v) {
                if (mask.at(u, v) != label) continue;
                const double d = (u - cu) * (u - cu) + (v - cv) * (v - cv);
                if (d < best_d) {
                    best_d = d;
                    best = {u, v};
                }
            }
        ann.positives.push_back(best);
    }

    std::vector<PixelCoord> background;
    background.reserve(mask.size());
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v)
            if (mask.at(u, v) == 0 && !(exclude && exclude->at(u, v))) background.push_back({u, v});
    if (background.empty()) throw NoBackgroundPixels();

    Rng rng(seed);
    for (size_t i = 0; i < ann.positives.size(); ++i) {
        PixelCoord chosen{};
        double chosen_d = -1.0;
        for (int c = 0; c < 32; ++c) {
            const PixelCoord cand = background[rng.index(background.size())];
            double nearest = std::numeric_limits<double>::infinity();
            for (const PixelCoord& p : ann.positives) {
                const double d = std::hypot(cand.u - p.u, cand.v - p.v);
                nearest = std::min(nearest, d);
            }
            if (nearest > chosen_d) {
                chosen_d = nearest;
                chosen = cand;
            }
        }
        ann.negatives.push_back(chosen);
    }
    return ann;
}

/// Deterministic scene synthesis; see the file comment for the layering.
inline Scene generate_scene(const SceneConfig& config) {
    config.check();
    const int h = config.height;
    const int w = config.width;
    Rng rng(config.seed);

    const auto field_mix = detail::SmoothField::draw(rng);    // green <-> brown blend
    const auto field_patch = detail::SmoothField::draw(rng);  // dry reddish patches

    struct Berry {
        detail::Ellipse shape;
        double brightness;
    };
    std::vector<Berry> berries;
    const int target = rng.uniform_int(config.berry_count_min, config.berry_count_max);
    const double min_dist = 2.0 * config.radius_max + 1.0;
    for (int i = 0; i < target; ++i) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            const int radius = rng.uniform_int(config.radius_min, config.radius_max);
            const int cu = rng.uniform_int(radius, h - 1 - radius);
            const int cv = rng.uniform_int(radius, w - 1 - radius);
            if (config.separated) {
                bool clash = false;
                for (const Berry& b : berries) {
                    const double d = std::hypot(cu - b.shape.cu, cv - b.shape.cv);
                    if (d < min_dist) {
                        clash = true;
                        break;
                    }
                }
                if (clash) continue;
            }
            const double ratio = rng.uniform(0.7, 1.0);
            const double angle = rng.uniform(0.0, 3.141592653589793);
            const double brightness = rng.uniform(0.85, 1.05);
            berries.push_back({{static_cast<double>(cu), static_cast<double>(cv),
                                static_cast<double>(radius), radius * ratio, std::cos(angle),
                                std::sin(angle)},
                               brightness});
            break;
        }
    }

    struct Leaf {
        detail::Ellipse shape;
        bool red;
    };
    std::vector<Leaf> leaves;
    const int n_leaves = rng.uniform_int(config.distractor_count_min, config.distractor_count_max);
    for (int i = 0; i < n_leaves; ++i) {
        const double half_len = rng.uniform(4.0, 8.0);
        const double cu = rng.uniform(0.0, h - 1.0);
        const double cv = rng.uniform(0.0, w - 1.0);
        const double ratio = rng.uniform(0.25, 0.45);
        const double angle = rng.uniform(0.0, 3.141592653589793);
        const bool red = rng.bernoulli(config.distractor_red_fraction);
        leaves.push_back({{cu, cv, half_len, half_len * ratio, std::cos(angle), std::sin(angle)}, red});
    }

    std::vector<detail::Ellipse> occluders;
    for (const Berry& b : berries) {
        if (!rng.bernoulli(config.occluder_probability)) continue;
        const double dir = rng.uniform(0.0, 6.283185307179586);
        const double off = b.shape.a * rng.uniform(0.5, 1.0);
        const double half_len = b.shape.a * rng.uniform(0.7, 1.2);
        const double ratio = rng.uniform(0.35, 0.6);
        const double angle = rng.uniform(0.0, 3.141592653589793);
        occluders.push_back({b.shape.cu + off * std::cos(dir), b.shape.cv + off * std::sin(dir),
                             half_len, half_len * ratio, std::cos(angle), std::sin(angle)});
    }

    Scene scene;
    scene.image = ImageRGB(h, w);
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v) {
            const double t = field_mix.at(u, v);
            detail::Rgb c = detail::lerp(detail::lerp(detail::kGreenDeep, detail::kGreenLight, t),
                                         detail::kBrown, t * t);
            if (field_patch.at(u, v) > 0.78) c = detail::kDryPatch;
            detail::paint(scene.image, u, v, c);
        }

    for (const Leaf& leaf : leaves)
        detail::paint_ellipse(scene.image, leaf.shape, leaf.red ? detail::kLeafRed : detail::kLeafGreen,
                              0.7, nullptr, 0);

    // owner[i] = 1-based index of the berry visible at pixel i, 0 otherwise.
    std::vector<int> owner(static_cast<size_t>(h) * w, 0);
    std::vector<uint8_t> full_extent(static_cast<size_t>(h) * w, 0);
    for (size_t i = 0; i < berries.size(); ++i) {
        const Berry& b = berries[i];
        const detail::Rgb base{detail::kBerry.r * b.brightness, detail::kBerry.g * b.brightness,
                               detail::kBerry.b * b.brightness};
        detail::paint_ellipse(scene.image, b.shape, base, detail::kBerryRimShade, &owner,
                              static_cast<int>(i) + 1);
    }
    for (size_t i = 0; i < owner.size(); ++i) full_extent[i] = owner[i] != 0;

    for (const detail::Ellipse& occ : occluders) {
        std::vector<int> clip(owner.size(), 0);
        detail::paint_ellipse(scene.image, occ, detail::kLeafGreen, 0.7, &clip, 1);
        for (size_t i = 0; i < owner.size(); ++i)
            if (clip[i]) owner[i] = 0;
    }

    // Keep each berry's largest 4-connected visible fragment and compact the
    // labels to 1..K in draw order.
    scene.instance_mask = InstanceLabelMap(h, w);
    int next_label = 0;
    for (size_t berry = 1; berry <= berries.size(); ++berry) {
        std::vector<size_t> pixels;
        for (size_t i = 0; i < owner.size(); ++i)
            if (owner[i] == static_cast<int>(berry)) pixels.push_back(i);
        if (pixels.empty()) continue;

        std::vector<uint8_t> visited(owner.size(), 0);
        std::vector<size_t> best_fragment;
        for (size_t start : pixels) {
            if (visited[start]) continue;
            std::vector<size_t> fragment, stack{start};
            visited[start] = 1;
            while (!stack.empty()) {
                const size_t p = stack.back();
                stack.pop_back();
                fragment.push_back(p);
                const int u = static_cast<int>(p / w);
                const int v = static_cast<int>(p % w);
                const int du[4] = {-1, 1, 0, 0};
                const int dv[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int nu = u + du[k];
                    const int nv = v + dv[k];
                    if (nu < 0 || nv < 0 || nu >= h || nv >= w) continue;
                    const size_t q = static_cast<size_t>(nu) * w + nv;
                    if (visited[q] || owner[q] != static_cast<int>(berry)) continue;
                    visited[q] = 1;
                    stack.push_back(q);
                }
            }
            if (fragment.size() > best_fragment.size()) best_fragment = std::move(fragment);
        }
        ++next_label;
        for (size_t p : best_fragment) scene.instance_mask.set(p, next_label);
    }
    scene.count = next_label;

    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v)
            for (int c = 0; c < 3; ++c) {
                const double x =
                    scene.image.at(u, v, c) + rng.uniform(-detail::kJitter, detail::kJitter);
                scene.image.at(u, v, c) = std::clamp(x, 0.0, 1.0);
            }
    scene.image.check();

    // Negatives avoid all berry pixels, visible or occluded.
    BinaryMask exclude(h, w);
    for (size_t i = 0; i < full_extent.size(); ++i) exclude.set(i, full_extent[i] != 0);
    scene.annotations = sample_annotations(scene.instance_mask, mix_seed(config.seed, 1), &exclude);
    return scene;
}

}  // namespace synthgen
}  // namespace tss

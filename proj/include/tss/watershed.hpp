// Copyright (c) 2026 the tss project
// Licensed under the Apache License 2.0.

/**
 * @file watershed.hpp
 * @brief Marker-based flooding watershed and the selective variant.
 *
 * Flooding is a priority flood: all markers are enqueued, pixels pop in
 * increasing (height, insertion order), and a pixel is claimed by the first
 * front that reaches it. Ties resolve FIFO, neighbors scan in N,S,W,E order,
 * so identical inputs always produce bit-identical labelings. There is no
 * ridge label: every reachable pixel joins a region.
 */

#pragma once

#include "tss/core.hpp"
#include "tss/morphology.hpp"

#include <cstdint>
#include <queue>
#include <utility>
#include <vector>

namespace tss {
namespace watershed {

struct NoMarkers : Error {
    NoMarkers() : Error("watershed: no markers") {}
};

struct MarkerOutsideDomain : Error {
    explicit MarkerOutsideDomain(const PixelCoord& p)
        : Error("watershed: marker (" + std::to_string(p.u) + "," + std::to_string(p.v) +
                ") outside the flood domain") {}
};

/**
 * @brief Flood regions plus their positive/negative split.
 *
 * labels: 0 = unreachable, k >= 1 = region of marker marker_of_region[k-1].
 * Each region holds exactly one marker. For the plain flood, all regions are
 * listed as positive; selective() distributes them by marker sign.
 */
struct RegionSet {
    InstanceLabelMap labels;
    std::vector<int> marker_of_region;
    std::vector<BinaryMask> positive_regions;
    std::vector<BinaryMask> negative_regions;
};

/**
 * @brief Priority-flood from all markers simultaneously.
 *
 * @param landscape per-pixel heights, row-major, one value per domain pixel
 * @param domain    flood domain; pixels outside stay unlabeled
 * @param markers   seed pixels, in-bounds, inside the domain, pairwise distinct
 */
inline RegionSet flood(const std::vector<double>& landscape, const BinaryMask& domain,
                       const std::vector<PixelCoord>& markers) {
    const int h = domain.height();
    const int w = domain.width();
    if (landscape.size() != domain.size())
        throw ShapeMismatch("watershed: landscape does not match the domain shape");
    for (double x : landscape)
        if (!std::isfinite(x)) throw std::invalid_argument("watershed: non-finite landscape");
    if (markers.empty()) throw NoMarkers();

    RegionSet out;
    out.labels = InstanceLabelMap(h, w);
    out.marker_of_region.resize(markers.size());

    struct Entry {
        double height;
        uint64_t seq;
        int u, v;
    };
    struct Later {
        bool operator()(const Entry& a, const Entry& b) const {
            return a.height != b.height ? a.height > b.height : a.seq > b.seq;
        }
    };
    std::priority_queue<Entry, std::vector<Entry>, Later> queue;

    uint64_t seq = 0;
    for (size_t i = 0; i < markers.size(); ++i) {
        const PixelCoord& m = markers[i];
        if (m.u < 0 || m.v < 0 || m.u >= h || m.v >= w || !domain.at(m.u, m.v))
            throw MarkerOutsideDomain(m);
        if (out.labels.at(m.u, m.v) != 0)
            throw std::invalid_argument("watershed: duplicate marker");
        out.labels.set(m.u, m.v, static_cast<int>(i) + 1);
        out.marker_of_region[i] = static_cast<int>(i);
        queue.push({landscape[static_cast<size_t>(m.u) * w + m.v], seq++, m.u, m.v});
    }

    // A pixel is claimed when first pushed; popping only expands its front.
    const int du[4] = {-1, 1, 0, 0};  // N, S, W, E
    const int dv[4] = {0, 0, -1, 1};
    while (!queue.empty()) {
        const Entry e = queue.top();
        queue.pop();
        const int label = out.labels.at(e.u, e.v);
        for (int k = 0; k < 4; ++k) {
            const int nu = e.u + du[k];
            const int nv = e.v + dv[k];
            if (nu < 0 || nv < 0 || nu >= h || nv >= w) continue;
            if (!domain.at(nu, nv) || out.labels.at(nu, nv) != 0) continue;
            out.labels.set(nu, nv, label);
            queue.push({landscape[static_cast<size_t>(nu) * w + nv], seq++, nu, nv});
        }
    }

    out.positive_regions.reserve(markers.size());
    for (size_t i = 0; i < markers.size(); ++i) {
        BinaryMask region(h, w);
        for (size_t p = 0; p < region.size(); ++p)
            region.set(p, out.labels.at(p) == static_cast<int>(i) + 1);
        out.positive_regions.push_back(std::move(region));
    }
    return out;
}

/**
 * @brief Selective watershed seeded by positive and negative points.
 *
 * The flood runs over the whole image on landscape 1 - fg(p), so confident
 * foreground is claimed first; on hard (saturated) maps this reduces to
 * uniform flooding. Markers are positives first, then negatives, and each
 * region carries exactly one marker, so r_p and r_n are disjoint by
 * construction.
 */
inline RegionSet selective(const BinaryMask& pred, const ProbabilityMap& prob,
                           const AnnotationSet& ann) {
    if (pred.height() != prob.height() || pred.width() != prob.width())
        throw ShapeMismatch("selective watershed: mask does not match the probability map");
    if (auto issue = validate(ann, prob.height(), prob.width()))
        throw std::invalid_argument("selective watershed: " + issue->message());

    std::vector<double> landscape(prob.size());
    for (size_t i = 0; i < prob.size(); ++i) landscape[i] = 1.0 - prob.fg(i);

    std::vector<PixelCoord> markers = ann.positives;
    markers.insert(markers.end(), ann.negatives.begin(), ann.negatives.end());

    BinaryMask everywhere(prob.height(), prob.width(), true);
    RegionSet rs = flood(landscape, everywhere, markers);

    const size_t n_pos = ann.positives.size();
    std::vector<BinaryMask> pos, neg;
    for (size_t i = 0; i < rs.positive_regions.size(); ++i) {
        if (i < n_pos)
            pos.push_back(std::move(rs.positive_regions[i]));
        else
            neg.push_back(std::move(rs.positive_regions[i]));
    }
    rs.positive_regions = std::move(pos);
    rs.negative_regions = std::move(neg);
    return rs;
}

/**
 * @brief Eroded flood regions: where each instance may expand without
 * stepping onto another, and the background counterparts.
 */
inline std::pair<std::vector<BinaryMask>, std::vector<BinaryMask>> expandable_regions(
    const BinaryMask& pred, const ProbabilityMap& prob, const AnnotationSet& ann,
    morphology::ErosionScope scope = morphology::ErosionScope::PerRegion) {
    RegionSet rs = selective(pred, prob, ann);
    return {morphology::erode_regions(rs.positive_regions, scope),
            morphology::erode_regions(rs.negative_regions, scope)};
}

}  // namespace watershed
}  // namespace tss

// Copyright (c) 2026 the tss project
// Licensed under the Apache License 2.0.

/**
 * @file trainer.hpp
 * @brief Small fully-convolutional segmenter and its training loop.
 *
 * The reference network is three 3x3 zero-padded conv layers (3 -> 8 -> 8 -> 2)
 * with ReLU between them and a per-pixel 2-way softmax on top. Backprop is
 * written out by hand: the loss modules supply d(loss)/d(foreground), and
 * everything behind the softmax is plain convolution algebra. Training runs
 * one image per step with random axis flips, Adam updates, and periodic
 * validation; the parameters kept are the ones with the best validation
 * quality score, not the last iterate.
 */

#pragma once

#include "tss/core.hpp"
#include "tss/losses.hpp"
#include "tss/metrics.hpp"
#include "tss/morphology.hpp"
#include "tss/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace tss {

/// One image with its ground truth and point supervision.
struct Sample {
    ImageRGB image;
    InstanceLabelMap instances;  // visible-pixel ground truth, labels 1..K
    AnnotationSet annotations;
    int count = 0;
};

using Dataset = std::vector<Sample>;

namespace trainer {

struct DatasetEmpty : Error {
    explicit DatasetEmpty(const std::string& which) : Error("train: " + which + " set is empty") {}
};

struct DivergenceDetected : Error {
    explicit DivergenceDetected(int iteration)
        : Error("training diverged at iteration " + std::to_string(iteration)) {}
};

struct CacheMismatch : Error {
    explicit CacheMismatch(const std::string& what) : Error("backward: " + what) {}
};

constexpr int kMinImageSide = 8;

struct ConvLayer {
    int in_ch = 0;
    int out_ch = 0;
    int ksize = 3;
    std::vector<double> weights;  // [out][in][ku][kv], row-major
    std::vector<double> bias;     // [out]

    double weight(int o, int i, int ku, int kv) const {
        return weights[((static_cast<size_t>(o) * in_ch + i) * ksize + ku) * ksize + kv];
    }
};

struct NetworkParams {
    std::vector<ConvLayer> layers;

    /// Reference architecture with uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] init.
    static NetworkParams make_default(uint64_t seed) {
        NetworkParams params;
        Rng rng(seed);
        const int widths[4] = {3, 8, 8, 2};
        for (int l = 0; l < 3; ++l) {
            ConvLayer layer;
            layer.in_ch = widths[l];
            layer.out_ch = widths[l + 1];
            layer.ksize = 3;
            const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_ch) * 9.0);
            layer.weights.resize(static_cast<size_t>(layer.out_ch) * layer.in_ch * 9);
            layer.bias.resize(static_cast<size_t>(layer.out_ch));
            for (double& w : layer.weights) w = rng.uniform(-bound, bound);
            for (double& b : layer.bias) b = rng.uniform(-bound, bound);
            params.layers.push_back(std::move(layer));
        }
        return params;
    }

    bool finite() const {
        for (const ConvLayer& layer : layers) {
            for (double w : layer.weights)
                if (!std::isfinite(w)) return false;
            for (double b : layer.bias)
                if (!std::isfinite(b)) return false;
        }
        return true;
    }
};

struct ForwardCache {
    int height = 0;
    int width = 0;
    // act[0] is the input image planes; act[l+1] is layer l's output after
    // ReLU (the last layer's entry stays pre-softmax and is unused upstream).
    std::vector<std::vector<double>> act;
    std::vector<std::vector<double>> pre;  // pre-ReLU conv outputs per layer
    ProbabilityMap prob;
};

namespace detail {

inline void conv(const std::vector<double>& in, int in_ch, int h, int w, const ConvLayer& layer,
                 std::vector<double>& out) {
    const size_t plane = static_cast<size_t>(h) * w;
    out.assign(static_cast<size_t>(layer.out_ch) * plane, 0.0);
    const int pad = layer.ksize / 2;
    for (int o = 0; o < layer.out_ch; ++o) {
        double* dst = out.data() + static_cast<size_t>(o) * plane;
        for (size_t i = 0; i < plane; ++i) dst[i] = layer.bias[o];
        for (int i = 0; i < in_ch; ++i) {
            const double* src = in.data() + static_cast<size_t>(i) * plane;
            for (int ku = 0; ku < layer.ksize; ++ku) {
                for (int kv = 0; kv < layer.ksize; ++kv) {
                    const double wgt = layer.weight(o, i, ku, kv);
                    if (wgt == 0.0) continue;
                    const int du = ku - pad;
                    const int dv = kv - pad;
                    const int u0 = std::max(0, -du);
                    const int u1 = std::min(h, h - du);
                    const int v0 = std::max(0, -dv);
                    const int v1 = std::min(w, w - dv);
                    for (int u = u0; u < u1; ++u) {
                        double* drow = dst + static_cast<size_t>(u) * w;
                        const double* srow = src + static_cast<size_t>(u + du) * w + dv;
                        for (int v = v0; v < v1; ++v) drow[v] += wgt * srow[v];
                    }
                }
            }
        }
    }
}

inline void check_network(const NetworkParams& params) {
    if (params.layers.empty()) throw std::invalid_argument("network has no layers");
    if (params.layers.front().in_ch != 3)
        throw std::invalid_argument("network input must take 3 channels");
    if (params.layers.back().out_ch != 2)
        throw std::invalid_argument("network output must have 2 channels");
    for (size_t l = 0; l + 1 < params.layers.size(); ++l)
        if (params.layers[l].out_ch != params.layers[l + 1].in_ch)
            throw std::invalid_argument("network channel widths do not chain");
    for (const ConvLayer& layer : params.layers) {
        if (layer.ksize % 2 == 0 || layer.ksize < 1)
            throw std::invalid_argument("kernel size must be odd");
        if (layer.weights.size() != static_cast<size_t>(layer.out_ch) * layer.in_ch * layer.ksize * layer.ksize ||
            layer.bias.size() != static_cast<size_t>(layer.out_ch))
            throw std::invalid_argument("layer buffer sizes do not match its dimensions");
    }
}

}  // namespace detail

/// Runs the network and keeps every intermediate needed by backward().
inline ForwardCache forward(const NetworkParams& params, const ImageRGB& image) {
    detail::check_network(params);
    const int h = image.height();
    const int w = image.width();
    if (h < kMinImageSide || w < kMinImageSide)
        throw ShapeMismatch("forward: image smaller than the 8x8 minimum");

    ForwardCache cache;
    cache.height = h;
    cache.width = w;
    cache.act.resize(params.layers.size() + 1);
    cache.pre.resize(params.layers.size());
    cache.act[0] = image.data();

    for (size_t l = 0; l < params.layers.size(); ++l) {
        detail::conv(cache.act[l], params.layers[l].in_ch, h, w, params.layers[l], cache.pre[l]);
        if (l + 1 < params.layers.size()) {
            cache.act[l + 1] = cache.pre[l];
            for (double& x : cache.act[l + 1]) x = std::max(0.0, x);
        } else {
            cache.act[l + 1] = cache.pre[l];
        }
    }

    const size_t plane = static_cast<size_t>(h) * w;
    const std::vector<double>& logits = cache.pre.back();
    std::vector<double> bg(plane), fg(plane);
    for (size_t i = 0; i < plane; ++i) {
        const double z0 = logits[i];
        const double z1 = logits[plane + i];
        const double m = std::max(z0, z1);
        const double e0 = std::exp(z0 - m);
        const double e1 = std::exp(z1 - m);
        bg[i] = e0 / (e0 + e1);
        fg[i] = e1 / (e0 + e1);
    }
    cache.prob = ProbabilityMap(h, w, std::move(bg), std::move(fg));
    return cache;
}

/// Forward pass without the cache.
inline ProbabilityMap predict(const NetworkParams& params, const ImageRGB& image) {
    return forward(params, image).prob;
}

struct LayerGrads {
    std::vector<double> weights;
    std::vector<double> bias;
};

using NetworkGrads = std::vector<LayerGrads>;

/**
 * @brief Backpropagates d(loss)/d(foreground) to parameter gradients.
 *
 * The softmax Jacobian collapses to dz_fg = g * fg * bg and dz_bg = -dz_fg
 * for a two-channel head, after which each conv layer contributes the usual
 * correlation terms. @p grad_fg is row-major over pixels.
 */
inline NetworkGrads backward(const NetworkParams& params, const ForwardCache& cache,
                             const std::vector<double>& grad_fg) {
    detail::check_network(params);
    const int h = cache.height;
    const int w = cache.width;
    const size_t plane = static_cast<size_t>(h) * w;
    if (cache.pre.size() != params.layers.size() || cache.act.size() != params.layers.size() + 1)
        throw CacheMismatch("cache depth does not match the network");
    if (grad_fg.size() != plane) throw CacheMismatch("gradient size does not match the cache");
    for (size_t l = 0; l < params.layers.size(); ++l)
        if (cache.pre[l].size() != static_cast<size_t>(params.layers[l].out_ch) * plane)
            throw CacheMismatch("cached activation size does not match the network");

    std::vector<double> dz(2 * plane);
    for (size_t i = 0; i < plane; ++i) {
        const double d = grad_fg[i] * cache.prob.fg(i) * cache.prob.bg(i);
        dz[i] = -d;
        dz[plane + i] = d;
    }

    NetworkGrads grads(params.layers.size());
    for (size_t li = params.layers.size(); li-- > 0;) {
        const ConvLayer& layer = params.layers[li];
        const std::vector<double>& input = cache.act[li];
        LayerGrads& g = grads[li];
        g.weights.assign(layer.weights.size(), 0.0);
        g.bias.assign(layer.bias.size(), 0.0);
        const int pad = layer.ksize / 2;

        for (int o = 0; o < layer.out_ch; ++o) {
            const double* dzo = dz.data() + static_cast<size_t>(o) * plane;
            for (size_t i = 0; i < plane; ++i) g.bias[o] += dzo[i];
            for (int i = 0; i < layer.in_ch; ++i) {
                const double* src = input.data() + static_cast<size_t>(i) * plane;
                for (int ku = 0; ku < layer.ksize; ++ku) {
                    for (int kv = 0; kv < layer.ksize; ++kv) {
                        const int du = ku - pad;
                        const int dv = kv - pad;
                        const int u0 = std::max(0, -du);
                        const int u1 = std::min(h, h - du);
                        const int v0 = std::max(0, -dv);
                        const int v1 = std::min(w, w - dv);
                        double acc = 0.0;
                        for (int u = u0; u < u1; ++u) {
                            const double* drow = dzo + static_cast<size_t>(u) * w;
                            const double* srow = src + static_cast<size_t>(u + du) * w + dv;
                            for (int v = v0; v < v1; ++v) acc += drow[v] * srow[v];
                        }
                        g.weights[((static_cast<size_t>(o) * layer.in_ch + i) * layer.ksize + ku) *
                                      layer.ksize +
                                  kv] += acc;
                    }
                }
            }
        }

        if (li == 0) break;
        // Gradient w.r.t. this layer's input, then through the ReLU.
        std::vector<double> dx(static_cast<size_t>(layer.in_ch) * plane, 0.0);
        for (int o = 0; o < layer.out_ch; ++o) {
            const double* dzo = dz.data() + static_cast<size_t>(o) * plane;
            for (int i = 0; i < layer.in_ch; ++i) {
                double* dst = dx.data() + static_cast<size_t>(i) * plane;
                for (int ku = 0; ku < layer.ksize; ++ku) {
                    for (int kv = 0; kv < layer.ksize; ++kv) {
                        const double wgt = layer.weight(o, i, ku, kv);
                        if (wgt == 0.0) continue;
                        const int du = ku - pad;
                        const int dv = kv - pad;
                        const int u0 = std::max(0, -du);
                        const int u1 = std::min(h, h - du);
                        const int v0 = std::max(0, -dv);
                        const int v1 = std::min(w, w - dv);
                        for (int u = u0; u < u1; ++u) {
                            const double* drow = dzo + static_cast<size_t>(u) * w;
                            double* xrow = dst + static_cast<size_t>(u + du) * w + dv;
                            for (int v = v0; v < v1; ++v) xrow[v] += wgt * drow[v];
                        }
                    }
                }
            }
        }
        const std::vector<double>& prev_pre = cache.pre[li - 1];
        for (size_t i = 0; i < dx.size(); ++i)
            if (prev_pre[i] <= 0.0) dx[i] = 0.0;
        dz = std::move(dx);
    }
    return grads;
}

/// Adam with bias correction; state shapes mirror the parameters.
class Adam {
public:
    explicit Adam(const NetworkParams& params, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8)
        : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
        for (const ConvLayer& layer : params.layers) {
            m_.push_back({std::vector<double>(layer.weights.size(), 0.0),
                          std::vector<double>(layer.bias.size(), 0.0)});
            v_.push_back({std::vector<double>(layer.weights.size(), 0.0),
                          std::vector<double>(layer.bias.size(), 0.0)});
        }
    }

    void step(NetworkParams& params, const NetworkGrads& grads, double lr) {
        if (grads.size() != m_.size())
            throw std::invalid_argument("Adam::step: gradient shape mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t l = 0; l < grads.size(); ++l) {
            update(params.layers[l].weights, grads[l].weights, m_[l].weights, v_[l].weights, lr, bc1, bc2);
            update(params.layers[l].bias, grads[l].bias, m_[l].bias, v_[l].bias, lr, bc1, bc2);
        }
    }

private:
    void update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                std::vector<double>& v, double lr, double bc1, double bc2) {
        if (p.size() != g.size()) throw std::invalid_argument("Adam::step: gradient shape mismatch");
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + epsilon_);
        }
    }

    double beta1_, beta2_, epsilon_;
    std::vector<LayerGrads> m_, v_;
    int t_ = 0;
};

struct TrainConfig {
    int iterations = 2000;
    double learning_rate = 1e-3;
    bool cosine_schedule = true;  // lr_t = lr * (1 + cos(pi t / T)) / 2, t zero-based
    int val_interval = 200;       // a final evaluation always runs regardless
    uint64_t seed = 0;
    LossWeights weights;
    losses::SegForm seg_form = losses::SegForm::CrossEntropy;

    void check() const {
        if (iterations < 0) throw std::invalid_argument("TrainConfig: iterations must be >= 0");
        if (!std::isfinite(learning_rate) || learning_rate <= 0.0)
            throw std::invalid_argument("TrainConfig: learning rate must be positive");
        if (val_interval < 1) throw std::invalid_argument("TrainConfig: val interval must be >= 1");
        weights.check();
    }
};

struct TrainLogEntry {
    int iteration = 0;  // 1-based
    double seg = 0.0;
    double split = 0.0;
    double shape = 0.0;
    double count = 0.0;
    double total = 0.0;
    double lr = 0.0;
};

struct ValRecord {
    int iteration = 0;
    metrics::MetricReport report;
};

struct TrainResult {
    NetworkParams best;
    NetworkParams last;
    metrics::MetricReport best_report;
    int best_iteration = 0;
    std::vector<TrainLogEntry> log;
    std::vector<ValRecord> val_log;
};

/// Validation ranking: an infinite quality score (MAE = 0) beats any finite
/// one, ties fall back to mIoU.
inline bool better_than(const metrics::MetricReport& a, const metrics::MetricReport& b) {
    if (a.qcs_infinite != b.qcs_infinite) return a.qcs_infinite;
    if (a.qcs_infinite) return a.miou_percent > b.miou_percent;
    if (a.qcs != b.qcs) return a.qcs > b.qcs;
    return a.miou_percent > b.miou_percent;
}

/// Thresholded predictions scored against ground truth for a whole set.
inline metrics::MetricReport evaluate_on(const NetworkParams& params, const Dataset& set) {
    if (set.empty()) throw DatasetEmpty("evaluation");
    std::vector<losses::CountPair> pairs;
    std::vector<BinaryMask> preds, gts;
    for (const Sample& sample : set) {
        const BinaryMask pred = threshold_prediction(predict(params, sample.image));
        pairs.push_back({sample.count, metrics::count_from_mask(pred)});
        preds.push_back(pred);
        BinaryMask gt(sample.instances.height(), sample.instances.width());
        for (size_t i = 0; i < gt.size(); ++i) gt.set(i, sample.instances.at(i) != 0);
        gts.push_back(std::move(gt));
    }
    return metrics::evaluate(pairs, preds, gts);
}

namespace detail {

inline void flip_image(ImageRGB& img, bool rows, bool cols) {
    const int h = img.height();
    const int w = img.width();
    if (rows)
        for (int c = 0; c < 3; ++c)
            for (int u = 0; u < h / 2; ++u)
                for (int v = 0; v < w; ++v) std::swap(img.at(u, v, c), img.at(h - 1 - u, v, c));
    if (cols)
        for (int c = 0; c < 3; ++c)
            for (int u = 0; u < h; ++u)
                for (int v = 0; v < w / 2; ++v) std::swap(img.at(u, v, c), img.at(u, w - 1 - v, c));
}

inline void flip_points(std::vector<PixelCoord>& points, int h, int w, bool rows, bool cols) {
    for (PixelCoord& p : points) {
        if (rows) p.u = h - 1 - p.u;
        if (cols) p.v = w - 1 - p.v;
    }
}

}  // namespace detail

/**
 * @brief Runs point-supervised training and returns the best-validation model.
 *
 * One uniformly drawn training image per iteration, each axis mirrored with
 * probability 1/2 (annotations mirrored along). Throws DivergenceDetected as
 * soon as the loss or any parameter stops being finite.
 */
inline TrainResult train(const Dataset& train_set, const Dataset& val_set,
                         const TrainConfig& config) {
    config.check();
    if (train_set.empty()) throw DatasetEmpty("training");
    if (val_set.empty()) throw DatasetEmpty("validation");
    for (const Dataset* set : {&train_set, &val_set})
        for (const Sample& s : *set) {
            if (s.image.height() < kMinImageSide || s.image.width() < kMinImageSide)
                throw ShapeMismatch("train: image smaller than the 8x8 minimum");
            if (auto issue = validate(s.annotations, s.image.height(), s.image.width()))
                throw std::invalid_argument("train: " + issue->message());
        }

    TrainResult result;
    NetworkParams params = NetworkParams::make_default(mix_seed(config.seed, 0));
    Adam optimizer(params);
    Rng rng(mix_seed(config.seed, 1));
    // With zero iterations the initial parameters are the result.
    result.best = params;
    result.best_iteration = 0;
    bool have_best = false;

    for (int t = 0; t < config.iterations; ++t) {
        const double lr = config.cosine_schedule
                              ? config.learning_rate * 0.5 *
                                    (1.0 + std::cos(3.141592653589793 * t / config.iterations))
                              : config.learning_rate;

        const Sample& sample = train_set[rng.index(train_set.size())];
        const bool flip_rows = rng.bernoulli(0.5);
        const bool flip_cols = rng.bernoulli(0.5);
        ImageRGB image = sample.image;
        AnnotationSet ann = sample.annotations;
        if (flip_rows || flip_cols) {
            detail::flip_image(image, flip_rows, flip_cols);
            detail::flip_points(ann.positives, image.height(), image.width(), flip_rows, flip_cols);
            detail::flip_points(ann.negatives, image.height(), image.width(), flip_rows, flip_cols);
        }

        const ForwardCache cache = forward(params, image);
        const BinaryMask pred = threshold_prediction(cache.prob);
        const losses::LossReport report =
            losses::total_loss(cache.prob, pred, ann, sample.count, config.weights, config.seg_form);
        if (!std::isfinite(report.total)) throw DivergenceDetected(t + 1);

        const NetworkGrads grads = backward(params, cache, report.grad);
        optimizer.step(params, grads, lr);
        if (!params.finite()) throw DivergenceDetected(t + 1);

        result.log.push_back(
            {t + 1, report.seg, report.split, report.shape, report.count, report.total, lr});

        if ((t + 1) % config.val_interval == 0 || t + 1 == config.iterations) {
            const metrics::MetricReport val = evaluate_on(params, val_set);
            result.val_log.push_back({t + 1, val});
            if (!have_best || better_than(val, result.best_report)) {
                have_best = true;
                result.best = params;
                result.best_report = val;
                result.best_iteration = t + 1;
            }
        }
    }
    result.last = std::move(params);
    return result;
}

}  // namespace trainer
}  // namespace tss

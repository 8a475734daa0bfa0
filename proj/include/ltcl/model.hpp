#pragma once

#include <cmath>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "ltcl/common.hpp"
#include "ltcl/tensor.hpp"

namespace ltcl {

// ---------------------------------------------------------------------------
// Small convolutional stack: N blocks of [3x3 conv (pad 1) -> ReLU -> 2x2
// maxpool], global average pooling into a d-dimensional feature vector, and
// a linear classifier that grows one row per class. Everything is scalar-
// templated; training runs float, numeric tests instantiate double.
// ---------------------------------------------------------------------------

struct BackboneConfig {
    std::size_t in_channels = 3;
    std::size_t input_hw = 32;
    std::vector<std::size_t> channels = {16, 32, 64, 128};  // one entry per block
    bool center_input = true;  // map [0,1] pixels to [-1,1] on entry

    [[nodiscard]] std::size_t feature_dim() const { return channels.back(); }

    [[nodiscard]] std::size_t map_hw() const {
        std::size_t hw = input_hw;
        for (std::size_t i = 0; i < channels.size(); ++i) hw /= 2;
        return hw;
    }

    void validate() const {
        if (channels.empty()) throw parameter_error("backbone needs at least one block");
        std::size_t hw = input_hw;
        for (std::size_t i = 0; i < channels.size(); ++i) {
            if (hw % 2 != 0 || hw < 2) {
                throw parameter_error("input_hw " + std::to_string(input_hw) + " not divisible by 2^" +
                                      std::to_string(channels.size()));
            }
            hw /= 2;
        }
    }
};

template <typename T>
struct ConvBlock {
    std::size_t in_ch = 0, out_ch = 0;
    std::vector<T> weight;  // [out][in][3][3]
    std::vector<T> bias;    // [out]
};

template <typename T>
struct ConvBlockGrads {
    std::vector<T> weight;
    std::vector<T> bias;
};

namespace detail {

// 3x3 convolution, stride 1, zero padding 1. Inner loops run over contiguous
// rows so the compiler can vectorize them.
template <typename T>
void conv3x3_forward(const T* in, std::size_t in_ch, const T* w, const T* b, T* out,
                     std::size_t out_ch, std::size_t hw) {
    const std::size_t plane = hw * hw;
    for (std::size_t o = 0; o < out_ch; ++o) {
        T* out_plane = out + o * plane;
        const T bias_v = b[o];
        for (std::size_t i = 0; i < plane; ++i) out_plane[i] = bias_v;
        for (std::size_t c = 0; c < in_ch; ++c) {
            const T* in_plane = in + c * plane;
            const T* wk = w + (o * in_ch + c) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const T wv = wk[ky * 3 + kx];
                    if (wv == T(0)) continue;
                    const std::size_t y_lo = (ky == 0) ? 1 : 0;
                    const std::size_t y_hi = (ky == 2) ? hw - 1 : hw;
                    const std::size_t x_lo = (kx == 0) ? 1 : 0;
                    const std::size_t x_hi = (kx == 2) ? hw - 1 : hw;
                    for (std::size_t y = y_lo; y < y_hi; ++y) {
                        const T* src = in_plane + (y + static_cast<std::size_t>(ky) - 1) * hw +
                                       (x_lo + static_cast<std::size_t>(kx) - 1);
                        T* dst = out_plane + y * hw + x_lo;
                        const std::size_t n = x_hi - x_lo;
                        for (std::size_t x = 0; x < n; ++x) dst[x] += wv * src[x];
                    }
                }
            }
        }
    }
}

// Gradients of conv3x3 w.r.t. weights, bias and input. d_out is the gradient
// at the conv output; d_in may be null for the first layer.
template <typename T>
void conv3x3_backward(const T* in, std::size_t in_ch, const T* w, const T* d_out,
                      std::size_t out_ch, std::size_t hw, T* d_w, T* d_b, T* d_in) {
    const std::size_t plane = hw * hw;
    for (std::size_t o = 0; o < out_ch; ++o) {
        const T* dout_plane = d_out + o * plane;
        T acc = T(0);
        for (std::size_t i = 0; i < plane; ++i) acc += dout_plane[i];
        d_b[o] += acc;
        for (std::size_t c = 0; c < in_ch; ++c) {
            const T* in_plane = in + c * plane;
            T* dwk = d_w + (o * in_ch + c) * 9;
            const T* wk = w + (o * in_ch + c) * 9;
            T* din_plane = d_in ? d_in + c * plane : nullptr;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const std::size_t y_lo = (ky == 0) ? 1 : 0;
                    const std::size_t y_hi = (ky == 2) ? hw - 1 : hw;
                    const std::size_t x_lo = (kx == 0) ? 1 : 0;
                    const std::size_t x_hi = (kx == 2) ? hw - 1 : hw;
                    T wgrad = T(0);
                    const T wv = wk[ky * 3 + kx];
                    for (std::size_t y = y_lo; y < y_hi; ++y) {
                        const T* src = in_plane + (y + static_cast<std::size_t>(ky) - 1) * hw +
                                       (x_lo + static_cast<std::size_t>(kx) - 1);
                        const T* dst = dout_plane + y * hw + x_lo;
                        const std::size_t n = x_hi - x_lo;
                        for (std::size_t x = 0; x < n; ++x) wgrad += dst[x] * src[x];
                        if (din_plane) {
                            T* dsrc = din_plane + (y + static_cast<std::size_t>(ky) - 1) * hw +
                                      (x_lo + static_cast<std::size_t>(kx) - 1);
                            for (std::size_t x = 0; x < n; ++x) dsrc[x] += wv * dst[x];
                        }
                    }
                    dwk[ky * 3 + kx] += wgrad;
                }
            }
        }
    }
}

}  // namespace detail

template <typename T>
struct ExtractResult {
    Tensor<T> features;  // {B, d}
    Tensor<T> maps;      // {B, d, h', w'}
};

// Per-block activations retained for the backward pass.
template <typename T>
struct ForwardCache {
    std::size_t batch = 0;
    Tensor<T> input;                        // {B, C, H, W}
    std::vector<Tensor<T>> act;             // post-ReLU, pre-pool, per block
    std::vector<std::vector<std::uint32_t>> argmax;  // pool winners, per block
    std::vector<Tensor<T>> pooled;          // post-pool, per block
};

template <typename T>
struct BackboneGrads {
    std::vector<ConvBlockGrads<T>> blocks;
};

template <typename T>
class Backbone {
public:
    Backbone() = default;

    Backbone(BackboneConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
        cfg_.validate();
        std::size_t in_ch = cfg_.in_channels;
        for (std::size_t out_ch : cfg_.channels) {
            ConvBlock<T> blk;
            blk.in_ch = in_ch;
            blk.out_ch = out_ch;
            blk.weight.resize(out_ch * in_ch * 9);
            blk.bias.assign(out_ch, T(0));
            const double bound = std::sqrt(6.0 / (static_cast<double>(in_ch) * 9.0));
            for (auto& v : blk.weight) v = static_cast<T>(rng.uniform(-bound, bound));
            blocks_.push_back(std::move(blk));
            in_ch = out_ch;
        }
    }

    [[nodiscard]] const BackboneConfig& config() const { return cfg_; }
    [[nodiscard]] std::size_t feature_dim() const { return cfg_.feature_dim(); }
    [[nodiscard]] std::vector<ConvBlock<T>>& blocks() { return blocks_; }
    [[nodiscard]] const std::vector<ConvBlock<T>>& blocks() const { return blocks_; }

    /// Runs the stack; when cache is non-null the activations needed by
    /// backward() are retained. features are the spatial means of maps.
    ExtractResult<T> forward(const Tensor<T>& batch, ForwardCache<T>* cache) const {
        if (batch.rank() != 4) throw shape_error("extract expects a {B,C,H,W} batch");
        const std::size_t B = batch.dim(0);
        if (B == 0) throw shape_error("extract: empty batch");
        if (batch.dim(1) != cfg_.in_channels || batch.dim(2) != cfg_.input_hw ||
            batch.dim(3) != cfg_.input_hw) {
            throw shape_error("extract: batch is {" + std::to_string(batch.dim(1)) + "," +
                              std::to_string(batch.dim(2)) + "," + std::to_string(batch.dim(3)) +
                              "}, model wants {" + std::to_string(cfg_.in_channels) + "," +
                              std::to_string(cfg_.input_hw) + "," + std::to_string(cfg_.input_hw) + "}");
        }

        Tensor<T> cur = batch;
        if (cfg_.center_input) {
            for (std::size_t i = 0, n = cur.numel(); i < n; ++i) cur[i] = T(2) * cur[i] - T(1);
        }

        if (cache) {
            cache->batch = B;
            cache->input = cur;
            cache->act.assign(blocks_.size(), Tensor<T>{});
            cache->argmax.assign(blocks_.size(), {});
            cache->pooled.assign(blocks_.size(), Tensor<T>{});
        }

        std::size_t hw = cfg_.input_hw;
        for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
            const auto& blk = blocks_[bi];
            Tensor<T> act({B, blk.out_ch, hw, hw});
            for (std::size_t b = 0; b < B; ++b) {
                detail::conv3x3_forward(cur.data() + b * blk.in_ch * hw * hw, blk.in_ch,
                                        blk.weight.data(), blk.bias.data(),
                                        act.data() + b * blk.out_ch * hw * hw, blk.out_ch, hw);
            }
            T* a = act.data();
            for (std::size_t i = 0, n = act.numel(); i < n; ++i) {
                if (a[i] < T(0)) a[i] = T(0);
            }

            const std::size_t phw = hw / 2;
            Tensor<T> pooled({B, blk.out_ch, phw, phw});
            std::vector<std::uint32_t> argmax(cache ? pooled.numel() : 0);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t c = 0; c < blk.out_ch; ++c) {
                    const T* src = act.data() + (b * blk.out_ch + c) * hw * hw;
                    T* dst = pooled.data() + (b * blk.out_ch + c) * phw * phw;
                    for (std::size_t y = 0; y < phw; ++y) {
                        for (std::size_t x = 0; x < phw; ++x) {
                            const std::size_t base = (2 * y) * hw + 2 * x;
                            std::size_t best = base;
                            T bv = src[base];
                            if (src[base + 1] > bv) { bv = src[base + 1]; best = base + 1; }
                            if (src[base + hw] > bv) { bv = src[base + hw]; best = base + hw; }
                            if (src[base + hw + 1] > bv) { bv = src[base + hw + 1]; best = base + hw + 1; }
                            dst[y * phw + x] = bv;
                            if (cache) {
                                argmax[(b * blk.out_ch + c) * phw * phw + y * phw + x] =
                                    static_cast<std::uint32_t>(best);
                            }
                        }
                    }
                }
            }
            if (cache) {
                cache->act[bi] = std::move(act);
                cache->argmax[bi] = std::move(argmax);
                cache->pooled[bi] = pooled;
            }
            cur = std::move(pooled);
            hw = phw;
        }

        ExtractResult<T> out;
        const std::size_t d = feature_dim();
        const std::size_t plane = hw * hw;
        out.features = Tensor<T>({B, d});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t c = 0; c < d; ++c) {
                const T* src = cur.data() + (b * d + c) * plane;
                T acc = T(0);
                for (std::size_t i = 0; i < plane; ++i) acc += src[i];
                out.features.at2(b, c) = acc / static_cast<T>(plane);
            }
        }
        out.maps = std::move(cur);
        return out;
    }

    /// Backprop from d(features) through GAP, pools, ReLUs and convs.
    BackboneGrads<T> backward(const ForwardCache<T>& cache, const Tensor<T>& d_features) const {
        const std::size_t B = cache.batch;
        const std::size_t d = feature_dim();
        if (d_features.rank() != 2 || d_features.dim(0) != B || d_features.dim(1) != d) {
            throw shape_error("backward: d_features shape mismatch");
        }

        BackboneGrads<T> grads;
        grads.blocks.resize(blocks_.size());
        for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
            grads.blocks[bi].weight.assign(blocks_[bi].weight.size(), T(0));
            grads.blocks[bi].bias.assign(blocks_[bi].bias.size(), T(0));
        }

        // GAP backward into the last pooled maps.
        const std::size_t last = blocks_.size() - 1;
        const std::size_t map_hw = cfg_.map_hw();
        const std::size_t plane = map_hw * map_hw;
        Tensor<T> d_cur({B, d, map_hw, map_hw});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t c = 0; c < d; ++c) {
                const T g = d_features.at2(b, c) / static_cast<T>(plane);
                T* dst = d_cur.data() + (b * d + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) dst[i] = g;
            }
        }

        std::size_t hw = map_hw;
        for (std::size_t bi = last + 1; bi-- > 0;) {
            const auto& blk = blocks_[bi];
            const std::size_t act_hw = hw * 2;

            // pool backward: route to argmax cell
            Tensor<T> d_act({B, blk.out_ch, act_hw, act_hw});
            const auto& argmax = cache.argmax[bi];
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t c = 0; c < blk.out_ch; ++c) {
                    const std::size_t po = (b * blk.out_ch + c) * hw * hw;
                    T* dst = d_act.data() + (b * blk.out_ch + c) * act_hw * act_hw;
                    const T* src = d_cur.data() + po;
                    for (std::size_t i = 0; i < hw * hw; ++i) dst[argmax[po + i]] += src[i];
                }
            }

            // ReLU backward
            {
                const T* a = cache.act[bi].data();
                T* g = d_act.data();
                for (std::size_t i = 0, n = d_act.numel(); i < n; ++i) {
                    if (a[i] <= T(0)) g[i] = T(0);
                }
            }

            // conv backward
            const Tensor<T>& input = (bi == 0) ? cache.input : cache.pooled[bi - 1];
            Tensor<T> d_in;
            if (bi > 0) d_in = Tensor<T>({B, blk.in_ch, act_hw, act_hw});
            for (std::size_t b = 0; b < B; ++b) {
                detail::conv3x3_backward(
                    input.data() + b * blk.in_ch * act_hw * act_hw, blk.in_ch, blk.weight.data(),
                    d_act.data() + b * blk.out_ch * act_hw * act_hw, blk.out_ch, act_hw,
                    grads.blocks[bi].weight.data(), grads.blocks[bi].bias.data(),
                    bi > 0 ? d_in.data() + b * blk.in_ch * act_hw * act_hw : nullptr);
            }
            d_cur = std::move(d_in);
            hw = act_hw;
        }
        return grads;
    }

private:
    BackboneConfig cfg_;
    std::vector<ConvBlock<T>> blocks_;
};

// ---------------------------------------------------------------------------
// Predictor head g: linear d->d followed by ReLU, attached only while a task
// with a teacher is being trained and removed afterwards. Initialized near
// the identity so distillation starts from a faithful map.
// ---------------------------------------------------------------------------
template <typename T>
struct Predictor {
    std::size_t dim = 0;
    std::vector<T> weight;  // [d][d]
    std::vector<T> bias;    // [d]

    static Predictor near_identity(std::size_t d, Rng& rng, double noise = 0.01) {
        Predictor p;
        p.dim = d;
        p.weight.assign(d * d, T(0));
        p.bias.assign(d, T(0));
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                const double eye = (i == j) ? 1.0 : 0.0;
                p.weight[i * d + j] = static_cast<T>(eye + noise * rng.normal());
            }
        }
        return p;
    }

    /// u = relu(W f + b) row-wise; returns pre-activations when wanted.
    Tensor<T> forward(const Tensor<T>& features, Tensor<T>* preact = nullptr) const {
        if (features.rank() != 2 || features.dim(1) != dim) {
            throw shape_error("predictor: feature dim mismatch");
        }
        const std::size_t B = features.dim(0);
        Tensor<T> out({B, dim});
        if (preact) *preact = Tensor<T>({B, dim});
        for (std::size_t b = 0; b < B; ++b) {
            const T* f = features.data() + b * dim;
            for (std::size_t i = 0; i < dim; ++i) {
                const T* wrow = weight.data() + i * dim;
                T acc = bias[i];
                for (std::size_t j = 0; j < dim; ++j) acc += wrow[j] * f[j];
                if (preact) preact->at2(b, i) = acc;
                out.at2(b, i) = acc > T(0) ? acc : T(0);
            }
        }
        return out;
    }
};

template <typename T>
struct PredictorGrads {
    std::vector<T> weight;
    std::vector<T> bias;
};

// ---------------------------------------------------------------------------
// Frozen copy of extractor + classifier taken at the end of the previous
// task. Const-only interface; no gradient path exists into it.
// ---------------------------------------------------------------------------
template <typename T>
class TeacherSnapshot {
public:
    TeacherSnapshot() = default;
    TeacherSnapshot(Backbone<T> backbone, std::vector<T> cls_weight, std::vector<T> cls_bias,
                    std::size_t num_seen)
        : backbone_(std::move(backbone)),
          cls_weight_(std::move(cls_weight)),
          cls_bias_(std::move(cls_bias)),
          num_seen_(num_seen) {}

    [[nodiscard]] std::size_t num_seen_classes() const { return num_seen_; }
    [[nodiscard]] std::size_t feature_dim() const { return backbone_.feature_dim(); }
    [[nodiscard]] const Backbone<T>& backbone() const { return backbone_; }

    ExtractResult<T> extract(const Tensor<T>& batch) const { return backbone_.forward(batch, nullptr); }

    /// Old-class logits, dimension C_{1:i-1}.
    Tensor<T> classify(const Tensor<T>& features) const {
        const std::size_t d = feature_dim();
        if (features.rank() != 2 || features.dim(1) != d) throw shape_error("teacher classify: dim mismatch");
        const std::size_t B = features.dim(0);
        Tensor<T> logits({B, num_seen_});
        for (std::size_t b = 0; b < B; ++b) {
            const T* f = features.data() + b * d;
            for (std::size_t c = 0; c < num_seen_; ++c) {
                const T* w = cls_weight_.data() + c * d;
                T acc = cls_bias_[c];
                for (std::size_t j = 0; j < d; ++j) acc += w[j] * f[j];
                logits.at2(b, c) = acc;
            }
        }
        return logits;
    }

private:
    Backbone<T> backbone_;
    std::vector<T> cls_weight_;
    std::vector<T> cls_bias_;
    std::size_t num_seen_ = 0;
};

// ---------------------------------------------------------------------------
// The trainable bundle: extractor + expandable classifier + optional
// predictor head.
// ---------------------------------------------------------------------------
template <typename T>
class Model {
public:
    Model() = default;

    Model(const BackboneConfig& cfg, Rng& rng) : backbone_(cfg, rng) {}

    [[nodiscard]] std::size_t feature_dim() const { return backbone_.feature_dim(); }
    [[nodiscard]] std::size_t num_seen_classes() const { return num_seen_; }
    [[nodiscard]] bool has_predictor() const { return predictor_.has_value(); }

    [[nodiscard]] Backbone<T>& backbone() { return backbone_; }
    [[nodiscard]] const Backbone<T>& backbone() const { return backbone_; }
    [[nodiscard]] std::vector<T>& classifier_weight() { return cls_weight_; }
    [[nodiscard]] const std::vector<T>& classifier_weight() const { return cls_weight_; }
    [[nodiscard]] std::vector<T>& classifier_bias() { return cls_bias_; }
    [[nodiscard]] const std::vector<T>& classifier_bias() const { return cls_bias_; }
    [[nodiscard]] Predictor<T>& predictor() {
        if (!predictor_) throw state_error("no predictor attached");
        return *predictor_;
    }
    [[nodiscard]] const Predictor<T>& predictor() const {
        if (!predictor_) throw state_error("no predictor attached");
        return *predictor_;
    }

    /// Classifier row for class c (the CAM weight vector v_y).
    [[nodiscard]] std::vector<T> class_weight_row(std::size_t c) const {
        if (c >= num_seen_) throw parameter_error("class_weight_row: class " + std::to_string(c) + " unseen");
        const std::size_t d = feature_dim();
        return std::vector<T>(cls_weight_.begin() + static_cast<std::ptrdiff_t>(c * d),
                              cls_weight_.begin() + static_cast<std::ptrdiff_t>((c + 1) * d));
    }

    ExtractResult<T> extract(const Tensor<T>& batch, ForwardCache<T>* cache = nullptr) const {
        return backbone_.forward(batch, cache);
    }

    /// L = features W^T + bias. The inference path; the predictor never
    /// participates here.
    Tensor<T> classify(const Tensor<T>& features) const {
        const std::size_t d = feature_dim();
        if (features.rank() != 2 || features.dim(1) != d) {
            throw shape_error("classify: feature dim " + std::to_string(features.dim(1)) + " != " +
                              std::to_string(d));
        }
        const std::size_t B = features.dim(0);
        Tensor<T> logits({B, num_seen_});
        for (std::size_t b = 0; b < B; ++b) {
            const T* f = features.data() + b * d;
            for (std::size_t c = 0; c < num_seen_; ++c) {
                const T* w = cls_weight_.data() + c * d;
                T acc = cls_bias_[c];
                for (std::size_t j = 0; j < d; ++j) acc += w[j] * f[j];
                logits.at2(b, c) = acc;
            }
        }
        return logits;
    }

    /// Adds num_new rows. Old rows are preserved bit-exactly; new rows use a
    /// zero-mean uniform fan-in init, bias zero.
    void expand_classifier(std::size_t num_new, Rng& rng) {
        if (num_new < 1) throw parameter_error("expand_classifier: num_new must be >= 1");
        const std::size_t d = feature_dim();
        const double bound = 1.0 / std::sqrt(static_cast<double>(d));
        cls_weight_.resize((num_seen_ + num_new) * d);
        cls_bias_.resize(num_seen_ + num_new, T(0));
        for (std::size_t c = num_seen_; c < num_seen_ + num_new; ++c) {
            for (std::size_t j = 0; j < d; ++j) {
                cls_weight_[c * d + j] = static_cast<T>(rng.uniform(-bound, bound));
            }
        }
        num_seen_ += num_new;
    }

    void attach_predictor(Rng& rng) {
        if (predictor_) throw state_error("predictor already attached");
        predictor_ = Predictor<T>::near_identity(feature_dim(), rng);
    }

    void detach_predictor() {
        if (!predictor_) throw state_error("detach_predictor: none attached");
        predictor_.reset();
    }

private:
    Backbone<T> backbone_;
    std::vector<T> cls_weight_;
    std::vector<T> cls_bias_;
    std::size_t num_seen_ = 0;
    std::optional<Predictor<T>> predictor_;
};

/// Deep, detached copy of extractor + classifier; later training of the
/// bundle cannot alter snapshot outputs.
template <typename T>
TeacherSnapshot<T> snapshot_teacher(const Model<T>& model) {
    if (model.num_seen_classes() == 0) throw state_error("snapshot_teacher: untrained model");
    return TeacherSnapshot<T>(model.backbone(), model.classifier_weight(), model.classifier_bias(),
                              model.num_seen_classes());
}

/// Classifier gradients plus the feature-side gradient for dlogits.
template <typename T>
struct ClassifierGrads {
    std::vector<T> weight;
    std::vector<T> bias;
};

template <typename T>
void classify_backward(const Model<T>& model, const Tensor<T>& features, const Tensor<T>& d_logits,
                       ClassifierGrads<T>& grads, Tensor<T>& d_features) {
    const std::size_t d = model.feature_dim();
    const std::size_t C = model.num_seen_classes();
    const std::size_t B = features.dim(0);
    if (d_logits.dim(0) != B || d_logits.dim(1) != C) throw shape_error("classify_backward: shape mismatch");
    if (grads.weight.size() != C * d) grads.weight.assign(C * d, T(0));
    if (grads.bias.size() != C) grads.bias.assign(C, T(0));
    if (d_features.shape() != features.shape()) d_features = Tensor<T>::zeros_like(features);
    const auto& W = model.classifier_weight();
    for (std::size_t b = 0; b < B; ++b) {
        const T* f = features.data() + b * d;
        T* df = d_features.data() + b * d;
        for (std::size_t c = 0; c < C; ++c) {
            const T g = d_logits.at2(b, c);
            if (g == T(0)) continue;
            grads.bias[c] += g;
            T* wg = grads.weight.data() + c * d;
            const T* w = W.data() + c * d;
            for (std::size_t j = 0; j < d; ++j) {
                wg[j] += g * f[j];
                df[j] += g * w[j];
            }
        }
    }
}

}  // namespace ltcl

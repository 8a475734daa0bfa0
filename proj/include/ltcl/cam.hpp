#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ltcl/balanced.hpp"
#include "ltcl/common.hpp"
#include "ltcl/distill.hpp"
#include "ltcl/model.hpp"
#include "ltcl/synthetic.hpp"
#include "ltcl/tensor.hpp"

namespace ltcl {

// ---------------------------------------------------------------------------
// Class activation map at image resolution, values in [0,1]. After
// normalization the max is exactly 1 unless the rectified raw map was
// constant, in which case the whole map is 0.
// ---------------------------------------------------------------------------
template <typename T>
struct ActivationMap {
    Tensor<T> values;  // {h, w}
    int source_class = -1;

    [[nodiscard]] T max() const {
        T m = T(0);
        for (std::size_t i = 0; i < values.numel(); ++i) m = std::max(m, values[i]);
        return m;
    }
};

namespace detail {

// Bilinear resize, corner-aligned: source and destination corners coincide,
// interior points interpolate. Convex combinations keep values in range.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& src, std::size_t out_h, std::size_t out_w) {
    const std::size_t in_h = src.dim(0), in_w = src.dim(1);
    if (in_h == out_h && in_w == out_w) return src;
    Tensor<T> dst({out_h, out_w});
    const double sy = (out_h > 1 && in_h > 1) ? static_cast<double>(in_h - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sx = (out_w > 1 && in_w > 1) ? static_cast<double>(in_w - 1) / static_cast<double>(out_w - 1) : 0.0;
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = sy * static_cast<double>(y);
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = sx * static_cast<double>(x);
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - static_cast<double>(x0);
            const double v = (1.0 - wy) * ((1.0 - wx) * static_cast<double>(src.at2(y0, x0)) +
                                           wx * static_cast<double>(src.at2(y0, x1))) +
                             wy * ((1.0 - wx) * static_cast<double>(src.at2(y1, x0)) +
                                   wx * static_cast<double>(src.at2(y1, x1)));
            dst.at2(y, x) = static_cast<T>(v);
        }
    }
    return dst;
}

}  // namespace detail

/// CAM for one image: weight the final feature maps by the class's
/// classifier row, rectify at zero, resize to image resolution and min-max
/// normalize. A constant rectified map normalizes to all zeros.
template <typename T>
ActivationMap<T> compute_cam(const Tensor<T>& feature_maps, const std::vector<T>& class_weight_row,
                             std::size_t out_h, std::size_t out_w, int source_class = -1) {
    if (feature_maps.rank() != 3) throw shape_error("compute_cam expects {d,h',w'} maps");
    const std::size_t d = feature_maps.dim(0);
    const std::size_t mh = feature_maps.dim(1), mw = feature_maps.dim(2);
    if (class_weight_row.size() != d) {
        throw shape_error("compute_cam: weight row has " + std::to_string(class_weight_row.size()) +
                          " dims, maps have " + std::to_string(d));
    }

    Tensor<T> raw({mh, mw});
    for (std::size_t k = 0; k < d; ++k) {
        const T w = class_weight_row[k];
        const T* plane = feature_maps.data() + k * mh * mw;
        T* out = raw.data();
        for (std::size_t i = 0; i < mh * mw; ++i) out[i] += w * plane[i];
    }
    for (std::size_t i = 0; i < raw.numel(); ++i) {
        if (raw[i] < T(0)) raw[i] = T(0);
    }

    Tensor<T> resized = detail::resize_bilinear(raw, out_h, out_w);

    T lo = resized[0], hi = resized[0];
    for (std::size_t i = 1; i < resized.numel(); ++i) {
        lo = std::min(lo, resized[i]);
        hi = std::max(hi, resized[i]);
    }
    ActivationMap<T> cam;
    cam.source_class = source_class;
    cam.values = std::move(resized);
    if (hi > lo) {
        const T span = hi - lo;
        for (std::size_t i = 0; i < cam.values.numel(); ++i) {
            cam.values[i] = (cam.values[i] - lo) / span;
        }
    } else {
        cam.values.fill(T(0));
    }
    return cam;
}

template <typename T>
struct ThresholdedMap {
    Tensor<T> values;            // cam where cam >= sigma, else 0
    std::size_t retained = 0;    // number of surviving pixels
};

/// M^T(p) = cam(p) where cam(p) >= sigma, else 0.
template <typename T>
ThresholdedMap<T> threshold_cam(const ActivationMap<T>& cam, double sigma) {
    if (!(sigma > 0.0 && sigma < 1.0)) throw parameter_error("threshold_cam: sigma must be in (0,1)");
    ThresholdedMap<T> out;
    out.values = Tensor<T>::zeros_like(cam.values);
    const T s = static_cast<T>(sigma);
    for (std::size_t i = 0; i < cam.values.numel(); ++i) {
        if (cam.values[i] >= s) {
            out.values[i] = cam.values[i];
            ++out.retained;
        }
    }
    return out;
}

using BinaryMask = Tensor<std::uint8_t>;

template <typename T>
BinaryMask mask_from_thresholded(const ThresholdedMap<T>& mt) {
    BinaryMask mask = BinaryMask({mt.values.dim(0), mt.values.dim(1)});
    for (std::size_t i = 0; i < mt.values.numel(); ++i) mask[i] = mt.values[i] > T(0) ? 1 : 0;
    return mask;
}

inline std::size_t mask_area(const BinaryMask& mask) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.numel(); ++i) n += mask[i];
    return n;
}

/// CutMix: x~ = (1-S) .* x_h + S .* x_t, per channel. Every output pixel is
/// copied verbatim from one of the parents.
template <typename T>
Image<T> cutmix_synthesize(const Image<T>& tail_image, const Image<T>& head_image,
                           const BinaryMask& mask) {
    require_same_shape(tail_image, head_image, "cutmix_synthesize");
    if (tail_image.rank() != 3) throw shape_error("cutmix_synthesize expects {C,H,W} images");
    if (mask.dim(0) != tail_image.dim(1) || mask.dim(1) != tail_image.dim(2)) {
        throw shape_error("cutmix_synthesize: mask resolution mismatch");
    }
    Image<T> out = head_image;
    const std::size_t C = tail_image.dim(0);
    const std::size_t plane = tail_image.dim(1) * tail_image.dim(2);
    for (std::size_t c = 0; c < C; ++c) {
        const T* src = tail_image.data() + c * plane;
        T* dst = out.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            if (mask[i]) dst[i] = src[i];
        }
    }
    return out;
}

/// Soft label by pasted-area fraction: A_r/A on the tail class, the rest on
/// the head class (summed when they coincide).
inline SoftLabel mix_labels(int tail_class, int head_class, std::size_t replaced_area,
                            std::size_t total_area, std::size_t num_seen) {
    if (total_area == 0) throw parameter_error("mix_labels: zero total area");
    if (replaced_area > total_area) throw parameter_error("mix_labels: A_r > A");
    if (tail_class < 0 || static_cast<std::size_t>(tail_class) >= num_seen ||
        head_class < 0 || static_cast<std::size_t>(head_class) >= num_seen) {
        throw parameter_error("mix_labels: class out of range");
    }
    const double wt = static_cast<double>(replaced_area) / static_cast<double>(total_area);
    SoftLabel lbl;
    if (tail_class == head_class) {
        lbl.entries = {{tail_class, 1.0}};
    } else {
        if (1.0 - wt > 0.0) lbl.entries.push_back({head_class, 1.0 - wt});
        if (wt > 0.0) lbl.entries.push_back({tail_class, wt});
        if (lbl.entries.empty()) lbl.entries.push_back({head_class, 1.0});
    }
    return lbl;
}

/// Argmax cosine similarity against the pool; ties resolve to the lowest
/// index. Invariant to positive rescaling of pool features.
template <typename T>
std::size_t select_candidate_by_features(const std::vector<T>& target_feature,
                                         const Tensor<T>& pool_features) {
    if (pool_features.rank() != 2 || pool_features.dim(0) == 0) {
        throw state_error("select_candidate: empty pool");
    }
    const std::size_t d = target_feature.size();
    if (pool_features.dim(1) != d) throw shape_error("select_candidate: feature dim mismatch");

    double tn = 0.0;
    for (T v : target_feature) tn += static_cast<double>(v) * static_cast<double>(v);
    tn = std::sqrt(tn) + kCosineEps;

    std::size_t best = 0;
    double best_cos = -2.0;
    for (std::size_t i = 0; i < pool_features.dim(0); ++i) {
        const T* row = pool_features.data() + i * d;
        double dot = 0.0, nn = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dot += static_cast<double>(row[j]) * static_cast<double>(target_feature[j]);
            nn += static_cast<double>(row[j]) * static_cast<double>(row[j]);
        }
        const double cos_v = dot / (tn * (std::sqrt(nn) + kCosineEps));
        if (cos_v > best_cos) {
            best_cos = cos_v;
            best = i;
        }
    }
    return best;
}

/// Convenience wrapper running the extractor over the pool.
template <typename T>
std::size_t select_candidate(const Image<T>& tail_image, const std::vector<Image<T>>& pool,
                             const Model<T>& model) {
    if (pool.empty()) throw state_error("select_candidate: empty pool");
    const std::size_t hw = tail_image.dim(1);
    Tensor<T> batch({pool.size() + 1, tail_image.dim(0), hw, hw});
    auto copy_into = [&](const Image<T>& img, std::size_t slot) {
        std::copy(img.data(), img.data() + img.numel(), batch.data() + slot * img.numel());
    };
    copy_into(tail_image, 0);
    for (std::size_t i = 0; i < pool.size(); ++i) copy_into(pool[i], i + 1);
    const auto res = model.extract(batch);
    const std::size_t d = model.feature_dim();
    std::vector<T> target(res.features.data(), res.features.data() + d);
    Tensor<T> pool_features({pool.size(), d});
    std::copy(res.features.data() + d, res.features.data() + (pool.size() + 1) * d,
              pool_features.data());
    return select_candidate_by_features(target, pool_features);
}

// ---------------------------------------------------------------------------
// Synthetic sample produced by CAM-CutMix. Never persisted to the buffer.
// ---------------------------------------------------------------------------
template <typename T>
struct SyntheticSample {
    Image<T> image;
    SoftLabel soft_label;
    int tail_class = -1;
    int head_class = -1;
    double sigma = 0.0;
};

template <typename T>
struct AugmentResult {
    std::vector<SyntheticSample<T>> samples;
    bool warning_empty_pool = false;
};

/// Builds `needed` synthetic samples for one tail class: round-robin over the
/// stored exemplars, pick the most visually similar head image, draw a fresh
/// sigma per sample, CAM -> threshold -> CutMix -> area-mixed label.
///
/// Empty masks retry sigma up to 3 draws, then fall back to 0.5*max(cam); an
/// all-zero CAM degenerates to pasting the whole tail image.
template <typename T>
AugmentResult<T> augment_tail_class(int class_id, const std::vector<Image<T>>& stored,
                                    std::size_t needed, const std::vector<Image<T>>& head_pool,
                                    const std::vector<int>& head_labels, const Model<T>& model,
                                    std::size_t num_seen, Rng& rng) {
    if (stored.empty()) throw parameter_error("augment_tail_class: no stored exemplars");
    if (needed == 0) throw parameter_error("augment_tail_class: nothing needed");
    AugmentResult<T> out;
    if (head_pool.empty()) {
        out.warning_empty_pool = true;
        return out;
    }
    if (head_labels.size() != head_pool.size()) {
        throw parameter_error("augment_tail_class: head pool labels mismatch");
    }

    const std::size_t hw = stored[0].dim(1);
    const std::vector<T> v_y = model.class_weight_row(static_cast<std::size_t>(class_id));

    // One extractor pass over pool + stored exemplars.
    Tensor<T> batch({head_pool.size() + stored.size(), stored[0].dim(0), hw, hw});
    auto copy_into = [&](const Image<T>& img, std::size_t slot) {
        std::copy(img.data(), img.data() + img.numel(), batch.data() + slot * img.numel());
    };
    for (std::size_t i = 0; i < head_pool.size(); ++i) copy_into(head_pool[i], i);
    for (std::size_t i = 0; i < stored.size(); ++i) copy_into(stored[i], head_pool.size() + i);
    const auto res = model.extract(batch);

    const std::size_t d = model.feature_dim();
    Tensor<T> pool_features({head_pool.size(), d});
    std::copy(res.features.data(), res.features.data() + head_pool.size() * d, pool_features.data());
    const std::size_t map_numel = res.maps.dim(1) * res.maps.dim(2) * res.maps.dim(3);

    for (std::size_t s = 0; s < needed; ++s) {
        const std::size_t t_idx = s % stored.size();
        const Image<T>& x_t = stored[t_idx];

        std::vector<T> t_feat(res.features.data() + (head_pool.size() + t_idx) * d,
                              res.features.data() + (head_pool.size() + t_idx + 1) * d);
        const std::size_t h_idx = select_candidate_by_features(t_feat, pool_features);
        const Image<T>& x_h = head_pool[h_idx];

        Tensor<T> maps({res.maps.dim(1), res.maps.dim(2), res.maps.dim(3)});
        std::copy(res.maps.data() + (head_pool.size() + t_idx) * map_numel,
                  res.maps.data() + (head_pool.size() + t_idx + 1) * map_numel, maps.data());
        const ActivationMap<T> cam = compute_cam(maps, v_y, hw, hw, class_id);

        double sigma = 0.0;
        BinaryMask mask;
        bool have_mask = false;
        for (int attempt = 0; attempt < 3 && !have_mask; ++attempt) {
            double draw = rng.uniform();
            if (draw <= 0.0) draw = 0.5;
            const auto mt = threshold_cam(cam, draw);
            if (mt.retained > 0) {
                sigma = draw;
                mask = mask_from_thresholded(mt);
                have_mask = true;
            }
        }
        if (!have_mask) {
            const double cam_max = static_cast<double>(cam.max());
            if (cam_max > 0.0) {
                sigma = 0.5 * cam_max;
                mask = mask_from_thresholded(threshold_cam(cam, sigma));
            } else {
                // degenerate CAM: paste the whole tail image
                sigma = 0.0;
                mask = BinaryMask({hw, hw});
                mask.fill(1);
            }
        }

        SyntheticSample<T> sample;
        sample.sigma = sigma;
        sample.tail_class = class_id;
        sample.head_class = head_labels[h_idx];
        sample.image = cutmix_synthesize(x_t, x_h, mask);
        sample.soft_label =
            mix_labels(class_id, head_labels[h_idx], mask_area(mask), hw * hw, num_seen);
        out.samples.push_back(std::move(sample));
    }
    return out;
}

/// Debug dump for visual audit: image + mask as PPMs, parameters as a JSON
/// sidecar.
template <typename T>
void dump_synthetic(const SyntheticSample<T>& sample, const std::string& dir, const std::string& stem) {
    Image<float> img({sample.image.dim(0), sample.image.dim(1), sample.image.dim(2)});
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(sample.image[i]);
    save_ppm(img, dir + "/" + stem + ".ppm");
    std::ofstream meta(dir + "/" + stem + ".json");
    if (!meta) throw io_error("cannot write sidecar for " + stem);
    double tail_w = 0.0;
    for (const auto& [c, w] : sample.soft_label.entries) {
        if (c == sample.tail_class) tail_w = w;
    }
    meta << "{\"sigma\": " << sample.sigma << ", \"area_fraction\": " << tail_w
         << ", \"tail_class\": " << sample.tail_class << ", \"head_class\": " << sample.head_class
         << "}\n";
}

}  // namespace ltcl

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ltcl/cam.hpp"
#include "ltcl/common.hpp"
#include "ltcl/manifest.hpp"
#include "ltcl/model.hpp"
#include "ltcl/synthetic.hpp"
#include "ltcl/tensor.hpp"

namespace ltcl {

enum class ExemplarSelector { herding, random };

inline ExemplarSelector selector_from_string(const std::string& s) {
    if (s == "herding") return ExemplarSelector::herding;
    if (s == "random") return ExemplarSelector::random;
    throw parameter_error("unknown exemplar selector '" + s + "'");
}

inline const char* to_string(ExemplarSelector s) {
    return s == ExemplarSelector::herding ? "herding" : "random";
}

// ---------------------------------------------------------------------------
// Herding: greedily keep the running mean of the chosen (L2-normalized)
// features close to the class mean. Returns indices in selection order.
// ---------------------------------------------------------------------------
template <typename T>
std::vector<std::size_t> herding_select(const Tensor<T>& features, std::size_t budget) {
    if (features.rank() != 2 || features.dim(0) == 0) throw shape_error("herding_select expects {n,d}, n>=1");
    if (budget < 1) throw parameter_error("herding_select: budget must be >= 1");
    const std::size_t n = features.dim(0);
    const std::size_t d = features.dim(1);
    const std::size_t keep = std::min(n, budget);

    std::vector<double> phi(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        double nn = 0.0;
        const T* row = features.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) nn += static_cast<double>(row[j]) * static_cast<double>(row[j]);
        const double inv = nn > 0.0 ? 1.0 / std::sqrt(nn) : 0.0;
        for (std::size_t j = 0; j < d; ++j) phi[i * d + j] = static_cast<double>(row[j]) * inv;
    }
    std::vector<double> mu(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) mu[j] += phi[i * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(n);

    std::vector<std::size_t> order;
    std::vector<bool> chosen(n, false);
    std::vector<double> sum(d, 0.0);
    for (std::size_t k = 1; k <= keep; ++k) {
        std::size_t best = n;
        double best_dist = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (chosen[i]) continue;
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double delta = mu[j] - (sum[j] + phi[i * d + j]) / static_cast<double>(k);
                dist += delta * delta;
            }
            if (best == n || dist < best_dist) {  // strict: ties keep the lowest index
                best = i;
                best_dist = dist;
            }
        }
        chosen[best] = true;
        order.push_back(best);
        for (std::size_t j = 0; j < d; ++j) sum[j] += phi[best * d + j];
    }
    return order;
}

/// Random selection without replacement; the `selector: random` ablation.
inline std::vector<std::size_t> random_select(std::size_t n, std::size_t budget, Rng& rng) {
    if (n == 0) throw parameter_error("random_select: empty pool");
    if (budget < 1) throw parameter_error("random_select: budget must be >= 1");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    idx.resize(std::min(n, budget));
    return idx;
}

// ---------------------------------------------------------------------------
// Per-class stored real exemplars under a fixed per-class budget M. Only
// manifest records enter; CAM-CutMix synthetics exist solely as transient
// replay entries and are rejected here by construction.
// ---------------------------------------------------------------------------
class ExemplarBuffer {
public:
    explicit ExemplarBuffer(std::size_t budget = 20) : budget_(budget) {
        if (budget_ < 1) throw parameter_error("exemplar budget must be >= 1");
    }

    [[nodiscard]] std::size_t budget() const { return budget_; }
    [[nodiscard]] bool has_class(int cls) const { return stored_.count(cls) > 0; }
    [[nodiscard]] std::size_t num_classes() const { return stored_.size(); }

    [[nodiscard]] std::size_t count(int cls) const {
        auto it = stored_.find(cls);
        return it == stored_.end() ? 0 : it->second.size();
    }

    [[nodiscard]] const std::vector<ManifestRecord>& records(int cls) const {
        auto it = stored_.find(cls);
        if (it == stored_.end()) throw state_error("buffer holds no class " + std::to_string(cls));
        return it->second;
    }

    [[nodiscard]] std::vector<int> classes() const {
        std::vector<int> out;
        for (const auto& [cls, recs] : stored_) out.push_back(cls);
        return out;
    }

    [[nodiscard]] std::map<int, std::size_t> counts() const {
        std::map<int, std::size_t> out;
        for (const auto& [cls, recs] : stored_) out[cls] = recs.size();
        return out;
    }

    void store_class(int cls, std::vector<ManifestRecord> records) {
        if (records.size() > budget_) {
            throw parameter_error("storing " + std::to_string(records.size()) + " exemplars exceeds budget " +
                                  std::to_string(budget_));
        }
        for (const auto& r : records) {
            if (r.class_id != cls) throw parameter_error("exemplar record class mismatch");
        }
        if (stored_.count(cls)) throw state_error("class " + std::to_string(cls) + " already stored");
        stored_[cls] = std::move(records);
    }

    friend bool operator==(const ExemplarBuffer& a, const ExemplarBuffer& b) {
        if (a.budget_ != b.budget_ || a.stored_.size() != b.stored_.size()) return false;
        for (const auto& [cls, recs] : a.stored_) {
            auto it = b.stored_.find(cls);
            if (it == b.stored_.end() || it->second.size() != recs.size()) return false;
            for (std::size_t i = 0; i < recs.size(); ++i) {
                if (recs[i].image_ref != it->second[i].image_ref ||
                    recs[i].class_id != it->second[i].class_id) {
                    return false;
                }
            }
        }
        return true;
    }

private:
    std::size_t budget_;
    std::map<int, std::vector<ManifestRecord>> stored_;  // ordered for determinism
};

namespace detail {

template <typename T>
Tensor<T> extract_features_of_records(const std::vector<ManifestRecord>& records,
                                      const Model<T>& model, const ImageProvider& provider) {
    const std::size_t hw = provider.image_hw();
    const std::size_t d = model.feature_dim();
    Tensor<T> features({records.size(), d});
    const std::size_t chunk = 64;
    for (std::size_t start = 0; start < records.size(); start += chunk) {
        const std::size_t stop = std::min(records.size(), start + chunk);
        Tensor<T> batch({stop - start, 3, hw, hw});
        for (std::size_t i = start; i < stop; ++i) {
            const Image<float> img = provider.load(records[i].image_ref);
            T* dst = batch.data() + (i - start) * img.numel();
            for (std::size_t j = 0; j < img.numel(); ++j) dst[j] = static_cast<T>(img[j]);
        }
        const auto res = model.extract(batch);
        std::copy(res.features.data(), res.features.data() + (stop - start) * d,
                  features.data() + start * d);
    }
    return features;
}

}  // namespace detail

/// After training task i: herd (or randomly pick) min(n_c, M) exemplars for
/// each class new to the buffer. Existing classes are untouched, so a second
/// call with the same data is a no-op.
template <typename T>
void update_buffer(ExemplarBuffer& buffer, const std::vector<ManifestRecord>& task_records,
                   const Model<T>& model, const ImageProvider& provider,
                   ExemplarSelector selector, Rng& rng) {
    std::map<int, std::vector<ManifestRecord>> by_class;
    for (const auto& r : task_records) by_class[r.class_id].push_back(r);

    for (auto& [cls, recs] : by_class) {
        if (buffer.has_class(cls)) continue;
        std::vector<std::size_t> pick;
        if (selector == ExemplarSelector::herding) {
            const Tensor<T> features = detail::extract_features_of_records(recs, model, provider);
            pick = herding_select(features, buffer.budget());
        } else {
            pick = random_select(recs.size(), buffer.budget(), rng);
        }
        std::vector<ManifestRecord> keep;
        keep.reserve(pick.size());
        for (std::size_t i : pick) keep.push_back(recs[i]);
        buffer.store_class(cls, std::move(keep));
    }
}

// A replay entry: real exemplars carry one-hot labels, synthetics carry their
// area-mixed soft labels and are flagged so they can never be stored back.
template <typename T>
struct ReplaySample {
    Image<T> image;
    SoftLabel label;
    int primary_class = -1;  // dataset class id of the (tail) parent
    bool synthetic = false;
    int head_class = -1;     // row-space head parent, synthetics only
    double sigma = 0.0;      // threshold used, synthetics only
};

template <typename T>
struct ReplaySet {
    std::vector<ReplaySample<T>> samples;
    std::vector<std::string> warnings;
};

/// Class-balanced replay set: all stored real exemplars plus, for each class
/// holding n < M exemplars, M - n CAM-CutMix synthetics. The head pool is
/// the set of classes currently at the full budget; when none qualify the
/// largest-count other classes stand in. Read-only with respect to the
/// buffer.
///
/// `row_of` maps a dataset class id onto the model's classifier row (the
/// trainer assigns rows in order of first appearance); labels in the returned
/// set live in row space. Defaults to the identity.
template <typename T>
ReplaySet<T> balanced_replay_set(const ExemplarBuffer& buffer, const Model<T>& model,
                                 const ImageProvider& provider, std::size_t num_seen,
                                 std::uint64_t seed, bool synthesize = true,
                                 const std::function<int(int)>& row_of = {}) {
    if (buffer.num_classes() == 0) throw state_error("balanced_replay_set: empty buffer");
    auto to_row = [&row_of](int cls) { return row_of ? row_of(cls) : cls; };
    ReplaySet<T> out;

    const auto counts = buffer.counts();
    const std::size_t budget = buffer.budget();

    // Render stored exemplars once.
    std::map<int, std::vector<Image<T>>> images;
    for (const auto& [cls, cnt] : counts) {
        auto& vec = images[cls];
        for (const auto& rec : buffer.records(cls)) {
            const Image<float> raw = provider.load(rec.image_ref);
            Image<T> img({raw.dim(0), raw.dim(1), raw.dim(2)});
            for (std::size_t i = 0; i < raw.numel(); ++i) img[i] = static_cast<T>(raw[i]);
            vec.push_back(std::move(img));
        }
    }

    for (const auto& [cls, cnt] : counts) {
        for (const auto& img : images[cls]) {
            out.samples.push_back({img, SoftLabel::hard(to_row(cls)), cls, false, -1, 0.0});
        }
    }
    if (!synthesize) return out;

    std::vector<int> full_classes;
    for (const auto& [cls, cnt] : counts) {
        if (cnt == budget) full_classes.push_back(cls);
    }

    for (const auto& [cls, cnt] : counts) {
        if (cnt >= budget) continue;
        // Head pool: full classes, else the largest-count classes other than
        // this one, else (single-class buffer) the class itself.
        std::vector<int> pool_classes = full_classes;
        if (pool_classes.empty()) {
            std::size_t best = 0;
            for (const auto& [c2, n2] : counts) {
                if (c2 != cls) best = std::max(best, n2);
            }
            for (const auto& [c2, n2] : counts) {
                if (c2 != cls && n2 == best && n2 > 0) pool_classes.push_back(c2);
            }
            if (pool_classes.empty()) pool_classes.push_back(cls);
        }
        std::vector<Image<T>> pool;
        std::vector<int> pool_labels;
        for (int pc : pool_classes) {
            for (const auto& img : images[pc]) {
                pool.push_back(img);
                pool_labels.push_back(to_row(pc));
            }
        }

        Rng class_rng = Rng::fork(seed, 0xCA90000ULL + static_cast<std::uint64_t>(cls));
        auto aug = augment_tail_class(to_row(cls), images[cls], budget - cnt, pool, pool_labels,
                                      model, num_seen, class_rng);
        if (aug.warning_empty_pool) {
            out.warnings.push_back("class " + std::to_string(cls) + ": empty head pool, no synthetics");
            continue;
        }
        for (auto& sample : aug.samples) {
            out.samples.push_back({std::move(sample.image), sample.soft_label, cls, true,
                                   sample.head_class, sample.sigma});
        }
    }
    return out;
}

}  // namespace ltcl

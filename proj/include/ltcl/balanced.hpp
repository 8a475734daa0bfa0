#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ltcl/common.hpp"
#include "ltcl/tensor.hpp"

namespace ltcl {

// Sparse soft label: (class, weight) pairs, weights >= 0 summing to 1.
// A hard label is the single pair {c, 1}.
struct SoftLabel {
    std::vector<std::pair<int, double>> entries;

    static SoftLabel hard(int cls) { return SoftLabel{{{cls, 1.0}}}; }

    [[nodiscard]] double weight_sum() const {
        double s = 0.0;
        for (const auto& [c, w] : entries) s += w;
        return s;
    }

    [[nodiscard]] int argmax() const {
        int best = -1;
        double bw = -1.0;
        for (const auto& [c, w] : entries) {
            if (w > bw) { bw = w; best = c; }
        }
        return best;
    }
};

enum class BsVariant { paper, log_count };

inline BsVariant bs_variant_from_string(const std::string& s) {
    if (s == "paper") return BsVariant::paper;
    if (s == "log_count") return BsVariant::log_count;
    throw parameter_error("unknown bs_variant '" + s + "'");
}

inline const char* to_string(BsVariant v) { return v == BsVariant::paper ? "paper" : "log_count"; }

// ---------------------------------------------------------------------------
// Per-class effective training counts for the current task phase. Hard
// samples add 1 to their class; synthetic soft samples add their mixing
// weights fractionally, so the total stays equal to the sample count.
// ---------------------------------------------------------------------------
struct DistributionVector {
    std::vector<double> raw;         // v_d
    std::vector<double> normalized;  // v_d / sum(v_d)
};

inline DistributionVector distribution_vector(const std::vector<SoftLabel>& labels,
                                              std::size_t num_seen) {
    if (labels.empty()) throw parameter_error("distribution_vector: empty sample set");
    DistributionVector dv;
    dv.raw.assign(num_seen, 0.0);
    for (const auto& lbl : labels) {
        for (const auto& [c, w] : lbl.entries) {
            if (c < 0 || static_cast<std::size_t>(c) >= num_seen) {
                throw parameter_error("distribution_vector: label class " + std::to_string(c) +
                                      " >= C_seen " + std::to_string(num_seen));
            }
            dv.raw[static_cast<std::size_t>(c)] += w;
        }
    }
    double total = 0.0;
    for (double v : dv.raw) total += v;
    dv.normalized.assign(num_seen, 0.0);
    if (total > 0.0) {
        for (std::size_t c = 0; c < num_seen; ++c) dv.normalized[c] = dv.raw[c] / total;
    }
    return dv;
}

/// Additive logit adjustment. The paper variant adds the normalized counts
/// themselves; log_count is the classic balanced-softmax prior ln(v̄_d),
/// with zero-count classes left unadjusted.
inline std::vector<double> bs_adjustment(const DistributionVector& dv, BsVariant variant) {
    std::vector<double> adj(dv.normalized.size(), 0.0);
    for (std::size_t c = 0; c < adj.size(); ++c) {
        if (variant == BsVariant::paper) {
            adj[c] = dv.normalized[c];
        } else {
            adj[c] = dv.normalized[c] > 0.0 ? std::log(dv.normalized[c]) : 0.0;
        }
    }
    return adj;
}

template <typename T>
struct BsLossResult {
    T value = T(0);
    Tensor<T> d_logits;  // {B, C}
};

/// Balanced softmax with soft targets:
///   mean_b  -sum_k t_k * ln softmax(adj + L)_bk
/// With a uniform (or zero) adjustment this reduces exactly to plain
/// soft-target cross-entropy by softmax shift invariance.
template <typename T>
BsLossResult<T> balanced_softmax_loss(const Tensor<T>& logits, const Tensor<T>& targets,
                                      const std::vector<double>& adjustment) {
    require_same_shape(logits, targets, "balanced_softmax_loss");
    if (logits.rank() != 2) throw shape_error("balanced_softmax_loss expects {B,C}");
    const std::size_t B = logits.dim(0);
    const std::size_t C = logits.dim(1);
    if (adjustment.size() != C) throw shape_error("balanced_softmax_loss: adjustment size mismatch");

    for (std::size_t b = 0; b < B; ++b) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += static_cast<double>(targets.at2(b, c));
        if (std::abs(s - 1.0) > 1e-6) {
            throw validation_error("target row " + std::to_string(b) + " sums to " + std::to_string(s));
        }
    }

    BsLossResult<T> out;
    out.d_logits = Tensor<T>({B, C});
    std::vector<T> p(C);
    const T inv_b = T(1) / static_cast<T>(B);
    for (std::size_t b = 0; b < B; ++b) {
        T mx = logits.at2(b, 0) + static_cast<T>(adjustment[0]);
        for (std::size_t c = 1; c < C; ++c) {
            mx = std::max(mx, logits.at2(b, c) + static_cast<T>(adjustment[c]));
        }
        T z = T(0);
        for (std::size_t c = 0; c < C; ++c) {
            p[c] = std::exp(logits.at2(b, c) + static_cast<T>(adjustment[c]) - mx);
            z += p[c];
        }
        const T log_z = std::log(z);
        for (std::size_t c = 0; c < C; ++c) {
            const T t = targets.at2(b, c);
            // log-softmax form: finite even when the target's probability
            // underflows to zero
            if (t > T(0)) {
                const T logp = logits.at2(b, c) + static_cast<T>(adjustment[c]) - mx - log_z;
                out.value -= inv_b * t * logp;
            }
            out.d_logits.at2(b, c) = inv_b * (p[c] / z - t);
        }
    }
    return out;
}

/// lambda = sqrt(|D_i| / |D_{1:i}|), the current task's share of all data.
inline double adaptive_lambda(std::size_t size_current, std::size_t size_cumulative) {
    if (size_cumulative == 0) throw parameter_error("adaptive_lambda: zero cumulative size");
    if (size_current == 0) throw parameter_error("adaptive_lambda: zero current size");
    if (size_current > size_cumulative) {
        throw parameter_error("adaptive_lambda: current size exceeds cumulative");
    }
    return std::sqrt(static_cast<double>(size_current) / static_cast<double>(size_cumulative));
}

/// L = L_bs + lambda * L_fkd. On the first task (no teacher) fkd is 0.
template <typename T>
T integrated_loss(T bs, T fkd, double lambda) {
    if (lambda <= 0.0 || lambda > 1.0) throw parameter_error("integrated_loss: lambda must be in (0,1]");
    return bs + static_cast<T>(lambda) * fkd;
}

}  // namespace ltcl

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ltcl/common.hpp"
#include "ltcl/model.hpp"
#include "ltcl/tensor.hpp"

namespace ltcl {

enum class DistillMode { feature_cosine, feature_mse, logit };

inline const char* to_string(DistillMode m) {
    switch (m) {
        case DistillMode::feature_cosine: return "feature_cosine";
        case DistillMode::feature_mse: return "feature_mse";
        case DistillMode::logit: return "logit";
    }
    return "?";
}

inline DistillMode distill_mode_from_string(const std::string& s) {
    if (s == "feature_cosine") return DistillMode::feature_cosine;
    if (s == "feature_mse") return DistillMode::feature_mse;
    if (s == "logit") return DistillMode::logit;
    throw parameter_error("unknown distill mode '" + s + "'");
}

struct DistillConfig {
    DistillMode mode = DistillMode::feature_cosine;
    double temperature = 2.0;  // logit mode
    double alpha = 0.5;        // logit-mode mixing with cross-entropy

    void validate() const {
        if (temperature <= 0.0) throw parameter_error("distill temperature must be > 0");
        if (alpha < 0.0 || alpha > 1.0) throw parameter_error("distill alpha must be in [0,1]");
    }
};

// Norm epsilon guarding zero feature rows.
inline constexpr double kCosineEps = 1e-8;

template <typename T>
struct FkdResult {
    T value = T(0);
    Tensor<T> d_student;       // gradient w.r.t. student features, {B,d}
    PredictorGrads<T> d_pred;  // gradient w.r.t. predictor parameters
};

/// Feature distillation through the predictor head:
///   mean_b [ 1 - cos(g(f_b), t_b) ]
/// Teacher features carry no gradient; the returned gradients flow into the
/// student features and the predictor only. Value is always in [0,2].
template <typename T>
FkdResult<T> fkd_loss(const Tensor<T>& student_features, const Tensor<T>& teacher_features,
                      const Predictor<T>& predictor) {
    require_same_shape(student_features, teacher_features, "fkd_loss");
    if (student_features.rank() != 2) throw shape_error("fkd_loss expects {B,d} features");
    const std::size_t B = student_features.dim(0);
    const std::size_t d = student_features.dim(1);
    if (predictor.dim != d) throw shape_error("fkd_loss: predictor dim mismatch");

    Tensor<T> preact;
    const Tensor<T> mapped = predictor.forward(student_features, &preact);

    FkdResult<T> out;
    out.d_student = Tensor<T>({B, d});
    out.d_pred.weight.assign(d * d, T(0));
    out.d_pred.bias.assign(d, T(0));

    const T inv_b = T(1) / static_cast<T>(B);
    std::vector<T> d_u(d);
    for (std::size_t b = 0; b < B; ++b) {
        const T* u = mapped.data() + b * d;
        const T* t = teacher_features.data() + b * d;
        T uu = T(0), tt = T(0), dot = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            uu += u[j] * u[j];
            tt += t[j] * t[j];
            dot += u[j] * t[j];
        }
        const T un = std::sqrt(uu);
        const T tn = std::sqrt(tt);
        const T nu = un + static_cast<T>(kCosineEps);
        const T nt = tn + static_cast<T>(kCosineEps);
        const T cos_v = dot / (nu * nt);
        out.value += (T(1) - cos_v) * inv_b;

        // d(1-cos)/du = -( t/(nu*nt) - dot/(nu^2*nt) * u/|u| )
        const T a1 = T(1) / (nu * nt);
        const T a2 = (un > T(0)) ? dot / (nu * nu * nt * un) : T(0);
        for (std::size_t j = 0; j < d; ++j) {
            d_u[j] = -inv_b * (a1 * t[j] - a2 * u[j]);
        }

        // through ReLU and the linear map
        const T* f = student_features.data() + b * d;
        T* df = out.d_student.data() + b * d;
        for (std::size_t j = 0; j < d; ++j) df[j] = T(0);
        for (std::size_t i = 0; i < d; ++i) {
            if (preact.at2(b, i) <= T(0)) continue;
            const T g = d_u[i];
            if (g == T(0)) continue;
            out.d_pred.bias[i] += g;
            const T* wrow = predictor.weight.data() + i * d;
            T* dwrow = out.d_pred.weight.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) {
                dwrow[j] += g * f[j];
                df[j] += g * wrow[j];
            }
        }
    }
    return out;
}

/// MSE variant of the feature distillation (mean over all B*d elements).
template <typename T>
FkdResult<T> fkd_loss_mse(const Tensor<T>& student_features, const Tensor<T>& teacher_features,
                          const Predictor<T>& predictor) {
    require_same_shape(student_features, teacher_features, "fkd_loss_mse");
    const std::size_t B = student_features.dim(0);
    const std::size_t d = student_features.dim(1);
    if (predictor.dim != d) throw shape_error("fkd_loss_mse: predictor dim mismatch");

    Tensor<T> preact;
    const Tensor<T> mapped = predictor.forward(student_features, &preact);

    FkdResult<T> out;
    out.d_student = Tensor<T>({B, d});
    out.d_pred.weight.assign(d * d, T(0));
    out.d_pred.bias.assign(d, T(0));

    const T scale = T(1) / static_cast<T>(B * d);
    for (std::size_t b = 0; b < B; ++b) {
        const T* u = mapped.data() + b * d;
        const T* t = teacher_features.data() + b * d;
        const T* f = student_features.data() + b * d;
        T* df = out.d_student.data() + b * d;
        for (std::size_t j = 0; j < d; ++j) df[j] = T(0);
        for (std::size_t i = 0; i < d; ++i) {
            const T diff = u[i] - t[i];
            out.value += diff * diff * scale;
            if (preact.at2(b, i) <= T(0)) continue;
            const T g = T(2) * diff * scale;
            out.d_pred.bias[i] += g;
            const T* wrow = predictor.weight.data() + i * d;
            T* dwrow = out.d_pred.weight.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) {
                dwrow[j] += g * f[j];
                df[j] += g * wrow[j];
            }
        }
    }
    return out;
}

template <typename T>
struct LogitKdResult {
    T value = T(0);
    Tensor<T> d_student;  // {B, C_old}
};

/// Logit distillation over the old-class columns: cross-entropy of the
/// temperature-softened teacher distribution against the softened student
/// distribution, averaged over the batch.
template <typename T>
LogitKdResult<T> logit_kd_loss(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits,
                               double temperature) {
    if (temperature <= 0.0) throw parameter_error("logit_kd_loss: temperature must be > 0");
    require_same_shape(student_logits, teacher_logits, "logit_kd_loss");
    if (student_logits.rank() != 2) throw shape_error("logit_kd_loss expects {B,C} logits");
    const std::size_t B = student_logits.dim(0);
    const std::size_t C = student_logits.dim(1);
    const T temp = static_cast<T>(temperature);

    LogitKdResult<T> out;
    out.d_student = Tensor<T>({B, C});
    std::vector<T> p(C), q(C), logp(C);
    const T inv_b = T(1) / static_cast<T>(B);
    for (std::size_t b = 0; b < B; ++b) {
        auto softened = [&](const Tensor<T>& logits, std::vector<T>& dst, std::vector<T>* log_dst) {
            T mx = logits.at2(b, 0);
            for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, logits.at2(b, c));
            T z = T(0);
            for (std::size_t c = 0; c < C; ++c) {
                dst[c] = std::exp((logits.at2(b, c) - mx) / temp);
                z += dst[c];
            }
            const T log_z = std::log(z);
            for (std::size_t c = 0; c < C; ++c) {
                if (log_dst) (*log_dst)[c] = (logits.at2(b, c) - mx) / temp - log_z;
                dst[c] /= z;
            }
        };
        softened(teacher_logits, q, nullptr);
        softened(student_logits, p, &logp);
        for (std::size_t c = 0; c < C; ++c) {
            out.value -= inv_b * q[c] * logp[c];
            out.d_student.at2(b, c) = inv_b * (p[c] - q[c]) / temp;
        }
    }
    return out;
}

/// Eq-style mixing of distillation and cross-entropy for the logit baseline.
template <typename T>
T baseline_mixed_loss(T kd, T ce, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw parameter_error("baseline_mixed_loss: alpha must be in [0,1]");
    return static_cast<T>(alpha) * kd + static_cast<T>(1.0 - alpha) * ce;
}

}  // namespace ltcl

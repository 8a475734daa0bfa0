#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ltcl/balanced.hpp"
#include "ltcl/checkpoint.hpp"
#include "ltcl/common.hpp"
#include "ltcl/distill.hpp"
#include "ltcl/manifest.hpp"
#include "ltcl/memory.hpp"
#include "ltcl/metrics.hpp"
#include "ltcl/model.hpp"
#include "ltcl/synthetic.hpp"
#include "ltcl/tasks.hpp"
#include "ltcl/tensor.hpp"

namespace ltcl {

enum class BaselineMode { none, finetune, logit_kd };

inline BaselineMode baseline_from_string(const std::string& s) {
    if (s == "none") return BaselineMode::none;
    if (s == "finetune") return BaselineMode::finetune;
    if (s == "logit_kd") return BaselineMode::logit_kd;
    throw parameter_error("unknown baseline mode '" + s + "'");
}

inline const char* to_string(BaselineMode m) {
    switch (m) {
        case BaselineMode::none: return "none";
        case BaselineMode::finetune: return "finetune";
        case BaselineMode::logit_kd: return "logit_kd";
    }
    return "?";
}

struct MethodFlags {
    bool use_fkd = true;
    bool use_cam_cutmix = true;
    bool use_balanced_softmax = true;
};

// ---------------------------------------------------------------------------
// Full run configuration. The `paper` preset stores the published training
// recipe; `desk` is sized so a whole benchmark matrix finishes on a laptop
// CPU. Both are plain data, everything is overridable from the config file.
// ---------------------------------------------------------------------------
struct RunConfig {
    std::size_t epochs_per_task = 20;
    double base_lr = 0.1;
    std::size_t lr_decay_epochs = 10;
    double lr_decay_factor = 0.1;
    std::size_t batch_size = 32;
    // Small tasks cycle their data so every epoch runs at least this many
    // optimizer steps; tasks larger than floor*batch are unaffected.
    std::size_t min_batches_per_epoch = 16;
    double clip_grad_norm = 5.0;  // global L2 clip per step; 0 disables
    double weight_decay = 1e-4;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    std::size_t memory_budget = 5;
    MethodFlags flags;
    BaselineMode baseline = BaselineMode::none;
    DistillConfig distill;
    BsVariant bs_variant = BsVariant::paper;
    ExemplarSelector selector = ExemplarSelector::herding;
    bool deterministic = true;
    bool augment_train = true;
    std::string preset = "desk";
    std::string dump_synthetics_dir;  // when set, CAM-CutMix outputs land here for audit
    BackboneConfig backbone{3, 32, {8, 16, 32}};

    void validate() const {
        if (epochs_per_task < 1) throw parameter_error("epochs_per_task must be >= 1");
        if (batch_size < 1) throw parameter_error("batch_size must be >= 1");
        if (min_batches_per_epoch < 1) throw parameter_error("min_batches_per_epoch must be >= 1");
        if (clip_grad_norm < 0.0) throw parameter_error("clip_grad_norm must be >= 0");
        if (base_lr <= 0.0) throw parameter_error("base_lr must be > 0");
        if (lr_decay_epochs < 1) throw parameter_error("lr_decay_epochs must be >= 1");
        if (lr_decay_factor <= 0.0 || lr_decay_factor >= 1.0) {
            throw parameter_error("lr_decay_factor must be in (0,1)");
        }
        if (weight_decay < 0.0) throw parameter_error("weight_decay must be >= 0");
        if (momentum < 0.0 || momentum >= 1.0) throw parameter_error("momentum must be in [0,1)");
        if (memory_budget < 1) throw parameter_error("memory_budget must be >= 1");
        distill.validate();
        backbone.validate();
    }

    /// lr(epoch) = base_lr * factor^floor(epoch / decay_epochs)
    [[nodiscard]] double learning_rate(std::size_t epoch) const {
        return base_lr * std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_epochs));
    }
};

// Desk calibration: two-class tasks at rho=50 put a lone tail class against
// a 50x head class; the literal normalized-count adjustment (bounded by one
// logit) cannot break that tie at desk step budgets, the classical log prior
// can. The paper preset keeps the literal form.
inline RunConfig desk_preset() {
    RunConfig cfg;
    cfg.bs_variant = BsVariant::log_count;
    return cfg;
}

inline RunConfig paper_preset() {
    RunConfig cfg;
    cfg.preset = "paper";
    cfg.bs_variant = BsVariant::paper;
    cfg.epochs_per_task = 90;
    cfg.base_lr = 0.1;
    cfg.lr_decay_epochs = 30;
    cfg.lr_decay_factor = 0.1;
    cfg.batch_size = 128;
    cfg.min_batches_per_epoch = 1;
    cfg.weight_decay = 1e-4;
    cfg.momentum = 0.9;
    cfg.seed = 1993;
    cfg.memory_budget = 20;
    cfg.backbone = BackboneConfig{3, 32, {16, 32, 64, 128}};
    return cfg;
}

inline RunConfig preset_config(const std::string& name) {
    if (name == "desk") return desk_preset();
    if (name == "paper") return paper_preset();
    throw parameter_error("unknown preset '" + name + "'");
}

// rng stream ids, one per consumer so resumed runs replay identically
namespace stream {
inline constexpr std::uint64_t init = 0x01;
inline constexpr std::uint64_t expand = 0x100;
inline constexpr std::uint64_t predictor = 0x200;
inline constexpr std::uint64_t epochs = 0x300;
inline constexpr std::uint64_t buffer = 0x400;
inline constexpr std::uint64_t replay = 0x500;
}  // namespace stream

template <typename T>
struct TrainState {
    Model<T> model;
    std::optional<TeacherSnapshot<T>> teacher;
    ExemplarBuffer buffer{1};
    std::size_t cumulative_size = 0;
    std::size_t task_index = 0;    // completed tasks
    std::vector<int> seen_classes; // dataset class ids, sorted
    std::vector<int> class_order;  // classifier row -> dataset class id

    /// Classifier row of a dataset class id.
    [[nodiscard]] int row_of(int cls) const {
        for (std::size_t r = 0; r < class_order.size(); ++r) {
            if (class_order[r] == cls) return static_cast<int>(r);
        }
        throw state_error("class " + std::to_string(cls) + " has no classifier row");
    }
};

template <typename T>
TrainState<T> make_initial_state(const RunConfig& cfg) {
    TrainState<T> state;
    Rng rng = Rng::fork(cfg.seed, stream::init);
    state.model = Model<T>(cfg.backbone, rng);
    state.buffer = ExemplarBuffer(cfg.memory_budget);
    return state;
}

struct TaskReport {
    double lambda = 1.0;
    std::size_t task_size = 0;
    std::size_t cumulative_size = 0;
    std::size_t num_new_classes = 0;
    std::size_t replay_real = 0;
    std::size_t replay_synthetic = 0;
    double mean_loss = 0.0;
    std::vector<std::string> warnings;
};

namespace detail {

template <typename T>
struct TrainItem {
    Image<T> image;
    SoftLabel label;
    bool augment = false;
};

// pad-4 zero-pad random crop + horizontal flip
template <typename T>
void copy_augmented(const Image<T>& src, T* dst, std::size_t hw, std::size_t dy, std::size_t dx,
                    bool flip) {
    const std::size_t C = src.dim(0);
    const std::size_t pad = 4;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < hw; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - static_cast<std::ptrdiff_t>(pad);
            for (std::size_t x = 0; x < hw; ++x) {
                const std::size_t xx = flip ? hw - 1 - x : x;
                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + dx) - static_cast<std::ptrdiff_t>(pad);
                T v = T(0);
                if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(hw) && sx >= 0 &&
                    sx < static_cast<std::ptrdiff_t>(hw)) {
                    v = src.at3(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                }
                dst[(c * hw + y) * hw + x] = v;
            }
        }
    }
}

// SGD with momentum; weight decay enters the gradient.
template <typename T>
void sgd_update(std::vector<T>& param, const std::vector<T>& grad, std::vector<T>& velocity,
                double lr, double momentum, double weight_decay) {
    if (velocity.size() != param.size()) velocity.assign(param.size(), T(0));
    const T mu = static_cast<T>(momentum);
    const T wd = static_cast<T>(weight_decay);
    const T eta = static_cast<T>(lr);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const T g = grad[i] + wd * param[i];
        velocity[i] = mu * velocity[i] + g;
        param[i] -= eta * velocity[i];
    }
}

template <typename T>
struct OptState {
    std::vector<std::vector<T>> block_w, block_b;
    std::vector<T> cls_w, cls_b;
    std::vector<T> pred_w, pred_b;
};

inline std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

}  // namespace detail

/// One incremental step: expand the classifier, build the balanced replay
/// set, run the epochs against L_bs + lambda * L_fkd, then detach the
/// predictor, herd new exemplars and snapshot the teacher for the next task.
template <typename T>
TaskReport train_task(TrainState<T>& state, const Task& task, const RunConfig& cfg,
                      const ImageProvider& provider) {
    cfg.validate();
    const std::size_t task_no = state.task_index + 1;  // 1-based i

    for (int cls : task.new_class_ids) {
        for (int seen : state.seen_classes) {
            if (cls == seen) throw state_error("task class " + std::to_string(cls) + " already seen");
        }
    }
    if (task.train_records.empty()) throw state_error("task " + std::to_string(task_no) + " has no data");

    TaskReport report;
    report.num_new_classes = task.new_class_ids.size();
    report.task_size = task.train_records.size();
    report.cumulative_size = state.cumulative_size + report.task_size;
    report.lambda = adaptive_lambda(report.task_size, report.cumulative_size);

    // (1) expand classifier; new classes take the next rows in id order
    {
        Rng rng = Rng::fork(cfg.seed, stream::expand + task_no);
        state.model.expand_classifier(task.new_class_ids.size(), rng);
        for (int cls : task.new_class_ids) state.class_order.push_back(cls);
    }
    const std::size_t num_seen = state.model.num_seen_classes();
    auto row_of = [&state](int cls) { return state.row_of(cls); };

    const bool use_replay = cfg.baseline != BaselineMode::finetune && task_no >= 2;
    const bool use_fkd = cfg.baseline == BaselineMode::none && cfg.flags.use_fkd && task_no >= 2;
    const bool use_logit_kd = cfg.baseline == BaselineMode::logit_kd && task_no >= 2;
    if ((use_fkd || use_logit_kd) && !state.teacher) {
        throw state_error("task " + std::to_string(task_no) + ": teacher snapshot missing");
    }

    // (2) balanced replay set + predictor
    std::vector<detail::TrainItem<T>> items;
    if (use_replay && state.buffer.num_classes() > 0) {
        const bool synthesize = cfg.baseline == BaselineMode::none && cfg.flags.use_cam_cutmix;
        auto replay = balanced_replay_set(state.buffer, state.model, provider, num_seen,
                                          Rng::fork(cfg.seed, stream::replay + task_no).state(),
                                          synthesize, row_of);
        for (auto& w : replay.warnings) report.warnings.push_back(std::move(w));
        if (!cfg.dump_synthetics_dir.empty()) {
            std::error_code ec;
            std::filesystem::create_directories(cfg.dump_synthetics_dir, ec);
            std::size_t idx = 0;
            for (const auto& s : replay.samples) {
                if (!s.synthetic) continue;
                SyntheticSample<T> dump;
                dump.image = s.image;
                dump.soft_label = s.label;
                dump.tail_class = row_of(s.primary_class);
                dump.head_class = s.head_class;
                dump.sigma = s.sigma;
                dump_synthetic(dump, cfg.dump_synthetics_dir,
                               "task" + std::to_string(task_no) + "_" + std::to_string(idx++));
            }
        }
        for (auto& s : replay.samples) {
            (s.synthetic ? report.replay_synthetic : report.replay_real)++;
            items.push_back({std::move(s.image), std::move(s.label), false});
        }
    }
    if (use_fkd) {
        Rng rng = Rng::fork(cfg.seed, stream::predictor + task_no);
        state.model.attach_predictor(rng);
    }

    // (3) effective set = D_i u replay; distribution vector over it
    for (const auto& rec : task.train_records) {
        const Image<float> raw = provider.load(rec.image_ref);
        Image<T> img({raw.dim(0), raw.dim(1), raw.dim(2)});
        for (std::size_t i = 0; i < raw.numel(); ++i) img[i] = static_cast<T>(raw[i]);
        items.push_back({std::move(img), SoftLabel::hard(row_of(rec.class_id)), cfg.augment_train});
    }

    std::vector<SoftLabel> labels;
    labels.reserve(items.size());
    for (const auto& it : items) labels.push_back(it.label);
    const DistributionVector dv = distribution_vector(labels, num_seen);
    const bool balanced = cfg.baseline == BaselineMode::none && cfg.flags.use_balanced_softmax;
    const std::vector<double> adjustment =
        balanced ? bs_adjustment(dv, cfg.bs_variant) : std::vector<double>(num_seen, 0.0);

    // (4) epochs
    const std::size_t hw = cfg.backbone.input_hw;
    detail::OptState<T> opt;
    Rng epoch_rng = Rng::fork(cfg.seed, stream::epochs + task_no);
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);

    double loss_accum = 0.0;
    std::size_t loss_batches = 0;

    const std::size_t natural_batches = (items.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t batches_per_epoch = std::max(natural_batches, cfg.min_batches_per_epoch);
    std::size_t stream_pos = order.size();  // forces a shuffle on first use

    for (std::size_t epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
        const double lr = cfg.learning_rate(epoch);
        for (std::size_t step = 0; step < batches_per_epoch; ++step) {
            const std::size_t B = std::min(cfg.batch_size, items.size());

            Tensor<T> batch({B, 3, hw, hw});
            Tensor<T> targets({B, num_seen});
            for (std::size_t b = 0; b < B; ++b) {
                if (stream_pos == order.size()) {
                    epoch_rng.shuffle(order);
                    stream_pos = 0;
                }
                const auto& item = items[order[stream_pos++]];
                if (item.augment) {
                    const std::size_t dy = epoch_rng.below(9);
                    const std::size_t dx = epoch_rng.below(9);
                    const bool flip = epoch_rng.below(2) == 1;
                    detail::copy_augmented(item.image, batch.data() + b * 3 * hw * hw, hw, dy, dx, flip);
                } else {
                    std::copy(item.image.data(), item.image.data() + item.image.numel(),
                              batch.data() + b * 3 * hw * hw);
                }
                for (const auto& [c, wgt] : item.label.entries) {
                    targets.at2(b, static_cast<std::size_t>(c)) = static_cast<T>(wgt);
                }
            }

            ForwardCache<T> cache;
            const auto res = state.model.extract(batch, &cache);
            const Tensor<T> logits = state.model.classify(res.features);

            const auto bs = balanced_softmax_loss(logits, targets, adjustment);
            double total_loss = static_cast<double>(bs.value);
            Tensor<T> d_logits = bs.d_logits;

            std::optional<ExtractResult<T>> teacher_res;
            if (use_fkd || use_logit_kd) teacher_res = state.teacher->extract(batch);

            FkdResult<T> fkd;
            bool have_fkd = false;
            if (use_fkd) {
                fkd = (cfg.distill.mode == DistillMode::feature_mse)
                          ? fkd_loss_mse(res.features, teacher_res->features, state.model.predictor())
                          : fkd_loss(res.features, teacher_res->features, state.model.predictor());
                total_loss = integrated_loss(static_cast<double>(bs.value),
                                             static_cast<double>(fkd.value), report.lambda);
                have_fkd = true;
            }

            if (use_logit_kd) {
                const std::size_t c_old = state.teacher->num_seen_classes();
                Tensor<T> student_old({B, c_old});
                for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t c = 0; c < c_old; ++c) student_old.at2(b, c) = logits.at2(b, c);
                }
                const Tensor<T> teacher_logits = state.teacher->classify(teacher_res->features);
                const auto kd = logit_kd_loss(student_old, teacher_logits, cfg.distill.temperature);
                total_loss = baseline_mixed_loss(static_cast<double>(kd.value),
                                                 static_cast<double>(bs.value), cfg.distill.alpha);
                const T a = static_cast<T>(cfg.distill.alpha);
                for (std::size_t i = 0; i < d_logits.numel(); ++i) d_logits[i] *= (T(1) - a);
                for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t c = 0; c < c_old; ++c) {
                        d_logits.at2(b, c) += a * kd.d_student.at2(b, c);
                    }
                }
            }

            if (!std::isfinite(total_loss)) {
                throw state_error("NaN/inf loss at task " + std::to_string(task_no) + " epoch " +
                                  std::to_string(epoch) + " step " + std::to_string(step));
            }
            loss_accum += total_loss;
            ++loss_batches;

            ClassifierGrads<T> cls_grads;
            Tensor<T> d_features;
            classify_backward(state.model, res.features, d_logits, cls_grads, d_features);
            if (have_fkd) {
                const T lam = static_cast<T>(report.lambda);
                for (std::size_t i = 0; i < d_features.numel(); ++i) {
                    d_features[i] += lam * fkd.d_student[i];
                }
            }
            auto bb_grads = state.model.backbone().backward(cache, d_features);

            if (have_fkd) {
                const T lam = static_cast<T>(report.lambda);
                for (auto& g : fkd.d_pred.weight) g *= lam;
                for (auto& g : fkd.d_pred.bias) g *= lam;
            }
            if (cfg.clip_grad_norm > 0.0) {
                double sq = 0.0;
                auto accum = [&sq](const std::vector<T>& g) {
                    for (T v : g) sq += static_cast<double>(v) * static_cast<double>(v);
                };
                for (const auto& bg : bb_grads.blocks) {
                    accum(bg.weight);
                    accum(bg.bias);
                }
                accum(cls_grads.weight);
                accum(cls_grads.bias);
                if (have_fkd) {
                    accum(fkd.d_pred.weight);
                    accum(fkd.d_pred.bias);
                }
                const double norm = std::sqrt(sq);
                if (norm > cfg.clip_grad_norm) {
                    const T scale = static_cast<T>(cfg.clip_grad_norm / norm);
                    auto rescale = [scale](std::vector<T>& g) {
                        for (T& v : g) v *= scale;
                    };
                    for (auto& bg : bb_grads.blocks) {
                        rescale(bg.weight);
                        rescale(bg.bias);
                    }
                    rescale(cls_grads.weight);
                    rescale(cls_grads.bias);
                    if (have_fkd) {
                        rescale(fkd.d_pred.weight);
                        rescale(fkd.d_pred.bias);
                    }
                }
            }

            auto& blocks = state.model.backbone().blocks();
            if (opt.block_w.size() != blocks.size()) {
                opt.block_w.resize(blocks.size());
                opt.block_b.resize(blocks.size());
            }
            for (std::size_t i = 0; i < blocks.size(); ++i) {
                detail::sgd_update(blocks[i].weight, bb_grads.blocks[i].weight, opt.block_w[i], lr,
                                   cfg.momentum, cfg.weight_decay);
                detail::sgd_update(blocks[i].bias, bb_grads.blocks[i].bias, opt.block_b[i], lr,
                                   cfg.momentum, cfg.weight_decay);
            }
            detail::sgd_update(state.model.classifier_weight(), cls_grads.weight, opt.cls_w, lr,
                               cfg.momentum, cfg.weight_decay);
            detail::sgd_update(state.model.classifier_bias(), cls_grads.bias, opt.cls_b, lr,
                               cfg.momentum, cfg.weight_decay);
            if (have_fkd) {
                detail::sgd_update(state.model.predictor().weight, fkd.d_pred.weight, opt.pred_w, lr,
                                   cfg.momentum, cfg.weight_decay);
                detail::sgd_update(state.model.predictor().bias, fkd.d_pred.bias, opt.pred_b, lr,
                                   cfg.momentum, cfg.weight_decay);
            }
        }
    }
    report.mean_loss = loss_batches ? loss_accum / static_cast<double>(loss_batches) : 0.0;

    // (5) detach predictor
    if (use_fkd) state.model.detach_predictor();

    // (6) exemplars for the new classes
    if (cfg.baseline != BaselineMode::finetune) {
        Rng rng = Rng::fork(cfg.seed, stream::buffer + task_no);
        update_buffer(state.buffer, task.train_records, state.model, provider, cfg.selector, rng);
    }

    // (7) teacher for the next task; (8) cumulative size
    state.teacher = snapshot_teacher(state.model);
    state.cumulative_size += report.task_size;
    state.task_index = task_no;
    for (int cls : task.new_class_ids) state.seen_classes.push_back(cls);
    std::sort(state.seen_classes.begin(), state.seen_classes.end());
    return report;
}

// ---------------------------------------------------------------------------
// Whole continual run: train each task, evaluate on the test split of the
// classes seen so far, resume from checkpoints when present.
// ---------------------------------------------------------------------------

inline std::string dataset_fingerprint(const DatasetManifest& manifest, const TaskSequence& tasks) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& r : manifest.records) {
        h = fnv1a(r.image_ref, h);
        h = fnv1a(&r.class_id, sizeof(r.class_id), h);
        const int s = r.split == Split::train ? 0 : 1;
        h = fnv1a(&s, sizeof(s), h);
    }
    for (const auto& t : tasks.tasks) {
        for (int c : t.new_class_ids) h = fnv1a(&c, sizeof(c), h);
    }
    return hex64(h);
}

struct RunOptions {
    std::string out_dir;      // empty: no checkpoints/report on disk
    std::string config_hash;  // recorded in metrics + checkpoints
    bool resume = true;
    bool quiet = false;
};

template <typename T>
MetricsLog run_continual(const RunConfig& cfg, const DatasetManifest& manifest,
                         const TaskSequence& tasks, const ImageProvider& provider,
                         const RunOptions& opts = {}) {
    cfg.validate();
    tasks.validate(manifest.num_classes());
    const auto t_start = std::chrono::steady_clock::now();

    MetricsLog metrics;
    metrics.config_hash = opts.config_hash;
    metrics.dataset_hash = dataset_fingerprint(manifest, tasks);
    metrics.seed = cfg.seed;
    metrics.preset = cfg.preset;
    metrics.started_at = detail::timestamp_now();
    if (cfg.baseline != BaselineMode::none) {
        metrics.method = std::string("baseline-") + to_string(cfg.baseline);
    } else {
        metrics.method = "full";
        if (!cfg.flags.use_fkd) metrics.method += "-no_fkd";
        if (!cfg.flags.use_cam_cutmix) metrics.method += "-no_cam";
        if (!cfg.flags.use_balanced_softmax) metrics.method += "-no_bs";
    }

    // Pre-render the test split once.
    const auto test_records = manifest.split_records(Split::test);
    const std::size_t hw = cfg.backbone.input_hw;
    Tensor<T> test_images({test_records.size(), 3, hw, hw});
    std::vector<int> test_labels(test_records.size());
    for (std::size_t i = 0; i < test_records.size(); ++i) {
        const Image<float> raw = provider.load(test_records[i].image_ref);
        T* dst = test_images.data() + i * raw.numel();
        for (std::size_t j = 0; j < raw.numel(); ++j) dst[j] = static_cast<T>(raw[j]);
        test_labels[i] = test_records[i].class_id;
    }

    // Per-class training counts drive the head/tail breakdown.
    const auto train_counts = manifest.class_counts(Split::train);
    const auto ht = head_tail_split(train_counts, cfg.memory_budget);

    TrainState<T> state = make_initial_state<T>(cfg);

    auto checkpoint_path = [&](std::size_t task_no) {
        return opts.out_dir + "/checkpoint_task" + std::to_string(task_no) + ".json";
    };

    std::size_t first_task = 0;
    if (!opts.out_dir.empty() && opts.resume) {
        for (std::size_t t = tasks.num_tasks(); t >= 1; --t) {
            const std::string path = checkpoint_path(t);
            if (!std::filesystem::exists(path)) continue;
            try {
                auto ckpt = load_checkpoint<T>(path);
                if (ckpt.config_hash != opts.config_hash) break;
                state.model = std::move(ckpt.model);
                state.buffer = std::move(ckpt.buffer);
                state.cumulative_size = ckpt.cumulative_size;
                state.task_index = ckpt.task_index;
                for (std::size_t i = 0; i < t; ++i) {
                    for (int c : tasks.tasks[i].new_class_ids) {
                        state.seen_classes.push_back(c);
                        state.class_order.push_back(c);
                    }
                }
                std::sort(state.seen_classes.begin(), state.seen_classes.end());
                if (state.task_index >= 1) state.teacher = snapshot_teacher(state.model);
                first_task = t;
                // metrics for finished tasks come from the saved partial log
                std::ifstream pf(opts.out_dir + "/metrics_partial.json");
                if (pf) {
                    nlohmann::json pj;
                    pf >> pj;
                    MetricsLog prev = metrics_from_json(pj);
                    const bool usable = prev.per_task_accuracy.size() >= t &&
                                        prev.per_class_accuracy.size() >= t &&
                                        prev.lambda_trace.size() >= t && prev.task_sizes.size() >= t &&
                                        prev.cumulative_sizes.size() >= t &&
                                        prev.seen_classes.size() >= t &&
                                        prev.buffer_totals.size() >= t &&
                                        prev.head_accuracy.size() >= t &&
                                        prev.tail_accuracy.size() >= t;
                    if (usable) {
                        metrics.per_task_accuracy.assign(prev.per_task_accuracy.begin(),
                                                         prev.per_task_accuracy.begin() + static_cast<std::ptrdiff_t>(t));
                        metrics.per_class_accuracy.assign(prev.per_class_accuracy.begin(),
                                                          prev.per_class_accuracy.begin() + static_cast<std::ptrdiff_t>(t));
                        metrics.lambda_trace.assign(prev.lambda_trace.begin(),
                                                    prev.lambda_trace.begin() + static_cast<std::ptrdiff_t>(t));
                        metrics.task_sizes.assign(prev.task_sizes.begin(),
                                                  prev.task_sizes.begin() + static_cast<std::ptrdiff_t>(t));
                        metrics.cumulative_sizes.assign(prev.cumulative_sizes.begin(),
                                                        prev.cumulative_sizes.begin() + static_cast<std::ptrdiff_t>(t));
                        metrics.seen_classes.assign(prev.seen_classes.begin(),
                                                    prev.seen_classes.begin() + static_cast<std::ptrdiff_t>(t));
                        metrics.buffer_totals.assign(prev.buffer_totals.begin(),
                                                     prev.buffer_totals.begin() + static_cast<std::ptrdiff_t>(t));
                        metrics.head_accuracy.assign(prev.head_accuracy.begin(),
                                                     prev.head_accuracy.begin() + static_cast<std::ptrdiff_t>(t));
                        metrics.tail_accuracy.assign(prev.tail_accuracy.begin(),
                                                     prev.tail_accuracy.begin() + static_cast<std::ptrdiff_t>(t));
                        break;
                    }
                }
                // no usable partial log: restart cleanly
                state = make_initial_state<T>(cfg);
                first_task = 0;
            } catch (const std::exception&) {
                state = make_initial_state<T>(cfg);
                first_task = 0;
            }
            break;
        }
    }

    // must never throw: it runs on the abort path under an active exception
    auto flush_partial = [&]() noexcept {
        if (opts.out_dir.empty()) return;
        try {
            std::error_code ec;
            std::filesystem::create_directories(opts.out_dir, ec);
            std::ofstream f(opts.out_dir + "/metrics_partial.json");
            if (f) f << metrics_to_json(metrics).dump(2) << '\n';
        } catch (...) {
        }
    };

    try {
        for (std::size_t t = first_task; t < tasks.num_tasks(); ++t) {
            const TaskReport report = train_task(state, tasks.tasks[t], cfg, provider);

            // evaluate on the test subset of seen classes
            std::vector<std::size_t> keep;
            for (std::size_t i = 0; i < test_labels.size(); ++i) {
                for (int c : state.seen_classes) {
                    if (test_labels[i] == c) { keep.push_back(i); break; }
                }
            }
            if (keep.empty()) throw state_error("no test data covers task " + std::to_string(t + 1));
            Tensor<T> seen_images({keep.size(), 3, hw, hw});
            std::vector<int> seen_labels(keep.size());
            const std::size_t item = 3 * hw * hw;
            for (std::size_t i = 0; i < keep.size(); ++i) {
                std::copy(test_images.data() + keep[i] * item, test_images.data() + (keep[i] + 1) * item,
                          seen_images.data() + i * item);
                seen_labels[i] = state.row_of(test_labels[keep[i]]);
            }
            const EvalBreakdown eval = evaluate_seen(state.model, seen_images, seen_labels);

            // report per-class accuracy in dataset class-id space
            std::vector<double> per_class(manifest.num_classes(), -1.0);
            for (std::size_t row = 0; row < eval.per_class.size(); ++row) {
                per_class[static_cast<std::size_t>(state.class_order[row])] = eval.per_class[row];
            }
            metrics.per_task_accuracy.push_back(eval.accuracy);
            metrics.per_class_accuracy.push_back(std::move(per_class));
            metrics.lambda_trace.push_back(report.lambda);
            metrics.task_sizes.push_back(report.task_size);
            metrics.cumulative_sizes.push_back(report.cumulative_size);
            metrics.seen_classes.push_back(state.seen_classes.size());
            std::size_t buffer_total = 0;
            for (const auto& [cls, n] : state.buffer.counts()) buffer_total += n;
            metrics.buffer_totals.push_back(buffer_total);

            const auto& per_class_now = metrics.per_class_accuracy.back();
            auto group_mean = [&](const std::vector<int>& group) {
                double sum = 0.0;
                std::size_t n = 0;
                for (int c : group) {
                    const auto idx = static_cast<std::size_t>(c);
                    if (idx < per_class_now.size() && per_class_now[idx] >= 0.0) {
                        sum += per_class_now[idx];
                        ++n;
                    }
                }
                return n ? sum / static_cast<double>(n) : -1.0;
            };
            metrics.head_accuracy.push_back(group_mean(ht.head));
            metrics.tail_accuracy.push_back(group_mean(ht.tail));

            if (!opts.quiet) {
                std::printf("[task %zu/%zu] seen=%zu acc=%.2f%% lambda=%.4f loss=%.4f\n", t + 1,
                            tasks.num_tasks(), state.seen_classes.size(), eval.accuracy, report.lambda,
                            report.mean_loss);
                std::fflush(stdout);
            }

            if (!opts.out_dir.empty()) {
                std::error_code ec;
                std::filesystem::create_directories(opts.out_dir, ec);
                Checkpoint<T> ckpt;
                ckpt.model = state.model;
                ckpt.buffer = state.buffer;
                ckpt.task_index = state.task_index;
                ckpt.cumulative_size = state.cumulative_size;
                ckpt.config_hash = opts.config_hash;
                ckpt.rng_state = cfg.seed;
                save_checkpoint(ckpt, checkpoint_path(t + 1));
                flush_partial();
            }
        }
    } catch (...) {
        flush_partial();
        throw;
    }

    const auto t_stop = std::chrono::steady_clock::now();
    metrics.wall_time_sec = std::chrono::duration<double>(t_stop - t_start).count();
    metrics.finished_at = detail::timestamp_now();
    metrics.complete = true;
    if (!opts.out_dir.empty()) export_report(metrics, opts.out_dir);
    return metrics;
}

}  // namespace ltcl

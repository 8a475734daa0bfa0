#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltcl/common.hpp"
#include "ltcl/model.hpp"
#include "ltcl/tensor.hpp"

namespace ltcl {

// ---------------------------------------------------------------------------
// Evaluation: top-1 accuracy over the classes seen so far, argmax ties
// resolved to the lowest class index.
// ---------------------------------------------------------------------------

struct EvalBreakdown {
    double accuracy = 0.0;                   // percent
    std::vector<double> per_class;           // percent, indexed by class id, -1 for absent
    std::vector<std::size_t> per_class_n;
};

template <typename T>
EvalBreakdown evaluate_logits(const Tensor<T>& logits, const std::vector<int>& labels,
                              std::size_t num_seen) {
    if (logits.dim(0) != labels.size()) throw shape_error("evaluate: logits/labels mismatch");
    if (labels.empty()) throw parameter_error("evaluate: empty test set");
    EvalBreakdown out;
    out.per_class.assign(num_seen, -1.0);
    out.per_class_n.assign(num_seen, 0);
    std::vector<std::size_t> correct(num_seen, 0);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::size_t best = 0;
        T bv = logits.at2(i, 0);
        for (std::size_t c = 1; c < num_seen; ++c) {
            if (logits.at2(i, c) > bv) {  // strict: ties keep the lowest index
                bv = logits.at2(i, c);
                best = c;
            }
        }
        const auto lbl = static_cast<std::size_t>(labels[i]);
        ++out.per_class_n[lbl];
        if (best == lbl) {
            ++hits;
            ++correct[lbl];
        }
    }
    out.accuracy = 100.0 * static_cast<double>(hits) / static_cast<double>(labels.size());
    for (std::size_t c = 0; c < num_seen; ++c) {
        if (out.per_class_n[c] > 0) {
            out.per_class[c] = 100.0 * static_cast<double>(correct[c]) / static_cast<double>(out.per_class_n[c]);
        }
    }
    return out;
}

/// Top-1 accuracy (percent) of the bundle on a pre-rendered test batch.
template <typename T>
EvalBreakdown evaluate_seen(const Model<T>& model, const Tensor<T>& test_batch,
                            const std::vector<int>& labels) {
    if (labels.empty()) throw parameter_error("evaluate_seen: empty test set");
    const std::size_t num_seen = model.num_seen_classes();
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= num_seen) {
            throw parameter_error("evaluate_seen: label " + std::to_string(l) + " outside seen classes");
        }
    }
    // chunked to bound activation memory
    const std::size_t B = test_batch.dim(0);
    Tensor<T> logits({B, num_seen});
    const std::size_t chunk = 128;
    const std::size_t item = test_batch.numel() / B;
    for (std::size_t start = 0; start < B; start += chunk) {
        const std::size_t stop = std::min(B, start + chunk);
        Tensor<T> part({stop - start, test_batch.dim(1), test_batch.dim(2), test_batch.dim(3)});
        std::copy(test_batch.data() + start * item, test_batch.data() + stop * item, part.data());
        const auto res = model.extract(part);
        const Tensor<T> lg = model.classify(res.features);
        std::copy(lg.data(), lg.data() + lg.numel(), logits.data() + start * num_seen);
    }
    return evaluate_logits(logits, labels, num_seen);
}

inline double average_accuracy(const std::vector<double>& per_task) {
    if (per_task.empty()) throw parameter_error("average_accuracy: empty list");
    double s = 0.0;
    for (double a : per_task) s += a;
    return s / static_cast<double>(per_task.size());
}

// ---------------------------------------------------------------------------
// Run log: everything a report needs, serialized as metrics.json plus the
// two table files.
// ---------------------------------------------------------------------------
struct MetricsLog {
    std::string config_hash;
    std::string dataset_hash;
    std::uint64_t seed = 0;
    std::string preset;
    std::string method;  // "full", "ablate-fkd", "baseline-finetune", ...

    std::vector<double> per_task_accuracy;            // a_1..a_N, percent
    std::vector<std::vector<double>> per_class_accuracy;  // [task][class], -1 if absent
    std::vector<double> lambda_trace;                 // lambda used per task (1.0 on task 1)
    std::vector<std::size_t> task_sizes;              // |D_i|
    std::vector<std::size_t> cumulative_sizes;        // |D_{1:i}|
    std::vector<std::size_t> seen_classes;            // C_{1:i}
    std::vector<std::size_t> buffer_totals;           // stored exemplars after task i
    std::vector<double> head_accuracy;                // percent per task, -1 if no head class
    std::vector<double> tail_accuracy;
    double wall_time_sec = 0.0;
    std::string started_at;
    std::string finished_at;
    bool complete = false;

    [[nodiscard]] double average() const { return average_accuracy(per_task_accuracy); }
};

inline nlohmann::json metrics_to_json(const MetricsLog& m) {
    nlohmann::json j;
    j["config_hash"] = m.config_hash;
    j["dataset_hash"] = m.dataset_hash;
    j["seed"] = m.seed;
    j["preset"] = m.preset;
    j["method"] = m.method;
    j["per_task_accuracy"] = m.per_task_accuracy;
    j["average_accuracy"] =
        m.per_task_accuracy.empty() ? nlohmann::json() : nlohmann::json(m.average());
    j["per_class_accuracy"] = m.per_class_accuracy;
    j["lambda_trace"] = m.lambda_trace;
    j["task_sizes"] = m.task_sizes;
    j["cumulative_sizes"] = m.cumulative_sizes;
    j["seen_classes"] = m.seen_classes;
    j["buffer_totals"] = m.buffer_totals;
    j["head_accuracy"] = m.head_accuracy;
    j["tail_accuracy"] = m.tail_accuracy;
    j["wall_time_sec"] = m.wall_time_sec;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at;
    j["complete"] = m.complete;
    return j;
}

inline MetricsLog metrics_from_json(const nlohmann::json& j) {
    MetricsLog m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.dataset_hash = j.at("dataset_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.preset = j.value("preset", "");
    m.method = j.value("method", "");
    m.per_task_accuracy = j.at("per_task_accuracy").get<std::vector<double>>();
    m.per_class_accuracy = j.at("per_class_accuracy").get<std::vector<std::vector<double>>>();
    m.lambda_trace = j.at("lambda_trace").get<std::vector<double>>();
    m.task_sizes = j.at("task_sizes").get<std::vector<std::size_t>>();
    m.cumulative_sizes = j.at("cumulative_sizes").get<std::vector<std::size_t>>();
    m.seen_classes = j.at("seen_classes").get<std::vector<std::size_t>>();
    m.buffer_totals = j.value("buffer_totals", std::vector<std::size_t>{});
    m.head_accuracy = j.value("head_accuracy", std::vector<double>{});
    m.tail_accuracy = j.value("tail_accuracy", std::vector<double>{});
    m.wall_time_sec = j.value("wall_time_sec", 0.0);
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    m.complete = j.value("complete", false);
    return m;
}

/// Writes metrics.json (full precision), accuracy.csv (2 decimals) and
/// series.tsv (plot-ready task/accuracy pairs).
inline void export_report(const MetricsLog& m, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create report directory '" + out_dir + "': " + ec.message());

    {
        std::ofstream f(out_dir + "/metrics.json");
        if (!f) throw io_error("cannot write '" + out_dir + "/metrics.json'");
        f << metrics_to_json(m).dump(2) << '\n';
    }
    {
        std::ofstream f(out_dir + "/accuracy.csv");
        if (!f) throw io_error("cannot write '" + out_dir + "/accuracy.csv'");
        f << "task,accuracy\n";
        char buf[64];
        for (std::size_t i = 0; i < m.per_task_accuracy.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%zu,%.2f\n", i + 1, m.per_task_accuracy[i]);
            f << buf;
        }
        std::snprintf(buf, sizeof(buf), "A_M,%.2f\n", m.average());
        f << buf;
    }
    {
        std::ofstream f(out_dir + "/series.tsv");
        if (!f) throw io_error("cannot write '" + out_dir + "/series.tsv'");
        f << "task\taccuracy\n";
        f.precision(17);
        for (std::size_t i = 0; i < m.per_task_accuracy.size(); ++i) {
            f << (i + 1) << '\t' << m.per_task_accuracy[i] << '\n';
        }
    }
}

inline MetricsLog import_report(const std::string& dir) {
    std::ifstream f(dir + "/metrics.json");
    if (!f) throw io_error("cannot read '" + dir + "/metrics.json'");
    nlohmann::json j;
    f >> j;
    return metrics_from_json(j);
}

/// Head/tail split: classes whose training count reaches the exemplar budget
/// count as head. Partitions the class set exactly.
struct HeadTailSplit {
    std::vector<int> head;
    std::vector<int> tail;
};

inline HeadTailSplit head_tail_split(const std::vector<std::size_t>& train_counts, std::size_t budget) {
    HeadTailSplit out;
    for (std::size_t c = 0; c < train_counts.size(); ++c) {
        (train_counts[c] >= budget ? out.head : out.tail).push_back(static_cast<int>(c));
    }
    return out;
}

}  // namespace ltcl

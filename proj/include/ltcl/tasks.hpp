#pragma once

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "ltcl/common.hpp"
#include "ltcl/manifest.hpp"

namespace ltcl {

struct Task {
    std::vector<int> new_class_ids;          // sorted
    std::vector<ManifestRecord> train_records;
};

// ---------------------------------------------------------------------------
// Ordered class-disjoint tasks. Classes are dealt to tasks by a seeded
// permutation; records follow their class.
// ---------------------------------------------------------------------------
struct TaskSequence {
    std::vector<Task> tasks;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t num_tasks() const { return tasks.size(); }

    [[nodiscard]] std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> out;
        out.reserve(tasks.size());
        for (const auto& t : tasks) out.push_back(t.new_class_ids.size());
        return out;
    }

    /// Disjointness, coverage and record-membership invariants.
    void validate(std::size_t num_classes) const {
        std::set<int> all;
        for (const auto& t : tasks) {
            std::set<int> own(t.new_class_ids.begin(), t.new_class_ids.end());
            if (own.size() != t.new_class_ids.size()) throw validation_error("duplicate class within a task");
            for (int c : own) {
                if (!all.insert(c).second) throw validation_error("class " + std::to_string(c) + " assigned twice");
            }
            for (const auto& r : t.train_records) {
                if (!own.count(r.class_id)) {
                    throw validation_error("record '" + r.image_ref + "' not in its task's class set");
                }
            }
        }
        if (all.size() != num_classes) throw validation_error("tasks do not cover all classes");
        for (int c : all) {
            if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
                throw validation_error("task class id out of range");
            }
        }
    }
};

/// Per-task class counts for the even rule: floor(C/N) each, remainder added
/// to the first task.
inline std::vector<std::size_t> even_plus_remainder_first(std::size_t num_classes, std::size_t num_tasks) {
    if (num_tasks < 1) throw parameter_error("partition needs N >= 1");
    if (num_tasks > num_classes) throw parameter_error("partition needs N <= number of classes");
    std::vector<std::size_t> counts(num_tasks, num_classes / num_tasks);
    counts[0] += num_classes % num_tasks;
    return counts;
}

/// Partitions manifest classes into tasks with the given per-task class
/// counts. Class-to-task assignment is a seeded random permutation.
inline TaskSequence partition_tasks_explicit(const DatasetManifest& manifest,
                                             const std::vector<std::size_t>& per_task_counts,
                                             std::uint64_t seed) {
    const std::size_t C = manifest.num_classes();
    if (per_task_counts.empty()) throw parameter_error("partition needs at least one task");
    const std::size_t total = std::accumulate(per_task_counts.begin(), per_task_counts.end(), std::size_t{0});
    if (total != C) {
        throw parameter_error("per-task class counts sum to " + std::to_string(total) + ", expected " +
                              std::to_string(C));
    }
    for (std::size_t n : per_task_counts) {
        if (n == 0) throw parameter_error("per-task class counts must be positive");
    }

    std::vector<int> order(C);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::fork(seed, 0x7A5CULL);
    rng.shuffle(order);

    TaskSequence seq;
    seq.seed = seed;
    seq.tasks.resize(per_task_counts.size());
    std::vector<int> class_to_task(C, -1);
    std::size_t cursor = 0;
    for (std::size_t t = 0; t < per_task_counts.size(); ++t) {
        for (std::size_t k = 0; k < per_task_counts[t]; ++k) {
            const int cls = order[cursor++];
            seq.tasks[t].new_class_ids.push_back(cls);
            class_to_task[static_cast<std::size_t>(cls)] = static_cast<int>(t);
        }
        std::sort(seq.tasks[t].new_class_ids.begin(), seq.tasks[t].new_class_ids.end());
    }
    for (const auto& r : manifest.records) {
        if (r.split != Split::train) continue;
        seq.tasks[static_cast<std::size_t>(class_to_task[static_cast<std::size_t>(r.class_id)])]
            .train_records.push_back(r);
    }
    seq.validate(C);
    return seq;
}

inline TaskSequence partition_tasks(const DatasetManifest& manifest, std::size_t num_tasks,
                                    std::uint64_t seed) {
    return partition_tasks_explicit(manifest, even_plus_remainder_first(manifest.num_classes(), num_tasks),
                                    seed);
}

// ---------------------------------------------------------------------------
// Split recipes for the five benchmark protocols, as partition templates.
// ---------------------------------------------------------------------------
struct SplitPreset {
    std::string name;
    std::size_t num_classes;
    std::size_t num_tasks;
};

inline const std::vector<SplitPreset>& split_presets() {
    static const std::vector<SplitPreset> presets = {
        {"food101lt-n5", 101, 5},   {"food101lt-n10", 101, 10}, {"food101lt-n20", 101, 20},
        {"vfnlt-n7", 74, 7},        {"vfn186-n9", 186, 9},
    };
    return presets;
}

inline const SplitPreset& find_split_preset(const std::string& name) {
    for (const auto& p : split_presets()) {
        if (p.name == name) return p;
    }
    throw parameter_error("unknown split preset '" + name + "'");
}

inline std::vector<std::size_t> preset_partition_counts(const std::string& name) {
    const auto& p = find_split_preset(name);
    return even_plus_remainder_first(p.num_classes, p.num_tasks);
}

}  // namespace ltcl

#pragma once

#include <cstdlib>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltcl/common.hpp"
#include "ltcl/longtail.hpp"
#include "ltcl/manifest.hpp"
#include "ltcl/synthetic.hpp"
#include "ltcl/tasks.hpp"
#include "ltcl/trainer.hpp"

namespace ltcl {

// ---------------------------------------------------------------------------
// Profile / partition files (dataset module external interfaces).
// ---------------------------------------------------------------------------

inline nlohmann::json profile_to_json(const LongTailProfile& p) {
    return nlohmann::json{{"num_classes", p.num_classes},
                          {"counts", p.counts},
                          {"n_max", p.n_max},
                          {"n_min", p.n_min},
                          {"rho", {{"num", p.rho.num}, {"den", p.rho.den}}},
                          {"profile_kind", to_string(p.kind)}};
}

inline LongTailProfile profile_from_json(const nlohmann::json& j) {
    LongTailProfile p;
    p.num_classes = j.at("num_classes").get<std::size_t>();
    p.counts = j.at("counts").get<std::vector<std::size_t>>();
    p.n_max = j.at("n_max").get<std::size_t>();
    p.n_min = j.at("n_min").get<std::size_t>();
    p.rho = Rational(j.at("rho").at("num").get<std::int64_t>(), j.at("rho").at("den").get<std::int64_t>());
    p.kind = profile_kind_from_string(j.at("profile_kind").get<std::string>());
    p.validate();
    return p;
}

inline void save_profile(const LongTailProfile& p, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw io_error("cannot write profile '" + path + "'");
    f << profile_to_json(p).dump(2) << '\n';
}

inline LongTailProfile load_profile(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot read profile '" + path + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw parse_error("profile '" + path + "': " + e.what());
    }
    return profile_from_json(j);
}

inline void save_partition(const TaskSequence& seq, const std::string& path) {
    nlohmann::json j;
    j["seed"] = seq.seed;
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : seq.tasks) tasks.push_back(t.new_class_ids);
    j["task_class_ids"] = std::move(tasks);
    std::ofstream f(path);
    if (!f) throw io_error("cannot write partition '" + path + "'");
    f << j.dump(2) << '\n';
}

/// Reassembles a TaskSequence from a partition file plus the manifest whose
/// train records it indexes.
inline TaskSequence load_partition(const std::string& path, const DatasetManifest& manifest) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot read partition '" + path + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw parse_error("partition '" + path + "': " + e.what());
    }
    TaskSequence seq;
    seq.seed = j.at("seed").get<std::uint64_t>();
    std::vector<int> class_to_task(manifest.num_classes(), -1);
    for (const auto& ids : j.at("task_class_ids")) {
        Task t;
        t.new_class_ids = ids.get<std::vector<int>>();
        for (int c : t.new_class_ids) {
            if (c < 0 || static_cast<std::size_t>(c) >= manifest.num_classes()) {
                throw parse_error("partition '" + path + "': class " + std::to_string(c) + " out of range");
            }
            class_to_task[static_cast<std::size_t>(c)] = static_cast<int>(seq.tasks.size());
        }
        seq.tasks.push_back(std::move(t));
    }
    for (const auto& r : manifest.records) {
        if (r.split != Split::train) continue;
        const int t = class_to_task[static_cast<std::size_t>(r.class_id)];
        if (t < 0) throw parse_error("partition '" + path + "': class " + std::to_string(r.class_id) + " unassigned");
        seq.tasks[static_cast<std::size_t>(t)].train_records.push_back(r);
    }
    seq.validate(manifest.num_classes());
    return seq;
}

// ---------------------------------------------------------------------------
// Run config file: one JSON document with sections {dataset, tasks, model,
// method, trainer, output}. Unknown keys are rejected; LTCL_DATA_DIR,
// LTCL_OUT_DIR and LTCL_SEED override their fields.
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    std::uint64_t seed = 1;
    std::size_t classes = 10;
    std::size_t n_per_class = 500;
    std::size_t test_per_class = 50;
};

struct ProfileSpec {
    ProfileKind kind = ProfileKind::exponential;
    std::size_t n_max = 500;
    double rho = 50.0;
    std::vector<std::size_t> explicit_counts;
};

struct CliConfig {
    RunConfig run;

    std::string manifest_path;             // xor synthetic
    std::optional<SyntheticSpec> synthetic;
    std::optional<ProfileSpec> profile;    // optional long-tail subsample
    std::string profile_path;
    std::string data_dir;
    std::uint64_t dataset_seed = 0;        // defaults to run.seed

    std::string partition_path;            // else one of:
    std::size_t num_tasks = 0;
    std::vector<std::size_t> explicit_task_counts;
    std::string split_preset;
    std::uint64_t task_seed = 0;           // defaults to run.seed

    std::string out_dir;
    bool resume = true;
    bool quiet = false;
    bool dump_synthetics = false;

    std::string config_hash;               // of the effective config
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                                const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const auto& a : allowed) {
            if (key == a) { ok = true; break; }
        }
        if (!ok) throw validation_error("unknown key '" + key + "' in section '" + where + "'");
    }
}

inline std::optional<std::string> env_var(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

}  // namespace detail

/// Canonical JSON of the effective configuration; the hash is independent of
/// key order in the source file because nlohmann objects sort keys.
inline nlohmann::json effective_config_json(const CliConfig& c) {
    nlohmann::json j;
    j["dataset"]["data_dir"] = c.data_dir;
    j["dataset"]["seed"] = c.dataset_seed;
    if (!c.manifest_path.empty()) j["dataset"]["manifest"] = c.manifest_path;
    if (c.synthetic) {
        j["dataset"]["synthetic"] = {{"seed", c.synthetic->seed},
                                     {"classes", c.synthetic->classes},
                                     {"n_per_class", c.synthetic->n_per_class},
                                     {"test_per_class", c.synthetic->test_per_class}};
    }
    if (!c.profile_path.empty()) j["dataset"]["profile"] = c.profile_path;
    if (c.profile) {
        nlohmann::json pj{{"kind", to_string(c.profile->kind)}};
        if (c.profile->kind == ProfileKind::explicit_counts) {
            pj["counts"] = c.profile->explicit_counts;
        } else {
            pj["n_max"] = c.profile->n_max;
            pj["rho"] = c.profile->rho;
        }
        j["dataset"]["profile"] = pj;
    }

    j["tasks"]["seed"] = c.task_seed;
    if (!c.partition_path.empty()) j["tasks"]["partition"] = c.partition_path;
    if (c.num_tasks > 0) j["tasks"]["num_tasks"] = c.num_tasks;
    if (!c.explicit_task_counts.empty()) j["tasks"]["explicit_counts"] = c.explicit_task_counts;
    if (!c.split_preset.empty()) j["tasks"]["preset"] = c.split_preset;

    j["model"]["input_hw"] = c.run.backbone.input_hw;
    j["model"]["channels"] = c.run.backbone.channels;
    j["model"]["center_input"] = c.run.backbone.center_input;

    j["method"]["use_fkd"] = c.run.flags.use_fkd;
    j["method"]["use_cam_cutmix"] = c.run.flags.use_cam_cutmix;
    j["method"]["use_balanced_softmax"] = c.run.flags.use_balanced_softmax;
    j["method"]["baseline"] = to_string(c.run.baseline);
    j["method"]["distill_mode"] = to_string(c.run.distill.mode);
    j["method"]["temperature"] = c.run.distill.temperature;
    j["method"]["alpha"] = c.run.distill.alpha;
    j["method"]["bs_variant"] = to_string(c.run.bs_variant);
    j["method"]["selector"] = to_string(c.run.selector);

    j["trainer"]["preset"] = c.run.preset;
    j["trainer"]["epochs_per_task"] = c.run.epochs_per_task;
    j["trainer"]["base_lr"] = c.run.base_lr;
    j["trainer"]["lr_decay_epochs"] = c.run.lr_decay_epochs;
    j["trainer"]["lr_decay_factor"] = c.run.lr_decay_factor;
    j["trainer"]["batch_size"] = c.run.batch_size;
    j["trainer"]["min_batches_per_epoch"] = c.run.min_batches_per_epoch;
    j["trainer"]["clip_grad_norm"] = c.run.clip_grad_norm;
    j["trainer"]["weight_decay"] = c.run.weight_decay;
    j["trainer"]["momentum"] = c.run.momentum;
    j["trainer"]["seed"] = c.run.seed;
    j["trainer"]["memory_budget"] = c.run.memory_budget;
    j["trainer"]["deterministic"] = c.run.deterministic;
    j["trainer"]["augment_train"] = c.run.augment_train;

    j["output"]["out_dir"] = c.out_dir;
    j["output"]["resume"] = c.resume;
    j["output"]["quiet"] = c.quiet;
    j["output"]["dump_synthetics"] = c.dump_synthetics;
    return j;
}

inline std::string config_hash_of(const nlohmann::json& effective) {
    return hex64(fnv1a(effective.dump()));
}

inline CliConfig parse_config_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j, {"dataset", "tasks", "model", "method", "trainer", "output"}, "top level");

    CliConfig c;

    // trainer first: the preset seeds the defaults
    if (j.contains("trainer")) {
        const auto& t = j.at("trainer");
        detail::reject_unknown_keys(t,
                                    {"preset", "epochs_per_task", "base_lr", "lr_decay_epochs",
                                     "lr_decay_factor", "batch_size", "min_batches_per_epoch",
                                     "clip_grad_norm", "weight_decay", "momentum", "seed",
                                     "memory_budget", "deterministic", "augment_train"},
                                    "trainer");
        c.run = preset_config(t.value("preset", std::string("desk")));
        if (t.contains("epochs_per_task")) c.run.epochs_per_task = t.at("epochs_per_task").get<std::size_t>();
        if (t.contains("base_lr")) c.run.base_lr = t.at("base_lr").get<double>();
        if (t.contains("lr_decay_epochs")) c.run.lr_decay_epochs = t.at("lr_decay_epochs").get<std::size_t>();
        if (t.contains("lr_decay_factor")) c.run.lr_decay_factor = t.at("lr_decay_factor").get<double>();
        if (t.contains("batch_size")) c.run.batch_size = t.at("batch_size").get<std::size_t>();
        if (t.contains("min_batches_per_epoch")) {
            c.run.min_batches_per_epoch = t.at("min_batches_per_epoch").get<std::size_t>();
        }
        if (t.contains("clip_grad_norm")) c.run.clip_grad_norm = t.at("clip_grad_norm").get<double>();
        if (t.contains("weight_decay")) c.run.weight_decay = t.at("weight_decay").get<double>();
        if (t.contains("momentum")) c.run.momentum = t.at("momentum").get<double>();
        if (t.contains("seed")) c.run.seed = t.at("seed").get<std::uint64_t>();
        if (t.contains("memory_budget")) c.run.memory_budget = t.at("memory_budget").get<std::size_t>();
        if (t.contains("deterministic")) c.run.deterministic = t.at("deterministic").get<bool>();
        if (t.contains("augment_train")) c.run.augment_train = t.at("augment_train").get<bool>();
    } else {
        c.run = desk_preset();
    }

    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown_keys(m, {"input_hw", "channels", "center_input"}, "model");
        if (m.contains("input_hw")) c.run.backbone.input_hw = m.at("input_hw").get<std::size_t>();
        if (m.contains("channels")) c.run.backbone.channels = m.at("channels").get<std::vector<std::size_t>>();
        if (m.contains("center_input")) c.run.backbone.center_input = m.at("center_input").get<bool>();
    }

    if (j.contains("method")) {
        const auto& m = j.at("method");
        detail::reject_unknown_keys(m,
                                    {"use_fkd", "use_cam_cutmix", "use_balanced_softmax", "baseline",
                                     "distill_mode", "temperature", "alpha", "bs_variant", "selector"},
                                    "method");
        if (m.contains("use_fkd")) c.run.flags.use_fkd = m.at("use_fkd").get<bool>();
        if (m.contains("use_cam_cutmix")) c.run.flags.use_cam_cutmix = m.at("use_cam_cutmix").get<bool>();
        if (m.contains("use_balanced_softmax")) {
            c.run.flags.use_balanced_softmax = m.at("use_balanced_softmax").get<bool>();
        }
        if (m.contains("baseline")) c.run.baseline = baseline_from_string(m.at("baseline").get<std::string>());
        if (m.contains("distill_mode")) {
            c.run.distill.mode = distill_mode_from_string(m.at("distill_mode").get<std::string>());
        }
        if (m.contains("temperature")) c.run.distill.temperature = m.at("temperature").get<double>();
        if (m.contains("alpha")) c.run.distill.alpha = m.at("alpha").get<double>();
        if (m.contains("bs_variant")) c.run.bs_variant = bs_variant_from_string(m.at("bs_variant").get<std::string>());
        if (m.contains("selector")) c.run.selector = selector_from_string(m.at("selector").get<std::string>());
    }

    if (!j.contains("dataset")) throw validation_error("config is missing the 'dataset' section");
    {
        const auto& d = j.at("dataset");
        detail::reject_unknown_keys(d, {"manifest", "synthetic", "profile", "data_dir", "seed"}, "dataset");
        if (d.contains("manifest")) c.manifest_path = d.at("manifest").get<std::string>();
        if (d.contains("synthetic")) {
            const auto& s = d.at("synthetic");
            detail::reject_unknown_keys(s, {"seed", "classes", "n_per_class", "test_per_class"},
                                        "dataset.synthetic");
            SyntheticSpec spec;
            spec.seed = s.value("seed", std::uint64_t{0});
            spec.classes = s.at("classes").get<std::size_t>();
            spec.n_per_class = s.at("n_per_class").get<std::size_t>();
            spec.test_per_class = s.value("test_per_class", std::size_t{50});
            c.synthetic = spec;
        }
        if (d.contains("profile")) {
            if (d.at("profile").is_string()) {
                c.profile_path = d.at("profile").get<std::string>();
            } else {
                const auto& p = d.at("profile");
                detail::reject_unknown_keys(p, {"kind", "n_max", "rho", "counts"}, "dataset.profile");
                ProfileSpec spec;
                spec.kind = profile_kind_from_string(p.at("kind").get<std::string>());
                if (spec.kind == ProfileKind::explicit_counts) {
                    spec.explicit_counts = p.at("counts").get<std::vector<std::size_t>>();
                } else {
                    spec.n_max = p.at("n_max").get<std::size_t>();
                    spec.rho = p.at("rho").get<double>();
                }
                c.profile = spec;
            }
        }
        if (d.contains("data_dir")) c.data_dir = d.at("data_dir").get<std::string>();
        if (d.contains("seed")) c.dataset_seed = d.at("seed").get<std::uint64_t>();
        if (c.manifest_path.empty() == !c.synthetic.has_value()) {
            throw validation_error("dataset section needs exactly one of 'manifest' or 'synthetic'");
        }
    }

    if (!j.contains("tasks")) throw validation_error("config is missing the 'tasks' section");
    {
        const auto& t = j.at("tasks");
        detail::reject_unknown_keys(t, {"partition", "num_tasks", "explicit_counts", "preset", "seed"},
                                    "tasks");
        if (t.contains("partition")) c.partition_path = t.at("partition").get<std::string>();
        if (t.contains("num_tasks")) c.num_tasks = t.at("num_tasks").get<std::size_t>();
        if (t.contains("explicit_counts")) {
            c.explicit_task_counts = t.at("explicit_counts").get<std::vector<std::size_t>>();
        }
        if (t.contains("preset")) c.split_preset = t.at("preset").get<std::string>();
        if (t.contains("seed")) c.task_seed = t.at("seed").get<std::uint64_t>();
        const int ways = (!c.partition_path.empty()) + (c.num_tasks > 0) +
                         (!c.explicit_task_counts.empty()) + (!c.split_preset.empty());
        if (ways != 1) {
            throw validation_error("tasks section needs exactly one of partition/num_tasks/explicit_counts/preset");
        }
    }

    if (j.contains("output")) {
        const auto& o = j.at("output");
        detail::reject_unknown_keys(o, {"out_dir", "resume", "quiet", "dump_synthetics"}, "output");
        if (o.contains("out_dir")) c.out_dir = o.at("out_dir").get<std::string>();
        if (o.contains("resume")) c.resume = o.at("resume").get<bool>();
        if (o.contains("quiet")) c.quiet = o.at("quiet").get<bool>();
        if (o.contains("dump_synthetics")) c.dump_synthetics = o.at("dump_synthetics").get<bool>();
    }

    // env overrides, then seed defaulting
    if (auto v = detail::env_var("LTCL_DATA_DIR")) c.data_dir = *v;
    if (auto v = detail::env_var("LTCL_OUT_DIR")) c.out_dir = *v;
    if (auto v = detail::env_var("LTCL_SEED")) {
        try {
            c.run.seed = std::stoull(*v);
        } catch (const std::exception&) {
            throw parameter_error("LTCL_SEED is not an integer: '" + *v + "'");
        }
    }
    if (c.dataset_seed == 0) c.dataset_seed = c.run.seed;
    if (c.task_seed == 0) c.task_seed = c.run.seed;
    if (c.synthetic && c.synthetic->seed == 0) c.synthetic->seed = c.dataset_seed;
    if (c.dump_synthetics && !c.out_dir.empty()) {
        c.run.dump_synthetics_dir = c.out_dir + "/synthetics";
    }

    c.run.validate();
    c.config_hash = config_hash_of(effective_config_json(c));
    return c;
}

inline CliConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot read config '" + path + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw parse_error("config '" + path + "': " + e.what());
    }
    return parse_config_json(j);
}

// ---------------------------------------------------------------------------
// Dataset materialization shared by the train and gen-data commands.
// ---------------------------------------------------------------------------

struct MaterializedDataset {
    DatasetManifest manifest;
    TaskSequence tasks;
    std::optional<LongTailProfile> profile;
};

inline MaterializedDataset materialize_dataset(const CliConfig& c) {
    MaterializedDataset out;

    if (c.synthetic) {
        out.manifest = synth::make_manifest(c.synthetic->seed, c.synthetic->classes,
                                            c.synthetic->n_per_class, c.synthetic->test_per_class);
    } else {
        auto loaded = load_manifest(c.manifest_path);
        out.manifest = std::move(loaded.manifest);
    }

    if (!c.profile_path.empty()) {
        out.profile = load_profile(c.profile_path);
    } else if (c.profile) {
        if (c.profile->kind == ProfileKind::explicit_counts) {
            out.profile = make_explicit_profile(c.profile->explicit_counts);
        } else {
            out.profile = build_longtail_profile(out.manifest.num_classes(), c.profile->n_max,
                                                 c.profile->rho, c.profile->kind);
        }
    }
    if (out.profile) {
        std::vector<int> order(out.manifest.num_classes());
        std::iota(order.begin(), order.end(), 0);
        Rng rng = Rng::fork(c.dataset_seed, 0x0DDE5ULL);
        rng.shuffle(order);
        out.manifest = apply_longtail(out.manifest, *out.profile, order, c.dataset_seed);
    }

    if (!c.partition_path.empty()) {
        out.tasks = load_partition(c.partition_path, out.manifest);
    } else if (!c.split_preset.empty()) {
        out.tasks = partition_tasks_explicit(out.manifest, preset_partition_counts(c.split_preset),
                                             c.task_seed);
    } else if (!c.explicit_task_counts.empty()) {
        out.tasks = partition_tasks_explicit(out.manifest, c.explicit_task_counts, c.task_seed);
    } else {
        out.tasks = partition_tasks(out.manifest, c.num_tasks, c.task_seed);
    }
    return out;
}

}  // namespace ltcl

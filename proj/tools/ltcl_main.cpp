// ltcl: long-tailed continual learning harness.
//   gen-data   synthesize/subsample a corpus, write manifest + profile + partition
//   train      run the continual loop from a config file, write report + checkpoints
//   report     merge run reports into a comparison table

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ltcl/config.hpp"
#include "ltcl/memory.hpp"
#include "ltcl/metrics.hpp"
#include "ltcl/trainer.hpp"

namespace {

using ltcl::CliConfig;

std::map<std::string, std::string> parse_kv(const std::vector<std::string>& tokens) {
    std::map<std::string, std::string> kv;
    for (const auto& tok : tokens) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) {
            throw ltcl::parameter_error("expected key=value, got '" + tok + "'");
        }
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

std::string pick(std::map<std::string, std::string>& kv, const std::string& key,
                 const std::string& fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::string v = it->second;
    kv.erase(it);
    return v;
}

void print_count_table(const ltcl::DatasetManifest& manifest) {
    const auto counts = manifest.class_counts(ltcl::Split::train);
    const auto test_counts = manifest.class_counts(ltcl::Split::test);
    std::printf("%-6s %-20s %8s %8s\n", "class", "name", "train", "test");
    for (std::size_t c = 0; c < manifest.num_classes(); ++c) {
        std::printf("%-6zu %-20s %8zu %8zu\n", c, manifest.class_names[c].c_str(), counts[c],
                    test_counts[c]);
    }
}

int cmd_gen_data(const std::vector<std::string>& synthetic_kv, const std::string& preset,
                 const std::string& source_manifest, const std::string& out_dir,
                 std::uint64_t seed) {
    namespace fs = std::filesystem;

    ltcl::DatasetManifest manifest;
    std::optional<ltcl::LongTailProfile> profile;
    std::size_t num_tasks = 0;

    if (!synthetic_kv.empty()) {
        auto kv = parse_kv(synthetic_kv);
        const std::size_t classes = std::stoull(pick(kv, "classes", "10"));
        const std::size_t n_max = std::stoull(pick(kv, "n-max", "500"));
        const double rho = std::stod(pick(kv, "rho", "50"));
        num_tasks = std::stoull(pick(kv, "tasks", "5"));
        const std::size_t test_per_class = std::stoull(pick(kv, "test-per-class", "50"));
        const std::string kind = pick(kv, "kind", "exponential");
        if (!kv.empty()) {
            throw ltcl::parameter_error("unknown --synthetic key '" + kv.begin()->first + "'");
        }
        manifest = ltcl::synth::make_manifest(seed, classes, n_max, test_per_class);
        profile = ltcl::build_longtail_profile(classes, n_max, rho,
                                               ltcl::profile_kind_from_string(kind));
    } else if (!source_manifest.empty()) {
        manifest = ltcl::load_manifest(source_manifest).manifest;
    } else {
        throw ltcl::parameter_error("gen-data needs --synthetic or --manifest as a source");
    }

    std::vector<std::size_t> task_counts;
    if (!preset.empty()) {
        task_counts = ltcl::preset_partition_counts(preset);
        const auto& p = ltcl::find_split_preset(preset);
        if (manifest.num_classes() != p.num_classes) {
            throw ltcl::parameter_error("preset '" + preset + "' expects " +
                                        std::to_string(p.num_classes) + " classes, manifest has " +
                                        std::to_string(manifest.num_classes()));
        }
    } else {
        if (num_tasks == 0) num_tasks = 5;
        task_counts = ltcl::even_plus_remainder_first(manifest.num_classes(), num_tasks);
    }

    if (profile) {
        std::vector<int> order(manifest.num_classes());
        std::iota(order.begin(), order.end(), 0);
        ltcl::Rng rng = ltcl::Rng::fork(seed, 0x0DDE5ULL);
        rng.shuffle(order);
        manifest = ltcl::apply_longtail(manifest, *profile, order, seed);
    }
    const ltcl::TaskSequence tasks = ltcl::partition_tasks_explicit(manifest, task_counts, seed);

    // All validation passed; only now touch the filesystem.
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ltcl::io_error("cannot create '" + out_dir + "': " + ec.message());
    ltcl::save_manifest(manifest, out_dir + "/manifest.tsv");
    if (profile) ltcl::save_profile(*profile, out_dir + "/profile.json");
    ltcl::save_partition(tasks, out_dir + "/partition.json");

    print_count_table(manifest);
    std::printf("task class counts:");
    for (std::size_t n : tasks.class_counts()) std::printf(" %zu", n);
    std::printf("\nwrote %s/{manifest.tsv%s,partition.json}\n", out_dir.c_str(),
                profile ? ",profile.json" : "");
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& ablate, const std::string& baseline,
              const std::string& out_dir_override, bool no_resume) {
    CliConfig cfg = ltcl::parse_config_file(config_path);

    if (!ablate.empty()) {
        if (cfg.run.baseline != ltcl::BaselineMode::none) {
            throw ltcl::parameter_error("--ablate only applies to the full method");
        }
        if (ablate == "fkd") {
            cfg.run.flags.use_fkd = false;
        } else if (ablate == "cam") {
            cfg.run.flags.use_cam_cutmix = false;
        } else if (ablate == "bs") {
            cfg.run.flags.use_balanced_softmax = false;
        } else {
            throw ltcl::parameter_error("--ablate must be one of fkd|cam|bs");
        }
    }
    if (!baseline.empty()) {
        cfg.run.baseline = ltcl::baseline_from_string(baseline);
        if (cfg.run.baseline == ltcl::BaselineMode::finetune) {
            cfg.run.flags = {false, false, false};
        }
    }
    if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
    if (no_resume) cfg.resume = false;
    cfg.config_hash = ltcl::config_hash_of(ltcl::effective_config_json(cfg));

    const auto data = ltcl::materialize_dataset(cfg);
    const ltcl::ImageProvider provider(cfg.run.backbone.input_hw, cfg.data_dir);

    ltcl::RunOptions opts;
    opts.out_dir = cfg.out_dir;
    opts.config_hash = cfg.config_hash;
    opts.resume = cfg.resume;
    opts.quiet = cfg.quiet;

    const ltcl::MetricsLog metrics =
        ltcl::run_continual<float>(cfg.run, data.manifest, data.tasks, provider, opts);

    std::printf("A_M = %.2f%% over %zu tasks (config %s, dataset %s)\n", metrics.average(),
                metrics.per_task_accuracy.size(), metrics.config_hash.c_str(),
                metrics.dataset_hash.c_str());
    if (!cfg.out_dir.empty()) std::printf("report written to %s\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& merged_series_path) {
    std::vector<ltcl::MetricsLog> logs;
    for (const auto& dir : dirs) logs.push_back(ltcl::import_report(dir));

    const std::size_t n_tasks = logs.front().per_task_accuracy.size();
    for (std::size_t i = 1; i < logs.size(); ++i) {
        if (logs[i].per_task_accuracy.size() != n_tasks) {
            std::fprintf(stderr,
                         "refusing to merge: '%s' has %zu tasks, '%s' has %zu; "
                         "compare runs over the same task split\n",
                         dirs[i].c_str(), logs[i].per_task_accuracy.size(), dirs[0].c_str(), n_tasks);
            return 2;
        }
    }

    const bool comparable =
        std::all_of(logs.begin(), logs.end(),
                    [&](const auto& l) { return l.dataset_hash == logs.front().dataset_hash; });
    const double base_am = logs.front().average();

    std::vector<std::size_t> order(logs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return logs[a].average() > logs[b].average(); });

    std::printf("%-28s %-10s %8s", "run", "method", "A_M");
    if (comparable && logs.size() > 1) std::printf(" %8s", "delta");
    std::printf("\n");
    for (std::size_t i : order) {
        std::printf("%-28s %-10s %8.2f", dirs[i].c_str(), logs[i].method.c_str(), logs[i].average());
        if (comparable && logs.size() > 1) std::printf(" %+8.2f", logs[i].average() - base_am);
        std::printf("\n");
    }
    if (!comparable && logs.size() > 1) {
        std::printf("(dataset hashes differ; no delta column)\n");
    }

    if (!merged_series_path.empty()) {
        std::ofstream f(merged_series_path);
        if (!f) throw ltcl::io_error("cannot write '" + merged_series_path + "'");
        f << "task";
        for (const auto& dir : dirs) f << '\t' << dir;
        f << '\n';
        f.precision(17);
        for (std::size_t t = 0; t < n_tasks; ++t) {
            f << (t + 1);
            for (const auto& log : logs) f << '\t' << log.per_task_accuracy[t];
            f << '\n';
        }
        std::printf("merged series written to %s\n", merged_series_path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"long-tailed continual learning harness"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate manifest, profile and task partition files");
    std::vector<std::string> synthetic_kv;
    std::string gen_preset, gen_manifest, gen_out = "data";
    std::uint64_t gen_seed = 1;
    gen->add_option("--synthetic", synthetic_kv,
                    "synthetic corpus spec: classes=10 n-max=500 rho=50 tasks=5 [kind=exponential] "
                    "[test-per-class=50]")
        ->expected(-1);
    gen->add_option("--preset", gen_preset, "split preset: food101lt-n5|n10|n20, vfnlt-n7, vfn186-n9");
    gen->add_option("--manifest", gen_manifest, "source manifest to partition/subsample");
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--seed", gen_seed, "generation seed");

    // train
    auto* train = app.add_subcommand("train", "run continual training from a config file");
    std::string cfg_path, ablate, baseline, out_override;
    bool no_resume = false;
    train->add_option("-c,--config", cfg_path, "run config JSON")->required();
    train->add_option("--ablate", ablate, "disable one component: fkd|cam|bs");
    train->add_option("--baseline", baseline, "baseline mode: finetune|logit_kd");
    train->add_option("--out", out_override, "override output.out_dir");
    train->add_flag("--no-resume", no_resume, "ignore existing checkpoints");

    // report
    auto* report = app.add_subcommand("report", "merge A_M tables across report directories");
    std::vector<std::string> report_dirs;
    std::string merged_series;
    report->add_option("dirs", report_dirs, "report directories")->required()->expected(-1);
    report->add_option("--series", merged_series, "write a merged per-task series TSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(synthetic_kv, gen_preset, gen_manifest, gen_out, gen_seed);
        if (train->parsed()) return cmd_train(cfg_path, ablate, baseline, out_override, no_resume);
        if (report->parsed()) return cmd_report(report_dirs, merged_series);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

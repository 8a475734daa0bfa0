#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "ltcl/metrics.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;
};

CmdResult run_cli(const std::string& args) {
    static int counter = 0;
    const auto log = fs::temp_directory_path() / ("ltcl_cli_out_" + std::to_string(counter++) + ".log");
    const std::string cmd = std::string("\"") + LTCL_CLI_PATH + "\" " + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CmdResult res;
    res.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(log);
    res.output.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return res;
}

std::string fresh_dir(const std::string& name) {
    static int counter = 0;
    const auto dir =
        fs::temp_directory_path() / ("ltcl_cli_" + name + "_" + std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

// config sized to finish in a couple of seconds
std::string write_tiny_config(const std::string& dir, std::uint64_t seed = 5) {
    nlohmann::json j = {
        {"dataset", {{"synthetic", {{"classes", 4}, {"n_per_class", 10}, {"test_per_class", 3}}}}},
        {"tasks", {{"num_tasks", 2}}},
        {"model", {{"input_hw", 16}, {"channels", {4, 8}}}},
        {"trainer",
         {{"preset", "desk"},
          {"seed", seed},
          {"epochs_per_task", 2},
          {"min_batches_per_epoch", 2},
          {"batch_size", 8},
          {"memory_budget", 2}}},
        {"output", {{"out_dir", dir + "/run"}, {"quiet", true}}},
    };
    const std::string path = dir + "/config.json";
    std::ofstream f(path);
    f << j.dump(2);
    return path;
}

}  // namespace

TEST_CASE("cli: gen-data synthesizes a desk corpus") {
    const auto dir = fresh_dir("gendata");
    const auto res = run_cli("gen-data --synthetic classes=10 n-max=40 rho=8 tasks=5 "
                             "test-per-class=2 --seed 3 --out " + dir);
    CHECK(res.exit_code == 0);
    CHECK(fs::exists(dir + "/manifest.tsv"));
    CHECK(fs::exists(dir + "/profile.json"));
    CHECK(fs::exists(dir + "/partition.json"));
    CHECK(res.output.find("task class counts: 2 2 2 2 2") != std::string::npos);
}

TEST_CASE("cli: gen-data preset partitions a 101-class manifest") {
    const auto dir = fresh_dir("preset");
    // build the source manifest
    {
        std::ofstream f(dir + "/src.tsv");
        f << "#classes: ";
        for (int c = 0; c < 101; ++c) f << (c ? "," : "") << "c" << c;
        f << "\n";
        for (int c = 0; c < 101; ++c) {
            f << "img" << c << "\t" << c << "\ttrain\n";
            f << "tst" << c << "\t" << c << "\ttest\n";
        }
    }
    const auto res = run_cli("gen-data --preset food101lt-n10 --manifest " + dir + "/src.tsv --out " +
                             dir + "/out");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("task class counts: 11 10 10 10 10 10 10 10 10 10") != std::string::npos);
}

TEST_CASE("cli: gen-data without a source fails cleanly, no partial files") {
    const auto dir = fresh_dir("nosrc");
    const auto res = run_cli("gen-data --out " + dir + "/out");
    CHECK(res.exit_code != 0);
    CHECK_FALSE(fs::exists(dir + "/out/manifest.tsv"));
    CHECK_FALSE(fs::exists(dir + "/out/partition.json"));
}

TEST_CASE("cli: train writes a complete report; ablation shares the dataset hash") {
    const auto dir = fresh_dir("train");
    const auto cfg = write_tiny_config(dir);

    const auto res = run_cli("train -c " + cfg);
    CHECK(res.exit_code == 0);
    REQUIRE(fs::exists(dir + "/run/metrics.json"));
    CHECK(fs::exists(dir + "/run/accuracy.csv"));
    CHECK(fs::exists(dir + "/run/series.tsv"));
    const auto full = ltcl::import_report(dir + "/run");
    CHECK(full.complete);
    CHECK(full.method == "full");

    const auto ablate = run_cli("train -c " + cfg + " --ablate fkd --out " + dir + "/run_nofkd");
    CHECK(ablate.exit_code == 0);
    const auto nofkd = ltcl::import_report(dir + "/run_nofkd");
    CHECK(nofkd.method == "full-no_fkd");
    CHECK(nofkd.dataset_hash == full.dataset_hash);
    CHECK(nofkd.config_hash != full.config_hash);

    const auto ft = run_cli("train -c " + cfg + " --baseline finetune --out " + dir + "/run_ft");
    CHECK(ft.exit_code == 0);
    const auto finetune = ltcl::import_report(dir + "/run_ft");
    CHECK(finetune.method == "baseline-finetune");
    CHECK(finetune.dataset_hash == full.dataset_hash);
}

TEST_CASE("cli: train determinism across invocations") {
    const auto dir = fresh_dir("det");
    const auto cfg = write_tiny_config(dir, 7);
    CHECK(run_cli("train -c " + cfg + " --out " + dir + "/a").exit_code == 0);
    CHECK(run_cli("train -c " + cfg + " --out " + dir + "/b").exit_code == 0);
    const auto a = ltcl::import_report(dir + "/a");
    const auto b = ltcl::import_report(dir + "/b");
    REQUIRE(a.per_task_accuracy.size() == b.per_task_accuracy.size());
    for (std::size_t i = 0; i < a.per_task_accuracy.size(); ++i) {
        CHECK(a.per_task_accuracy[i] == b.per_task_accuracy[i]);
    }
}

TEST_CASE("cli: invalid config exits nonzero before any compute") {
    const auto dir = fresh_dir("badcfg");
    {
        std::ofstream f(dir + "/bad.json");
        f << R"({"dataset": {"synthetic": {"classes": 4, "n_per_class": 5}}, "tasks": {"num_tasks": 2}, "trainer": {"bogus": 1}})";
    }
    const auto res = run_cli("train -c " + dir + "/bad.json --out " + dir + "/run");
    CHECK(res.exit_code != 0);
    CHECK(res.output.find("bogus") != std::string::npos);
    CHECK_FALSE(fs::exists(dir + "/run/metrics.json"));
}

TEST_CASE("cli: report merges runs and refuses mismatched task counts") {
    const auto dir = fresh_dir("report");
    const auto cfg = write_tiny_config(dir, 11);
    REQUIRE(run_cli("train -c " + cfg + " --out " + dir + "/a").exit_code == 0);
    REQUIRE(run_cli("train -c " + cfg + " --ablate bs --out " + dir + "/b").exit_code == 0);

    const auto single = run_cli("report " + dir + "/a");
    CHECK(single.exit_code == 0);
    CHECK(single.output.find("full") != std::string::npos);

    const auto merged = run_cli("report " + dir + "/a " + dir + "/b --series " + dir + "/series.tsv");
    CHECK(merged.exit_code == 0);
    CHECK(merged.output.find("delta") != std::string::npos);
    CHECK(fs::exists(dir + "/series.tsv"));

    // a run with a different task count cannot merge
    nlohmann::json j;
    {
        std::ifstream f(dir + "/a/metrics.json");
        f >> j;
    }
    j["per_task_accuracy"] = {50.0};
    j["per_class_accuracy"] = nlohmann::json::array({nlohmann::json::array({50.0})});
    j["lambda_trace"] = {1.0};
    j["task_sizes"] = {10};
    j["cumulative_sizes"] = {10};
    j["seen_classes"] = {2};
    fs::create_directories(dir + "/c");
    {
        std::ofstream f(dir + "/c/metrics.json");
        f << j.dump(2);
    }
    const auto bad = run_cli("report " + dir + "/a " + dir + "/c");
    CHECK(bad.exit_code != 0);
}

TEST_CASE("cli: unknown subcommand or flag exits nonzero") {
    CHECK(run_cli("frobnicate").exit_code != 0);
    CHECK(run_cli("train --nonsense").exit_code != 0);
    CHECK(run_cli("report").exit_code != 0);
}

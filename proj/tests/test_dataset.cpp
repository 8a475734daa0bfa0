#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "ltcl/longtail.hpp"
#include "ltcl/manifest.hpp"
#include "ltcl/synthetic.hpp"
#include "ltcl/tasks.hpp"

using namespace ltcl;

namespace {

std::string temp_path(const std::string& name) {
    static int counter = 0;
    const auto dir = std::filesystem::temp_directory_path() / "ltcl_test_dataset";
    std::filesystem::create_directories(dir);
    return (dir / (name + "_" + std::to_string(counter++))).string();
}

DatasetManifest uniform_manifest(std::size_t classes, std::size_t per_class) {
    DatasetManifest m;
    for (std::size_t c = 0; c < classes; ++c) m.class_names.push_back("c" + std::to_string(c));
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            m.records.push_back({"img_" + std::to_string(c) + "_" + std::to_string(i),
                                 static_cast<int>(c), Split::train});
        }
        m.records.push_back({"test_" + std::to_string(c), static_cast<int>(c), Split::test});
    }
    return m;
}

}  // namespace

TEST_CASE("longtail profile: uniform when rho=1") {
    const auto p = build_longtail_profile(5, 100, 1.0, ProfileKind::exponential);
    CHECK(p.counts == std::vector<std::size_t>{100, 100, 100, 100, 100});
    CHECK(p.rho == Rational(1, 1));
}

TEST_CASE("longtail profile: exponential C=5 n_max=100 rho=100") {
    const auto p = build_longtail_profile(5, 100, 100.0, ProfileKind::exponential);
    CHECK(p.counts == std::vector<std::size_t>{100, 32, 10, 3, 1});
    CHECK(p.n_max == 100);
    CHECK(p.n_min == 1);
}

TEST_CASE("longtail profile: explicit frequency-table counts (324..1 over 186 classes)") {
    std::vector<std::size_t> counts(186);
    for (std::size_t c = 0; c < 186; ++c) {
        const double t = static_cast<double>(c) / 185.0;
        counts[c] = std::max<std::size_t>(1, static_cast<std::size_t>(324.0 * std::pow(324.0, -t)));
    }
    counts[0] = 324;
    counts[185] = 1;
    const auto p = make_explicit_profile(counts);
    CHECK(p.counts[0] == 324);
    CHECK(p.counts[185] == 1);
    CHECK(p.rho == Rational(324, 1));
    CHECK(p.kind == ProfileKind::explicit_counts);
}

TEST_CASE("longtail profile: parameter errors") {
    CHECK_THROWS_AS(build_longtail_profile(1, 100, 10.0, ProfileKind::exponential), parameter_error);
    CHECK_THROWS_AS(build_longtail_profile(5, 100, 0.5, ProfileKind::pareto), parameter_error);
}

TEST_CASE("longtail profile: properties over random shapes") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t C = 2 + rng.below(30);
        const std::size_t n_max = 10 + rng.below(500);
        const double rho = 1.0 + rng.uniform() * static_cast<double>(n_max - 1);
        const auto kind = rng.below(2) == 0 ? ProfileKind::exponential : ProfileKind::pareto;
        const auto p = build_longtail_profile(C, n_max, rho, kind);

        for (std::size_t c = 1; c < C; ++c) CHECK(p.counts[c] <= p.counts[c - 1]);
        CHECK(p.counts.front() == n_max);
        CHECK(p.counts.back() >= 1);
        // endpoint reproduces the requested rho within rounding of the last class
        const double target_min = static_cast<double>(n_max) / rho;
        const auto rounded_min =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(target_min - 0.5)));
        CHECK(p.counts.back() == rounded_min);
        CHECK(p.rho == Rational(static_cast<std::int64_t>(p.n_max), static_cast<std::int64_t>(p.n_min)));
    }
}

TEST_CASE("apply_longtail: exact target counts") {
    const auto manifest = uniform_manifest(5, 200);
    const auto profile = build_longtail_profile(5, 100, 100.0, ProfileKind::exponential);
    const std::vector<int> order{0, 1, 2, 3, 4};
    const auto lt = apply_longtail(manifest, profile, order, 7);
    const auto counts = lt.class_counts(Split::train);
    CHECK(counts == std::vector<std::size_t>{100, 32, 10, 3, 1});
    // test split untouched
    CHECK(lt.class_counts(Split::test) == manifest.class_counts(Split::test));
}

TEST_CASE("apply_longtail: identity subsample keeps the manifest") {
    const auto manifest = uniform_manifest(3, 50);
    const auto profile = make_explicit_profile({50, 50, 50});
    const auto lt = apply_longtail(manifest, profile, {0, 1, 2}, 9);
    std::multiset<std::string> before, after;
    for (const auto& r : manifest.records) before.insert(r.image_ref);
    for (const auto& r : lt.records) after.insert(r.image_ref);
    CHECK(before == after);
}

TEST_CASE("apply_longtail: deterministic in seed") {
    const auto manifest = uniform_manifest(4, 60);
    const auto profile = build_longtail_profile(4, 40, 8.0, ProfileKind::exponential);
    const std::vector<int> order{2, 0, 3, 1};
    const auto a = apply_longtail(manifest, profile, order, 1234);
    const auto b = apply_longtail(manifest, profile, order, 1234);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].image_ref == b.records[i].image_ref);
        CHECK(a.records[i].class_id == b.records[i].class_id);
    }
    const auto c = apply_longtail(manifest, profile, order, 1235);
    bool same = a.records.size() == c.records.size();
    if (same) {
        bool all_equal = true;
        for (std::size_t i = 0; i < a.records.size(); ++i) {
            if (a.records[i].image_ref != c.records[i].image_ref) all_equal = false;
        }
        CHECK_FALSE(all_equal);
    }
}

TEST_CASE("apply_longtail: deficit reported as hard error") {
    const auto manifest = uniform_manifest(3, 10);
    const auto profile = make_explicit_profile({20, 5, 1});
    CHECK_THROWS_WITH_AS(apply_longtail(manifest, profile, {0, 1, 2}, 1),
                         doctest::Contains("insufficient"), parameter_error);
}

TEST_CASE("partition_tasks: even rule matches the published splits") {
    CHECK(even_plus_remainder_first(101, 5) == std::vector<std::size_t>{21, 20, 20, 20, 20});
    CHECK(even_plus_remainder_first(101, 10) ==
          std::vector<std::size_t>{11, 10, 10, 10, 10, 10, 10, 10, 10, 10});
    CHECK(even_plus_remainder_first(74, 7) == std::vector<std::size_t>{14, 10, 10, 10, 10, 10, 10});
    CHECK(even_plus_remainder_first(186, 9) ==
          std::vector<std::size_t>{26, 20, 20, 20, 20, 20, 20, 20, 20});
}

TEST_CASE("partition_tasks: explicit recipes accepted") {
    const auto m74 = uniform_manifest(74, 2);
    const auto vfn = partition_tasks_explicit(m74, {14, 10, 10, 10, 10, 10, 10}, 3);
    CHECK(vfn.class_counts() == std::vector<std::size_t>{14, 10, 10, 10, 10, 10, 10});

    const auto m186 = uniform_manifest(186, 2);
    const auto vfn186 = partition_tasks_explicit(m186, {26, 20, 20, 20, 20, 20, 20, 20, 20}, 3);
    CHECK(vfn186.class_counts() == std::vector<std::size_t>{26, 20, 20, 20, 20, 20, 20, 20, 20});
}

TEST_CASE("partition_tasks: bad explicit counts rejected") {
    const auto m = uniform_manifest(10, 2);
    CHECK_THROWS_AS(partition_tasks_explicit(m, {5, 4}, 1), parameter_error);
    CHECK_THROWS_AS(partition_tasks_explicit(m, {10, 0}, 1), parameter_error);
    CHECK_THROWS_AS(partition_tasks(m, 11, 1), parameter_error);
    CHECK_THROWS_AS(partition_tasks(m, 0, 1), parameter_error);
}

TEST_CASE("partition_tasks: partition properties hold for every seed") {
    const auto m = uniform_manifest(13, 3);
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto seq = partition_tasks(m, 4, seed);
        seq.validate(13);  // disjoint + coverage
        std::size_t total = 0;
        for (const auto& t : seq.tasks) total += t.new_class_ids.size();
        CHECK(total == 13);
        // records follow their class
        std::size_t records = 0;
        for (const auto& t : seq.tasks) records += t.train_records.size();
        CHECK(records == 13 * 3);
    }
}

TEST_CASE("partition_tasks: seeded permutation varies the assignment") {
    const auto m = uniform_manifest(12, 1);
    const auto a = partition_tasks(m, 3, 1);
    const auto b = partition_tasks(m, 3, 2);
    CHECK(a.tasks[0].new_class_ids != b.tasks[0].new_class_ids);
    const auto a2 = partition_tasks(m, 3, 1);
    CHECK(a.tasks[0].new_class_ids == a2.tasks[0].new_class_ids);
}

TEST_CASE("manifest: save/load round trip") {
    auto m = uniform_manifest(3, 4);
    const std::string path = temp_path("roundtrip.tsv");
    save_manifest(m, path);
    const auto loaded = load_manifest(path);
    CHECK(loaded.warnings.empty());
    REQUIRE(loaded.manifest.records.size() == m.records.size());
    CHECK(loaded.manifest.class_names == m.class_names);
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        CHECK(loaded.manifest.records[i].image_ref == m.records[i].image_ref);
        CHECK(loaded.manifest.records[i].class_id == m.records[i].class_id);
        CHECK(loaded.manifest.records[i].split == m.records[i].split);
    }
}

TEST_CASE("manifest: well-formed three-record file") {
    const std::string path = temp_path("three.tsv");
    {
        std::ofstream f(path);
        f << "#classes: apple,banana\n";
        f << "a.ppm\t0\ttrain\n";
        f << "b.ppm\t1\ttrain\n";
        f << "c.ppm\t0\ttest\n";
    }
    const auto loaded = load_manifest(path);
    CHECK(loaded.manifest.records.size() == 3);
    CHECK(loaded.manifest.class_names == std::vector<std::string>{"apple", "banana"});
}

TEST_CASE("manifest: unknown class_id is a parse error with line number") {
    const std::string path = temp_path("badclass.tsv");
    {
        std::ofstream f(path);
        f << "#classes: a,b,c,d,e\n";
        f << "x.ppm\t7\ttrain\n";
    }
    CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("line 2"), parse_error);
}

TEST_CASE("manifest: duplicate ref within a split is a parse error") {
    const std::string path = temp_path("dup.tsv");
    {
        std::ofstream f(path);
        f << "#classes: a\n";
        f << "x.ppm\t0\ttrain\n";
        f << "x.ppm\t0\ttrain\n";
    }
    CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("duplicate"), parse_error);
    // same ref across splits is fine
    const std::string path2 = temp_path("dup2.tsv");
    {
        std::ofstream f(path2);
        f << "#classes: a\n";
        f << "x.ppm\t0\ttrain\n";
        f << "x.ppm\t0\ttest\n";
    }
    CHECK_NOTHROW(load_manifest(path2));
}

TEST_CASE("manifest: malformed line reported with line number") {
    const std::string path = temp_path("malformed.tsv");
    {
        std::ofstream f(path);
        f << "#classes: a\n";
        f << "no tabs here\n";
    }
    CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("line 2"), parse_error);
}

TEST_CASE("manifest: empty file loads as empty manifest with a warning") {
    const std::string path = temp_path("empty.tsv");
    { std::ofstream f(path); }
    const auto loaded = load_manifest(path);
    CHECK(loaded.manifest.records.empty());
    CHECK(loaded.manifest.class_names.empty());
    REQUIRE(loaded.warnings.size() == 1);
    CHECK(loaded.warnings[0].find("empty") != std::string::npos);
}

TEST_CASE("synthetic corpus: manifest is valid and renders deterministically") {
    const auto m = synth::make_manifest(11, 10, 6, 3);
    m.validate();
    CHECK(m.class_counts(Split::train) == std::vector<std::size_t>(10, 6));
    CHECK(m.class_counts(Split::test) == std::vector<std::size_t>(10, 3));

    const ImageProvider provider(32);
    const auto a = provider.load(m.records[0].image_ref);
    const auto b = provider.load(m.records[0].image_ref);
    CHECK(a == b);
    const auto c = provider.load(m.records[1].image_ref);
    CHECK_FALSE(a == c);
    for (std::size_t i = 0; i < a.numel(); ++i) {
        CHECK(a[i] >= 0.0f);
        CHECK(a[i] <= 1.0f);
    }
}

TEST_CASE("ppm round trip") {
    Image<float> img({3, 8, 8});
    Rng rng(5);
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(rng.uniform());
    const std::string path = temp_path("img.ppm");
    save_ppm(img, path);
    const auto back = load_ppm(path);
    REQUIRE(back.shape() == img.shape());
    for (std::size_t i = 0; i < img.numel(); ++i) {
        CHECK(std::abs(back[i] - img[i]) <= 0.5f / 255.0f + 1e-6f);
    }
}

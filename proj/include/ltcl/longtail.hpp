#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ltcl/common.hpp"
#include "ltcl/manifest.hpp"

namespace ltcl {

enum class ProfileKind { pareto, exponential, explicit_counts };

inline const char* to_string(ProfileKind k) {
    switch (k) {
        case ProfileKind::pareto: return "pareto";
        case ProfileKind::exponential: return "exponential";
        case ProfileKind::explicit_counts: return "explicit";
    }
    return "?";
}

inline ProfileKind profile_kind_from_string(const std::string& s) {
    if (s == "pareto") return ProfileKind::pareto;
    if (s == "exponential") return ProfileKind::exponential;
    if (s == "explicit") return ProfileKind::explicit_counts;
    throw parameter_error("unknown profile kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Per-class-rank training counts, non-increasing. rho is the realized
// n_max/n_min as an exact ratio.
// ---------------------------------------------------------------------------
struct LongTailProfile {
    std::size_t num_classes = 0;
    std::vector<std::size_t> counts;  // by rank, descending
    std::size_t n_max = 0;
    std::size_t n_min = 0;
    Rational rho;
    ProfileKind kind = ProfileKind::exponential;

    void validate() const {
        if (num_classes < 2) throw validation_error("profile needs at least 2 classes");
        if (counts.size() != num_classes) throw validation_error("profile counts/num_classes mismatch");
        for (std::size_t i = 1; i < counts.size(); ++i) {
            if (counts[i] > counts[i - 1]) throw validation_error("profile counts not non-increasing");
        }
        if (counts.front() != n_max || counts.back() != n_min || n_min < 1) {
            throw validation_error("profile endpoints inconsistent");
        }
        if (!(rho == Rational(static_cast<std::int64_t>(n_max), static_cast<std::int64_t>(n_min)))) {
            throw validation_error("profile rho != n_max/n_min");
        }
    }
};

namespace detail {

// Ties in rounding resolve toward the smaller count: 2.5 -> 2.
inline std::size_t round_half_down(double x) {
    const double r = std::ceil(x - 0.5);
    return r < 0.0 ? 0 : static_cast<std::size_t>(r);
}

}  // namespace detail

/// Synthesizes a long-tail count profile.
///   exponential: n_c = round(n_max * rho^(-c/(C-1)))          (endpoint-exact)
///   pareto:      n_c = max(1, round(n_max * (c+1)^(-beta))),  beta = ln(rho)/ln(C)
/// Rounding is half-down and counts never fall below 1.
inline LongTailProfile build_longtail_profile(std::size_t num_classes, std::size_t n_max,
                                              double rho, ProfileKind kind) {
    if (num_classes < 2) throw parameter_error("build_longtail_profile: C must be >= 2");
    if (n_max < 1) throw parameter_error("build_longtail_profile: n_max must be >= 1");
    if (rho < 1.0) throw parameter_error("build_longtail_profile: rho must be >= 1");
    if (kind == ProfileKind::explicit_counts) {
        throw parameter_error("build_longtail_profile: explicit profiles take counts, use make_explicit_profile");
    }

    LongTailProfile p;
    p.num_classes = num_classes;
    p.kind = kind;
    p.counts.resize(num_classes);

    const double c_max = static_cast<double>(num_classes - 1);
    for (std::size_t c = 0; c < num_classes; ++c) {
        double target = 0.0;
        if (kind == ProfileKind::exponential) {
            target = static_cast<double>(n_max) * std::pow(rho, -static_cast<double>(c) / c_max);
        } else {  // pareto
            const double beta = std::log(rho) / std::log(static_cast<double>(num_classes));
            target = static_cast<double>(n_max) * std::pow(static_cast<double>(c + 1), -beta);
        }
        p.counts[c] = std::max<std::size_t>(1, detail::round_half_down(target));
    }
    p.counts.front() = n_max;

    // Monotonicity can be broken by rounding for near-flat profiles; clamp.
    for (std::size_t c = 1; c < num_classes; ++c) {
        p.counts[c] = std::min(p.counts[c], p.counts[c - 1]);
    }

    p.n_max = p.counts.front();
    p.n_min = p.counts.back();
    p.rho = Rational(static_cast<std::int64_t>(p.n_max), static_cast<std::int64_t>(p.n_min));
    p.validate();
    return p;
}

/// Profile from an explicit per-class count table (frequency-table splits).
inline LongTailProfile make_explicit_profile(std::vector<std::size_t> counts) {
    if (counts.size() < 2) throw parameter_error("explicit profile needs at least 2 classes");
    std::sort(counts.begin(), counts.end(), std::greater<>());
    if (counts.back() < 1) throw parameter_error("explicit profile counts must be >= 1");
    LongTailProfile p;
    p.num_classes = counts.size();
    p.kind = ProfileKind::explicit_counts;
    p.n_max = counts.front();
    p.n_min = counts.back();
    p.counts = std::move(counts);
    p.rho = Rational(static_cast<std::int64_t>(p.n_max), static_cast<std::int64_t>(p.n_min));
    p.validate();
    return p;
}

/// Subsamples the train split to the profile counts. class_order[r] is the
/// class holding rank r (rank 0 keeps n_max samples). Deterministic in
/// (manifest, profile, class_order, seed); the test split passes through.
inline DatasetManifest apply_longtail(const DatasetManifest& manifest, const LongTailProfile& profile,
                                      const std::vector<int>& class_order, std::uint64_t seed) {
    const std::size_t C = manifest.num_classes();
    if (profile.num_classes != C) {
        throw parameter_error("apply_longtail: profile has " + std::to_string(profile.num_classes) +
                              " classes, manifest has " + std::to_string(C));
    }
    if (class_order.size() != C) throw parameter_error("apply_longtail: class_order size mismatch");
    {
        std::vector<bool> seen(C, false);
        for (int c : class_order) {
            if (c < 0 || static_cast<std::size_t>(c) >= C || seen[static_cast<std::size_t>(c)]) {
                throw parameter_error("apply_longtail: class_order is not a permutation");
            }
            seen[static_cast<std::size_t>(c)] = true;
        }
    }

    // Per-class record indices in manifest order.
    std::vector<std::vector<std::size_t>> by_class(C);
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& r = manifest.records[i];
        if (r.split == Split::train) by_class[static_cast<std::size_t>(r.class_id)].push_back(i);
    }

    std::vector<std::size_t> target(C, 0);
    std::string deficits;
    for (std::size_t rank = 0; rank < C; ++rank) {
        const auto cls = static_cast<std::size_t>(class_order[rank]);
        target[cls] = profile.counts[rank];
        if (by_class[cls].size() < target[cls]) {
            deficits += " class " + std::to_string(cls) + " has " + std::to_string(by_class[cls].size()) +
                        " < " + std::to_string(target[cls]) + ";";
        }
    }
    if (!deficits.empty()) throw parameter_error("apply_longtail: insufficient samples:" + deficits);

    DatasetManifest out;
    out.class_names = manifest.class_names;
    for (std::size_t cls = 0; cls < C; ++cls) {
        auto pool = by_class[cls];
        Rng rng = Rng::fork(seed, 0x17C000ULL + cls);
        rng.shuffle(pool);
        pool.resize(target[cls]);
        std::sort(pool.begin(), pool.end());  // keep manifest order within a class
        for (std::size_t idx : pool) out.records.push_back(manifest.records[idx]);
    }
    for (const auto& r : manifest.records) {
        if (r.split == Split::test) out.records.push_back(r);
    }
    out.validate();
    return out;
}

}  // namespace ltcl

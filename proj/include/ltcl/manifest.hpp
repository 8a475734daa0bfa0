#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ltcl/common.hpp"

namespace ltcl {

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct ManifestRecord {
    std::string image_ref;  // opaque path/URI; resolved by an image provider
    int class_id = 0;
    Split split = Split::train;
};

// ---------------------------------------------------------------------------
// Labeled image records plus the class catalog. The substrate every split,
// partition and loader operates on. Immutable by convention: operations
// return new manifests.
// ---------------------------------------------------------------------------
struct DatasetManifest {
    std::vector<ManifestRecord> records;
    std::vector<std::string> class_names;

    [[nodiscard]] std::size_t num_classes() const { return class_names.size(); }

    [[nodiscard]] std::vector<std::size_t> class_counts(Split split) const {
        std::vector<std::size_t> counts(class_names.size(), 0);
        for (const auto& r : records) {
            if (r.split == split) ++counts[static_cast<std::size_t>(r.class_id)];
        }
        return counts;
    }

    [[nodiscard]] std::vector<ManifestRecord> split_records(Split split) const {
        std::vector<ManifestRecord> out;
        for (const auto& r : records) {
            if (r.split == split) out.push_back(r);
        }
        return out;
    }

    /// Enforces the type invariants: class ids in range, refs unique per split.
    void validate() const {
        std::unordered_set<std::string> seen_train, seen_test;
        for (const auto& r : records) {
            if (r.class_id < 0 || static_cast<std::size_t>(r.class_id) >= class_names.size()) {
                throw validation_error("record '" + r.image_ref + "' references unknown class_id " +
                                       std::to_string(r.class_id));
            }
            auto& seen = (r.split == Split::train) ? seen_train : seen_test;
            if (!seen.insert(r.image_ref).second) {
                throw validation_error("duplicate image_ref '" + r.image_ref + "' in " +
                                       to_string(r.split) + " split");
            }
        }
    }
};

// Manifest file format (UTF-8 text):
//   #classes: name0,name1,...
//   image_ref<TAB>class_id<TAB>split
inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out << "#classes: ";
    for (std::size_t i = 0; i < m.class_names.size(); ++i) {
        if (i) out << ',';
        out << m.class_names[i];
    }
    out << '\n';
    for (const auto& r : m.records) {
        out << r.image_ref << '\t' << r.class_id << '\t' << to_string(r.split) << '\n';
    }
    if (!out) throw io_error("write failed for '" + path + "'");
}

struct LoadResult {
    DatasetManifest manifest;
    std::vector<std::string> warnings;
};

inline LoadResult load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest '" + path + "'");

    LoadResult result;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::vector<std::size_t> record_lines;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line.rfind("#classes:", 0) == 0) {
            if (have_header) throw parse_error("line " + std::to_string(line_no) + ": duplicate class header");
            have_header = true;
            std::string names = line.substr(9);
            std::size_t start = names.find_first_not_of(' ');
            if (start == std::string::npos) continue;
            names = names.substr(start);
            std::stringstream ss(names);
            std::string name;
            while (std::getline(ss, name, ',')) result.manifest.class_names.push_back(name);
            continue;
        }
        if (line[0] == '#') continue;

        const std::size_t t1 = line.find('\t');
        const std::size_t t2 = (t1 == std::string::npos) ? std::string::npos : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw parse_error("line " + std::to_string(line_no) + ": expected image_ref<TAB>class_id<TAB>split");
        }
        ManifestRecord rec;
        rec.image_ref = line.substr(0, t1);
        const std::string id_str = line.substr(t1 + 1, t2 - t1 - 1);
        const std::string split_str = line.substr(t2 + 1);
        try {
            std::size_t pos = 0;
            rec.class_id = std::stoi(id_str, &pos);
            if (pos != id_str.size()) throw std::invalid_argument(id_str);
        } catch (const std::exception&) {
            throw parse_error("line " + std::to_string(line_no) + ": bad class_id '" + id_str + "'");
        }
        if (split_str == "train") {
            rec.split = Split::train;
        } else if (split_str == "test") {
            rec.split = Split::test;
        } else {
            throw parse_error("line " + std::to_string(line_no) + ": bad split '" + split_str + "'");
        }
        result.manifest.records.push_back(std::move(rec));
        record_lines.push_back(line_no);
    }

    // Invariant checks with line attribution.
    std::unordered_set<std::string> seen_train, seen_test;
    for (std::size_t i = 0; i < result.manifest.records.size(); ++i) {
        const auto& r = result.manifest.records[i];
        const std::string where = "line " + std::to_string(record_lines[i]) + ": ";
        if (r.class_id < 0 ||
            static_cast<std::size_t>(r.class_id) >= result.manifest.class_names.size()) {
            throw parse_error(where + "class_id " + std::to_string(r.class_id) + " out of range (" +
                              std::to_string(result.manifest.class_names.size()) + " classes declared)");
        }
        auto& seen = (r.split == Split::train) ? seen_train : seen_test;
        if (!seen.insert(r.image_ref).second) {
            throw parse_error(where + "duplicate image_ref '" + r.image_ref + "' in " +
                              to_string(r.split) + " split");
        }
    }

    if (result.manifest.records.empty() && result.manifest.class_names.empty()) {
        result.warnings.push_back("manifest '" + path + "' is empty");
    }
    return result;
}

}  // namespace ltcl

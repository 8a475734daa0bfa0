#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ltcl/common.hpp"
#include "ltcl/manifest.hpp"
#include "ltcl/tensor.hpp"

namespace ltcl {

// ---------------------------------------------------------------------------
// Image provider: resolves an opaque image_ref to a CHW float image in [0,1].
// Two ref schemes ship:
//   synth://<seed>/<split>/<class_id>/<index>     procedurally rendered
//   anything else                                 binary PPM (P6) on disk
// Synthetic refs render the same pixels on every call, so manifests stay the
// single source of truth and no image files need to exist.
// ---------------------------------------------------------------------------

namespace synth {

// Class c = shape (c / 2) x color family (c % 2): five shapes, two palettes.
enum class Shape { disc, ring, square, triangle, cross };

constexpr std::size_t kNumShapes = 5;
constexpr std::size_t kNumPalettes = 2;
constexpr std::size_t kNumClasses = kNumShapes * kNumPalettes;

struct RefParts {
    std::uint64_t seed = 0;
    Split split = Split::train;
    int class_id = 0;
    std::uint64_t index = 0;
};

inline bool is_synth_ref(const std::string& ref) { return ref.rfind("synth://", 0) == 0; }

inline std::string make_ref(std::uint64_t seed, Split split, int class_id, std::uint64_t index) {
    return "synth://" + std::to_string(seed) + "/" + to_string(split) + "/" +
           std::to_string(class_id) + "/" + std::to_string(index);
}

inline RefParts parse_ref(const std::string& ref) {
    if (!is_synth_ref(ref)) throw parse_error("not a synth:// ref: '" + ref + "'");
    RefParts parts;
    std::string rest = ref.substr(8);
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (pos <= rest.size()) {
        const std::size_t next = rest.find('/', pos);
        if (next == std::string::npos) {
            fields.push_back(rest.substr(pos));
            break;
        }
        fields.push_back(rest.substr(pos, next - pos));
        pos = next + 1;
    }
    if (fields.size() != 4) throw parse_error("malformed synth ref '" + ref + "'");
    try {
        parts.seed = std::stoull(fields[0]);
        if (fields[1] == "train") {
            parts.split = Split::train;
        } else if (fields[1] == "test") {
            parts.split = Split::test;
        } else {
            throw std::invalid_argument(fields[1]);
        }
        parts.class_id = std::stoi(fields[2]);
        parts.index = std::stoull(fields[3]);
    } catch (const std::exception&) {
        throw parse_error("malformed synth ref '" + ref + "'");
    }
    return parts;
}

namespace detail {

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Signed "inside" test for each shape in unit coordinates relative to the
// shape center, already rotated. Returns coverage in [0,1] with a soft edge.
inline double coverage(Shape shape, double dx, double dy, double radius) {
    const double soft = 0.6;  // edge softness in pixels
    auto edge = [&](double signed_dist) {
        // signed_dist < 0 inside; linear ramp across the soft band
        return clamp01(0.5 - signed_dist / soft);
    };
    switch (shape) {
        case Shape::disc: {
            const double d = std::sqrt(dx * dx + dy * dy) - radius;
            return edge(d);
        }
        case Shape::ring: {
            // annulus with a pronounced hole
            const double r = std::sqrt(dx * dx + dy * dy);
            const double d = std::abs(r - radius * 0.76) - radius * 0.24;
            return edge(d);
        }
        case Shape::square: {
            const double d = std::max(std::abs(dx), std::abs(dy)) - radius * 0.85;
            return edge(d);
        }
        case Shape::triangle: {
            // equilateral triangle, apex up, inscribed in radius
            const double r = radius * 1.15;
            const double d0 = -dy - r * 0.5;                               // bottom
            const double d1 = 0.8660254 * dx + 0.5 * dy - r * 0.5;         // right
            const double d2 = -0.8660254 * dx + 0.5 * dy - r * 0.5;        // left
            return edge(std::max({d0, d1, d2}));
        }
        case Shape::cross: {
            const double arm = radius * 0.28;
            const double dh = std::max(std::abs(dx) - radius, std::abs(dy) - arm);
            const double dv = std::max(std::abs(dx) - arm, std::abs(dy) - radius);
            return edge(std::min(dh, dv));
        }
    }
    return 0.0;
}

}  // namespace detail

/// Renders one 3xHxW image. Pixels depend only on the ref fields, so a given
/// manifest always maps to the same dataset.
inline Image<float> render(const RefParts& ref, std::size_t hw) {
    if (ref.class_id < 0 || static_cast<std::size_t>(ref.class_id) >= kNumClasses) {
        throw parameter_error("synth class_id out of range: " + std::to_string(ref.class_id));
    }
    const auto shape = static_cast<Shape>(static_cast<std::size_t>(ref.class_id) / kNumPalettes);
    const std::size_t palette = static_cast<std::size_t>(ref.class_id) % kNumPalettes;

    std::uint64_t stream = fnv1a(&ref.seed, sizeof(ref.seed));
    stream = fnv1a(&ref.class_id, sizeof(ref.class_id), stream);
    stream = fnv1a(&ref.index, sizeof(ref.index), stream);
    const auto split_tag = static_cast<std::uint64_t>(ref.split == Split::test ? 0xBADBEEF : 0x5EED);
    Rng rng = Rng::fork(stream, split_tag);

    // Background: per-image base color plus pixel noise.
    double base[3];
    for (double& b : base) b = rng.uniform(0.25, 0.75);

    // Foreground: palette 0 is warm (red-dominant), palette 1 cool (blue).
    double fg[3];
    if (palette == 0) {
        fg[0] = rng.uniform(0.75, 1.0);
        fg[1] = rng.uniform(0.05, 0.45);
        fg[2] = rng.uniform(0.0, 0.25);
    } else {
        fg[0] = rng.uniform(0.0, 0.25);
        fg[1] = rng.uniform(0.15, 0.55);
        fg[2] = rng.uniform(0.75, 1.0);
    }

    const double h = static_cast<double>(hw);
    const double radius = rng.uniform(0.24, 0.36) * h;
    const double cx = rng.uniform(radius + 1.0, h - radius - 1.0);
    const double cy = rng.uniform(radius + 1.0, h - radius - 1.0);
    // corner shapes keep a limited tilt so their silhouettes stay distinct
    const bool bounded_tilt = shape == Shape::square || shape == Shape::cross;
    const double theta = bounded_tilt ? rng.uniform(-0.35, 0.35) : rng.uniform(0.0, 6.283185307179586);
    const double ct = std::cos(theta), st = std::sin(theta);

    Image<float> img({3, hw, hw});
    for (std::size_t y = 0; y < hw; ++y) {
        for (std::size_t x = 0; x < hw; ++x) {
            const double px = static_cast<double>(x) + 0.5 - cx;
            const double py = static_cast<double>(y) + 0.5 - cy;
            const double rx = ct * px + st * py;
            const double ry = -st * px + ct * py;
            const double cov = detail::coverage(shape, rx, ry, radius);
            const double noise = rng.uniform(-0.06, 0.06);
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = (1.0 - cov) * (base[c] + noise) + cov * fg[c];
                img.at3(c, y, x) = static_cast<float>(detail::clamp01(v));
            }
        }
    }
    return img;
}

/// Manifest for a full synthetic corpus: n_per_class train images per class
/// plus a balanced test split. Long-tail subsampling is applied afterwards by
/// apply_longtail, exactly as with a real corpus.
inline DatasetManifest make_manifest(std::uint64_t seed, std::size_t num_classes,
                                     std::size_t n_per_class, std::size_t test_per_class) {
    if (num_classes < 2 || num_classes > kNumClasses) {
        throw parameter_error("synthetic corpus supports 2.." + std::to_string(kNumClasses) + " classes");
    }
    static const char* shape_names[kNumShapes] = {"disc", "ring", "square", "triangle", "cross"};
    static const char* palette_names[kNumPalettes] = {"warm", "cool"};
    DatasetManifest m;
    for (std::size_t c = 0; c < num_classes; ++c) {
        m.class_names.push_back(std::string(shape_names[c / kNumPalettes]) + "_" +
                                palette_names[c % kNumPalettes]);
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            m.records.push_back({make_ref(seed, Split::train, static_cast<int>(c), i),
                                 static_cast<int>(c), Split::train});
        }
        for (std::size_t i = 0; i < test_per_class; ++i) {
            m.records.push_back({make_ref(seed, Split::test, static_cast<int>(c), i),
                                 static_cast<int>(c), Split::test});
        }
    }
    m.validate();
    return m;
}

}  // namespace synth

/// Binary PPM (P6), 8-bit, the one on-disk image format the harness reads.
inline Image<float> load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open image '" + path + "'");
    std::string magic;
    in >> magic;
    if (magic != "P6") throw parse_error("'" + path + "': not a binary PPM (P6)");
    auto next_token = [&in, &path]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw parse_error("'" + path + "': truncated PPM header");
    };
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
        throw parse_error("'" + path + "': unsupported PPM geometry");
    }
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw parse_error("'" + path + "': truncated PPM payload");
    }
    Image<float> img({3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    const float scale = 1.0f / static_cast<float>(maxval);
    for (std::size_t y = 0; y < static_cast<std::size_t>(h); ++y) {
        for (std::size_t x = 0; x < static_cast<std::size_t>(w); ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                img.at3(c, y, x) = scale * static_cast<float>(raw[(y * static_cast<std::size_t>(w) + x) * 3 + c]);
            }
        }
    }
    return img;
}

inline void save_ppm(const Image<float>& img, const std::string& path) {
    if (img.rank() != 3 || img.dim(0) != 3) throw shape_error("save_ppm expects a 3xHxW image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    const std::size_t h = img.dim(1), w = img.dim(2);
    out << "P6\n" << w << ' ' << h << "\n255\n";
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                const float v = img.at3(c, y, x);
                const float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                out.put(static_cast<char>(static_cast<int>(clamped * 255.0f + 0.5f)));
            }
        }
    }
    if (!out) throw io_error("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// ImageProvider: ref -> pixels, with an LRU-free bounded cache (the desk
// corpora are small enough to cache outright).
// ---------------------------------------------------------------------------
class ImageProvider {
public:
    explicit ImageProvider(std::size_t image_hw, std::string data_dir = {})
        : hw_(image_hw), data_dir_(std::move(data_dir)) {}

    [[nodiscard]] std::size_t image_hw() const { return hw_; }

    Image<float> load(const std::string& ref) const {
        if (synth::is_synth_ref(ref)) return synth::render(synth::parse_ref(ref), hw_);
        const std::string path = data_dir_.empty() ? ref : data_dir_ + "/" + ref;
        Image<float> img = load_ppm(path);
        if (img.dim(1) != hw_ || img.dim(2) != hw_) {
            throw shape_error("image '" + ref + "' is " + std::to_string(img.dim(1)) + "x" +
                              std::to_string(img.dim(2)) + ", expected " + std::to_string(hw_) + "x" +
                              std::to_string(hw_));
        }
        return img;
    }

private:
    std::size_t hw_;
    std::string data_dir_;
};

}  // namespace ltcl

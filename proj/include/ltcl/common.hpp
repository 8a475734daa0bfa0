#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ltcl {

// ---------------------------------------------------------------------------
// Error taxonomy. Every contract violation throws one of these; the CLI maps
// them to nonzero exit codes.
// ---------------------------------------------------------------------------

class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

class parameter_error : public error {
public:
    explicit parameter_error(const std::string& msg) : error("parameter error: " + msg) {}
};

class shape_error : public error {
public:
    explicit shape_error(const std::string& msg) : error("shape error: " + msg) {}
};

class state_error : public error {
public:
    explicit state_error(const std::string& msg) : error("state error: " + msg) {}
};

class parse_error : public error {
public:
    explicit parse_error(const std::string& msg) : error("parse error: " + msg) {}
};

class validation_error : public error {
public:
    explicit validation_error(const std::string& msg) : error("validation error: " + msg) {}
};

class io_error : public error {
public:
    explicit io_error(const std::string& msg) : error("i/o error: " + msg) {}
};

// ---------------------------------------------------------------------------
// Exact ratio of two positive integers, kept in lowest terms. Used for the
// imbalance ratio so n_max/n_min round-trips without floating-point fuzz.
// ---------------------------------------------------------------------------
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    Rational() = default;
    Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
        if (den == 0) throw parameter_error("rational with zero denominator");
        const std::int64_t g = std::gcd(num, den);
        if (g > 1) { num /= g; den /= g; }
    }

    [[nodiscard]] double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num == b.num && a.den == b.den;
    }
};

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 has a standard-mandated output sequence;
// the derived draws below avoid std::uniform_*_distribution, whose results
// are implementation-defined, so streams replay identically everywhere.
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(split_mix(seed)) {}

    std::uint64_t next_u64() {
        // xoshiro-free: mt19937_64 via splitmix-seeded state is overkill here,
        // a splitmix64 walk is already full-period and standard-free.
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t below(std::size_t n) {
        if (n == 0) throw parameter_error("Rng::below(0)");
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller (pairs cached).
    double normal() {
        if (have_spare_) { have_spare_ = false; return spare_; }
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        spare_ = r * std::sin(two_pi * u2);
        have_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    /// Independent child stream keyed by a stream id; streams with distinct
    /// ids never correlate regardless of how much the parent has been used.
    [[nodiscard]] static Rng fork(std::uint64_t seed, std::uint64_t stream) {
        return Rng(split_mix(seed) ^ (0x94D049BB133111EBULL * (stream + 1)));
    }

    [[nodiscard]] std::uint64_t state() const { return state_; }
    void restore(std::uint64_t s) { state_ = s; have_spare_ = false; }

private:
    static std::uint64_t split_mix(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// FNV-1a, used for config/dataset fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xCBF29CE484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace ltcl

// common.hpp - errors, stable hashing and the deterministic RNG used everywhere.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace fishboard {

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionMismatchError : public Error {
public:
    explicit DimensionMismatchError(const std::string& msg) : Error(msg) {}
};

class EmptyMaskError : public Error {
public:
    explicit EmptyMaskError(const std::string& msg) : Error(msg) {}
};

class ProjectionError : public Error {
public:
    explicit ProjectionError(const std::string& msg) : Error(msg) {}
};

// Raised when no marker detection is available to set the image scale.
class NoFiducialError : public Error {
public:
    explicit NoFiducialError(const std::string& msg) : Error(msg) {}
};

// Raised when an annotation list cannot be paired with the detected fish.
class CountMismatchError : public Error {
public:
    CountMismatchError(std::size_t n_labels, std::size_t n_fish)
        : Error("label/fish count mismatch: " + std::to_string(n_labels) +
                " labels vs " + std::to_string(n_fish) + " fish"),
          n_labels(n_labels),
          n_fish(n_fish) {}
    std::size_t n_labels;
    std::size_t n_fish;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// ---------------------------------------------------------------------------
// Stable hashing
//
// Seeds for scenes, trees and folds are derived with stable_hash so results
// never depend on generation order, thread count or the standard library.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t stable_hash(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
std::uint64_t stable_hash(std::uint64_t seed, std::uint64_t part, Rest... rest) {
    return stable_hash(splitmix64(seed ^ splitmix64(part)), rest...);
}

// FNV-1a, folded into the same chain so strings can salt a seed.
inline std::uint64_t stable_hash_str(std::uint64_t seed, std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return stable_hash(seed, h);
}

// ---------------------------------------------------------------------------
// Deterministic RNG (splitmix64 stream). Self-contained so that identical
// seeds give identical streams on every platform and standard library.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x6A09E667F3BCC909ull)) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0,n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller without caching; two uniforms per draw.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Deterministic work distribution: fn(i) runs once for each i in [0, n) with
// no shared mutable state, so any writes keyed by i land in the same place
// regardless of thread count. Exceptions are re-thrown on the calling thread.

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (n == 0) return;
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return s;
}

}  // namespace fishboard

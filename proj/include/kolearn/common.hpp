#pragma once

// Shared vocabulary for the kolearn library: the numeric vector type,
// error taxonomy, seeded RNG helpers and small binary/string utilities.
// Everything is 64-bit float; bound verification needs the headroom.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kolearn {

using Vec = std::vector<double>;

static_assert(std::endian::native == std::endian::little,
              "binary rasters and model files are little-endian");

// ---------------------------------------------------------------------------
// Errors

struct DimensionMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct NonFiniteGradient : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonPositiveIntensity : std::domain_error {
    using std::domain_error::domain_error;
};
struct InvalidKvp : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ConfigInvalid : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct NegativeMean : std::domain_error {
    using std::domain_error::domain_error;
};
struct DegenerateInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ImageTooSmall : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct UnknownVariant : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct FalsificationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Deterministic RNG. One fixed algorithm (splitmix64) so seeded sequences are
// identical on every platform and standard library.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

/// Derives an independent stream seed from a master seed. Used to give every
/// consumer (phantom, noise, split, init, shuffle, ...) its own sequence.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    Rng r(master ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
    return r.next_u64();
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit hash; stable across platforms, used for config/raster hashes.

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t bytes) {
    return fnv1a64(std::string_view(static_cast<const char*>(data), bytes));
}

inline std::string hex64(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

}  // namespace kolearn

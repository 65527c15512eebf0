#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace babel {

// All randomness in the project goes through this wrapper. The std engines are
// fully specified by the standard, but the std distributions are not, so
// sampling helpers are implemented here to keep results identical across
// standard libraries and runs.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Unbiased integer in [0, bound). bound must be > 0.
    uint32_t uniform_u32(uint32_t bound) {
        const uint64_t two32 = uint64_t(1) << 32;
        const uint64_t limit = two32 - two32 % bound;
        for (;;) {
            uint64_t x = eng_() >> 32;
            if (x < limit) return static_cast<uint32_t>(x % bound);
        }
    }

    // Double in [0, 1) with 53 random bits.
    double uniform_real() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform in [-half_width, half_width].
    double uniform_symmetric(double half_width) {
        return (2.0 * uniform_real() - 1.0) * half_width;
    }

    // Standard normal via Box-Muller; second value of each pair is cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform_real();
        double u2 = uniform_real();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // In-place Fisher-Yates.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = uniform_u32(static_cast<uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), returned sorted ascending.
    std::vector<int> sample_distinct(int n, int k) {
        std::vector<int> idx(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        for (int i = 0; i < k; ++i) {
            int j = i + static_cast<int>(uniform_u32(static_cast<uint32_t>(n - i)));
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        }
        idx.resize(static_cast<size_t>(k));
        std::sort(idx.begin(), idx.end());
        return idx;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a, used for corpus hashes, checkpoint integrity and per-target seeds.
class Fnv1a {
public:
    void update(const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h_ ^= p[i];
            h_ *= 1099511628211ull;
        }
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    void update_u64(uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        update(b, 8);
    }
    uint64_t digest() const { return h_; }

private:
    uint64_t h_ = 14695981039346656037ull;
};

inline uint64_t stable_hash(std::string_view s) {
    Fnv1a h;
    h.update(s);
    return h.digest();
}

// Seed for one attack task: depends only on the global seed and the target id,
// never on scheduling order.
inline uint64_t derive_seed(uint64_t global_seed, std::string_view target_id) {
    Fnv1a h;
    h.update_u64(global_seed);
    h.update(target_id);
    return h.digest();
}

}  // namespace babel

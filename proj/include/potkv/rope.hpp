#pragma once

#include <cmath>
#include <span>

#include "potkv/error.hpp"

namespace potkv {

// Rotary transform: dimension pair (2i, 2i+1) is rotated by
// position * base^(-2i / d_head). In-place variant.
inline void apply_rope_inplace(std::span<float> vec, long long position, float rope_base) {
    const int d = static_cast<int>(vec.size());
    if (d % 2 != 0) throw ConfigError("apply_rope: head dimension must be even");
    if (position < 0) throw PositionError("apply_rope: position must be >= 0");
    for (int i = 0; i + 1 < d; i += 2) {
        const float angle =
            static_cast<float>(position) *
            std::pow(rope_base, -static_cast<float>(i) / static_cast<float>(d));
        const float c = std::cos(angle);
        const float s = std::sin(angle);
        const float x = vec[i];
        const float y = vec[i + 1];
        vec[i] = x * c - y * s;
        vec[i + 1] = x * s + y * c;
    }
}

inline std::vector<float> apply_rope(std::span<const float> vec, long long position,
                                     float rope_base) {
    std::vector<float> out(vec.begin(), vec.end());
    apply_rope_inplace(out, position, rope_base);
    return out;
}

// Per-pair inverse frequencies, precomputed once per model so hot loops
// avoid pow().
struct RopeTable {
    std::vector<float> inv_freq;  // size d_head / 2

    RopeTable() = default;
    RopeTable(int d_head, float rope_base) {
        if (d_head % 2 != 0) throw ConfigError("rope: d_head must be even");
        inv_freq.resize(static_cast<std::size_t>(d_head / 2));
        for (int i = 0; i < d_head / 2; ++i) {
            inv_freq[static_cast<std::size_t>(i)] =
                std::pow(rope_base, -static_cast<float>(2 * i) / static_cast<float>(d_head));
        }
    }

    void rotate(std::span<float> vec, long long position) const {
        for (std::size_t p = 0; p < inv_freq.size(); ++p) {
            const float angle = static_cast<float>(position) * inv_freq[p];
            const float c = std::cos(angle);
            const float s = std::sin(angle);
            const float x = vec[2 * p];
            const float y = vec[2 * p + 1];
            vec[2 * p] = x * c - y * s;
            vec[2 * p + 1] = x * s + y * c;
        }
    }
};

}  // namespace potkv

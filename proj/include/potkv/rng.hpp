#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace potkv {

// Deterministic gaussian stream used for weight init.
//
// Recipe (fixed so an independent reimplementation reproduces it exactly):
//   - engine: std::mt19937_64 seeded with the 64-bit seed (sequence is
//     pinned by the C++ standard, so this is portable across toolchains)
//   - uniform doubles: u = (engine() >> 11) * 2^-53, giving u in [0, 1)
//   - Box-Muller pairs: r = sqrt(-2 ln(1 - u1)), a = 2*pi*u2,
//     z0 = r cos(a), z1 = r sin(a); values are consumed z0, z1, z0, z1, ...
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace potkv

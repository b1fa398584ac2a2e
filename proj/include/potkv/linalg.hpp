#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace potkv {

// Dense row-major float matrix, just enough for the forward pass.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}

    float* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const float* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

inline float dot(const float* a, const float* b, int n) {
    float acc = 0.0f;
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// y = W x with W stored [out][in] row-major, so each output is one
// contiguous dot product.
inline void matvec(const float* w, const float* x, float* y, int out_dim, int in_dim) {
    for (int o = 0; o < out_dim; ++o) {
        y[o] = dot(w + static_cast<std::size_t>(o) * in_dim, x, in_dim);
    }
}

// RMS norm with per-channel gain, eps pinned at 1e-5.
inline void rmsnorm(const float* x, const float* gain, float* y, int n) {
    float ss = 0.0f;
    for (int i = 0; i < n; ++i) ss += x[i] * x[i];
    const float scale = 1.0f / std::sqrt(ss / static_cast<float>(n) + 1e-5f);
    for (int i = 0; i < n; ++i) y[i] = x[i] * scale * gain[i];
}

inline float gelu(float x) {
    return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752440f));
}

// In-place softmax over the first n entries, max-subtracted.
inline void softmax_inplace(float* x, int n) {
    float m = x[0];
    for (int i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
    float sum = 0.0f;
    for (int i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - m);
        sum += x[i];
    }
    const float inv = 1.0f / sum;
    for (int i = 0; i < n; ++i) x[i] *= inv;
}

// log(sum(exp(row))) in double, for cross-entropy.
inline double log_sum_exp(std::span<const float> row) {
    double m = row[0];
    for (float v : row) m = v > m ? v : m;
    double sum = 0.0;
    for (float v : row) sum += std::exp(static_cast<double>(v) - m);
    return m + std::log(sum);
}

}  // namespace potkv

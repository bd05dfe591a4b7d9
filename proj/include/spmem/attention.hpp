#pragma once
// Reference evaluation of memory-augmented cross-attention:
//   K' = [K; m], V' = [V; m]
//   out = alpha * Attn(Q, K', V') + (1 - alpha) * Attn(Q, K, V)
// with Attn(Q, K, V) = softmax(Q K^T / sqrt(d_k)) V.

#include <cstdint>
#include <span>
#include <vector>

#include "spmem/core.hpp"

namespace spmem {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    // Appends one row; throws DimError when the width differs.
    Matrix with_row(std::span<const double> extra) const;
};

// Row-stochastic softmax(Q K^T / sqrt(d_k)).
Matrix attention_weights(const Matrix& Q, const Matrix& K);
Matrix attention(const Matrix& Q, const Matrix& K, const Matrix& V);

// Throws DimError on inconsistent shapes and RangeError when alpha is outside [0, 1].
Matrix gated_attention_fuse(const Matrix& Q, const Matrix& K, const Matrix& V, std::span<const double> memory,
                            double alpha);

// alpha = sigmoid(w . [mean(Q); m] + b). Seeded, untrained.
struct SigmoidGate {
    std::vector<double> w;
    double b = 0.0;

    static SigmoidGate random(std::size_t query_dim, std::size_t memory_dim, std::uint64_t seed);
    double operator()(const Matrix& Q, std::span<const double> memory) const;
};

}  // namespace spmem

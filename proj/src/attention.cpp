#include "spmem/attention.hpp"

#include <algorithm>
#include <cmath>

namespace spmem {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m;
    m.rows = rows.size();
    m.cols = rows.empty() ? 0 : rows.front().size();
    for (const auto& r : rows) {
        if (r.size() != m.cols) throw DimError("matrix row", m.cols, r.size());
        m.data.insert(m.data.end(), r.begin(), r.end());
    }
    return m;
}

Matrix Matrix::with_row(std::span<const double> extra) const {
    if (extra.size() != cols) throw DimError("appended row", cols, extra.size());
    Matrix out = *this;
    out.data.insert(out.data.end(), extra.begin(), extra.end());
    ++out.rows;
    return out;
}

Matrix attention_weights(const Matrix& Q, const Matrix& K) {
    if (Q.cols != K.cols) throw DimError("K columns", Q.cols, K.cols);
    if (K.rows == 0) throw Error(ErrorCode::EmptyInput, "attention over zero keys");
    const double scale = 1.0 / std::sqrt(static_cast<double>(Q.cols));
    Matrix w(Q.rows, K.rows);
    for (std::size_t i = 0; i < Q.rows; ++i) {
        double peak = -INFINITY;
        for (std::size_t j = 0; j < K.rows; ++j) {
            w(i, j) = dot(Q.row(i), K.row(j)) * scale;
            peak = std::max(peak, w(i, j));
        }
        double total = 0.0;
        for (std::size_t j = 0; j < K.rows; ++j) {
            w(i, j) = std::exp(w(i, j) - peak);
            total += w(i, j);
        }
        for (std::size_t j = 0; j < K.rows; ++j) w(i, j) /= total;
    }
    return w;
}

Matrix attention(const Matrix& Q, const Matrix& K, const Matrix& V) {
    if (K.rows != V.rows) throw DimError("V rows", K.rows, V.rows);
    const Matrix w = attention_weights(Q, K);
    Matrix out(Q.rows, V.cols);
    for (std::size_t i = 0; i < Q.rows; ++i) {
        for (std::size_t j = 0; j < V.rows; ++j) {
            const double a = w(i, j);
            for (std::size_t c = 0; c < V.cols; ++c) out(i, c) += a * V(j, c);
        }
    }
    return out;
}

Matrix gated_attention_fuse(const Matrix& Q, const Matrix& K, const Matrix& V, std::span<const double> memory,
                            double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::RangeError, "alpha must be in [0, 1]");
    const Matrix plain = attention(Q, K, V);
    const Matrix augmented = attention(Q, K.with_row(memory), V.with_row(memory));
    Matrix out(plain.rows, plain.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = alpha * augmented.data[i] + (1.0 - alpha) * plain.data[i];
    }
    return out;
}

SigmoidGate SigmoidGate::random(std::size_t query_dim, std::size_t memory_dim, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x47415445ULL));
    SigmoidGate g;
    g.w = gaussian_vector(rng, query_dim + memory_dim, 1.0 / std::sqrt(static_cast<double>(query_dim + memory_dim)));
    return g;
}

double SigmoidGate::operator()(const Matrix& Q, std::span<const double> memory) const {
    if (w.size() != Q.cols + memory.size()) throw DimError("gate input", w.size(), Q.cols + memory.size());
    double z = b;
    for (std::size_t c = 0; c < Q.cols; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < Q.rows; ++r) mean += Q(r, c);
        if (Q.rows > 0) mean /= static_cast<double>(Q.rows);
        z += w[c] * mean;
    }
    for (std::size_t i = 0; i < memory.size(); ++i) z += w[Q.cols + i] * memory[i];
    return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace spmem

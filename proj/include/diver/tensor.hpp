#pragma once
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace diver {

// Dense row-major matrix of doubles. Deliberately minimal: the whole pipeline
// needs only matmul, transposed matmul variants, and elementwise access.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(size_t i, size_t j) { return data[i * cols + j]; }
    double operator()(size_t i, size_t j) const { return data[i * cols + j]; }
    double* row(size_t i) { return data.data() + i * cols; }
    const double* row(size_t i) const { return data.data() + i * cols; }
    size_t size() const { return data.size(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// out = a * b. ikj loop order keeps the inner loop contiguous in both b and out,
// which the optimizer vectorizes; this is the hot path of every training loop.
inline void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols != b.rows)
        throw std::runtime_error("matmul: inner dimensions " + std::to_string(a.cols) +
                                 " vs " + std::to_string(b.rows));
    out.rows = a.rows;
    out.cols = b.cols;
    out.data.assign(a.rows * b.cols, 0.0);
    for (size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (size_t k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b.row(k);
            for (size_t j = 0; j < b.cols; ++j)
                orow[j] += av * brow[j];
        }
    }
}

// out = a^T * b (a is n x r, b is n x c, out is r x c). Used for weight gradients.
inline void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.rows != b.rows)
        throw std::runtime_error("matmul_tn: outer dimensions " + std::to_string(a.rows) +
                                 " vs " + std::to_string(b.rows));
    out.rows = a.cols;
    out.cols = b.cols;
    out.data.assign(a.cols * b.cols, 0.0);
    for (size_t n = 0; n < a.rows; ++n) {
        const double* arow = a.row(n);
        const double* brow = b.row(n);
        for (size_t i = 0; i < a.cols; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = out.row(i);
            for (size_t j = 0; j < b.cols; ++j)
                orow[j] += av * brow[j];
        }
    }
}

// out = a * b^T (a is n x c, b is m x c, out is n x m). Used for input gradients.
inline void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols != b.cols)
        throw std::runtime_error("matmul_nt: inner dimensions " + std::to_string(a.cols) +
                                 " vs " + std::to_string(b.cols));
    out.rows = a.rows;
    out.cols = b.rows;
    out.data.assign(a.rows * b.rows, 0.0);
    for (size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (size_t k = 0; k < a.cols; ++k)
                acc += arow[k] * brow[k];
            orow[j] = acc;
        }
    }
}

} // namespace diver

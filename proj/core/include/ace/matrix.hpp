#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ace {

// Dense row-major matrix. All scoring and oracle arithmetic runs in
// double even when files store float32; conversions happen only at I/O.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    std::size_t size() const { return rows * cols; }
};

using Vector = std::vector<double>;

// result[i][k] = sum_j a[i][j] * b[j][k], each element accumulated in
// ascending j so reruns are bit-identical. Throws std::invalid_argument
// on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

double dot(std::span<const double> u, std::span<const double> v);

// sqrt of the ascending-index sum of squares; 0 for an empty span.
double l2_norm(std::span<const double> v);

// Clamped to [-1, 1]. Throws std::invalid_argument on length mismatch or
// when either vector has zero norm.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Pivoted Gauss-Jordan inverse for symmetric positive definite input.
// Contract limits dim to 128 (oracle-scale only). Throws
// std::invalid_argument when the input is non-square, asymmetric beyond
// 1e-9 relative, larger than the contract dim, or numerically singular
// (pivot below 1e-12 * max diagonal).
Matrix invert_spd(const Matrix& m);

bool all_finite(const Matrix& m);
bool all_finite(std::span<const double> v);

}  // namespace ace

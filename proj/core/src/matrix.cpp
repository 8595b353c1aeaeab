#include "ace/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ace {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: inner dimensions differ (" +
                                    std::to_string(a.cols) + " vs " + std::to_string(b.rows) + ")");
    }
    Matrix out(a.rows, b.cols, 0.0);
    // i-j-k order: for each out[i][k] the contributions arrive in ascending j,
    // and the traversal stays cache friendly.
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* orow = out.data.data() + i * out.cols;
        for (std::size_t j = 0; j < a.cols; ++j) {
            const double aij = arow[j];
            if (aij == 0.0) continue;
            const double* brow = b.data.data() + j * b.cols;
            for (std::size_t k = 0; k < b.cols; ++k) orow[k] += aij * brow[k];
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
    return out;
}

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
    const double nu = l2_norm(u);
    const double nv = l2_norm(v);
    if (nu == 0.0 || nv == 0.0)
        throw std::invalid_argument("cosine_similarity: zero-norm vector is degenerate");
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Matrix invert_spd(const Matrix& m) {
    constexpr std::size_t kMaxDim = 128;
    if (m.rows != m.cols) throw std::invalid_argument("invert_spd: matrix not square");
    const std::size_t n = m.rows;
    if (n == 0) throw std::invalid_argument("invert_spd: empty matrix");
    if (n > kMaxDim) throw std::invalid_argument("invert_spd: dim exceeds contract limit 128");

    double max_abs = 0.0;
    for (double x : m.data) max_abs = std::max(max_abs, std::abs(x));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(m.at(i, j) - m.at(j, i)) > 1e-9 * std::max(1.0, max_abs))
                throw std::invalid_argument("invert_spd: input not symmetric");

    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(m.at(i, i)));

    // Gauss-Jordan on [A | I] with partial pivoting.
    Matrix a = m;
    Matrix inv(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) inv.at(i, i) = 1.0;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a.at(r, col)) > std::abs(a.at(pivot, col))) pivot = r;
        if (std::abs(a.at(pivot, col)) < 1e-12 * std::max(1.0, max_diag))
            throw std::invalid_argument("invert_spd: matrix numerically singular");
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a.at(pivot, j), a.at(col, j));
                std::swap(inv.at(pivot, j), inv.at(col, j));
            }
        }
        const double p = a.at(col, col);
        for (std::size_t j = 0; j < n; ++j) {
            a.at(col, j) /= p;
            inv.at(col, j) /= p;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a.at(r, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                a.at(r, j) -= f * a.at(col, j);
                inv.at(r, j) -= f * inv.at(col, j);
            }
        }
    }
    return inv;
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const Matrix& m) { return all_finite(std::span<const double>(m.data)); }

}  // namespace ace

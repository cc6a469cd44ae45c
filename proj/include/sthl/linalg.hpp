#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sthl {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. All model math runs in double precision.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() { return {data_.data(), data_.size()}; }
    std::span<const double> flat() const { return {data_.data(), data_.size()}; }

    void fill(double v) { data_.assign(data_.size(), v); }
    bool all_finite() const;

    friend bool operator==(const Matrix& a, const Matrix& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// ---- vector helpers ----

double dot(std::span<const double> a, std::span<const double> b);
// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);
bool all_finite(std::span<const double> x);

// ---- matrix kernels; each mutating backward accumulates (never overwrites) ----

// y = x . W (row vector times matrix)
Vec vecmat(std::span<const double> x, const Matrix& w);
// dx += dy . W^T, dW += x^T dy; either output may be null
void vecmat_backward(std::span<const double> x, const Matrix& w,
                     std::span<const double> dy, std::span<double> dx, Matrix* dw);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // A^T . B
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // A . B^T
Matrix transpose(const Matrix& a);
// dA += dC . B^T, dB += A^T . dC; either may be null
void matmul_backward(const Matrix& a, const Matrix& b, const Matrix& dc,
                     Matrix* da, Matrix* db);

double l1_norm(std::span<const double> x);
// dx += dl * sign(x); the subgradient at 0 is taken as 0
void l1_norm_backward(std::span<const double> x, double dl, std::span<double> dx);

double l2_norm(std::span<const double> x);
// dx += dl * x / norm; defined as 0 at the origin
void l2_norm_backward(std::span<const double> x, double norm, double dl, std::span<double> dx);

Vec softmax(std::span<const double> scores);
Matrix row_softmax(const Matrix& scores);
// dx += (dy - dot(dy, y)) * y, with y = softmax(x)
void softmax_backward(std::span<const double> y, std::span<const double> dy,
                      std::span<double> dx);
double log_sum_exp(std::span<const double> scores);

Vec tanh_vec(std::span<const double> x);
// dx += dy * (1 - y^2), with y = tanh(x)
void tanh_backward(std::span<const double> y, std::span<const double> dy,
                   std::span<double> dx);

// Mean over rows with an order-independent summation policy: per column the
// addends are sorted by value before accumulation, so any permutation of the
// rows yields a bitwise-identical result.
Vec sorted_column_mean(const Matrix& m);

std::size_t argmax(std::span<const double> x);

}  // namespace sthl

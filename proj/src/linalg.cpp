#include "sthl/linalg.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "sthl/errors.hpp"

namespace sthl {

bool Matrix::all_finite() const {
    return sthl::all_finite(flat());
}

bool all_finite(std::span<const double> x) {
    for (double v : x) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

Vec vecmat(std::span<const double> x, const Matrix& w) {
    if (x.size() != w.rows()) throw DimensionError("vecmat: x length != matrix rows");
    Vec y(w.cols(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        axpy(xi, w.row(i), y);
    }
    return y;
}

void vecmat_backward(std::span<const double> x, const Matrix& w,
                     std::span<const double> dy, std::span<double> dx, Matrix* dw) {
    if (!dx.empty()) {
        assert(dx.size() == x.size());
        for (std::size_t i = 0; i < w.rows(); ++i) {
            dx[i] += dot(dy, w.row(i));
        }
    }
    if (dw != nullptr) {
        assert(dw->rows() == w.rows() && dw->cols() == w.cols());
        for (std::size_t i = 0; i < w.rows(); ++i) {
            axpy(x[i], dy, dw->row(i));
        }
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions disagree");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            axpy(aik, b.row(k), c.row(i));
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw DimensionError("matmul_tn: row counts disagree");
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            axpy(a(k, i), b.row(k), c.row(i));
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw DimensionError("matmul_nt: column counts disagree");
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            c(i, j) = dot(a.row(i), b.row(j));
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    }
    return t;
}

void matmul_backward(const Matrix& a, const Matrix& b, const Matrix& dc,
                     Matrix* da, Matrix* db) {
    if (da != nullptr) {
        const Matrix g = matmul_nt(dc, b);
        for (std::size_t i = 0; i < g.size(); ++i) da->flat()[i] += g.flat()[i];
    }
    if (db != nullptr) {
        const Matrix g = matmul_tn(a, dc);
        for (std::size_t i = 0; i < g.size(); ++i) db->flat()[i] += g.flat()[i];
    }
}

double l1_norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    return s;
}

void l1_norm_backward(std::span<const double> x, double dl, std::span<double> dx) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0) {
            dx[i] += dl;
        } else if (x[i] < 0.0) {
            dx[i] -= dl;
        }
    }
}

double l2_norm(std::span<const double> x) {
    return std::sqrt(dot(x, x));
}

void l2_norm_backward(std::span<const double> x, double norm, double dl,
                      std::span<double> dx) {
    if (norm == 0.0) return;  // subgradient at the origin: 0
    axpy(dl / norm, x, dx);
}

Vec softmax(std::span<const double> scores) {
    Vec out(scores.size());
    const double m = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

Matrix row_softmax(const Matrix& scores) {
    Matrix out(scores.rows(), scores.cols());
    for (std::size_t r = 0; r < scores.rows(); ++r) {
        const Vec s = softmax(scores.row(r));
        std::copy(s.begin(), s.end(), out.row(r).begin());
    }
    return out;
}

void softmax_backward(std::span<const double> y, std::span<const double> dy,
                      std::span<double> dx) {
    const double inner = dot(y, dy);
    for (std::size_t i = 0; i < y.size(); ++i) {
        dx[i] += y[i] * (dy[i] - inner);
    }
}

double log_sum_exp(std::span<const double> scores) {
    const double m = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double v : scores) sum += std::exp(v - m);
    return m + std::log(sum);
}

Vec tanh_vec(std::span<const double> x) {
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    return y;
}

void tanh_backward(std::span<const double> y, std::span<const double> dy,
                   std::span<double> dx) {
    for (std::size_t i = 0; i < y.size(); ++i) {
        dx[i] += dy[i] * (1.0 - y[i] * y[i]);
    }
}

Vec sorted_column_mean(const Matrix& m) {
    assert(m.rows() > 0);
    Vec out(m.cols(), 0.0);
    Vec column(m.rows());
    for (std::size_t c = 0; c < m.cols(); ++c) {
        for (std::size_t r = 0; r < m.rows(); ++r) column[r] = m(r, c);
        std::sort(column.begin(), column.end());
        double s = 0.0;
        for (double v : column) s += v;
        out[c] = s / static_cast<double>(m.rows());
    }
    return out;
}

std::size_t argmax(std::span<const double> x) {
    assert(!x.empty());
    std::size_t best = 0;
    for (std::size_t i = 1; i < x.size(); ++i) {
        if (x[i] > x[best]) best = i;
    }
    return best;
}

}  // namespace sthl

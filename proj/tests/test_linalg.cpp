#include <doctest.h>

#include <cmath>

#include "sthl/errors.hpp"
#include "sthl/linalg.hpp"
#include "sthl/rng.hpp"

using namespace sthl;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.flat()) v = rng.normal();
    return m;
}

// independent oracle: plain triple loop, no shared code with Matrix kernels
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    }
    return c;
}

}  // namespace

TEST_CASE("matmul by identity is a no-op") {
    Rng rng(11);
    const Matrix a = random_matrix(4, 4, rng);
    CHECK(matmul(Matrix::identity(4), a) == a);
}

TEST_CASE("matmul matches a naive triple-loop recomputation") {
    Rng rng(42);
    const Matrix a = random_matrix(5, 4, rng);
    const Matrix b = random_matrix(4, 3, rng);
    const Matrix c = matmul(a, b);
    const Matrix expected = naive_matmul(a, b);
    REQUIRE(c.rows() == 5);
    REQUIRE(c.cols() == 3);
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(c.flat()[i] == doctest::Approx(expected.flat()[i]).epsilon(1e-12));
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
}

TEST_CASE("transpose variants agree with transpose + matmul") {
    Rng rng(7);
    const Matrix a = random_matrix(4, 5, rng);
    const Matrix b = random_matrix(4, 3, rng);
    const Matrix c = random_matrix(5, 3, rng);
    const Matrix tn = matmul_tn(a, b);  // A^T B
    const Matrix tn_ref = naive_matmul(transpose(a), b);
    for (std::size_t i = 0; i < tn.size(); ++i) {
        CHECK(tn.flat()[i] == doctest::Approx(tn_ref.flat()[i]).epsilon(1e-12));
    }
    const Matrix nt = matmul_nt(a, transpose(c));
    const Matrix nt_ref = naive_matmul(a, c);
    for (std::size_t i = 0; i < nt.size(); ++i) {
        CHECK(nt.flat()[i] == doctest::Approx(nt_ref.flat()[i]).epsilon(1e-12));
    }
}

TEST_CASE("matmul_backward reproduces finite differences of sum(C)") {
    Rng rng(3);
    const Matrix a = random_matrix(3, 4, rng);
    const Matrix b = random_matrix(4, 2, rng);
    Matrix da(3, 4), db(4, 2);
    Matrix dc(3, 2, 1.0);  // d(sum)/dC = 1
    matmul_backward(a, b, dc, &da, &db);

    const double eps = 1e-6;
    auto loss = [](const Matrix& x, const Matrix& y) {
        const Matrix c = matmul(x, y);
        double s = 0.0;
        for (double v : c.flat()) s += v;
        return s;
    };
    Matrix a2 = a;
    for (std::size_t i = 0; i < a.size(); ++i) {
        a2.flat()[i] = a.flat()[i] + eps;
        const double up = loss(a2, b);
        a2.flat()[i] = a.flat()[i] - eps;
        const double dn = loss(a2, b);
        a2.flat()[i] = a.flat()[i];
        CHECK(da.flat()[i] == doctest::Approx((up - dn) / (2 * eps)).epsilon(1e-6));
    }
}

TEST_CASE("l2_norm backward at x != 0 is x over the norm") {
    const Vec x = {3.0, 4.0};
    Vec dx(2, 0.0);
    l2_norm_backward(x, l2_norm(x), 1.0, dx);
    CHECK(dx[0] == doctest::Approx(0.6));
    CHECK(dx[1] == doctest::Approx(0.8));
}

TEST_CASE("l2_norm backward at the origin is the zero subgradient") {
    const Vec x = {0.0, 0.0};
    Vec dx(2, 0.0);
    l2_norm_backward(x, 0.0, 1.0, dx);
    CHECK(dx[0] == 0.0);
    CHECK(dx[1] == 0.0);
}

TEST_CASE("l1_norm backward uses sign with 0 at 0") {
    const Vec x = {2.0, -3.0, 0.0};
    Vec dx(3, 0.0);
    l1_norm_backward(x, 2.0, dx);
    CHECK(dx[0] == 2.0);
    CHECK(dx[1] == -2.0);
    CHECK(dx[2] == 0.0);
}

TEST_CASE("softmax sums to one and tolerates huge scores") {
    const Vec w = softmax(Vec{1000.0, 0.0});
    CHECK(std::isfinite(w[0]));
    CHECK(w[0] + w[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(w[0] > 0.999);
}

TEST_CASE("row_softmax normalizes every row") {
    Rng rng(5);
    const Matrix scores = random_matrix(4, 6, rng);
    const Matrix w = row_softmax(scores);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double s = 0.0;
        for (double v : w.row(r)) {
            CHECK(v > 0.0);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("softmax_backward matches finite differences") {
    Rng rng(9);
    Vec x = {0.3, -1.2, 0.7};
    Vec dy = {0.5, -0.25, 1.5};
    const Vec y = softmax(x);
    Vec dx(3, 0.0);
    softmax_backward(y, dy, dx);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double old = x[i];
        x[i] = old + eps;
        const Vec yp = softmax(x);
        x[i] = old - eps;
        const Vec ym = softmax(x);
        x[i] = old;
        const double numeric = (dot(dy, yp) - dot(dy, ym)) / (2 * eps);
        CHECK(dx[i] == doctest::Approx(numeric).epsilon(1e-6));
    }
}

TEST_CASE("tanh backward uses the activated value") {
    const Vec x = {0.5, -1.5};
    const Vec y = tanh_vec(x);
    Vec dx(2, 0.0);
    tanh_backward(y, Vec{1.0, 1.0}, dx);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double c = std::cosh(x[i]);
        CHECK(dx[i] == doctest::Approx(1.0 / (c * c)).epsilon(1e-12));
    }
}

TEST_CASE("sorted_column_mean is exactly permutation invariant") {
    Rng rng(13);
    Matrix m = random_matrix(7, 3, rng);
    const Vec base = sorted_column_mean(m);
    // rotate the rows a few times
    for (int shift = 1; shift < 7; shift += 2) {
        Matrix rotated(7, 3);
        for (std::size_t r = 0; r < 7; ++r) {
            for (std::size_t c = 0; c < 3; ++c) rotated((r + shift) % 7, c) = m(r, c);
        }
        const Vec rolled = sorted_column_mean(rotated);
        for (std::size_t c = 0; c < 3; ++c) CHECK(rolled[c] == base[c]);  // bitwise
    }
}

TEST_CASE("log_sum_exp stays finite for logits up to 1e3") {
    const Vec logits = {1e3, -1e3, 0.0};
    CHECK(std::isfinite(log_sum_exp(logits)));
    CHECK(log_sum_exp(logits) == doctest::Approx(1e3));
}

#include <doctest.h>

#include <cmath>

#include "plan/error.hpp"
#include "plan/linalg.hpp"
#include "plan/rng.hpp"

using namespace plan;

namespace {

double orthonormality_error(const Matrix& g) {
    const Matrix gram = matmul_nt(g, g);
    return max_abs_diff(gram, Matrix::identity(g.rows()));
}

Matrix reconstruct(const Svd& svd) {
    Matrix us = svd.u;
    for (size_t i = 0; i < us.rows(); ++i)
        for (size_t j = 0; j < us.cols(); ++j) us(i, j) *= svd.s[j];
    return matmul(us, svd.v);
}

}  // namespace

TEST_CASE("gram_schmidt keeps an orthonormal input") {
    const Matrix id = Matrix::identity(3);
    CHECK(max_abs_diff(gram_schmidt(id), id) == 0.0);
}

TEST_CASE("gram_schmidt normalizes scaled rows") {
    const Matrix m = Matrix::from_rows({{2, 0}, {0, 3}});
    CHECK(max_abs_diff(gram_schmidt(m), Matrix::identity(2)) < 1e-15);
}

TEST_CASE("gram_schmidt produces orthonormal rows spanning the input") {
    const Matrix m = Matrix::from_rows({{1, 1, 0}, {1, 0, 0}});
    const Matrix g = gram_schmidt(m);
    CHECK(orthonormality_error(g) < 1e-12);
    // Span check: each input row reconstructs from projections onto g.
    for (size_t i = 0; i < m.rows(); ++i) {
        Matrix row(1, m.cols());
        for (size_t j = 0; j < m.cols(); ++j) row(0, j) = m(i, j);
        const Matrix coeff = matmul_nt(row, g);
        const Matrix back = matmul(coeff, g);
        CHECK(max_abs_diff(back, row) < 1e-12);
    }
}

TEST_CASE("gram_schmidt flags rank deficiency with the row index") {
    const Matrix m = Matrix::from_rows({{1, 0, 0}, {2, 0, 0}});
    CHECK_THROWS_WITH_AS(gram_schmidt(m), doctest::Contains("row 1"), Error);
}

TEST_CASE("gram_schmidt stays orthonormal at larger sizes") {
    Rng rng(2024);
    const Matrix g = gram_schmidt(gaussian_matrix(rng, 64, 64, 1.0));
    CHECK(orthonormality_error(g) < 1e-10);
}

TEST_CASE("svd of a diagonal matrix") {
    const Svd svd = svd_small(Matrix::from_rows({{3, 0}, {0, 2}}));
    REQUIRE(svd.s.size() == 2);
    CHECK(svd.s[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(svd.s[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("svd of a rank-1 outer product") {
    Rng rng(5);
    const Matrix u = gaussian_matrix(rng, 6, 1, 1.0);
    const Matrix v = gaussian_matrix(rng, 1, 4, 1.0);
    const Svd svd = svd_small(matmul(u, v));
    size_t above = 0;
    for (double s : svd.s)
        if (s > 1e-10) ++above;
    CHECK(above == 1);
}

TEST_CASE("svd reconstruction, ordering and orthonormality on random shapes") {
    Rng rng(31337);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t r = 1 + rng.uniform_below(64);
        const size_t c = 1 + rng.uniform_below(64);
        const Matrix m = gaussian_matrix(rng, r, c, 1.0);
        const Svd svd = svd_small(m);

        for (size_t i = 1; i < svd.s.size(); ++i) CHECK(svd.s[i - 1] >= svd.s[i]);
        for (double s : svd.s) CHECK(s >= 0.0);

        const double fro = flatten_norm(m, NormOrder::l2);
        const double resid = flatten_norm(m - reconstruct(svd), NormOrder::l2);
        CHECK(resid <= 1e-8 * std::max(fro, 1e-30));

        // u has orthonormal columns, v orthonormal rows.
        CHECK(max_abs_diff(matmul_tn(svd.u, svd.u), Matrix::identity(svd.s.size())) < 1e-10);
        CHECK(orthonormality_error(svd.v) < 1e-10);
    }
}

TEST_CASE("svd rejects oversized input") {
    CHECK_THROWS_AS(svd_small(Matrix(300, 300)), ShapeError);
}

TEST_CASE("complete_orthonormal_rows extends to a full basis") {
    Rng rng(11);
    const Matrix part = gram_schmidt(gaussian_matrix(rng, 3, 8, 1.0));
    const Matrix full = complete_orthonormal_rows(part, 8);
    CHECK(full.rows() == 8);
    CHECK(orthonormality_error(full) < 1e-10);
    for (size_t i = 0; i < part.rows(); ++i)
        for (size_t j = 0; j < part.cols(); ++j) CHECK(full(i, j) == part(i, j));
}

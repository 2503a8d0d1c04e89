#pragma once

#include <vector>

#include "plan/matrix.hpp"

namespace plan {

// Thin SVD of m (r x c): m ~= u * diag(s) * v with u (r x n), s (n) and
// v (n x c), n = min(r, c). u has orthonormal columns, v has orthonormal
// rows, and s is sorted non-increasing. The rows of v are the right
// singular vectors.
struct Svd {
    Matrix u;
    std::vector<double> s;
    Matrix v;
};

// One-sided Jacobi SVD for small matrices (min(rows, cols) <= 256).
// Throws if the rotation sweeps do not converge within the sweep cap.
Svd svd_small(const Matrix& m);

// Orthonormalizes the rows of m (rows <= cols) with modified Gram-Schmidt
// plus one re-orthogonalization pass. Row order is preserved: output row i
// is the normalized residual of input row i. Throws naming the offending
// row when a residual norm falls below the rank-deficiency threshold.
Matrix gram_schmidt(const Matrix& m);

// Extends an orthonormal row set (n x dim, n <= dim) to a full dim x dim
// orthonormal matrix, appending standard-basis candidates in index order.
Matrix complete_orthonormal_rows(const Matrix& rows, size_t dim);

}  // namespace plan

#include "plan/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plan/error.hpp"

namespace plan {

namespace {

constexpr double kRankThreshold = 1e-10;  // residual norm below this = rank deficient
constexpr double kJacobiTol = 1e-12;      // relative off-diagonal mass at convergence
constexpr int kJacobiMaxSweeps = 100;

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Core one-sided Jacobi on a matrix with rows >= cols. Returns u (rows x cols
// orthonormal columns), s (cols, descending) and the accumulated rotation
// matrix vt (cols x cols, orthonormal rows) with a ~= u * diag(s) * vt.
Svd jacobi_tall(const Matrix& a) {
    const size_t m = a.rows();
    const size_t n = a.cols();
    Matrix b = a;
    Matrix vt = Matrix::identity(n);

    double off = 0.0;
    bool converged = false;
    for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
        off = 0.0;
        for (size_t i = 0; i + 1 < n; ++i) {
            for (size_t j = i + 1; j < n; ++j) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (size_t k = 0; k < m; ++k) {
                    const double bi = b(k, i), bj = b(k, j);
                    alpha += bi * bi;
                    beta += bj * bj;
                    gamma += bi * bj;
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                const double rel = std::abs(gamma) / std::sqrt(alpha * beta);
                off = std::max(off, rel);
                if (rel <= kJacobiTol) continue;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (size_t k = 0; k < m; ++k) {
                    const double bi = b(k, i), bj = b(k, j);
                    b(k, i) = cs * bi - sn * bj;
                    b(k, j) = sn * bi + cs * bj;
                }
                // vt accumulates the same rotations row-wise so that b = a * vt^T.
                for (size_t k = 0; k < n; ++k) {
                    const double vi = vt(i, k), vj = vt(j, k);
                    vt(i, k) = cs * vi - sn * vj;
                    vt(j, k) = sn * vi + cs * vj;
                }
            }
        }
        converged = off <= kJacobiTol;
    }
    if (!converged) {
        throw Error("svd_small: Jacobi sweeps did not converge, off-diagonal mass " +
                    std::to_string(off));
    }

    std::vector<double> sigma(n);
    for (size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (size_t k = 0; k < m; ++k) acc += b(k, j) * b(k, j);
        sigma[j] = std::sqrt(acc);
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t x, size_t y) { return sigma[x] > sigma[y]; });

    Svd out;
    out.s.resize(n);
    out.u = Matrix(m, n);
    out.v = Matrix(n, n);
    const double sigma_max = sigma.empty() ? 0.0 : sigma[order[0]];
    for (size_t idx = 0; idx < n; ++idx) {
        const size_t src = order[idx];
        out.s[idx] = sigma[src];
        for (size_t k = 0; k < n; ++k) out.v(idx, k) = vt(src, k);
        if (sigma[src] > sigma_max * 1e-14 && sigma[src] > 0.0) {
            for (size_t k = 0; k < m; ++k) out.u(k, idx) = b(k, src) / sigma[src];
        }
        // Columns at (numerically) zero singular values are filled below.
    }

    // Complete null columns of u so u keeps orthonormal columns even for
    // rank-deficient inputs.
    for (size_t idx = 0; idx < n; ++idx) {
        double nrm = 0.0;
        for (size_t k = 0; k < m; ++k) nrm += out.u(k, idx) * out.u(k, idx);
        if (nrm > 0.25) continue;
        for (size_t cand = 0; cand < m; ++cand) {
            std::vector<double> col(m, 0.0);
            col[cand] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (size_t other = 0; other < n; ++other) {
                    if (other == idx) continue;
                    double proj = 0.0;
                    for (size_t k = 0; k < m; ++k) proj += col[k] * out.u(k, other);
                    for (size_t k = 0; k < m; ++k) col[k] -= proj * out.u(k, other);
                }
            }
            const double cn = norm2(col);
            if (cn > 0.5) {
                for (size_t k = 0; k < m; ++k) out.u(k, idx) = col[k] / cn;
                break;
            }
        }
    }
    return out;
}

}  // namespace

Svd svd_small(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) throw ShapeError("svd_small: empty matrix");
    if (std::min(m.rows(), m.cols()) > 256) {
        throw ShapeError("svd_small: min dimension exceeds 256, got " + m.shape_str());
    }
    if (!all_finite(m)) throw Error("svd_small: non-finite entries");

    if (m.rows() >= m.cols()) return jacobi_tall(m);

    // Wide input: factor the transpose and swap the roles of u and v.
    Svd t = jacobi_tall(transpose(m));
    Svd out;
    out.s = std::move(t.s);
    out.u = transpose(t.v);
    out.v = transpose(t.u);
    return out;
}

Matrix gram_schmidt(const Matrix& m) {
    if (m.rows() > m.cols()) {
        throw ShapeError("gram_schmidt: more rows than columns, " + m.shape_str());
    }
    Matrix g = m;
    for (size_t i = 0; i < g.rows(); ++i) {
        auto vi = g.row(i);
        for (int pass = 0; pass < 2; ++pass) {
            for (size_t j = 0; j < i; ++j) {
                auto gj = g.row(j);
                const double proj = dot(vi, gj);
                for (size_t k = 0; k < vi.size(); ++k) vi[k] -= proj * gj[k];
            }
        }
        const double nrm = norm2(vi);
        if (nrm < kRankThreshold) {
            throw Error("gram_schmidt: rank deficiency at row " + std::to_string(i) +
                        " (residual norm " + std::to_string(nrm) + ")");
        }
        for (double& v : vi) v /= nrm;
    }
    return g;
}

Matrix complete_orthonormal_rows(const Matrix& rows, size_t dim) {
    if (rows.cols() != dim) {
        throw ShapeError("complete_orthonormal_rows: row length " + std::to_string(rows.cols()) +
                         " != dim " + std::to_string(dim));
    }
    if (rows.rows() > dim) throw ShapeError("complete_orthonormal_rows: too many rows");

    Matrix out(dim, dim);
    size_t filled = rows.rows();
    for (size_t i = 0; i < filled; ++i)
        for (size_t j = 0; j < dim; ++j) out(i, j) = rows(i, j);

    for (size_t cand = 0; cand < dim && filled < dim; ++cand) {
        std::vector<double> v(dim, 0.0);
        v[cand] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (size_t j = 0; j < filled; ++j) {
                auto gj = out.row(j);
                const double proj = dot(v, gj);
                for (size_t k = 0; k < dim; ++k) v[k] -= proj * gj[k];
            }
        }
        const double nrm = norm2(v);
        if (nrm > 0.5) {
            for (size_t k = 0; k < dim; ++k) out(filled, k) = v[k] / nrm;
            ++filled;
        }
    }
    if (filled < dim) {
        throw Error("complete_orthonormal_rows: could not complete basis, stuck at " +
                    std::to_string(filled) + " of " + std::to_string(dim));
    }
    return out;
}

}  // namespace plan

#include "plan/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "plan/error.hpp"

namespace plan {

NormOrder parse_norm_order(const std::string& s) {
    if (s == "1") return NormOrder::l1;
    if (s == "2") return NormOrder::l2;
    if (s == "inf") return NormOrder::linf;
    throw ConfigError("unknown norm order '" + s + "' (expected 1, 2 or inf)");
}

std::string to_string(NormOrder p) {
    switch (p) {
        case NormOrder::l1: return "1";
        case NormOrder::l2: return "2";
        case NormOrder::linf: return "inf";
    }
    return "?";
}

Matrix::Matrix(size_t rows, size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

Matrix Matrix::identity(size_t n) {
    Matrix m(n, n);
    for (size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const size_t r = rows.size();
    const size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged row in matrix literal");
        size_t j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

std::string Matrix::shape_str() const {
    return "(" + std::to_string(rows_) + ", " + std::to_string(cols_) + ")";
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " x " +
                         b.shape_str());
    }
    Matrix c(a.rows(), b.cols());
    const size_t n = b.cols();
    for (size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i).data();
        for (size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* bk = b.row(k).data();
            for (size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: inner dimensions differ, " + a.shape_str() + " x " +
                         b.shape_str() + "^T");
    }
    Matrix c(a.rows(), b.rows());
    for (size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i).data();
        for (size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.row(j).data();
            double acc = 0.0;
            for (size_t k = 0; k < a.cols(); ++k) acc += ai[k] * bj[k];
            c(i, j) = acc;
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: inner dimensions differ, " + a.shape_str() + "^T x " +
                         b.shape_str());
    }
    Matrix c(a.cols(), b.cols());
    for (size_t k = 0; k < a.rows(); ++k) {
        const double* ak = a.row(k).data();
        const double* bk = b.row(k).data();
        for (size_t i = 0; i < a.cols(); ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = c.row(i).data();
            for (size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (size_t i = 0; i < m.rows(); ++i)
        for (size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "add");
    Matrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (size_t i = 0; i < cd.size(); ++i) cd[i] += bd[i];
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "sub");
    Matrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
    return c;
}

Matrix operator*(double s, const Matrix& m) {
    Matrix c = m;
    for (double& v : c.data()) v *= s;
    return c;
}

double flatten_norm(const Matrix& m, NormOrder p) {
    double acc = 0.0;
    switch (p) {
        case NormOrder::l1:
            for (double v : m.data()) acc += std::abs(v);
            return acc;
        case NormOrder::l2:
            for (double v : m.data()) acc += v * v;
            return std::sqrt(acc);
        case NormOrder::linf:
            for (double v : m.data()) acc = std::max(acc, std::abs(v));
            return acc;
    }
    return acc;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "max_abs_diff");
    double d = 0.0;
    auto ad = a.data();
    auto bd = b.data();
    for (size_t i = 0; i < ad.size(); ++i) d = std::max(d, std::abs(ad[i] - bd[i]));
    return d;
}

bool all_finite(const Matrix& m) {
    for (double v : m.data())
        if (!std::isfinite(v)) return false;
    return true;
}

uint64_t hash_bytes(uint64_t h, const void* p, size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t hash_doubles(uint64_t h, std::span<const double> v) {
    return hash_bytes(h, v.data(), v.size() * sizeof(double));
}

uint64_t hash_u64(uint64_t h, uint64_t v) { return hash_bytes(h, &v, sizeof(v)); }

uint64_t hash_matrix(uint64_t h, const Matrix& m) {
    h = hash_u64(h, m.rows());
    h = hash_u64(h, m.cols());
    return hash_doubles(h, m.data());
}

std::string hash_hex(uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

}  // namespace plan

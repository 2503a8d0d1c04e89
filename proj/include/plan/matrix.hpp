#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace plan {

enum class NormOrder { l1, l2, linf };

NormOrder parse_norm_order(const std::string& s);  // "1" | "2" | "inf"
std::string to_string(NormOrder p);

// Dense row-major matrix of 64-bit floats. Operations return fresh values;
// returned matrices are safe to share read-only across threads.
class Matrix {
  public:
    Matrix() = default;
    Matrix(size_t rows, size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(size_t rows, size_t cols, std::vector<double> data);

    static Matrix identity(size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(size_t i, size_t j) { return data_[i * cols_ + j]; }
    double operator()(size_t i, size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<double> data() { return {data_}; }
    std::span<const double> data() const { return {data_}; }

    std::string shape_str() const;

  private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix transpose(const Matrix& m);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);

// l_p norm of the flattened entries.
double flatten_norm(const Matrix& m, NormOrder p);

double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);

// FNV-1a chaining over raw byte representations; used for freeze checksums
// and content-addressed file names.
inline constexpr uint64_t kFnvOffset = 1469598103934665603ull;
uint64_t hash_bytes(uint64_t h, const void* p, size_t n);
uint64_t hash_doubles(uint64_t h, std::span<const double> v);
uint64_t hash_u64(uint64_t h, uint64_t v);
uint64_t hash_matrix(uint64_t h, const Matrix& m);
std::string hash_hex(uint64_t h);

}  // namespace plan

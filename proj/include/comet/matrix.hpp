#ifndef COMET_MATRIX_HPP
#define COMET_MATRIX_HPP

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace comet {

/**
 * Dense row-major matrix of doubles.
 *
 * Rows are exposed as spans so callers can treat a row as a feature vector
 * or embedding without copying.
 */
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    /// Copies the listed rows, in order, into a new matrix.
    Matrix gather_rows(std::span<const std::size_t> indices) const;

    bool all_finite() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// a (n×k) · b (k×m)
Matrix matmul(const Matrix& a, const Matrix& b);

/// aᵀ (k×n)ᵀ · b (k×m) -> n×m
Matrix matmul_transpose_a(const Matrix& a, const Matrix& b);

/// a (n×k) · bᵀ (m×k)ᵀ -> n×m
Matrix matmul_transpose_b(const Matrix& a, const Matrix& b);

/// Column sums, one entry per column.
std::vector<double> column_sums(const Matrix& m);

}  // namespace comet

#endif

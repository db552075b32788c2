#include "comet/matrix.hpp"

#include <cmath>
#include <string>

#include "comet/error.hpp"

namespace comet {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) {
        throw DimensionError("matrix data has " + std::to_string(data_.size()) + " values, expected " +
                             std::to_string(rows * cols));
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t d = n == 0 ? 0 : rows.begin()->size();
    Matrix out(n, d);
    std::size_t r = 0;
    for (const auto& row : rows) {
        if (row.size() != d) {
            throw DimensionError("ragged initializer rows");
        }
        std::size_t c = 0;
        for (double v : row) {
            out(r, c++) = v;
        }
        ++r;
    }
    return out;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = 1.0;
    }
    return out;
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) {
            throw IndexError("row " + std::to_string(indices[i]) + " out of range for " +
                             std::to_string(rows_) + " rows");
        }
        auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

namespace {

void require(bool ok, const char* what) {
    if (!ok) {
        throw DimensionError(what);
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            auto src = b.row(k);
            for (std::size_t j = 0; j < dst.size(); ++j) {
                dst[j] += aik * src[j];
            }
        }
    }
    return out;
}

Matrix matmul_transpose_a(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "matmul_transpose_a: row counts differ");
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) {
                continue;
            }
            auto dst = out.row(i);
            for (std::size_t j = 0; j < dst.size(); ++j) {
                dst[j] += aki * brow[j];
            }
        }
    }
    return out;
}

Matrix matmul_transpose_b(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), "matmul_transpose_b: column counts differ");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto arow = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto brow = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < arow.size(); ++k) {
                acc += arow[k] * brow[k];
            }
            out(i, j) = acc;
        }
    }
    return out;
}

std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> out(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < out.size(); ++c) {
            out[c] += row[c];
        }
    }
    return out;
}

}  // namespace comet

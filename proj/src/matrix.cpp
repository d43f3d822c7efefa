#include "peftlab/matrix.hpp"

#include <cmath>

#include "peftlab/errors.hpp"

namespace peftlab {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("matrix dims must be >= 1, got " + shape_str());
    }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("matrix dims must be >= 1, got " + shape_str());
    }
    if (data_.size() != rows * cols) {
        throw ShapeError("matrix payload length " + std::to_string(data_.size()) +
                         " does not match " + shape_str());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
        if (row.size() != cols_) {
            throw ShapeError("ragged initializer for matrix");
        }
        data_.insert(data_.end(), row.begin(), row.end());
    }
}

Matrix Matrix::zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

Matrix Matrix::constant(std::size_t rows, std::size_t cols, double value) {
    Matrix m(rows, cols);
    m.fill(value);
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

double& Matrix::at(std::size_t r, std::size_t c) {
    if (r >= rows_ || c >= cols_) {
        throw IndexError("matrix index (" + std::to_string(r) + "," + std::to_string(c) +
                         ") out of range for " + shape_str());
    }
    return data_[r * cols_ + c];
}

double Matrix::at(std::size_t r, std::size_t c) const {
    return const_cast<Matrix*>(this)->at(r, c);
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void Matrix::fill(double value) {
    for (double& x : data_) x = value;
}

bool Matrix::all_finite() const noexcept {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

double Matrix::frobenius_norm() const noexcept {
    double s = 0.0;
    for (double x : data_) s += x * x;
    return std::sqrt(s);
}

double Matrix::max_abs() const noexcept {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::abs(x));
    return m;
}

Matrix Matrix::row_as_column(std::size_t r) const {
    if (r >= rows_) {
        throw IndexError("row " + std::to_string(r) + " out of range for " + shape_str());
    }
    Matrix col(cols_, 1);
    for (std::size_t c = 0; c < cols_; ++c) col(c, 0) = (*this)(r, c);
    return col;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff: shapes " + a.shape_str() + " vs " + b.shape_str());
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

}  // namespace peftlab

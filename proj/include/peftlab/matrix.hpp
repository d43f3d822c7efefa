#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace peftlab {

// Dense row-major matrix of 64-bit reals. Plain data carrier: arithmetic that
// participates in differentiation lives on the Tape, brute-force reference
// arithmetic lives in the oracle namespace. Both read this container.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix zeros(std::size_t rows, std::size_t cols);
    static Matrix constant(std::size_t rows, std::size_t cols, double value);
    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_str() const;

    void fill(double value);
    bool all_finite() const noexcept;
    double frobenius_norm() const noexcept;
    double max_abs() const noexcept;

    // Extracts row r as an n x 1 column vector (used by per-sample capture).
    Matrix row_as_column(std::size_t r) const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Largest |a-b| over all entries; throws ShapeError on shape mismatch.
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace peftlab

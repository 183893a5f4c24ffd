#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ncl {

/// Dense row-major matrix of doubles. A row vector is a 1×n matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  Matrix transposed() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(Matrix a, double s);

/// Plain (non-recorded) product; uses the parallel kernel.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix concat_rows(std::span<const Matrix> blocks);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// u·v / (‖u‖‖v‖). Throws DegenerateInputError on a zero-norm argument.
double cosine(std::span<const double> u, std::span<const double> v);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace ncl

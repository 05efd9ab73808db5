/*
 * Copyright 2026 The ntkc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Small dense real matrices. Row-major, value semantics, every operation
// returns a fresh matrix. Sizes in this project stay below a few hundred.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ntkc {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix ones(std::size_t rows, std::size_t cols);
  static Matrix diagonal(std::span<const double> values);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool square() const noexcept { return rows_ == cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row_ptr(std::size_t i) noexcept { return data_.data() + i * cols_; }
  const double* row_ptr(std::size_t i) const noexcept { return data_.data() + i * cols_; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transposed() const;
  Vector col(std::size_t j) const;
  Vector row(std::size_t i) const;
  void set_col(std::size_t j, std::span<const double> values);

  /// Columns [first, first + count).
  Matrix col_range(std::size_t first, std::size_t count) const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  /// this += s * other
  Matrix& add_scaled(double s, const Matrix& other);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator-(Matrix a);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);

Vector operator*(const Matrix& a, std::span<const double> x);

/// aᵀ·b without materializing the transpose.
Matrix transpose_times(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix times_transpose(const Matrix& a, const Matrix& b);

Matrix hcat(const Matrix& a, const Matrix& b);
Matrix kron(const Matrix& a, const Matrix& b);

/// v·1ᵀ, a rows(v) × cols matrix with every column equal to v.
Matrix outer_ones(std::span<const double> v, std::size_t cols);
Vector row_sums(const Matrix& a);

double frobenius_norm(const Matrix& a);
double frobenius_dot(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& a);
double trace(const Matrix& a);
double norm2(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

bool all_finite(const Matrix& a);
bool all_finite(std::span<const double> v);

/// (a + aᵀ)/2.
Matrix symmetrized(const Matrix& a);

/// max |a_ij - a_ji| relative to ‖a‖_F (0 for the zero matrix).
double asymmetry(const Matrix& a);

struct SymmetricEigen {
  Vector values;    // descending
  Matrix vectors;   // column k pairs with values[k]; orthonormal
};

/// Cyclic Jacobi eigensolver for symmetric matrices.
/// Throws DimensionError for non-square input, SymmetryError when the
/// relative asymmetry exceeds 1e-12 and ConvergenceError when the sweep
/// budget runs out.
SymmetricEigen sym_eig(const Matrix& a, int max_sweeps = 100);

/// Unique symmetric PSD square root. Eigenvalues down to -1e-10·‖a‖_F are
/// clamped to zero; anything more negative throws NotPsdError.
Matrix psd_sqrt(const Matrix& a);

/// exp(s·a) for symmetric a, through its eigendecomposition.
Matrix sym_expm(const Matrix& a, double s = 1.0);

}  // namespace ntkc

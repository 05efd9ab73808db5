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

#include "ntkc/block_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ntkc/errors.hpp"

namespace ntkc {

void Dims::validate(std::size_t min_per_class) const {
  if (classes < 2) throw InvalidArgument("dims: need at least two classes");
  if (per_class < min_per_class) throw InvalidArgument("dims: too few samples per class");
  if (features <= classes) throw InvalidArgument("dims: feature dimension must exceed class count");
}

void BlockKernelSpec::validate() const {
  if (!ordered()) {
    throw InvalidArgument("block kernel: need lambda_diag > lambda_class > lambda_cross, got (" +
                          std::to_string(lambda_diag) + ", " + std::to_string(lambda_class) +
                          ", " + std::to_string(lambda_cross) + ")");
  }
}

Vector EigenStructure::spectrum() const {
  Vector out;
  out.insert(out.end(), mult_global, lambda_global);
  out.insert(out.end(), mult_class, lambda_class);
  out.insert(out.end(), mult_single, lambda_single);
  std::stable_sort(out.begin(), out.end(), std::greater<>());
  return out;
}

void BlockKernelSpec::validate_levels() const {
  const bool finite = std::isfinite(lambda_diag) && std::isfinite(lambda_class) &&
                      std::isfinite(lambda_cross);
  if (!finite || lambda_diag < lambda_class || lambda_class < lambda_cross) {
    throw InvalidArgument("block kernel: need lambda_diag >= lambda_class >= lambda_cross, got (" +
                          std::to_string(lambda_diag) + ", " + std::to_string(lambda_class) +
                          ", " + std::to_string(lambda_cross) + ")");
  }
}

Matrix build_block_matrix(const BlockKernelSpec& spec, const Dims& dims) {
  spec.validate_levels();
  const std::size_t n = dims.samples();
  if (n == 0) throw DimensionError("build_block_matrix: empty problem");
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        k(i, j) = spec.lambda_diag;
      } else if (i / dims.per_class == j / dims.per_class) {
        k(i, j) = spec.lambda_class;
      } else {
        k(i, j) = spec.lambda_cross;
      }
    }
  }
  return k;
}

EigenStructure closed_form_eigen(const BlockKernelSpec& spec, const Dims& dims) {
  spec.validate_levels();
  const std::size_t c = dims.classes;
  const std::size_t m = dims.per_class;
  const std::size_t n = dims.samples();
  if (c < 2 || m < 2) throw InvalidArgument("closed_form_eigen: need C >= 2 and m >= 2");

  EigenStructure out;
  out.lambda_single = spec.lambda_diag - spec.lambda_class;
  out.lambda_class = out.lambda_single + static_cast<double>(m) * (spec.lambda_class - spec.lambda_cross);
  out.lambda_global = out.lambda_class + static_cast<double>(n) * spec.lambda_cross;
  out.mult_single = n - c;
  out.mult_class = c - 1;
  out.mult_global = 1;

  const double inv_m1 = 1.0 / static_cast<double>(m - 1);
  out.single_vectors = Matrix(n, n);
  for (std::size_t cls = 0; cls < c; ++cls) {
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t column = cls * m + i;
      for (std::size_t j = 0; j < m; ++j) {
        out.single_vectors(cls * m + j, column) = (i == j ? static_cast<double>(m - 1) : -1.0) * inv_m1;
      }
    }
  }

  const double inv_c1 = 1.0 / static_cast<double>(c - 1);
  out.class_vectors = Matrix(n, c);
  for (std::size_t cls = 0; cls < c; ++cls)
    for (std::size_t row = 0; row < n; ++row)
      out.class_vectors(row, cls) = (row / m == cls ? static_cast<double>(c - 1) : -1.0) * inv_c1;

  out.global_vector = Matrix::ones(n, 1);
  return out;
}

double kernel_alignment(const Matrix& kernel, const Matrix& labels) {
  if (!kernel.square() || kernel.rows() != labels.cols()) {
    throw DimensionError("kernel_alignment: kernel must be N x N for C x N labels");
  }
  const double knorm = frobenius_norm(kernel);
  if (knorm == 0.0) throw DegenerateInputError("kernel_alignment: zero kernel");
  const Matrix target = transpose_times(labels, labels);
  const double tnorm = frobenius_norm(target);
  if (tnorm == 0.0) throw DegenerateInputError("kernel_alignment: zero label Gram");
  return frobenius_dot(kernel, target) / (knorm * tnorm);
}

BlockFit fit_block_spec(const Matrix& kernel, const Dims& dims) {
  const std::size_t n = dims.samples();
  if (!kernel.square() || kernel.rows() != n) throw DimensionError("fit_block_spec: kernel must be N x N");
  if (dims.per_class < 2) throw InvalidArgument("fit_block_spec: need m >= 2");

  double diag = 0.0, same = 0.0, cross = 0.0;
  std::size_t n_same = 0, n_cross = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        diag += kernel(i, j);
      } else if (i / dims.per_class == j / dims.per_class) {
        same += kernel(i, j);
        ++n_same;
      } else {
        cross += kernel(i, j);
        ++n_cross;
      }
    }
  }
  BlockFit fit;
  fit.spec = {diag / static_cast<double>(n), same / static_cast<double>(n_same),
              cross / static_cast<double>(n_cross)};

  const double knorm = frobenius_norm(kernel);
  Matrix diff = kernel;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double level = i == j ? fit.spec.lambda_diag
                           : i / dims.per_class == j / dims.per_class ? fit.spec.lambda_class
                                                                      : fit.spec.lambda_cross;
      diff(i, j) -= level;
    }
  }
  fit.residual = knorm == 0.0 ? 0.0 : frobenius_norm(diff) / knorm;
  return fit;
}

}  // namespace ntkc

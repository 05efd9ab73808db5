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

// Kernels on class-contiguous samples that take three values: on identical
// samples, on distinct same-class pairs and on cross-class pairs.

#include <cstddef>

#include "ntkc/linalg.hpp"

namespace ntkc {

/// Problem dimensions. Samples of class c occupy columns [c·m, (c+1)·m).
struct Dims {
  std::size_t classes = 2;       // C
  std::size_t per_class = 2;     // m
  std::size_t features = 3;      // n

  std::size_t samples() const noexcept { return classes * per_class; }  // N

  /// Checks C ≥ 2, m ≥ 2, n > C. `min_per_class` relaxes m for label-only uses.
  void validate(std::size_t min_per_class = 2) const;
};

struct BlockKernelSpec {
  double lambda_diag = 1.0;   // identical samples
  double lambda_class = 0.0;  // distinct same-class pairs
  double lambda_cross = 0.0;  // cross-class pairs

  /// Throws InvalidArgument unless lambda_diag > lambda_class > lambda_cross.
  void validate() const;
  /// Weaker check for building matrices: finite and lambda_diag >= lambda_class
  /// >= lambda_cross, so degenerate levels such as (1, 0, 0) are allowed.
  void validate_levels() const;
  bool ordered() const noexcept {
    return lambda_diag > lambda_class && lambda_class > lambda_cross;
  }
};

/// Closed-form spectrum of a block kernel. Eigenvectors are kept unnormalized
/// with the 1/(m-1) and 1/(C-1) prefactors, so ⟨r, v0⟩ = N·mean(r).
struct EigenStructure {
  double lambda_single = 0.0;
  double lambda_class = 0.0;
  double lambda_global = 0.0;
  std::size_t mult_single = 0;  // N - C
  std::size_t mult_class = 0;   // C - 1
  std::size_t mult_global = 1;

  /// Column (c·m + i) is the within-class contrast for sample i of class c.
  /// These N columns span the N - C dimensional single-sample eigenspace.
  Matrix single_vectors;
  /// Column c is the class contrast of class c; C columns spanning C - 1 dims.
  Matrix class_vectors;
  /// All-ones, N × 1.
  Matrix global_vector;

  /// Eigenvalues with multiplicity, descending.
  Vector spectrum() const;
};

Matrix build_block_matrix(const BlockKernelSpec& spec, const Dims& dims);

EigenStructure closed_form_eigen(const BlockKernelSpec& spec, const Dims& dims);

/// ⟨K/‖K‖_F, YᵀY/‖YᵀY‖_F⟩_F. Throws DegenerateInputError for zero K.
double kernel_alignment(const Matrix& kernel, const Matrix& labels);

struct BlockFit {
  BlockKernelSpec spec;
  double residual = 0.0;  // ‖K - fit‖_F / ‖K‖_F
};

/// Averages the diagonal, same-class and cross-class index sets. The result
/// is not required to satisfy the ordering.
BlockFit fit_block_spec(const Matrix& kernel, const Dims& dims);

}  // namespace ntkc

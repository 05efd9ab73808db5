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

// Neural Collapse diagnostics on class-contiguous features H (n × N).
//
// NC1 is the per-class RMS distance of features to their class mean,
// averaged over classes: (1/C)·Σ_c √((1/m)·Σ_i ‖h(x_i^c) - ⟨h⟩_c‖²).
// With the Helmert split this equals (1/C)·Σ_c ‖H2^(c)‖_F.

#include "ntkc/block_kernel.hpp"
#include "ntkc/linalg.hpp"

namespace ntkc {

struct NcReport {
  double nc1 = 0.0;
  double nc2 = 0.0;
  double nc3 = 0.0;
  double nc4 = 0.0;
  double bias_gap = 0.0;                // ‖b - (1/C)·1‖₂
  double global_mean_norm = 0.0;        // ‖⟨h⟩‖₂
  double class_mean_norm_spread = 0.0;  // max_c - min_c of ‖⟨h⟩_c - ⟨h⟩‖₂
};

/// n × C matrix of class means ⟨h⟩_c.
Matrix class_means(const Matrix& h, const Dims& dims);

double nc1_variability(const Matrix& h, const Dims& dims);

/// Columns (⟨h⟩_c - ⟨h⟩)/‖⟨h⟩_c - ⟨h⟩‖₂. Throws DegenerateInputError when a
/// centered mean has norm below 1e-14.
Matrix centered_class_means(const Matrix& h, const Dims& dims);

/// Simplex ETF Gram (C/(C-1))(I - (1/C)11ᵀ).
Matrix etf_gram(std::size_t classes);

/// ‖MᵀM/‖MᵀM‖_F - Φ/‖Φ‖_F‖_F.
double nc2_etf_distance(const Matrix& m);

/// ‖Wᵀ/‖W‖_F - M/‖M‖_F‖_F. Throws DegenerateInputError on a zero argument.
double nc3_duality(const Matrix& w, const Matrix& m);

/// Fraction of the columns of `points` on which argmax_c (W·h + b)_c equals
/// argmin_c ‖h - means_c‖₂. Ties go to the lowest class index.
double nc4_agreement(const Matrix& w, const Vector& b, const Matrix& points, const Matrix& means);

/// Training-point NC4: class means taken from H itself. C = 1 gives 1.
double nc4_agreement(const Matrix& w, const Vector& b, const Matrix& h, const Dims& dims);

/// All metrics. nc2 and nc3 are NaN when the centered class means are
/// degenerate (e.g. at an all-zero initialization).
NcReport nc_report(const Matrix& h, const Matrix& w, const Vector& b, const Dims& dims);

}  // namespace ntkc

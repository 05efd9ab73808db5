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

// Conserved quantities of the block-kernel flow and the closed-form limit
// structures for constant and general biases.

#include "ntkc/block_kernel.hpp"
#include "ntkc/dynamics.hpp"
#include "ntkc/linalg.hpp"

namespace ntkc {

/// Throws InvalidArgument if κ is not ordered and DegenerateInputError when
/// μ_class + C·κ_n·m vanishes.
DerivedConstants derived_constants(const BlockKernelSpec& kappa, const Dims& dims);

/// α through its expanded form 1/((κ_c/κ_n)(1 - 1/m) + (κ_d/κ_n)/m + C - 1).
/// Requires κ_n ≠ 0.
double alpha_expanded(const BlockKernelSpec& kappa, const Dims& dims);

struct InvariantReport {
  Matrix e;       // (1/m)WᵀW - (1/μ_class)H1(I - α11ᵀ)H1ᵀ - (1/μ_single)H2H2ᵀ
  Matrix e_eot;   // WᵀW - (1/μ_single)HHᵀ
  double norm_e = 0.0;
  double norm_e_eot = 0.0;
  /// Frobenius cosine of WᵀW and (1/μ_class)H1H1ᵀ - (1/μ_single)H2H2ᵀ.
  double alignment_score = 0.0;
  double psd_margin = 0.0;  // smallest eigenvalue of E
};

/// Aligned means alignment_score ≥ 0.99.
inline constexpr double kAlignedThreshold = 0.99;

Matrix invariant_e(const DecomposedState& s, const DerivedConstants& consts, const Dims& dims);

/// Ẽ = μ_single·WᵀW - m·H2·H2ᵀ, conserved by the end-of-training system.
Matrix invariant_eot_tilde(const DecomposedState& s, const DerivedConstants& consts,
                           const Dims& dims);

InvariantReport compute_e(const DecomposedState& s, const DerivedConstants& consts,
                          const Dims& dims);

struct GeneralBiasStructure {
  double beta = 0.0;
  double rho = 0.0;        // (1 - (1 - αC)(1 - βC)²)/C
  double gamma = 0.0;      // weight Gram off-diagonal constant
  double phi = 0.0;        // (1 - √(1 - αC))/C
  double rho_tilde = 0.0;  // (1 - |1 - βC|)/C
  double theta = 0.0;      // class-mean Gram off-diagonal constant
  Matrix predicted_wwt;    // √(m/μ_class)(I - γ11ᵀ)
  Matrix predicted_h1th1;  // √(μ_class/m)(I - θ11ᵀ)
  Matrix predicted_mtm;    // √(μ_class/m)(I - (1/C)11ᵀ), M the centered class means
};

/// Limit structure for constant biases b = β·1. Throws InvalidArgument when
/// α ≥ 1/C.
GeneralBiasStructure general_bias_structure(double beta, const DerivedConstants& consts,
                                            const Dims& dims);

/// (m/μ_class)(I - α11ᵀ + (1 - αC)(C·bbᵀ - b1ᵀ - 1bᵀ)).
Matrix general_bias_weight_gram_squared(const Vector& b, const DerivedConstants& consts,
                                        const Dims& dims);

/// Right-hand side of the class-mean Gram relation for general biases:
/// (μ_class/m)(I - b1ᵀ - 1bᵀ + ‖b‖²11ᵀ) = A(I - α11ᵀ)A with A = H1ᵀH1.
Matrix general_bias_class_mean_target(const Vector& b, const DerivedConstants& consts,
                                      const Dims& dims);

}  // namespace ntkc

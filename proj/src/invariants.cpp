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

#include "ntkc/invariants.hpp"

#include <cmath>

#include "ntkc/errors.hpp"

namespace ntkc {

namespace {

Matrix ones_outer(std::size_t c) { return Matrix::ones(c, c); }

double cosine(const Matrix& a, const Matrix& b) {
  const double na = frobenius_norm(a);
  const double nb = frobenius_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return frobenius_dot(a, b) / (na * nb);
}

}  // namespace

DerivedConstants derived_constants(const BlockKernelSpec& kappa, const Dims& dims) {
  kappa.validate();
  const double m = static_cast<double>(dims.per_class);
  const double c = static_cast<double>(dims.classes);
  DerivedConstants out;
  out.kappa = kappa;
  out.mu_single = kappa.lambda_diag - kappa.lambda_class;
  out.mu_class = out.mu_single + m * (kappa.lambda_class - kappa.lambda_cross);
  const double denom = out.mu_class + c * kappa.lambda_cross * m;
  if (denom == 0.0) throw DegenerateInputError("derived_constants: mu_class + C*kappa_n*m vanishes");
  out.alpha = kappa.lambda_cross * m / denom;

  // (I + (κ_n·m/μ_class)·11ᵀ)⁻¹ = I - α·11ᵀ.
  const std::size_t cc = dims.classes;
  const Matrix lhs = Matrix::identity(cc) + ones_outer(cc) * (kappa.lambda_cross * m / out.mu_class);
  const Matrix rhs = Matrix::identity(cc) - ones_outer(cc) * out.alpha;
  if (max_abs(lhs * rhs - Matrix::identity(cc)) > 1e-10 * (1.0 + max_abs(lhs))) {
    throw DegenerateInputError("derived_constants: alpha inverse identity failed");
  }
  return out;
}

double alpha_expanded(const BlockKernelSpec& kappa, const Dims& dims) {
  if (kappa.lambda_cross == 0.0) throw InvalidArgument("alpha_expanded: kappa_n must be nonzero");
  const double m = static_cast<double>(dims.per_class);
  const double c = static_cast<double>(dims.classes);
  return 1.0 / (kappa.lambda_class / kappa.lambda_cross * (1.0 - 1.0 / m) +
                kappa.lambda_diag / kappa.lambda_cross / m + (c - 1.0));
}

Matrix invariant_e(const DecomposedState& s, const DerivedConstants& consts, const Dims& dims) {
  const std::size_t c = dims.classes;
  const double m = static_cast<double>(dims.per_class);
  const Matrix damp = Matrix::identity(c) - ones_outer(c) * consts.alpha;
  Matrix e = transpose_times(s.w, s.w) * (1.0 / m);
  e.add_scaled(-1.0 / consts.mu_class, s.h1 * damp * s.h1.transposed());
  e.add_scaled(-1.0 / consts.mu_single, times_transpose(s.h2, s.h2));
  return symmetrized(e);
}

Matrix invariant_eot_tilde(const DecomposedState& s, const DerivedConstants& consts,
                           const Dims& dims) {
  Matrix out = transpose_times(s.w, s.w) * consts.mu_single;
  out.add_scaled(-static_cast<double>(dims.per_class), times_transpose(s.h2, s.h2));
  return out;
}

InvariantReport compute_e(const DecomposedState& s, const DerivedConstants& consts,
                          const Dims& dims) {
  const double m = static_cast<double>(dims.per_class);
  const Matrix wtw = transpose_times(s.w, s.w);
  const Matrix h1h1 = times_transpose(s.h1, s.h1);
  const Matrix h2h2 = times_transpose(s.h2, s.h2);

  InvariantReport out;
  out.e = invariant_e(s, consts, dims);
  // H·Hᵀ = m(H1·H1ᵀ + H2·H2ᵀ) because Q is orthogonal.
  out.e_eot = wtw;
  out.e_eot.add_scaled(-m / consts.mu_single, h1h1 + h2h2);
  out.e_eot = symmetrized(out.e_eot);
  out.norm_e = frobenius_norm(out.e);
  out.norm_e_eot = frobenius_norm(out.e_eot);
  Matrix feature_side = h1h1 * (1.0 / consts.mu_class);
  feature_side.add_scaled(-1.0 / consts.mu_single, h2h2);
  out.alignment_score = cosine(wtw, feature_side);
  out.psd_margin = sym_eig(out.e).values.back();
  return out;
}

GeneralBiasStructure general_bias_structure(double beta, const DerivedConstants& consts,
                                            const Dims& dims) {
  const std::size_t cc = dims.classes;
  const double c = static_cast<double>(cc);
  const double m = static_cast<double>(dims.per_class);
  const double alpha = consts.alpha;
  if (alpha * c >= 1.0) throw InvalidArgument("general_bias_structure: need alpha < 1/C");

  GeneralBiasStructure g;
  g.beta = beta;
  const double root_alpha = std::sqrt(1.0 - alpha * c);
  const double bias_gap = std::abs(1.0 - beta * c);
  g.rho = (1.0 - (1.0 - alpha * c) * (1.0 - beta * c) * (1.0 - beta * c)) / c;
  g.gamma = (1.0 - bias_gap * root_alpha) / c;
  g.phi = (1.0 - root_alpha) / c;
  g.rho_tilde = (1.0 - bias_gap) / c;
  // A = H1ᵀH1 solves A(I - α11ᵀ)A = (μ_class/m)(I - β11ᵀ)². With
  // (I - φ11ᵀ)² = I - α11ᵀ and (I - φ11ᵀ)⁻¹ = I + φ/(1 - φC)·11ᵀ this gives
  // A ∝ (I - ρ̃11ᵀ)(I + ψ11ᵀ), ψ = φ/(1 - φC), i.e. 1 - θC = |1 - βC|/√(1 - αC).
  const double psi = g.phi / (1.0 - g.phi * c);
  g.theta = g.rho_tilde - psi + c * g.rho_tilde * psi;

  const Matrix ident = Matrix::identity(cc);
  const Matrix ones = ones_outer(cc);
  const double w_scale = std::sqrt(m / consts.mu_class);
  const double h_scale = std::sqrt(consts.mu_class / m);
  g.predicted_wwt = (ident - ones * g.gamma) * w_scale;
  g.predicted_h1th1 = (ident - ones * g.theta) * h_scale;
  g.predicted_mtm = (ident - ones * (1.0 / c)) * h_scale;
  return g;
}

Matrix general_bias_weight_gram_squared(const Vector& b, const DerivedConstants& consts,
                                        const Dims& dims) {
  const std::size_t cc = dims.classes;
  if (b.size() != cc) throw DimensionError("general_bias_weight_gram_squared: bias length != C");
  const double c = static_cast<double>(cc);
  Matrix out = Matrix::identity(cc) - ones_outer(cc) * consts.alpha;
  Matrix bias_part(cc, cc);
  for (std::size_t i = 0; i < cc; ++i)
    for (std::size_t j = 0; j < cc; ++j) bias_part(i, j) = c * b[i] * b[j] - b[i] - b[j];
  out.add_scaled(1.0 - consts.alpha * c, bias_part);
  return out * (static_cast<double>(dims.per_class) / consts.mu_class);
}

Matrix general_bias_class_mean_target(const Vector& b, const DerivedConstants& consts,
                                      const Dims& dims) {
  const std::size_t cc = dims.classes;
  if (b.size() != cc) throw DimensionError("general_bias_class_mean_target: bias length != C");
  const double bb = dot(b, b);
  Matrix out = Matrix::identity(cc);
  for (std::size_t i = 0; i < cc; ++i)
    for (std::size_t j = 0; j < cc; ++j) out(i, j) += -b[i] - b[j] + bb;
  return out * (consts.mu_class / static_cast<double>(dims.per_class));
}

}  // namespace ntkc

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

#include "ntkc/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "ntkc/decomposition.hpp"
#include "ntkc/invariants.hpp"
#include "ntkc/rng.hpp"

namespace ntkc {

void axpy(Matrix& y, double a, const Matrix& x) { y.add_scaled(a, x); }

namespace {

void axpy_vec(Vector& y, double a, const Vector& x) {
  if (y.size() != x.size()) throw DimensionError("axpy: vector length mismatch");
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += a * x[k];
}

Matrix centering(std::size_t c) {
  return Matrix::identity(c) - Matrix::ones(c, c) * (1.0 / static_cast<double>(c));
}

double log_slope(const std::vector<double>& values) {
  // Least-squares slope of log(values[t]) against t.
  const std::size_t n = values.size();
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double x = static_cast<double>(t);
    const double y = std::log(values[t]);
    st += x;
    sy += y;
    stt += x * x;
    sty += x * y;
  }
  const double nd = static_cast<double>(n);
  return (nd * sty - st * sy) / (nd * stt - st * st);
}

}  // namespace

void axpy(FullState& y, double a, const FullState& x) {
  y.h.add_scaled(a, x.h);
  y.w.add_scaled(a, x.w);
  axpy_vec(y.b, a, x.b);
}

void axpy(DecomposedState& y, double a, const DecomposedState& x) {
  y.h1.add_scaled(a, x.h1);
  y.h2.add_scaled(a, x.h2);
  y.w.add_scaled(a, x.w);
  axpy_vec(y.b, a, x.b);
}

void axpy(DecoupledState& y, double a, const DecoupledState& x) {
  y.h2.add_scaled(a, x.h2);
  y.w.add_scaled(a, x.w);
}

bool all_finite(const FullState& s) {
  return all_finite(s.h) && all_finite(s.w) && all_finite(std::span<const double>(s.b));
}

bool all_finite(const DecomposedState& s) {
  return all_finite(s.h1) && all_finite(s.h2) && all_finite(s.w) &&
         all_finite(std::span<const double>(s.b));
}

bool all_finite(const DecoupledState& s) { return all_finite(s.h2) && all_finite(s.w); }

// ---------------------------------------------------------------------------

Matrix residual_gd_step(const Matrix& r, const Matrix& kernel, double eta) {
  if (!kernel.square() || kernel.rows() != r.cols()) {
    throw DimensionError("residual_gd_step: kernel must be N x N for C x N residuals");
  }
  // Rows of R are the per-output residual vectors; K is symmetric, so
  // (I - ηK)·r_k is the row r_kᵀ·(I - ηK).
  Matrix out = r;
  out.add_scaled(-eta, r * kernel);
  return out;
}

bool residual_gd_stable(const Matrix& kernel, double eta) {
  const SymmetricEigen eig = sym_eig(kernel);
  return eta * eig.values.front() < 2.0;
}

std::vector<Matrix> residual_gd_trajectory(const Matrix& r0, const Matrix& kernel, double eta,
                                           std::size_t steps) {
  std::vector<Matrix> out;
  out.reserve(steps + 1);
  out.push_back(r0);
  for (std::size_t t = 0; t < steps; ++t) out.push_back(residual_gd_step(out.back(), kernel, eta));
  return out;
}

ResidualRates residual_rates(const std::vector<Matrix>& trajectory, const Matrix& labels,
                             const Dims& dims) {
  if (trajectory.size() < 3) throw InvalidArgument("residual_rates: need at least three snapshots");
  std::vector<double> g, c, s;
  for (const Matrix& r : trajectory) {
    const ResidualSet parts = residual_components(r, labels, dims);
    g.push_back(frobenius_norm(parts.r_global));
    c.push_back(frobenius_norm(parts.r_class - parts.r_global));
    s.push_back(frobenius_norm(parts.r - parts.r_class));
  }
  const double scale = frobenius_norm(trajectory.front());
  ResidualRates out;
  auto fit = [&](std::vector<double> values) -> std::optional<double> {
    if (scale == 0.0 || values.front() <= 1e-12 * scale) return std::nullopt;
    // Keep the stretch the component stays well above round-off.
    const double cutoff = 1e-6 * values.front();
    std::size_t keep = 0;
    while (keep < values.size() && values[keep] > cutoff) ++keep;
    if (keep < 2) return std::nullopt;
    values.resize(keep);
    const double slope = keep == 2 ? std::log(values[1] / values[0]) : log_slope(values);
    for (std::size_t t = 1; t < keep; ++t) {
      out.max_log_deviation =
          std::max(out.max_log_deviation, std::abs(std::log(values[t] / values[t - 1]) - slope));
    }
    return std::exp(slope);
  };
  out.global = fit(g);
  out.cls = fit(c);
  out.single = fit(s);
  return out;
}

// ---------------------------------------------------------------------------

Matrix full_residual(const FullState& s, const Matrix& labels) {
  Matrix r = s.w * s.h;
  for (std::size_t i = 0; i < r.rows(); ++i)
    for (std::size_t j = 0; j < r.cols(); ++j) r(i, j) += s.b[i] - labels(i, j);
  return r;
}

Matrix class_mean_residual(const DecomposedState& s) {
  Matrix r1 = s.w * s.h1;
  for (std::size_t i = 0; i < r1.rows(); ++i) {
    for (std::size_t j = 0; j < r1.cols(); ++j) r1(i, j) += s.b[i] - (i == j ? 1.0 : 0.0);
  }
  return r1;
}

double loss(const FullState& s, const Matrix& labels) {
  const double norm = frobenius_norm(full_residual(s, labels));
  return 0.5 * norm * norm;
}

double loss(const DecomposedState& s, const Dims& dims) {
  const double a = frobenius_norm(class_mean_residual(s));
  const double b = frobenius_norm(s.w * s.h2);
  return 0.5 * static_cast<double>(dims.per_class) * (a * a + b * b);
}

FullState rhs_full(const FullState& s, const BlockKernelSpec& kappa, const Matrix& labels,
                   const Dims& dims) {
  const Matrix r = full_residual(s, labels);
  const std::size_t n = dims.samples();
  // R·Θ^h for the block kernel with levels κ:
  // (κ_d-κ_c)R + (κ_c-κ_n)·m·R_class + κ_n·N·R_global.
  Matrix rk = r * (kappa.lambda_diag - kappa.lambda_class);
  rk.add_scaled(kappa.lambda_class - kappa.lambda_cross, times_transpose(r, labels) * labels);
  const Vector sums = row_sums(r);
  rk.add_scaled(kappa.lambda_cross, outer_ones(sums, n));

  FullState d;
  d.h = transpose_times(s.w, rk) * -1.0;
  d.w = times_transpose(r, s.h) * -1.0;
  d.b = sums;
  for (double& x : d.b) x = -x;
  return d;
}

DecomposedState rhs_decomposed(const DecomposedState& s, const DerivedConstants& consts,
                               const Dims& dims, bool freeze_bias) {
  const double m = static_cast<double>(dims.per_class);
  const double kn_m = consts.kappa.lambda_cross * m;
  const Matrix r1 = class_mean_residual(s);
  const Vector r1_sums = row_sums(r1);

  Matrix mixed = r1 * consts.mu_class;  // R1·(μ_class·I + κ_n·m·11ᵀ)
  mixed.add_scaled(kn_m, outer_ones(r1_sums, dims.classes));
  const Matrix wh2 = s.w * s.h2;

  DecomposedState d;
  d.h1 = transpose_times(s.w, mixed) * -1.0;
  d.h2 = transpose_times(s.w, wh2) * -consts.mu_single;
  d.w = (times_transpose(r1, s.h1) + times_transpose(wh2, s.h2)) * -m;
  d.b.assign(dims.classes, 0.0);
  if (!freeze_bias) {
    for (std::size_t i = 0; i < d.b.size(); ++i) d.b[i] = -m * r1_sums[i];
  }
  return d;
}

DecomposedState rhs_eot(const DecomposedState& s, const DerivedConstants& consts,
                        const Dims& dims) {
  const double m = static_cast<double>(dims.per_class);
  const Matrix wh2 = s.w * s.h2;
  DecomposedState d;
  d.h1 = Matrix(s.h1.rows(), s.h1.cols());
  d.h2 = transpose_times(s.w, wh2) * -consts.mu_single;
  d.w = times_transpose(wh2, s.h2) * -m;
  d.b.assign(s.b.size(), 0.0);
  return d;
}

DecoupledState rhs_decoupled(const DecoupledState& s, const Matrix& etilde,
                             const DerivedConstants& consts, const Dims& dims) {
  if (!etilde.square() || etilde.rows() != s.h2.rows()) {
    throw DimensionError("rhs_decoupled: Etilde must be n x n");
  }
  const double m = static_cast<double>(dims.per_class);
  Matrix left = etilde;
  left.add_scaled(m, times_transpose(s.h2, s.h2));
  Matrix right = transpose_times(s.w, s.w) * consts.mu_single;
  right -= etilde;
  return {(left * s.h2) * -1.0, (s.w * right) * -1.0};
}

bool in_end_of_training(const DecomposedState& s, const Dims& dims) {
  // R_class = R1 ⊗ 1_mᵀ, so ‖R_class‖_F = √m·‖R1‖_F.
  const double r_class = std::sqrt(static_cast<double>(dims.per_class)) *
                         frobenius_norm(class_mean_residual(s));
  return r_class < 1e-8 * std::sqrt(static_cast<double>(dims.samples()));
}

void IntegratorConfig::validate() const {
  if (!(step > 0.0)) throw InvalidArgument("integrator: step must be positive");
  if (!(horizon > 0.0)) throw InvalidArgument("integrator: horizon must be positive");
  if (record_every == 0) throw InvalidArgument("integrator: record_every must be positive");
  if (max_halvings < 0) throw InvalidArgument("integrator: max_halvings must be non-negative");
}

// ---------------------------------------------------------------------------

Matrix range_basis(const Matrix& psd, double relative_cutoff) {
  const SymmetricEigen eig = sym_eig(psd);
  const double top = eig.values.empty() ? 0.0 : std::max(eig.values.front(), 0.0);
  std::size_t rank = 0;
  while (rank < eig.values.size() && top > 0.0 && eig.values[rank] > relative_cutoff * top) ++rank;
  return eig.vectors.col_range(0, rank);
}

namespace {

Matrix random_orthogonal(std::size_t c, CounterRng& rng) {
  Matrix a = rng.normal_matrix(c, c);
  Matrix sym = a + a.transposed();
  return sym_eig(sym).vectors;
}

}  // namespace

DecomposedState init_zero_invariant(const Dims& dims, const DerivedConstants& consts,
                                    std::uint64_t seed, const ZeroInvariantOptions& options) {
  dims.validate();
  const std::size_t n = dims.features;
  const std::size_t c = dims.classes;
  const std::size_t extra = dims.samples() - c;
  if (consts.alpha * static_cast<double>(c) >= 1.0) {
    throw InvalidArgument("init_zero_invariant: need alpha < 1/C");
  }
  CounterRng rng(seed);
  const double entry_scale = options.h1_scale / std::sqrt(static_cast<double>(n));

  DecomposedState s;
  s.h1 = rng.normal_matrix(n, c, entry_scale);
  if (options.centered) s.h1 = s.h1 * centering(c);

  s.h2 = Matrix(n, extra);
  if (options.h2 != H2Mode::Zero) {
    Matrix basis = range_basis(times_transpose(s.h1, s.h1));
    if (options.h2 == H2Mode::ExtraDirection) {
      if (basis.cols() + 1 > c) {
        throw InvalidArgument("init_zero_invariant: no room for an extra direction with rank <= C");
      }
      Vector u = rng.normal_matrix(n, 1).col(0);
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < basis.cols(); ++k) {
          const Vector bk = basis.col(k);
          const double proj = dot(u, bk);
          for (std::size_t i = 0; i < n; ++i) u[i] -= proj * bk[i];
        }
      }
      const double un = norm2(u);
      for (double& x : u) x /= un;
      basis = hcat(basis, Matrix::column(u));
    }
    const Matrix coords = rng.normal_matrix(basis.cols(), extra, options.h2_scale * entry_scale);
    s.h2 = basis * coords;
  }

  const double m = static_cast<double>(dims.per_class);
  Matrix damp = Matrix::identity(c) - Matrix::ones(c, c) * consts.alpha;
  Matrix g = (s.h1 * damp * s.h1.transposed()) * (m / consts.mu_class);
  g.add_scaled(m / consts.mu_single, times_transpose(s.h2, s.h2));
  const SymmetricEigen eig = sym_eig(symmetrized(g));
  Matrix w0(c, n);
  for (std::size_t k = 0; k < c; ++k) {
    const double root = std::sqrt(std::max(eig.values[k], 0.0));
    for (std::size_t i = 0; i < n; ++i) w0(k, i) = root * eig.vectors(i, k);
  }
  s.w = random_orthogonal(c, rng) * w0;

  if (options.bias) {
    if (options.bias->size() != c) throw DimensionError("init_zero_invariant: bias length != C");
    s.b = *options.bias;
  } else {
    s.b.assign(c, options.centered ? 1.0 / static_cast<double>(c) : 0.0);
  }
  return s;
}

PerturbedInit init_perturbed(const DecomposedState& base, double misalignment, std::uint64_t seed,
                             const DerivedConstants& consts, const Dims& dims) {
  if (misalignment < 0.0) throw InvalidArgument("init_perturbed: misalignment must be >= 0");
  PerturbedInit out{base, 0.0};
  if (misalignment > 0.0) {
    const std::size_t n = base.w.cols();
    CounterRng rng(seed);
    Matrix active = times_transpose(base.h1, base.h1);
    active += times_transpose(base.h2, base.h2);
    active += transpose_times(base.w, base.w);
    const Matrix basis = range_basis(symmetrized(active));
    Matrix d = rng.normal_matrix(base.w.rows(), n);
    if (basis.cols() > 0) d -= (d * basis) * basis.transposed();
    if (frobenius_norm(d) < 1e-12) {
      // Active subspace fills R^n; fall back to Frobenius-orthogonal to W.
      d = rng.normal_matrix(base.w.rows(), n);
      const double wn = frobenius_norm(base.w);
      if (wn > 0.0) d.add_scaled(-frobenius_dot(d, base.w) / (wn * wn), base.w);
    }
    d *= 1.0 / frobenius_norm(d);
    out.state.w.add_scaled(misalignment, d);
  }
  out.e_norm = frobenius_norm(invariant_e(out.state, consts, dims));
  return out;
}

DecomposedState random_decomposed_state(const Dims& dims, std::uint64_t seed, double scale) {
  CounterRng rng(seed);
  DecomposedState s;
  s.h1 = rng.normal_matrix(dims.features, dims.classes, scale);
  s.h2 = rng.normal_matrix(dims.features, dims.samples() - dims.classes, scale);
  s.w = rng.normal_matrix(dims.classes, dims.features, scale);
  s.b = rng.normal_matrix(dims.classes, 1, scale).col(0);
  return s;
}

FullState to_full(const DecomposedState& s, const Dims& dims) {
  const OrthoBasis basis = build_ortho_basis(dims);
  return {reconstruct_features(s.h1, s.h2, basis, dims), s.w, s.b};
}

DecomposedState to_decomposed(const FullState& s, const Dims& dims) {
  const OrthoBasis basis = build_ortho_basis(dims);
  FeatureSplit split = split_features(s.h, basis, dims);
  return {std::move(split.h1), std::move(split.h2), s.w, s.b};
}

}  // namespace ntkc

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

// Right-hand sides of the block-kernel training flows and a fixed-step RK4
// integrator with invariant-driven step halving.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ntkc/block_kernel.hpp"
#include "ntkc/errors.hpp"
#include "ntkc/linalg.hpp"

namespace ntkc {

/// Features H (n × N), classifier W (C × n), biases b (C).
struct FullState {
  Matrix h;
  Matrix w;
  Vector b;
};

/// Class means H1 (n × C), within-class contrasts H2 (n × (N - C)), W, b.
struct DecomposedState {
  Matrix h1;
  Matrix h2;
  Matrix w;
  Vector b;
};

/// End-of-training system with the class-mean part factored out.
struct DecoupledState {
  Matrix h2;
  Matrix w;
};

struct DerivedConstants {
  double mu_single = 0.0;  // κ_d - κ_c
  double mu_class = 0.0;   // μ_single + m(κ_c - κ_n)
  double alpha = 0.0;      // κ_n·m / (μ_class + C·κ_n·m)
  BlockKernelSpec kappa;
  std::optional<BlockKernelSpec> gamma;
};

void axpy(FullState& y, double a, const FullState& x);
void axpy(DecomposedState& y, double a, const DecomposedState& x);
void axpy(DecoupledState& y, double a, const DecoupledState& x);
void axpy(Matrix& y, double a, const Matrix& x);
bool all_finite(const FullState& s);
bool all_finite(const DecomposedState& s);
bool all_finite(const DecoupledState& s);

// ---------------------------------------------------------------------------
// Linear residual dynamics under a fixed kernel.

/// r ← r·(I - ηK) row by row (K symmetric). Exact for the linear model.
Matrix residual_gd_step(const Matrix& r, const Matrix& kernel, double eta);

/// η·λ_max(K) < 2.
bool residual_gd_stable(const Matrix& kernel, double eta);

std::vector<Matrix> residual_gd_trajectory(const Matrix& r0, const Matrix& kernel, double eta,
                                           std::size_t steps);

/// Per-step decay factors of ‖R_global‖, ‖R_class - R_global‖, ‖R - R_class‖.
/// A component that is zero to round-off (relative 1e-12) is reported absent.
struct ResidualRates {
  std::optional<double> global;
  std::optional<double> cls;
  std::optional<double> single;
  /// Largest |log ratio - fitted log factor| over the steps; 0 for exact
  /// geometric decay.
  double max_log_deviation = 0.0;
};

ResidualRates residual_rates(const std::vector<Matrix>& trajectory, const Matrix& labels,
                             const Dims& dims);

// ---------------------------------------------------------------------------
// Nonlinear flows.

/// R = W·H + b·1ᵀ - Y.
Matrix full_residual(const FullState& s, const Matrix& labels);
/// R1 = W·H1 + b·1ᵀ - I.
Matrix class_mean_residual(const DecomposedState& s);

/// ½‖W·H + b·1ᵀ - Y‖²_F.
double loss(const FullState& s, const Matrix& labels);
/// Same loss written in the decomposed variables: (m/2)(‖R1‖² + ‖W·H2‖²).
double loss(const DecomposedState& s, const Dims& dims);

FullState rhs_full(const FullState& s, const BlockKernelSpec& kappa, const Matrix& labels,
                   const Dims& dims);

/// With `freeze_bias` the bias derivative is forced to zero.
DecomposedState rhs_decomposed(const DecomposedState& s, const DerivedConstants& consts,
                               const Dims& dims, bool freeze_bias = false);

/// End-of-training system: R1 treated as zero, so H1 and b are frozen.
DecomposedState rhs_eot(const DecomposedState& s, const DerivedConstants& consts,
                        const Dims& dims);

/// Ḣ2 = -(Ẽ + m·H2·H2ᵀ)·H2, Ẇ = -W(μ_single·WᵀW - Ẽ), where
/// Ẽ = μ_single·WᵀW - m·H2·H2ᵀ is conserved by rhs_eot.
DecoupledState rhs_decoupled(const DecoupledState& s, const Matrix& etilde,
                             const DerivedConstants& consts, const Dims& dims);

/// ‖R_class‖_F < 1e-8·√N.
bool in_end_of_training(const DecomposedState& s, const Dims& dims);

// ---------------------------------------------------------------------------
// Integration.

struct IntegratorConfig {
  double step = 1e-3;
  double horizon = 1.0;
  std::size_t record_every = 100;  // steps between snapshots at the base step
  double eta = 0.05;               // discrete residual GD only
  double loss_floor = 1e-12;
  int max_halvings = 6;
  double drift_tolerance = 1e-8;   // invariant drift per unit time

  void validate() const;
};

struct Trajectory {
  std::vector<std::string> columns;  // names of the entries of each row
  std::vector<double> times;
  std::vector<Vector> rows;
};

template <class State>
struct FlowHooks {
  std::function<State(const State&)> rhs;
  /// Early stop once loss < loss_floor (checked at snapshot boundaries).
  std::function<double(const State&)> loss;
  /// Snapshot row; may be empty.
  std::function<Vector(double, const State&)> record;
  /// Conserved quantity used for step control; may be empty.
  std::function<Matrix(const State&)> invariant;
};

template <class State>
struct FlowResult {
  State final_state;
  Trajectory trajectory;
  double final_time = 0.0;
  double step_used = 0.0;
  int halvings = 0;
  bool hit_loss_floor = false;
};

template <class State, class Rhs>
State rk4_step(const State& y, double h, Rhs&& f) {
  const State k1 = f(y);
  State tmp = y;
  axpy(tmp, 0.5 * h, k1);
  const State k2 = f(tmp);
  tmp = y;
  axpy(tmp, 0.5 * h, k2);
  const State k3 = f(tmp);
  tmp = y;
  axpy(tmp, h, k3);
  const State k4 = f(tmp);
  State out = y;
  axpy(out, h / 6.0, k1);
  axpy(out, h / 3.0, k2);
  axpy(out, h / 3.0, k3);
  axpy(out, h / 6.0, k4);
  return out;
}

/// Classical RK4 at a fixed step. Snapshots are taken every `record_every`
/// base steps. When an invariant is supplied and its relative drift per unit
/// time over a snapshot interval exceeds `drift_tolerance`, the interval is
/// redone at half the step (at most `max_halvings` times; the smaller step
/// is kept afterwards). Throws DivergenceError on non-finite state.
template <class State>
FlowResult<State> integrate(const State& initial, const IntegratorConfig& config,
                            const FlowHooks<State>& hooks, std::vector<std::string> columns = {}) {
  config.validate();
  FlowResult<State> result{initial, {}, 0.0, config.step, 0, false};
  result.trajectory.columns = std::move(columns);
  auto snapshot = [&](double t, const State& s) {
    result.trajectory.times.push_back(t);
    if (hooks.record) result.trajectory.rows.push_back(hooks.record(t, s));
  };

  State state = initial;
  double t = 0.0;
  snapshot(t, state);
  const double interval = config.step * static_cast<double>(config.record_every);
  double h = config.step;

  auto relative_drift = [&](const State& a, const State& b) {
    const Matrix ia = hooks.invariant(a);
    return frobenius_norm(hooks.invariant(b) - ia) / (1.0 + frobenius_norm(ia));
  };

  if (hooks.loss && hooks.loss(state) < config.loss_floor) {
    result.hit_loss_floor = true;
  }
  while (!result.hit_loss_floor && t < config.horizon * (1.0 - 1e-12)) {
    const double span = std::min(interval, config.horizon - t);
    State trial = state;
    for (;;) {
      trial = state;
      const auto steps = static_cast<std::size_t>(std::ceil(span / h - 1e-9));
      const double dt = span / static_cast<double>(steps);
      for (std::size_t k = 0; k < steps; ++k) {
        trial = rk4_step(trial, dt, hooks.rhs);
        if (!all_finite(trial)) {
          throw DivergenceError("integrate: non-finite state", t);
        }
      }
      if (!hooks.invariant || result.halvings >= config.max_halvings ||
          relative_drift(state, trial) / span <= config.drift_tolerance) {
        break;
      }
      h *= 0.5;
      ++result.halvings;
    }
    state = std::move(trial);
    t += span;
    snapshot(t, state);
    if (hooks.loss && hooks.loss(state) < config.loss_floor) result.hit_loss_floor = true;
  }
  result.final_state = std::move(state);
  result.final_time = t;
  result.step_used = h;
  return result;
}

// ---------------------------------------------------------------------------
// Initial conditions.

enum class H2Mode {
  Zero,            // H2 = 0
  WithinMeanSpan,  // H2 columns inside span(H1)
  ExtraDirection,  // span(H1) plus one orthogonal direction (rank ≤ C)
};

struct ZeroInvariantOptions {
  H2Mode h2 = H2Mode::Zero;
  bool centered = true;        // H1·1 = 0
  double h1_scale = 1.0;       // H1 entries ~ N(0, h1_scale²/n)
  double h2_scale = 0.3;       // relative to the H1 column scale
  std::optional<Vector> bias;  // default (1/C)·1 when centered, else 0
};

/// A state with E = 0: W is the top-C eigenfactor of
/// G = m[(1/μ_class)·H1(I - α11ᵀ)H1ᵀ + (1/μ_single)·H2·H2ᵀ], rotated by a
/// random orthogonal C × C matrix. Throws InvalidArgument when n ≤ C.
DecomposedState init_zero_invariant(const Dims& dims, const DerivedConstants& consts,
                                    std::uint64_t seed, const ZeroInvariantOptions& options = {});

struct PerturbedInit {
  DecomposedState state;
  double e_norm = 0.0;
};

/// W ← W + misalignment·D, D a random C × n direction of unit Frobenius norm
/// whose rows are orthogonal to span(H1, H2, Wᵀ).
PerturbedInit init_perturbed(const DecomposedState& base, double misalignment, std::uint64_t seed,
                             const DerivedConstants& consts, const Dims& dims);

/// Random decomposed state with N(0, scale²) entries.
DecomposedState random_decomposed_state(const Dims& dims, std::uint64_t seed, double scale);

FullState to_full(const DecomposedState& s, const Dims& dims);
DecomposedState to_decomposed(const FullState& s, const Dims& dims);

/// Orthonormal basis (columns) of the column space of a symmetric PSD matrix.
Matrix range_basis(const Matrix& psd, double relative_cutoff = 1e-10);

}  // namespace ntkc

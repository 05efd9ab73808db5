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

// Run configuration and the experiment drivers behind the command line:
// closed-form spectra, flow simulations, parameter sweeps and the
// empirical-kernel training run. All outputs are deterministic for a fixed
// configuration; wall times appear only in JSON summaries.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ntkc/block_kernel.hpp"
#include "ntkc/dynamics.hpp"
#include "ntkc/empirical.hpp"
#include "ntkc/invariants.hpp"
#include "ntkc/nc_metrics.hpp"

namespace ntkc {

enum class Mode { Eigen, Simulate, Sweep, Empirical, Verify };

enum class InitKind { ZeroInvariant, Perturbed, FrozenBias, Random };

enum class FlowSystem { Decomposed, Full, Residual };

struct RunConfig {
  Mode mode = Mode::Simulate;
  Dims dims{3, 4, 8};
  BlockKernelSpec kappa{3.0, 2.0, 1.0};  // feature kernel
  BlockKernelSpec gamma{3.0, 2.0, 1.0};  // output kernel (eigen mode, residual flow)
  IntegratorConfig integrator;
  FlowSystem system = FlowSystem::Decomposed;

  InitKind init = InitKind::ZeroInvariant;
  double init_parameter = 0.0;  // misalignment for perturbed, β for frozen_bias
  H2Mode h2_mode = H2Mode::WithinMeanSpan;
  double h1_scale = 1.0;
  double h2_scale = 0.3;

  std::optional<std::uint64_t> seed;
  std::string output = "ntkc_out";

  std::string sweep_key;
  std::vector<std::string> sweep_values;  // JSON text of each value

  // Empirical mode.
  std::size_t input_dim = 4;
  double separation = 3.0;
  double noise = 1.0;
  std::vector<std::size_t> hidden{32, 32};
  Activation activation = Activation::Tanh;
  double train_eta = 0.005;
  std::size_t epochs = 5000;
  bool nc4_heldout = false;  // NC4 on fresh blobs instead of the training points

  // Verify mode: criteria to run, empty for all.
  std::vector<int> criteria;
};

/// Flat JSON schema; every key is optional. `overrides` are "key=value"
/// pairs applied after the file, with the value parsed as JSON when
/// possible and taken as a string otherwise. Throws InvalidArgument on
/// unknown keys, malformed values or invalid combinations.
RunConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides = {});
/// Round-trips through parse_config.
std::string config_to_json(const RunConfig& config);
Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

/// Fixed trajectory column order.
const std::vector<std::string>& trajectory_columns();

struct SimulationResult {
  Trajectory trajectory;
  DecomposedState final_state;
  double final_time = 0.0;
  double final_loss = 0.0;
  NcReport final_nc;
  InvariantReport final_invariant;
  double initial_e_norm = 0.0;
  double max_invariant_drift = 0.0;  // max_t ‖E(t) - E(0)‖_F / (1 + ‖E(0)‖_F)
  double step_used = 0.0;
  int halvings = 0;
  bool hit_loss_floor = false;
};

/// Initial decomposed state for the configured init kind.
DecomposedState initial_state(const RunConfig& config);
/// Integrates the configured flow (residual flow excluded).
SimulationResult simulate(const RunConfig& config);

struct EmpiricalResult {
  TrainingLog log;
  BlockStats initial_stats;
  BlockStats final_stats;
  NcReport final_nc;
};

Dataset reference_blobs(const RunConfig& config);
EmpiricalResult run_empirical(const RunConfig& config);

/// Decimal text with 17 significant digits; "nan", "inf", "-inf" otherwise.
std::string format_number(double value);
std::string trajectory_csv(const Trajectory& trajectory);

/// Executes a mode, writing artifacts below `config.output` and a short
/// report to `out`. Returns the process exit status.
int run(const RunConfig& config, std::ostream& out);

}  // namespace ntkc

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

#include "ntkc/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <sstream>

#include "ntkc/block_kernel.hpp"
#include "ntkc/decomposition.hpp"
#include "ntkc/dynamics.hpp"
#include "ntkc/empirical.hpp"
#include "ntkc/experiment.hpp"
#include "ntkc/invariants.hpp"
#include "ntkc/rng.hpp"

namespace ntkc {

namespace {

template <class F>
CriterionResult timed(int id, std::string title, double limit, F&& body) {
  CriterionResult r;
  r.id = id;
  r.title = std::move(title);
  r.time_limit = limit;
  const auto start = std::chrono::steady_clock::now();
  body(r);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

double max_entry_diff(const Matrix& a, const Matrix& b) { return max_abs(a - b); }

// Collapse-regime setup shared by the neural-collapse and misalignment runs.
RunConfig collapse_config(std::uint64_t seed) {
  RunConfig c;
  c.mode = Mode::Simulate;
  c.dims = {3, 4, 8};
  c.kappa = {3.0, 2.0, 1.0};
  c.init = InitKind::ZeroInvariant;
  c.h2_mode = H2Mode::WithinMeanSpan;
  c.h1_scale = 1.0;
  c.h2_scale = 0.3;
  c.integrator.step = 1e-3;
  c.integrator.horizon = 400.0;
  c.integrator.record_every = 1000;
  c.integrator.loss_floor = 1e-20;
  c.seed = seed;
  return c;
}

RunConfig general_bias_config(std::uint64_t seed) {
  RunConfig c = collapse_config(seed);
  c.dims = {2, 2, 4};
  c.init = InitKind::FrozenBias;
  c.init_parameter = 0.0;
  return c;
}

RunConfig random_flow_config(std::uint64_t seed) {
  RunConfig c;
  c.mode = Mode::Simulate;
  c.dims = {3, 4, 8};
  c.kappa = {3.0, 2.0, 1.0};
  c.init = InitKind::Random;
  c.h1_scale = 0.5;
  c.integrator.step = 1e-3;
  c.integrator.horizon = 20.0;
  c.integrator.record_every = 100;
  c.integrator.loss_floor = 0.0;
  c.seed = seed;
  return c;
}

RunConfig blob_config(std::uint64_t seed) {
  RunConfig c;
  c.mode = Mode::Empirical;
  c.dims = {2, 12, 16};
  c.input_dim = 4;
  c.separation = 3.0;
  c.noise = 1.0;
  c.hidden = {32, 32};
  c.activation = Activation::Tanh;
  c.train_eta = 0.005;
  c.epochs = 5000;
  c.seed = seed;
  return c;
}

double column_max(const Trajectory& t, const std::string& name) {
  const auto it = std::find(t.columns.begin(), t.columns.end(), name);
  const auto k = static_cast<std::size_t>(it - t.columns.begin());
  double out = -INFINITY;
  for (const Vector& row : t.rows) out = std::max(out, row[k]);
  return out;
}

}  // namespace

bool CriterionResult::numeric_pass() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

Check make_check(std::string name, double value, std::string relation, double bound) {
  bool ok = false;
  if (relation == "<=") ok = value <= bound;
  else if (relation == "<") ok = value < bound;
  else if (relation == ">=") ok = value >= bound;
  else if (relation == ">") ok = value > bound;
  else if (relation == "==") ok = value == bound;
  return {std::move(name), value, std::move(relation), bound, ok};
}

CriterionResult verify_eigenstructure(std::uint64_t seed) {
  return timed(1, "eigenstructure", 5.0, [&](CriterionResult& r) {
    CounterRng rng(seed);
    double worst = 0.0;
    double mismatches = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      Dims dims;
      dims.classes = 2 + static_cast<std::size_t>(rng.uniform() * 4.0);
      dims.per_class = 2 + static_cast<std::size_t>(rng.uniform() * 7.0);
      dims.features = dims.classes + 1;
      BlockKernelSpec spec;
      spec.lambda_cross = 0.05 + rng.uniform();
      spec.lambda_class = spec.lambda_cross + 0.1 + 2.0 * rng.uniform();
      spec.lambda_diag = spec.lambda_class + 0.1 + 2.0 * rng.uniform();
      const EigenStructure eig = closed_form_eigen(spec, dims);
      const SymmetricEigen dense = sym_eig(build_block_matrix(spec, dims));
      const Vector closed = eig.spectrum();
      const double scale = std::max(std::abs(closed.front()), std::abs(closed.back()));
      for (std::size_t i = 0; i < closed.size(); ++i) {
        worst = std::max(worst, std::abs(closed[i] - dense.values[i]) / scale);
      }
      const std::size_t n = dims.samples();
      const std::size_t c = dims.classes;
      const struct {
        double value;
        std::size_t expected;
        std::size_t reported;
      } spaces[] = {{eig.lambda_single, n - c, eig.mult_single},
                    {eig.lambda_class, c - 1, eig.mult_class},
                    {eig.lambda_global, 1, eig.mult_global}};
      for (const auto& s : spaces) {
        const auto count = std::count_if(dense.values.begin(), dense.values.end(),
                                         [&](double v) { return std::abs(v - s.value) <= 1e-9 * scale; });
        if (static_cast<std::size_t>(count) != s.expected || s.reported != s.expected) mismatches += 1.0;
      }
    }
    r.checks.push_back(make_check("max_relative_eigenvalue_error", worst, "<=", 1e-9));
    r.checks.push_back(make_check("multiplicity_mismatches", mismatches, "==", 0.0));
  });
}

CriterionResult verify_residual_rates() {
  return timed(2, "three-rate convergence", 1.0, [&](CriterionResult& r) {
    const Dims dims{2, 2, 3};
    const BlockKernelSpec gamma{3.0, 2.0, 1.0};
    const double eta = 0.05;
    CounterRng rng(20);
    const Matrix r0 = rng.normal_matrix(dims.classes, dims.samples());
    const auto traj = residual_gd_trajectory(r0, build_block_matrix(gamma, dims), eta, 60);
    const ResidualRates rates = residual_rates(traj, build_labels(dims), dims);
    const double nan = std::nan("");
    r.checks.push_back(make_check("global_factor_error", rates.global ? std::abs(*rates.global - 0.65) : nan, "<=", 1e-10));
    r.checks.push_back(make_check("class_factor_error", rates.cls ? std::abs(*rates.cls - 0.85) : nan, "<=", 1e-10));
    r.checks.push_back(make_check("single_factor_error", rates.single ? std::abs(*rates.single - 0.95) : nan, "<=", 1e-10));
  });
}

CriterionResult verify_invariant_conservation(std::uint64_t seed) {
  return timed(3, "invariant conservation", 30.0, [&](CriterionResult& r) {
    const SimulationResult sim = simulate(random_flow_config(seed));
    r.checks.push_back(make_check("max_relative_drift", sim.max_invariant_drift, "<=", 1e-6));
    r.checks.push_back(make_check("final_time", sim.final_time, ">=", 20.0 * (1.0 - 1e-12)));
  });
}

CriterionResult verify_flow_equivalence(std::uint64_t seed) {
  return timed(4, "full/decomposed equivalence", 0.0, [&](CriterionResult& r) {
    const RunConfig c = random_flow_config(seed);
    const Dims& dims = c.dims;
    const DerivedConstants consts = derived_constants(c.kappa, dims);
    const Matrix labels = build_labels(dims);
    const OrthoBasis basis = build_ortho_basis(dims);
    const Matrix q = basis.full();
    const DecomposedState start = initial_state(c);
    const double root_m = std::sqrt(static_cast<double>(dims.per_class));

    std::vector<Matrix> split_side;
    FlowHooks<DecomposedState> dh;
    dh.rhs = [&](const DecomposedState& s) { return rhs_decomposed(s, consts, dims); };
    dh.record = [&](double, const DecomposedState& s) {
      split_side.push_back(hcat(s.h1, s.h2) * root_m);
      return Vector{};
    };
    integrate(start, c.integrator, dh);

    std::vector<Matrix> full_side;
    FlowHooks<FullState> fh;
    fh.rhs = [&](const FullState& s) { return rhs_full(s, c.kappa, labels, dims); };
    fh.record = [&](double, const FullState& s) {
      full_side.push_back(s.h * q);
      return Vector{};
    };
    integrate(to_full(start, dims), c.integrator, fh);

    double worst = full_side.size() == split_side.size() ? 0.0 : INFINITY;
    for (std::size_t k = 0; k < std::min(full_side.size(), split_side.size()); ++k) {
      worst = std::max(worst, frobenius_norm(full_side[k] - split_side[k]) / frobenius_norm(full_side[k]));
    }
    r.checks.push_back(make_check("max_relative_basis_mismatch", worst, "<=", 1e-8));
  });
}

CriterionResult verify_neural_collapse(std::uint64_t seed, double* reference_nc3) {
  return timed(5, "neural collapse", 60.0, [&](CriterionResult& r) {
    const RunConfig c = collapse_config(seed);
    const SimulationResult sim = simulate(c);
    if (reference_nc3) *reference_nc3 = sim.final_nc.nc3;
    const DecomposedState start = initial_state(c);
    const DerivedConstants consts = derived_constants(c.kappa, c.dims);
    const double w_scale = frobenius_norm(transpose_times(start.w, start.w)) / static_cast<double>(c.dims.per_class);
    r.checks.push_back(make_check("initial_relative_E_norm", frobenius_norm(invariant_e(start, consts, c.dims)) / w_scale,
                                  "<=", 1e-10));
    r.checks.push_back(make_check("initial_h2_norm", frobenius_norm(start.h2), ">", 1e-3));
    r.checks.push_back(make_check("loss", sim.final_loss, "<", 1e-10));
    r.checks.push_back(make_check("nc1", sim.final_nc.nc1, "<=", 1e-6));
    r.checks.push_back(make_check("nc2", sim.final_nc.nc2, "<=", 1e-3));
    r.checks.push_back(make_check("nc3", sim.final_nc.nc3, "<=", 1e-3));
    r.checks.push_back(make_check("nc4", sim.final_nc.nc4, "==", 1.0));
    r.checks.push_back(make_check("bias_gap", sim.final_nc.bias_gap, "<=", 1e-6));
  });
}

CriterionResult verify_misalignment(std::uint64_t seed, double reference_nc3) {
  return timed(6, "collapse failure under misalignment", 0.0, [&](CriterionResult& r) {
    RunConfig c = collapse_config(seed);
    c.init = InitKind::Perturbed;
    c.init_parameter = 1.0;
    const SimulationResult sim = simulate(c);
    r.checks.push_back(make_check("loss", sim.final_loss, "<", 1e-10));
    r.checks.push_back(make_check("nc3", sim.final_nc.nc3, ">", 10.0 * reference_nc3));
    r.checks.push_back(make_check("max_inv_alignment", column_max(sim.trajectory, "inv_alignment"), "<", kAlignedThreshold));
  });
}

CriterionResult verify_general_bias(std::uint64_t seed, double reference_nc3) {
  return timed(7, "general-bias structure", 0.0, [&](CriterionResult& r) {
    const RunConfig c = general_bias_config(seed);
    const DerivedConstants consts = derived_constants(c.kappa, c.dims);
    const SimulationResult sim = simulate(c);
    const GeneralBiasStructure g = general_bias_structure(c.init_parameter, consts, c.dims);
    const DecomposedState& s = sim.final_state;
    const Matrix wwt = times_transpose(s.w, s.w);
    const std::size_t classes = c.dims.classes;
    const Matrix centering = Matrix::identity(classes) - Matrix::ones(classes, classes) * (1.0 / classes);
    const Matrix means = s.h1 * centering;
    r.checks.push_back(make_check("loss", sim.final_loss, "<", 1e-10));
    r.checks.push_back(make_check("gamma_error", std::abs(g.gamma - 0.5 * (1.0 - std::sqrt(3.0 / 7.0))), "<=", 1e-12));
    r.checks.push_back(make_check("wwt_max_entry_error", max_entry_diff(wwt, g.predicted_wwt), "<=", 1e-3));
    r.checks.push_back(make_check("wwt_squared_max_entry_error",
                                  max_entry_diff(wwt * wwt, general_bias_weight_gram_squared(s.b, consts, c.dims)),
                                  "<=", 1e-3));
    r.checks.push_back(make_check("mtm_max_entry_error", max_entry_diff(transpose_times(means, means), g.predicted_mtm),
                                  "<=", 1e-3));
    r.checks.push_back(make_check("nc2", sim.final_nc.nc2, "<=", 1e-3));
    r.checks.push_back(make_check("nc3", sim.final_nc.nc3, ">", 10.0 * reference_nc3));
  });
}

CriterionResult verify_empirical_kernels(std::uint64_t seed) {
  return timed(8, "empirical kernel sanity", 120.0, [&](CriterionResult& r) {
    const RunConfig c = blob_config(seed);
    const Dataset data = reference_blobs(c);
    std::vector<std::size_t> widths{c.input_dim};
    widths.insert(widths.end(), c.hidden.begin(), c.hidden.end());
    widths.push_back(c.dims.features);
    widths.push_back(c.dims.classes);
    TinyNet net(widths, c.activation, seed ^ 0x5EEDULL);
    CounterRng rng(seed + 8);
    const Vector p0 = net.parameters();
    const double h = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto coord = static_cast<std::size_t>(rng.uniform() * static_cast<double>(p0.size()));
      const auto sample = static_cast<std::size_t>(rng.uniform() * static_cast<double>(data.x.cols()));
      const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(c.dims.classes));
      const Vector x = data.x.col(sample);
      const double g = net.output_gradient(x, k)[coord];
      Vector p = p0;
      p[coord] = p0[coord] + h;
      net.set_parameters(p);
      const double up = net.forward(x)[k];
      p[coord] = p0[coord] - h;
      net.set_parameters(p);
      const double down = net.forward(x)[k];
      net.set_parameters(p0);
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-4}));
    }
    r.checks.push_back(make_check("max_gradient_relative_error", worst, "<=", 1e-5));

    const EmpiricalResult run = run_empirical(c);
    r.checks.push_back(make_check("alignment_gain", run.final_stats.alignment_theta_h - run.initial_stats.alignment_theta_h,
                                  ">", 0.0));
    r.checks.push_back(make_check("fit_residual_drop",
                                  run.initial_stats.fit_theta_h.residual - run.final_stats.fit_theta_h.residual, ">", 0.0));
  });
}

std::vector<CriterionResult> run_verification(std::uint64_t seed, const std::vector<int>& which) {
  auto selected = [&](int id) { return which.empty() || std::find(which.begin(), which.end(), id) != which.end(); };
  std::vector<CriterionResult> out;
  double reference_nc3 = std::nan("");
  if (selected(1)) out.push_back(verify_eigenstructure(seed));
  if (selected(2)) out.push_back(verify_residual_rates());
  if (selected(3)) out.push_back(verify_invariant_conservation(seed));
  if (selected(4)) out.push_back(verify_flow_equivalence(seed));
  if (selected(5)) {
    out.push_back(verify_neural_collapse(seed, &reference_nc3));
  } else if (selected(6) || selected(7)) {
    verify_neural_collapse(seed, &reference_nc3);
  }
  if (selected(6)) out.push_back(verify_misalignment(seed, reference_nc3));
  if (selected(7)) out.push_back(verify_general_bias(seed, reference_nc3));
  if (selected(8)) out.push_back(verify_empirical_kernels(seed));
  return out;
}

std::string verification_csv(const std::vector<CriterionResult>& results) {
  std::string csv = "criterion,check,value,relation,bound,pass\n";
  for (const CriterionResult& r : results) {
    for (const Check& c : r.checks) {
      csv += std::to_string(r.id) + "," + c.name + "," + format_number(c.value) + "," + c.relation + "," +
             format_number(c.bound) + "," + (c.passed ? "1" : "0") + "\n";
    }
  }
  return csv;
}

std::string verification_line(const CriterionResult& r) {
  std::ostringstream line;
  line << "criterion " << r.id << " (" << r.title << "): " << (r.passed() ? "PASS" : "FAIL");
  for (const Check& c : r.checks) {
    char value[32];
    char bound[32];
    std::snprintf(value, sizeof value, "%.6g", c.value);
    std::snprintf(bound, sizeof bound, "%.6g", c.bound);
    line << " | " << c.name << " = " << value << " " << c.relation << " " << bound
         << (c.passed ? "" : " [violated]");
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, " | %.2f s", r.seconds);
  line << buf;
  if (r.time_limit > 0.0) {
    std::snprintf(buf, sizeof buf, " (limit %.0f s%s)", r.time_limit, r.within_time() ? "" : ", exceeded");
    line << buf;
  }
  return line.str();
}

}  // namespace ntkc

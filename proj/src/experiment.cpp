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

#include "ntkc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ntkc/decomposition.hpp"
#include "ntkc/errors.hpp"
#include "ntkc/rng.hpp"
#include "ntkc/verify.hpp"

namespace ntkc {

using nlohmann::json;

namespace {

std::string init_name(const RunConfig& c) {
  switch (c.init) {
    case InitKind::ZeroInvariant: return "zero_invariant";
    case InitKind::Perturbed: return "perturbed:" + format_number(c.init_parameter);
    case InitKind::FrozenBias: return "frozen_bias:" + format_number(c.init_parameter);
    case InitKind::Random: return "random";
  }
  return "";
}

void parse_init(const std::string& text, RunConfig& c) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const bool has_arg = colon != std::string::npos;
  auto argument = [&] {
    if (!has_arg) throw InvalidArgument("init '" + head + "' needs a value, e.g. " + head + ":0.5");
    const std::string tail = text.substr(colon + 1);
    char* end = nullptr;
    const double v = std::strtod(tail.c_str(), &end);
    if (tail.empty() || *end != '\0' || !std::isfinite(v)) {
      throw InvalidArgument("init: malformed value '" + tail + "'");
    }
    return v;
  };
  if (head == "zero_invariant" && !has_arg) {
    c.init = InitKind::ZeroInvariant;
  } else if (head == "random" && !has_arg) {
    c.init = InitKind::Random;
  } else if (head == "perturbed") {
    c.init = InitKind::Perturbed;
    c.init_parameter = argument();
    if (c.init_parameter < 0.0) throw InvalidArgument("init: misalignment must be >= 0");
  } else if (head == "frozen_bias") {
    c.init = InitKind::FrozenBias;
    c.init_parameter = argument();
  } else {
    throw InvalidArgument("unknown init '" + text +
                          "' (zero_invariant | perturbed:x | frozen_bias:beta | random)");
  }
}

const char* h2_name(H2Mode m) {
  switch (m) {
    case H2Mode::Zero: return "zero";
    case H2Mode::WithinMeanSpan: return "within_mean_span";
    case H2Mode::ExtraDirection: return "extra_direction";
  }
  return "";
}

const char* system_name(FlowSystem s) {
  switch (s) {
    case FlowSystem::Decomposed: return "decomposed";
    case FlowSystem::Full: return "full";
    case FlowSystem::Residual: return "residual";
  }
  return "";
}

BlockKernelSpec parse_triple(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); })) {
    throw InvalidArgument(key + ": expected [diag, class, cross]");
  }
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

json triple_json(const BlockKernelSpec& s) { return json::array({s.lambda_diag, s.lambda_class, s.lambda_cross}); }

template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument(key + ": wrong value type");
  }
}

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) throw InvalidArgument(key + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

double get_real(const json& v, const std::string& key) {
  if (!v.is_number()) throw InvalidArgument(key + ": expected a number");
  return v.get<double>();
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("config: top level must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "mode") {
      c.mode = parse_mode(get_as<std::string>(v, key));
    } else if (key == "classes") {
      c.dims.classes = get_count(v, key);
    } else if (key == "per_class") {
      c.dims.per_class = get_count(v, key);
    } else if (key == "features") {
      c.dims.features = get_count(v, key);
    } else if (key == "kappa") {
      c.kappa = parse_triple(v, key);
    } else if (key == "gamma") {
      c.gamma = parse_triple(v, key);
    } else if (key == "step") {
      c.integrator.step = get_real(v, key);
    } else if (key == "horizon") {
      c.integrator.horizon = get_real(v, key);
    } else if (key == "record_every") {
      c.integrator.record_every = get_count(v, key);
    } else if (key == "eta") {
      c.integrator.eta = get_real(v, key);
    } else if (key == "loss_floor") {
      c.integrator.loss_floor = get_real(v, key);
    } else if (key == "max_halvings") {
      c.integrator.max_halvings = static_cast<int>(get_count(v, key));
    } else if (key == "drift_tolerance") {
      c.integrator.drift_tolerance = get_real(v, key);
    } else if (key == "system") {
      const auto s = get_as<std::string>(v, key);
      if (s == "decomposed") c.system = FlowSystem::Decomposed;
      else if (s == "full") c.system = FlowSystem::Full;
      else if (s == "residual") c.system = FlowSystem::Residual;
      else throw InvalidArgument("system: expected decomposed | full | residual");
    } else if (key == "init") {
      parse_init(get_as<std::string>(v, key), c);
    } else if (key == "h2_mode") {
      const auto s = get_as<std::string>(v, key);
      if (s == "zero") c.h2_mode = H2Mode::Zero;
      else if (s == "within_mean_span") c.h2_mode = H2Mode::WithinMeanSpan;
      else if (s == "extra_direction") c.h2_mode = H2Mode::ExtraDirection;
      else throw InvalidArgument("h2_mode: expected zero | within_mean_span | extra_direction");
    } else if (key == "h1_scale") {
      c.h1_scale = get_real(v, key);
    } else if (key == "h2_scale") {
      c.h2_scale = get_real(v, key);
    } else if (key == "seed") {
      if (v.is_null()) continue;
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw InvalidArgument("seed: expected a non-negative integer");
      }
      c.seed = v.get<std::uint64_t>();
    } else if (key == "output") {
      c.output = get_as<std::string>(v, key);
    } else if (key == "sweep_key") {
      c.sweep_key = get_as<std::string>(v, key);
    } else if (key == "sweep_values") {
      if (!v.is_array()) throw InvalidArgument("sweep_values: expected an array");
      c.sweep_values.clear();
      for (const json& x : v) c.sweep_values.push_back(x.is_string() ? x.get<std::string>() : x.dump());
    } else if (key == "input_dim") {
      c.input_dim = get_count(v, key);
    } else if (key == "separation") {
      c.separation = get_real(v, key);
    } else if (key == "noise") {
      c.noise = get_real(v, key);
    } else if (key == "hidden") {
      if (!v.is_array()) throw InvalidArgument("hidden: expected an array of widths");
      c.hidden.clear();
      for (const json& x : v) c.hidden.push_back(get_count(x, key));
    } else if (key == "activation") {
      const auto s = get_as<std::string>(v, key);
      if (s == "tanh") c.activation = Activation::Tanh;
      else if (s == "relu") c.activation = Activation::Relu;
      else throw InvalidArgument("activation: expected tanh | relu");
    } else if (key == "train_eta") {
      c.train_eta = get_real(v, key);
    } else if (key == "epochs") {
      c.epochs = get_count(v, key);
    } else if (key == "nc4_heldout") {
      if (!v.is_boolean()) throw InvalidArgument("nc4_heldout: expected true or false");
      c.nc4_heldout = v.get<bool>();
    } else if (key == "criteria") {
      if (!v.is_array()) throw InvalidArgument("criteria: expected an array of criterion numbers");
      c.criteria.clear();
      for (const json& x : v) {
        const auto id = get_count(x, key);
        if (id < 1 || id > 8) throw InvalidArgument("criteria: entries must be in 1..8");
        c.criteria.push_back(static_cast<int>(id));
      }
    } else {
      throw InvalidArgument("config: unknown key '" + key + "'");
    }
  }
  c.integrator.validate();
  // Eigen mode only builds matrices, so degenerate levels are fine there.
  if (c.mode == Mode::Eigen) {
    c.kappa.validate_levels();
    c.gamma.validate_levels();
  } else {
    c.kappa.validate();
    c.gamma.validate();
  }
  if (c.mode != Mode::Eigen && c.mode != Mode::Verify) c.dims.validate();
  if (c.mode == Mode::Eigen) c.dims.validate(2);
  if (c.mode != Mode::Eigen && !c.seed) throw InvalidArgument("config: 'seed' is required for mode " + mode_name(c.mode));
  if (c.mode == Mode::Sweep) {
    if (c.sweep_key.empty() || c.sweep_values.empty()) {
      throw InvalidArgument("sweep: 'sweep_key' and non-empty 'sweep_values' are required");
    }
    if (c.sweep_key == "mode" || c.sweep_key == "sweep_key" || c.sweep_key == "sweep_values" ||
        c.sweep_key == "output") {
      throw InvalidArgument("sweep: cannot sweep '" + c.sweep_key + "'");
    }
  }
  if (c.mode == Mode::Empirical) {
    if (c.input_dim < c.dims.classes) throw InvalidArgument("input_dim must be >= classes");
    if (!(c.separation > 0.0) || c.noise < 0.0) throw InvalidArgument("separation must be > 0, noise >= 0");
    if (!(c.train_eta > 0.0)) throw InvalidArgument("train_eta must be > 0");
    if (std::any_of(c.hidden.begin(), c.hidden.end(), [](std::size_t w) { return w == 0; })) {
      throw InvalidArgument("hidden: widths must be positive");
    }
  }
  if (c.output.empty()) throw InvalidArgument("output: empty path");
  return c;
}

json config_json(const RunConfig& c) {
  json j;
  j["mode"] = mode_name(c.mode);
  j["classes"] = c.dims.classes;
  j["per_class"] = c.dims.per_class;
  j["features"] = c.dims.features;
  j["kappa"] = triple_json(c.kappa);
  j["gamma"] = triple_json(c.gamma);
  j["step"] = c.integrator.step;
  j["horizon"] = c.integrator.horizon;
  j["record_every"] = c.integrator.record_every;
  j["eta"] = c.integrator.eta;
  j["loss_floor"] = c.integrator.loss_floor;
  j["max_halvings"] = c.integrator.max_halvings;
  j["drift_tolerance"] = c.integrator.drift_tolerance;
  j["system"] = system_name(c.system);
  j["init"] = init_name(c);
  j["h2_mode"] = h2_name(c.h2_mode);
  j["h1_scale"] = c.h1_scale;
  j["h2_scale"] = c.h2_scale;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["output"] = c.output;
  j["sweep_key"] = c.sweep_key;
  j["sweep_values"] = json::array();
  for (const std::string& v : c.sweep_values) {
    json parsed = json::parse(v, nullptr, false);
    j["sweep_values"].push_back(parsed.is_discarded() ? json(v) : parsed);
  }
  j["input_dim"] = c.input_dim;
  j["separation"] = c.separation;
  j["noise"] = c.noise;
  j["hidden"] = c.hidden;
  j["activation"] = c.activation == Activation::Tanh ? "tanh" : "relu";
  j["train_eta"] = c.train_eta;
  j["epochs"] = c.epochs;
  j["nc4_heldout"] = c.nc4_heldout;
  j["criteria"] = c.criteria;
  return j;
}

json override_value(const std::string& text) {
  json parsed = json::parse(text, nullptr, false);
  return parsed.is_discarded() ? json(text) : parsed;
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return CounterRng(seed).split(stream).seed();
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

struct MetricsRecorder {
  const Dims& dims;
  const DerivedConstants& consts;
  const Matrix& labels;
  OrthoBasis basis;
  Matrix e0;
  double e0_norm = 0.0;
  double max_drift = 0.0;

  Vector operator()(double t, const DecomposedState& s) {
    const Matrix h = reconstruct_features(s.h1, s.h2, basis, dims);
    const FullState full{h, s.w, s.b};
    const Matrix r = full_residual(full, labels);
    const ResidualSet rs = residual_components(r, labels, dims);
    const double rn = frobenius_norm(r);
    const InvariantReport inv = compute_e(s, consts, dims);
    max_drift = std::max(max_drift, frobenius_norm(inv.e - e0) / (1.0 + e0_norm));
    const NcReport nc = nc_report(h, s.w, s.b, dims);
    return {t,
            0.5 * rn * rn,
            frobenius_norm(rs.r_global),
            frobenius_norm(rs.r_class - rs.r_global),
            frobenius_norm(rs.r - rs.r_class),
            inv.norm_e,
            inv.alignment_score,
            nc.nc1,
            nc.nc2,
            nc.nc3,
            nc.nc4,
            nc.bias_gap,
            frobenius_norm(s.h2)};
  }
};

json simulation_summary(const SimulationResult& r) {
  json j;
  j["final_time"] = r.final_time;
  j["loss"] = finite_or_null(r.final_loss);
  j["hit_loss_floor"] = r.hit_loss_floor;
  j["nc1"] = finite_or_null(r.final_nc.nc1);
  j["nc2"] = finite_or_null(r.final_nc.nc2);
  j["nc3"] = finite_or_null(r.final_nc.nc3);
  j["nc4"] = finite_or_null(r.final_nc.nc4);
  j["bias_gap"] = finite_or_null(r.final_nc.bias_gap);
  j["inv_E_norm_initial"] = r.initial_e_norm;
  j["inv_E_norm"] = r.final_invariant.norm_e;
  j["inv_alignment"] = finite_or_null(r.final_invariant.alignment_score);
  j["inv_psd_margin"] = r.final_invariant.psd_margin;
  j["max_invariant_drift"] = r.max_invariant_drift;
  j["h2_norm"] = frobenius_norm(r.final_state.h2);
  j["step_used"] = r.step_used;
  j["halvings"] = r.halvings;
  return j;
}

struct ResidualRun {
  Trajectory trajectory;
  ResidualRates rates;
  EigenStructure eig;
};

ResidualRun run_residual(const RunConfig& c) {
  const Dims& dims = c.dims;
  const Matrix labels = build_labels(dims);
  const Matrix kernel = build_block_matrix(c.gamma, dims);
  const double eta = c.integrator.eta;
  if (!(eta > 0.0)) throw InvalidArgument("residual system: eta must be > 0");
  if (!residual_gd_stable(kernel, eta)) {
    throw InvalidArgument("residual system: eta * lambda_global >= 2, the iteration diverges");
  }
  const auto steps = static_cast<std::size_t>(std::ceil(c.integrator.horizon / eta - 1e-9));
  CounterRng rng(*c.seed);
  const Matrix r0 = rng.normal_matrix(dims.classes, dims.samples());
  const std::vector<Matrix> traj = residual_gd_trajectory(r0, kernel, eta, steps);

  ResidualRun out;
  out.eig = closed_form_eigen(c.gamma, dims);
  out.rates = residual_rates(traj, labels, dims);
  out.trajectory.columns = trajectory_columns();
  const double nan = std::nan("");
  for (std::size_t k = 0; k < traj.size(); ++k) {
    if (k % std::max<std::size_t>(c.integrator.record_every, 1) != 0 && k + 1 != traj.size()) continue;
    const ResidualSet rs = residual_components(traj[k], labels, dims);
    const double rn = frobenius_norm(rs.r);
    const double t = static_cast<double>(k) * eta;
    out.trajectory.times.push_back(t);
    out.trajectory.rows.push_back({t, 0.5 * rn * rn, frobenius_norm(rs.r_global),
                                   frobenius_norm(rs.r_class - rs.r_global), frobenius_norm(rs.r - rs.r_class),
                                   nan, nan, nan, nan, nan, nan, nan, nan});
  }
  return out;
}

std::size_t worker_count(std::size_t runs) {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("NTKC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*env == '\0' || *end != '\0' || v < 1) throw InvalidArgument("NTKC_THREADS must be a positive integer");
    cap = static_cast<std::size_t>(v);
  }
  return std::min(cap, runs);
}

int run_eigen(const RunConfig& c, const std::filesystem::path& dir, std::ostream& out, json& summary) {
  std::string csv = "kernel,eigenspace,closed_form,multiplicity,dense_max_abs_error\n";
  auto report = [&](const std::string& name, const BlockKernelSpec& spec) {
    const EigenStructure eig = closed_form_eigen(spec, c.dims);
    const SymmetricEigen dense = sym_eig(build_block_matrix(spec, c.dims));
    const Vector closed = eig.spectrum();
    // spectrum() is descending: global, class, single unless the ordering flips.
    std::vector<double> sorted_dense = dense.values;
    std::vector<double> sorted_closed = closed;
    std::sort(sorted_dense.begin(), sorted_dense.end());
    std::sort(sorted_closed.begin(), sorted_closed.end());
    double err = 0.0;
    for (std::size_t i = 0; i < sorted_dense.size(); ++i) err = std::max(err, std::abs(sorted_dense[i] - sorted_closed[i]));
    const struct {
      const char* space;
      double value;
      std::size_t mult;
    } rows[] = {{"single", eig.lambda_single, eig.mult_single},
                {"class", eig.lambda_class, eig.mult_class},
                {"global", eig.lambda_global, eig.mult_global}};
    for (const auto& row : rows) {
      csv += name + "," + row.space + "," + format_number(row.value) + "," + std::to_string(row.mult) + "," +
             format_number(err) + "\n";
    }
    out << name << ": lambda = (" << format_number(eig.lambda_single) << ", " << format_number(eig.lambda_class)
        << ", " << format_number(eig.lambda_global) << ") multiplicities (" << eig.mult_single << ", "
        << eig.mult_class << ", " << eig.mult_global << "), dense max error " << format_number(err) << "\n";
    summary[name] = {{"lambda_single", eig.lambda_single},
                     {"lambda_class", eig.lambda_class},
                     {"lambda_global", eig.lambda_global},
                     {"multiplicities", {eig.mult_single, eig.mult_class, eig.mult_global}},
                     {"dense_max_abs_error", err}};
  };
  report("gamma", c.gamma);
  report("kappa", c.kappa);
  write_text(dir / "eigen.csv", csv);
  return 0;
}

int run_simulate(const RunConfig& c, const std::filesystem::path& dir, std::ostream& out, json& summary) {
  if (c.system == FlowSystem::Residual) {
    const ResidualRun r = run_residual(c);
    write_text(dir / "trajectory.csv", trajectory_csv(r.trajectory));
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    const double eta = c.integrator.eta;
    summary["rates"] = {{"global", opt(r.rates.global)},
                        {"class", opt(r.rates.cls)},
                        {"single", opt(r.rates.single)},
                        {"max_log_deviation", r.rates.max_log_deviation}};
    summary["predicted_rates"] = {{"global", 1.0 - eta * r.eig.lambda_global},
                                  {"class", 1.0 - eta * r.eig.lambda_class},
                                  {"single", 1.0 - eta * r.eig.lambda_single}};
    out << "residual flow: " << r.trajectory.rows.size() << " rows, final loss "
        << format_number(r.trajectory.rows.back()[1]) << "\n";
    return 0;
  }
  const SimulationResult r = simulate(c);
  write_text(dir / "trajectory.csv", trajectory_csv(r.trajectory));
  summary["final"] = simulation_summary(r);
  out << "simulate: t = " << format_number(r.final_time) << ", loss " << format_number(r.final_loss) << ", nc1 "
      << format_number(r.final_nc.nc1) << ", nc2 " << format_number(r.final_nc.nc2) << ", nc3 "
      << format_number(r.final_nc.nc3) << ", |E| " << format_number(r.final_invariant.norm_e) << "\n";
  return 0;
}

int run_sweep(const RunConfig& c, const std::filesystem::path& dir, std::ostream& out, json& summary) {
  const json base = config_json(c);
  std::vector<RunConfig> runs;
  for (const std::string& v : c.sweep_values) {
    json j = base;
    j[c.sweep_key] = override_value(v);
    runs.push_back(config_from_json(j));
  }
  std::vector<std::optional<SimulationResult>> results(runs.size());
  std::vector<std::string> status(runs.size(), "ok");
  std::vector<std::exception_ptr> errors(runs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      try {
        results[i] = simulate(runs[i]);
      } catch (const DivergenceError&) {
        status[i] = "diverged";
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = worker_count(runs.size());
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < workers; ++k) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::string csv = "run," + csv_field(c.sweep_key) +
                    ",seed,init,system,classes,per_class,features,status,final_time,loss,inv_E_norm_initial,"
                    "inv_E_norm,inv_alignment,nc1,nc2,nc3,nc4,bias_gap,h2_norm,max_invariant_drift\n";
  summary["runs"] = json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunConfig& rc = runs[i];
    std::ostringstream row;
    row << i << "," << csv_field(c.sweep_values[i]) << "," << *rc.seed << "," << csv_field(init_name(rc)) << ","
        << system_name(rc.system) << "," << rc.dims.classes << "," << rc.dims.per_class << "," << rc.dims.features
        << "," << status[i];
    const double nan = std::nan("");
    const SimulationResult* r = results[i] ? &*results[i] : nullptr;
    const double vals[] = {r ? r->final_time : nan,
                           r ? r->final_loss : nan,
                           r ? r->initial_e_norm : nan,
                           r ? r->final_invariant.norm_e : nan,
                           r ? r->final_invariant.alignment_score : nan,
                           r ? r->final_nc.nc1 : nan,
                           r ? r->final_nc.nc2 : nan,
                           r ? r->final_nc.nc3 : nan,
                           r ? r->final_nc.nc4 : nan,
                           r ? r->final_nc.bias_gap : nan,
                           r ? frobenius_norm(r->final_state.h2) : nan,
                           r ? r->max_invariant_drift : nan};
    for (double v : vals) row << "," << format_number(v);
    csv += row.str() + "\n";
    json entry = {{"value", override_value(c.sweep_values[i])}, {"status", status[i]}};
    if (r) entry["final"] = simulation_summary(*r);
    summary["runs"].push_back(entry);
  }
  write_text(dir / "sweep.csv", csv);
  summary["threads"] = workers;
  out << "sweep: " << runs.size() << " runs over '" << c.sweep_key << "' with " << workers << " worker(s)\n";
  return 0;
}

int run_empirical_mode(const RunConfig& c, const std::filesystem::path& dir, std::ostream& out, json& summary) {
  const EmpiricalResult r = run_empirical(c);
  const Dataset data = reference_blobs(c);
  std::string training = "epoch,loss,accuracy\n";
  for (std::size_t k = 0; k < r.log.epochs.size(); ++k) {
    training += std::to_string(r.log.epochs[k]) + "," + format_number(r.log.loss[k]) + "," +
                format_number(r.log.accuracy[k]) + "\n";
  }
  write_text(dir / "training.csv", training);

  std::string kernels = "epoch,alignment_theta,alignment_theta_h,fit_residual_theta,fit_residual_theta_h\n";
  for (const KernelSnapshot& s : r.log.snapshots) {
    kernels += std::to_string(s.epoch) + "," + format_number(kernel_alignment(s.traced_theta, data.labels)) + "," +
               format_number(s.alignment_theta_h) + "," +
               format_number(fit_block_spec(s.traced_theta, data.dims).residual) + "," +
               format_number(s.fit_residual_theta_h) + "\n";
  }
  write_text(dir / "kernels.csv", kernels);

  std::string norms = "kernel,k,s,initial,final\n";
  auto dump = [&](const char* name, const Matrix& a, const Matrix& b) {
    for (std::size_t k = 0; k < a.rows(); ++k)
      for (std::size_t s = 0; s < a.cols(); ++s)
        norms += std::string(name) + "," + std::to_string(k) + "," + std::to_string(s) + "," +
                 format_number(a(k, s)) + "," + format_number(b(k, s)) + "\n";
  };
  dump("theta", r.initial_stats.theta_norms, r.final_stats.theta_norms);
  dump("theta_h", r.initial_stats.theta_h_norms, r.final_stats.theta_h_norms);
  write_text(dir / "block_norms.csv", norms);

  auto stats_json = [](const BlockStats& s) {
    return json{{"alignment_theta", s.alignment_theta},
                {"alignment_theta_h", s.alignment_theta_h},
                {"fit_residual_theta", s.fit_theta.residual},
                {"fit_residual_theta_h", s.fit_theta_h.residual},
                {"offdiag_ratio_theta", s.offdiag_ratio_theta},
                {"offdiag_ratio_theta_h", s.offdiag_ratio_theta_h}};
  };
  summary["initial"] = stats_json(r.initial_stats);
  summary["final"] = stats_json(r.final_stats);
  summary["final"]["loss"] = r.log.loss.back();
  summary["final"]["accuracy"] = r.log.accuracy.back();
  summary["final"]["nc1"] = finite_or_null(r.final_nc.nc1);
  summary["final"]["nc2"] = finite_or_null(r.final_nc.nc2);
  summary["final"]["nc3"] = finite_or_null(r.final_nc.nc3);
  summary["final"]["nc4"] = finite_or_null(r.final_nc.nc4);
  summary["final"]["nc4_on"] = c.nc4_heldout ? "heldout" : "training";
  out << "empirical: loss " << format_number(r.log.loss.front()) << " -> " << format_number(r.log.loss.back())
      << ", feature-kernel alignment " << format_number(r.initial_stats.alignment_theta_h) << " -> "
      << format_number(r.final_stats.alignment_theta_h) << ", block-fit residual "
      << format_number(r.initial_stats.fit_theta_h.residual) << " -> "
      << format_number(r.final_stats.fit_theta_h.residual) << "\n";
  return 0;
}

int run_verify(const RunConfig& c, const std::filesystem::path& dir, std::ostream& out, json& summary) {
  const std::vector<CriterionResult> results = run_verification(*c.seed, c.criteria);
  write_text(dir / "verify.csv", verification_csv(results));
  bool ok = true;
  summary["criteria"] = json::array();
  for (const CriterionResult& r : results) {
    out << verification_line(r) << "\n";
    ok = ok && r.passed();
    summary["criteria"].push_back({{"id", r.id},
                                   {"title", r.title},
                                   {"numeric_pass", r.numeric_pass()},
                                   {"seconds", r.seconds},
                                   {"time_limit", r.time_limit},
                                   {"passed", r.passed()}});
  }
  summary["passed"] = ok;
  return ok ? 0 : 1;
}

}  // namespace

Mode parse_mode(const std::string& name) {
  if (name == "eigen") return Mode::Eigen;
  if (name == "simulate") return Mode::Simulate;
  if (name == "sweep") return Mode::Sweep;
  if (name == "empirical") return Mode::Empirical;
  if (name == "verify") return Mode::Verify;
  throw InvalidArgument("unknown mode '" + name + "' (eigen | simulate | sweep | empirical | verify)");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::Eigen: return "eigen";
    case Mode::Simulate: return "simulate";
    case Mode::Sweep: return "sweep";
    case Mode::Empirical: return "empirical";
    case Mode::Verify: return "verify";
  }
  return "";
}

RunConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  // Blank text means no config file.
  const bool blank = json_text.find_first_not_of(" \t\r\n") == std::string::npos;
  json j = blank ? json::object() : json::parse(json_text, nullptr, false, true);
  if (j.is_discarded()) throw InvalidArgument("config: malformed JSON");
  if (j.is_null()) j = json::object();
  if (!j.is_object()) throw InvalidArgument("config: top level must be a JSON object");
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("--set expects key=value, got '" + item + "'");
    j[item.substr(0, eq)] = override_value(item.substr(eq + 1));
  }
  return config_from_json(j);
}

std::string config_to_json(const RunConfig& config) { return config_json(config).dump(2); }

const std::vector<std::string>& trajectory_columns() {
  static const std::vector<std::string> columns = {
      "time",          "loss", "r_global_norm", "r_class_norm", "r_single_norm", "inv_E_norm", "inv_alignment",
      "nc1",           "nc2",  "nc3",           "nc4",          "bias_gap",      "h2_norm"};
  return columns;
}

DecomposedState initial_state(const RunConfig& config) {
  if (!config.seed) throw InvalidArgument("initial_state: a seed is required");
  const DerivedConstants consts = derived_constants(config.kappa, config.dims);
  const std::uint64_t seed = *config.seed;
  ZeroInvariantOptions opts;
  opts.h2 = config.h2_mode;
  opts.h1_scale = config.h1_scale;
  opts.h2_scale = config.h2_scale;
  switch (config.init) {
    case InitKind::ZeroInvariant:
      return init_zero_invariant(config.dims, consts, seed, opts);
    case InitKind::Perturbed: {
      const DecomposedState base = init_zero_invariant(config.dims, consts, seed, opts);
      return init_perturbed(base, config.init_parameter, stream_seed(seed, 1), consts, config.dims).state;
    }
    case InitKind::FrozenBias:
      opts.centered = false;
      opts.bias = Vector(config.dims.classes, config.init_parameter);
      return init_zero_invariant(config.dims, consts, seed, opts);
    case InitKind::Random:
      return random_decomposed_state(config.dims, seed, config.h1_scale);
  }
  throw InvalidArgument("initial_state: unknown init");
}

SimulationResult simulate(const RunConfig& config) {
  if (config.system == FlowSystem::Residual) {
    throw InvalidArgument("simulate: the residual system is run by the discrete residual driver");
  }
  const Dims& dims = config.dims;
  dims.validate();
  const DerivedConstants consts = derived_constants(config.kappa, dims);
  const Matrix labels = build_labels(dims);
  const bool freeze = config.init == InitKind::FrozenBias;
  const DecomposedState start = initial_state(config);

  MetricsRecorder recorder{dims, consts, labels, build_ortho_basis(dims), invariant_e(start, consts, dims)};
  recorder.e0_norm = frobenius_norm(recorder.e0);

  SimulationResult out;
  out.initial_e_norm = recorder.e0_norm;
  if (config.system == FlowSystem::Decomposed) {
    FlowHooks<DecomposedState> hooks;
    hooks.rhs = [&](const DecomposedState& s) { return rhs_decomposed(s, consts, dims, freeze); };
    hooks.loss = [&](const DecomposedState& s) { return loss(s, dims); };
    hooks.record = [&](double t, const DecomposedState& s) { return recorder(t, s); };
    hooks.invariant = [&](const DecomposedState& s) { return invariant_e(s, consts, dims); };
    FlowResult<DecomposedState> r = integrate(start, config.integrator, hooks, trajectory_columns());
    out.trajectory = std::move(r.trajectory);
    out.final_state = std::move(r.final_state);
    out.final_time = r.final_time;
    out.step_used = r.step_used;
    out.halvings = r.halvings;
    out.hit_loss_floor = r.hit_loss_floor;
  } else {
    FlowHooks<FullState> hooks;
    hooks.rhs = [&](const FullState& s) {
      FullState d = rhs_full(s, config.kappa, labels, dims);
      if (freeze) std::fill(d.b.begin(), d.b.end(), 0.0);
      return d;
    };
    hooks.loss = [&](const FullState& s) { return loss(s, labels); };
    hooks.record = [&](double t, const FullState& s) { return recorder(t, to_decomposed(s, dims)); };
    hooks.invariant = [&](const FullState& s) { return invariant_e(to_decomposed(s, dims), consts, dims); };
    FlowResult<FullState> r = integrate(to_full(start, dims), config.integrator, hooks, trajectory_columns());
    out.trajectory = std::move(r.trajectory);
    out.final_state = to_decomposed(r.final_state, dims);
    out.final_time = r.final_time;
    out.step_used = r.step_used;
    out.halvings = r.halvings;
    out.hit_loss_floor = r.hit_loss_floor;
  }
  out.final_loss = loss(out.final_state, dims);
  out.final_nc = nc_report(reconstruct_features(out.final_state.h1, out.final_state.h2, recorder.basis, dims),
                           out.final_state.w, out.final_state.b, dims);
  out.final_invariant = compute_e(out.final_state, consts, dims);
  out.max_invariant_drift = recorder.max_drift;
  return out;
}

Dataset reference_blobs(const RunConfig& config) {
  if (!config.seed) throw InvalidArgument("reference_blobs: a seed is required");
  return make_blobs(config.dims, config.input_dim, config.separation, config.noise, *config.seed);
}

EmpiricalResult run_empirical(const RunConfig& config) {
  const Dataset data = reference_blobs(config);
  std::vector<std::size_t> widths{config.input_dim};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(config.dims.features);
  widths.push_back(config.dims.classes);
  TinyNet net(widths, config.activation, stream_seed(*config.seed, 1));

  EmpiricalResult out;
  out.initial_stats = block_stats(empirical_ntk(net, data, true), data);
  TrainingOptions options;
  options.eta = config.train_eta;
  options.epochs = config.epochs;
  options.snapshot_epochs = {0, config.epochs / 2, config.epochs};
  options.keep_final_full_kernels = true;
  out.log = train_gd_mse(net, data, options);
  out.final_stats = block_stats(*out.log.final_kernels, data);
  std::optional<Dataset> heldout;
  if (config.nc4_heldout) {
    heldout = make_blobs(config.dims, config.input_dim, config.separation, config.noise, stream_seed(*config.seed, 2));
  }
  out.final_nc = network_nc_report(net, data, heldout);
  return out;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string trajectory_csv(const Trajectory& trajectory) {
  std::string csv;
  for (std::size_t k = 0; k < trajectory.columns.size(); ++k) {
    csv += (k ? "," : "") + trajectory.columns[k];
  }
  csv += "\n";
  for (const Vector& row : trajectory.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) csv += (k ? "," : "") + format_number(row[k]);
    csv += "\n";
  }
  return csv;
}

int run(const RunConfig& config, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const std::filesystem::path dir(config.output);
  std::filesystem::create_directories(dir);
  json summary;
  summary["config"] = config_json(config);
  int status = 0;
  switch (config.mode) {
    case Mode::Eigen: status = run_eigen(config, dir, out, summary); break;
    case Mode::Simulate: status = run_simulate(config, dir, out, summary); break;
    case Mode::Sweep: status = run_sweep(config, dir, out, summary); break;
    case Mode::Empirical: status = run_empirical_mode(config, dir, out, summary); break;
    case Mode::Verify: status = run_verify(config, dir, out, summary); break;
  }
  summary["exit_status"] = status;
  summary["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  out << "wrote " << (dir / "summary.json").string() << "\n";
  return status;
}

}  // namespace ntkc

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

// Acceptance checks with pinned setups and tolerances. Each criterion
// reports named scalar checks; the numeric outcome is deterministic for a
// fixed seed, the measured runtime is reported separately.

#include <cstdint>
#include <string>
#include <vector>

namespace ntkc {

struct Check {
  std::string name;
  double value = 0.0;
  std::string relation;  // "<=", "<", ">=", ">", "=="
  double bound = 0.0;
  bool passed = false;
};

struct CriterionResult {
  int id = 0;
  std::string title;
  std::vector<Check> checks;
  double seconds = 0.0;
  double time_limit = 0.0;  // zero when unconstrained

  bool numeric_pass() const;
  bool within_time() const { return time_limit <= 0.0 || seconds < time_limit; }
  bool passed() const { return numeric_pass() && within_time(); }
};

Check make_check(std::string name, double value, std::string relation, double bound);

CriterionResult verify_eigenstructure(std::uint64_t seed);
CriterionResult verify_residual_rates();
CriterionResult verify_invariant_conservation(std::uint64_t seed);
CriterionResult verify_flow_equivalence(std::uint64_t seed);
/// `reference_nc3` receives the final NC3 of the collapse run.
CriterionResult verify_neural_collapse(std::uint64_t seed, double* reference_nc3 = nullptr);
CriterionResult verify_misalignment(std::uint64_t seed, double reference_nc3);
CriterionResult verify_general_bias(std::uint64_t seed, double reference_nc3);
CriterionResult verify_empirical_kernels(std::uint64_t seed);

/// Criteria 1–8; `which` selects a subset (empty for all). Criteria 6 and 7
/// reuse the NC3 of the collapse run, computing it when 5 is not selected.
std::vector<CriterionResult> run_verification(std::uint64_t seed, const std::vector<int>& which = {});

/// criterion,check,value,relation,bound,pass. Runtimes are not included.
std::string verification_csv(const std::vector<CriterionResult>& results);
/// "criterion N: PASS|FAIL ..." with runtimes.
std::string verification_line(const CriterionResult& result);

}  // namespace ntkc

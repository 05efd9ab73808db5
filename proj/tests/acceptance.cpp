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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria 1-8 run in process; criterion 9 drives the CLI binary.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "ntkc/verify.hpp"

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 1;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli_verify(const fs::path& out) {
  fs::remove_all(out);
  const std::string cmd = std::string("\"") + NTKC_CLI_PATH + "\" verify --set seed=" + std::to_string(kSeed) +
                          " --set output=\"" + out.string() + "\" > \"" + out.string() + ".log\" 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

ntkc::CriterionResult reproducibility() {
  ntkc::CriterionResult r;
  r.id = 9;
  r.title = "reproducibility";
  const auto start = std::chrono::steady_clock::now();
  const fs::path base = fs::temp_directory_path() / "ntkc_acceptance";
  fs::create_directories(base);
  const int rc_a = run_cli_verify(base / "a");
  const int rc_b = run_cli_verify(base / "b");
  const std::string a = slurp(base / "a" / "verify.csv");
  const std::string b = slurp(base / "b" / "verify.csv");
  r.checks.push_back(ntkc::make_check("exit_status_first", rc_a, "==", 0));
  r.checks.push_back(ntkc::make_check("exit_status_second", rc_b, "==", 0));
  r.checks.push_back(ntkc::make_check("csv_bytes", static_cast<double>(a.size()), ">", 0));
  r.checks.push_back(ntkc::make_check("csv_identical", a == b ? 1.0 : 0.0, "==", 1));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

int main() {
  std::vector<ntkc::CriterionResult> results = ntkc::run_verification(kSeed);
  results.push_back(reproducibility());
  int failures = 0;
  for (const ntkc::CriterionResult& r : results) {
    std::cout << ntkc::verification_line(r) << "\n";
    if (!r.passed()) ++failures;
  }
  std::cout << (failures == 0 ? "acceptance: all 9 criteria passed" : "acceptance: " + std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}

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

// ntkc <mode> --config <path> [--set key=value]...

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ntkc/errors.hpp"
#include "ntkc/experiment.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kDivergence = 3;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ntkc::InvalidArgument("cannot read config '" + path + "'");
  std::ostringstream text;
  text << f.rdbuf();
  return text.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-kernel neural collapse experiments"};
  std::string mode;
  std::string config_path;
  std::vector<std::string> overrides;
  bool print_config = false;
  app.add_option("mode", mode, "eigen | simulate | sweep | empirical | verify")->required();
  app.add_option("--config,-c", config_path, "Flat JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--set,-s", overrides, "Override a config key, e.g. --set seed=7 (repeatable)");
  app.add_flag("--print-config", print_config, "Print the resolved configuration and exit");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    std::string text = config_path.empty() ? std::string("{}") : read_file(config_path);
    overrides.insert(overrides.begin(), "mode=" + mode);
    const ntkc::RunConfig config = ntkc::parse_config(text, overrides);
    if (print_config) {
      std::cout << ntkc::config_to_json(config) << "\n";
      return 0;
    }
    return ntkc::run(config, std::cout);
  } catch (const ntkc::InvalidArgument& e) {
    std::cerr << "ntkc: " << e.what() << "\n";
    return kUsageError;
  } catch (const ntkc::DivergenceError& e) {
    std::cerr << "ntkc: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "ntkc: " << e.what() << "\n";
    return 1;
  }
}

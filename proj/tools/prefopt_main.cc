// Copyright 2026 The Prefopt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// prefopt <gradcheck|degeneracy|transitivity|bias-sweep|edpo-rm-dist>
//   --config PATH --seed N --out-dir PATH [--workers K]

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "prefopt/harness.h"

int main(int argc, char** argv) {
  namespace h = prefopt::harness;
  CLI::App app{"Preference-optimization experiments on tabular policies"};
  app.require_subcommand(1, 1);
  std::string config, out_dir;
  uint64_t seed = 0;
  int workers = 1;
  for (const std::string& name : h::CommandNames()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON config file")->required();
    sub->add_option("--seed", seed, "Base seed")->required();
    sub->add_option("--out-dir", out_dir, "Output directory")->required();
    sub->add_option("--workers", workers, "Worker threads")
        ->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return h::kExitUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return h::RunCommand(command, config, seed, out_dir, workers, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return h::kExitCheckFailed;
  }
}

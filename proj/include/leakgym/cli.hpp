// Copyright 2026 The leakgym Authors.
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

#ifndef LEAKGYM_CLI_HPP_
#define LEAKGYM_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace leakgym {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitLeak = 2,
  kExitFault = 3,
};

// Subcommands: train, fuzz, scaling, detect <program.asm>,
// simulate <program.asm>. Global flags: --config, --seed, --out.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace leakgym

#endif  // LEAKGYM_CLI_HPP_

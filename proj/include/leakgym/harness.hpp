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

#ifndef LEAKGYM_HARNESS_HPP_
#define LEAKGYM_HARNESS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "leakgym/agent/ppo.hpp"
#include "leakgym/env.hpp"
#include "leakgym/isa.hpp"
#include "leakgym/rng.hpp"

namespace leakgym {

struct FuzzConfig {
  std::vector<std::size_t> sizes{4, 8, 16, 32};
  std::size_t trials = 5;
  // Programs tested per trial before it is censored.
  std::uint64_t budget = 100'000;
};

struct ScalingConfig {
  std::size_t rl_trials = 3;
  // Env steps per RL trial before it is censored.
  std::uint64_t rl_budget = 200'000;
};

struct ExperimentConfig {
  std::string mode = "train";
  std::uint64_t seed = 1;
  EnvConfig env;
  TrainerConfig trainer;
  FuzzConfig fuzz;
  ScalingConfig scaling;
  std::string out_dir = "out";
  // Worker threads for fuzz trials and scaling cells; 0 = hardware.
  std::size_t threads = 1;
};

// JSON schema: see docs/config.md. Unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

// n instructions drawn uniformly with replacement.
Program random_program(std::size_t n, const ActionSpace& space, Rng& rng);

struct FuzzTrial {
  std::size_t n = 0;
  std::size_t trial = 0;
  // Programs tested up to and including the first leaking one, or the
  // budget when censored.
  std::uint64_t programs_tested = 0;
  std::uint64_t sim_steps = 0;
  bool censored = false;
};

struct FuzzStats {
  std::size_t program_size = 0;
  std::size_t action_space_size = 0;
  std::size_t leak_length = 0;
  std::vector<FuzzTrial> trials;
  // Censored trials count at their budget value.
  double median = 0.0;
  double mean = 0.0;
  // a^(n-1) / (n-l+1), reported next to the measurement.
  double expected_count = 0.0;
};

double median(std::vector<double> xs);
double expected_fuzz_count(std::size_t a, std::size_t n, std::size_t l);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

FuzzTrial fuzz_trial(const ExperimentConfig& cfg, std::size_t n, std::size_t trial);
std::vector<FuzzStats> fuzz_campaign(const ExperimentConfig& cfg);

// One RL trial of the scaling grid: PPO with max_len = m until the first
// leak or rl_budget env steps.
FuzzTrial rl_trial(const ExperimentConfig& cfg, std::size_t m, std::size_t trial);

struct ScalingResult {
  std::vector<FuzzStats> fuzz;
  std::vector<FuzzStats> rl;
};

ScalingResult scaling_study(const ExperimentConfig& cfg);

// Columns: method,n,trial,programs_tested,wall_steps,censored
std::string scaling_csv_header();
std::string to_csv_rows(const std::string& method, const std::vector<FuzzStats>& stats);

struct PlantedFixture {
  // Shortest leaking sequence over the fixture actions: the gadget minus
  // its first instruction (flags already start cleared).
  static constexpr std::size_t kMinimalLeakLength = 3;
  // Step budget of the fixture env; enough for programs of up to 64
  // instructions over the fixture actions.
  static constexpr std::size_t kFixtureStepBudget = 64;

  Program program;
  EnvConfig env;
  // Actions of env.action_space that rebuild program, in order.
  std::vector<std::size_t> action_sequence;
};

// A four-instruction bounds-check-bypass gadget over the default ISA,
// with an env restricted to six actions, max_len = 12 and a step budget
// of kFixtureStepBudget.
//
//   0  SBB R0, R0          ; R0 = 0 - 0 - CF(=0): SF = 0, CF = 0
//   1  JNS +2              ; SF = 0 => taken to 3. The reset PHT counter
//                          ; (1) predicts not-taken => misprediction
//   2  SBB R1, [BASE+R2]   ; transient only: R1 -= mem[R2]
//   3  SBB R0, [BASE+R1]   ; transient: loads at R1 - mem[R2] (secret-
//                          ; dependent set); architectural: loads at R1
//
// Under CT_SEQ the contract sees PC(3,1) and LoadAddr(R1): mem[R2] is not
// in the trace, so boosted siblings refill it and the transient load in
// instruction 3 lands in a different cache set. With W = 0 nothing
// transient happens. Under CT_COND with spec_depth >= 2 the contract
// exposes both transient loads, boosting copies mem[R2], and the class
// collapses to one HTrace.
PlantedFixture planted_fixture();

// The six fixture actions: the four gadget instructions, JMP -1 and JMP -2.
// Both jumps go backwards and usually loop forever once reached, so every
// extra instruction in a random program is another chance of rejection.
ActionSpaceConfig fixture_action_space();

// The fixture actions plus IMUL R1, R2, a non-branching filler that thins
// the loop rate. Used by the size scaling study: with six actions almost
// every 32-instruction program loops, and with no backward jumps at all
// longer programs leak more easily, not less.
ActionSpaceConfig scaling_action_space();

}  // namespace leakgym

#endif  // LEAKGYM_HARNESS_HPP_

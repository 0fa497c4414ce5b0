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

#ifndef LEAKGYM_ENV_HPP_
#define LEAKGYM_ENV_HPP_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "leakgym/arch.hpp"
#include "leakgym/detect.hpp"
#include "leakgym/isa.hpp"
#include "leakgym/uarch.hpp"

namespace leakgym {

struct RewardSpec {
  double leak = 100.0;
  double observable = 10.0;
  double misspec = 5.0;
  double unobservable = -5.0;
  double none = -10.0;
  double step = -0.1;
  double reject = -1.0;

  // Throws ConfigError unless leak > observable > misspec > 0 >
  // unobservable >= none.
  void validate() const;
};

struct EnvConfig {
  std::size_t max_len = 60;
  std::size_t inputs = 20;
  std::uint64_t input_seed = 42;
  ContractSpec contract;
  SpecConfig spec;
  RewardSpec reward;
  ActionSpaceConfig action_space;
  std::size_t boosts_per_input = 2;
  std::size_t step_budget = kDefaultStepBudget;
  // Episode length cap counting rejected steps too; 0 means 2 * max_len.
  std::size_t max_episode_steps = 0;
  // Regenerate inputs from (input_seed, episode seed) on every reset
  // instead of once per environment.
  bool randomize_inputs = false;

  std::size_t episode_step_cap() const {
    return max_episode_steps ? max_episode_steps : 2 * max_len;
  }
  void validate() const;
};

struct Observation {
  std::vector<InputObservation> records;
  // Index of the last appended action; the action-space size is the
  // sentinel for "no action yet".
  std::size_t last_action = 0;
  bool operator==(const Observation&) const = default;
};

struct StepInfo {
  bool rejected = false;
  FilterLevel filter = FilterLevel::None;
  std::optional<ViolationReport> violation;
  std::uint64_t sim_steps = 0;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  StepInfo info;
};

struct EncodingShape {
  std::size_t inputs = 20;
  std::size_t space_size = 40;
  std::size_t max_len = 60;
  std::size_t window = 8;

  // inputs * 66 + (space_size + 1) + inputs^2
  std::size_t length() const {
    return inputs * 66 + (space_size + 1) + inputs * inputs;
  }
};

// Per input: 64 HTrace bits, br_misses / max_len, tran_uops / (max_len *
// window); then one-hot(last_action) over space_size + 1 slots; then, per
// input, one-hot of its CTrace class (classes numbered by first
// occurrence).
Eigen::VectorXd encode_observation(const Observation& o, const EncodingShape& shape);

// Grows an attack program one instruction per step and scores it.
// Single-threaded; instances share nothing.
class SpecEnv {
 public:
  explicit SpecEnv(EnvConfig config);

  Observation reset(std::uint64_t seed = 0);
  StepResult step(std::size_t action_id);

  const EnvConfig& config() const { return config_; }
  const ActionSpace& action_space() const { return space_; }
  const std::vector<Input>& inputs() const { return inputs_; }
  const Program& program() const { return program_; }
  // obs_1 .. obs_k for the k committed prefixes of the current episode.
  const std::vector<Observation>& history() const { return history_; }
  EncodingShape encoding_shape() const;
  std::size_t observation_size() const { return encoding_shape().length(); }
  bool done() const { return done_; }
  std::size_t episode_steps() const { return episode_steps_; }

 private:
  Observation empty_observation() const;

  EnvConfig config_;
  ActionSpace space_;
  std::vector<Input> inputs_;
  Program program_;
  std::vector<Observation> history_;
  Observation current_;
  std::size_t episode_steps_ = 0;
  bool done_ = true;
};

}  // namespace leakgym

#endif  // LEAKGYM_ENV_HPP_

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

#ifndef LEAKGYM_AGENT_PPO_HPP_
#define LEAKGYM_AGENT_PPO_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "leakgym/agent/mlp.hpp"
#include "leakgym/detect.hpp"
#include "leakgym/env.hpp"
#include "leakgym/rng.hpp"

namespace leakgym {

// Non-finite logits, losses or parameters.
class TrainingFault : public std::runtime_error {
 public:
  TrainingFault(std::size_t iteration, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

enum class OptimizerKind : std::uint8_t { Sgd, Adam };

struct TrainerConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  double learning_rate = 3e-4;
  std::size_t epochs = 4;
  std::size_t minibatch_size = 64;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  std::size_t horizon = 512;
  std::uint64_t total_steps = 0;
  std::uint64_t seed = 0;
  std::vector<Eigen::Index> hidden{64, 64};
  OptimizerKind optimizer = OptimizerKind::Sgd;
  // Stop once this many leaks were found; 0 runs the full budget.
  std::size_t stop_after_leaks = 0;

  void validate() const;
};

// Policy net [input, hidden..., actions] and value net [input, hidden..., 1],
// each a flat parameter vector in the MlpLayout order.
struct PolicyParams {
  nn::MlpLayout policy_layout;
  nn::MlpLayout value_layout;
  Eigen::VectorXd policy;
  Eigen::VectorXd value;

  // Hidden layers Xavier-uniform, policy head zero (uniform start), value
  // head Xavier-uniform.
  static PolicyParams init(Eigen::Index input_dim, Eigen::Index actions,
                           const std::vector<Eigen::Index>& hidden, Rng& rng);
  PolicyParams zeros_like() const;
  Eigen::Index input_dim() const { return policy_layout.input_dim(); }
  Eigen::Index num_actions() const { return policy_layout.output_dim(); }
};

Eigen::VectorXd action_probabilities(const PolicyParams& params, const Eigen::VectorXd& obs);

// Inverse-CDF draw with one uniform() call; shared by the policy and the
// uniform baseline so both consume the generator identically.
std::size_t sample_categorical(const Eigen::VectorXd& probs, Rng& rng);

struct ActionChoice {
  std::size_t action = 0;
  double log_prob = 0.0;
  double value = 0.0;
};

ActionChoice select_action(const PolicyParams& params, const Eigen::VectorXd& obs, Rng& rng);
double state_value(const PolicyParams& params, const Eigen::VectorXd& obs);

struct Trajectory {
  std::vector<Eigen::VectorXd> obs;
  std::vector<std::size_t> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> terminated;
  std::vector<std::uint8_t> truncated;
  // V(final observation) for truncated steps, used as the bootstrap.
  std::vector<double> bootstrap;
  // V(observation after the last step) when the rollout was cut mid-episode.
  double last_value = 0.0;

  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  std::size_t size() const { return actions.size(); }
  void push(const Eigen::VectorXd& o, const ActionChoice& c, double reward,
            bool term, bool trunc, double boot);
};

// Generalized advantage estimation; returns = advantages + values.
void compute_gae(Trajectory& traj, double gamma, double lambda);

struct PpoBatch {
  Eigen::MatrixXd obs;  // input_dim x batch
  std::vector<std::size_t> actions;
  Eigen::VectorXd old_log_probs;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

struct LossStats {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  // Samples with A > 0 and ratio > 1 + clip whose clipped surrogate exceeded
  // the unclipped one. Always zero.
  std::size_t clip_bound_violations = 0;
};

// Mean over the batch of
//   -min(r A, clip(r, 1-e, 1+e) A) + value_coef (V - R)^2 - entropy_coef H.
// When grad is non-null it receives d(total)/d(params) (overwritten).
LossStats ppo_loss(const PolicyParams& params, const PpoBatch& batch,
                   const TrainerConfig& cfg, PolicyParams* grad = nullptr);

struct AdamState {
  Eigen::VectorXd m_policy, v_policy, m_value, v_value;
  std::uint64_t t = 0;
};

// Normalizes advantages over the whole batch, then runs cfg.epochs passes
// of shuffled minibatch descent. Returns the stats averaged over
// minibatches.
LossStats ppo_update(PolicyParams& params, std::vector<Trajectory>& batch,
                     const TrainerConfig& cfg, Rng& rng, AdamState* adam = nullptr);

struct IterationRecord {
  std::size_t iteration = 0;
  std::uint64_t steps = 0;
  std::size_t episodes = 0;
  std::optional<double> mean_episode_reward;
  std::size_t leaks = 0;
  std::optional<std::uint64_t> first_leak_step;
  std::optional<LossStats> loss;
};

struct LeakRecord {
  std::uint64_t step = 0;  // 1-based env step that completed the leak
  std::size_t episode = 0;
  ViolationReport report;
};

struct TrainingLog {
  std::string method;
  std::vector<IterationRecord> iterations;
  std::vector<LeakRecord> leaks;
  std::optional<std::uint64_t> first_leak_step;
  std::uint64_t total_steps = 0;
  std::uint64_t sim_steps = 0;
};

nlohmann::json to_json(const IterationRecord& r);
std::string to_jsonl(const TrainingLog& log);
// Writes <dir>/<stem>.jsonl and <dir>/leaks/<stem>_NNN.{json,asm}.
void write_training_log(const TrainingLog& log, const std::string& dir,
                        const std::string& stem = "training");

TrainingLog train(SpecEnv& env, const TrainerConfig& cfg);
TrainingLog random_search(SpecEnv& env, std::uint64_t budget, std::uint64_t seed,
                          std::size_t horizon = 512, std::size_t stop_after_leaks = 0);

}  // namespace leakgym

#endif  // LEAKGYM_AGENT_PPO_HPP_

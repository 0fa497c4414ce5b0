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

#include "leakgym/agent/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

namespace leakgym {

namespace {

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

}  // namespace

void TrainerConfig::validate() const {
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0, 1]");
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must be in [0, 1]");
  if (!(clip > 0.0)) throw ConfigError("clip must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1 || minibatch_size < 1 || horizon < 1) {
    throw ConfigError("epochs, minibatch_size and horizon must be >= 1");
  }
}

PolicyParams PolicyParams::init(Eigen::Index input_dim, Eigen::Index actions,
                                const std::vector<Eigen::Index>& hidden, Rng& rng) {
  std::vector<Eigen::Index> ps{input_dim};
  ps.insert(ps.end(), hidden.begin(), hidden.end());
  std::vector<Eigen::Index> vs = ps;
  ps.push_back(actions);
  vs.push_back(1);

  PolicyParams p;
  p.policy_layout = nn::MlpLayout(ps);
  p.value_layout = nn::MlpLayout(vs);
  p.policy = nn::mlp_init<double>(p.policy_layout, rng, 0.0);
  p.value = nn::mlp_init<double>(p.value_layout, rng, 1.0);
  return p;
}

PolicyParams PolicyParams::zeros_like() const {
  PolicyParams g = *this;
  g.policy.setZero();
  g.value.setZero();
  return g;
}

Eigen::VectorXd action_probabilities(const PolicyParams& params, const Eigen::VectorXd& obs) {
  const Eigen::VectorXd logits = nn::mlp_forward<double>(params.policy_layout, params.policy, obs);
  if (!logits.allFinite()) throw std::domain_error("non-finite policy logits");
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

std::size_t sample_categorical(const Eigen::VectorXd& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<std::size_t>(i);
  }
  // Rounding left u above the accumulated mass; take the last nonzero.
  for (Eigen::Index i = probs.size() - 1; i > 0; --i) {
    if (probs[i] > 0.0) return static_cast<std::size_t>(i);
  }
  return 0;
}

double state_value(const PolicyParams& params, const Eigen::VectorXd& obs) {
  return nn::mlp_forward<double>(params.value_layout, params.value, obs)(0, 0);
}

ActionChoice select_action(const PolicyParams& params, const Eigen::VectorXd& obs, Rng& rng) {
  const Eigen::VectorXd probs = action_probabilities(params, obs);
  ActionChoice c;
  c.action = sample_categorical(probs, rng);
  c.log_prob = std::log(probs[static_cast<Eigen::Index>(c.action)]);
  c.value = state_value(params, obs);
  return c;
}

void Trajectory::push(const Eigen::VectorXd& o, const ActionChoice& c, double reward,
                      bool term, bool trunc, double boot) {
  obs.push_back(o);
  actions.push_back(c.action);
  log_probs.push_back(c.log_prob);
  rewards.push_back(reward);
  values.push_back(c.value);
  terminated.push_back(term);
  truncated.push_back(trunc);
  bootstrap.push_back(boot);
}

void compute_gae(Trajectory& traj, double gamma, double lambda) {
  const auto n = static_cast<Eigen::Index>(traj.size());
  traj.advantages.resize(n);
  traj.returns.resize(n);
  double gae = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const auto k = static_cast<std::size_t>(t);
    double next_value;
    double carry;
    if (traj.terminated[k]) {
      next_value = 0.0;
      carry = 0.0;
    } else if (traj.truncated[k]) {
      next_value = traj.bootstrap[k];
      carry = 0.0;
    } else {
      next_value = t + 1 < n ? traj.values[k + 1] : traj.last_value;
      carry = 1.0;
    }
    const double delta = traj.rewards[k] + gamma * next_value - traj.values[k];
    gae = delta + gamma * lambda * carry * gae;
    traj.advantages[t] = gae;
    traj.returns[t] = gae + traj.values[k];
  }
}

LossStats ppo_loss(const PolicyParams& params, const PpoBatch& batch,
                   const TrainerConfig& cfg, PolicyParams* grad) {
  const Eigen::Index B = batch.obs.cols();
  const Eigen::Index A = params.num_actions();
  const double inv_b = 1.0 / static_cast<double>(B);

  nn::MlpTape<double> ptape;
  nn::MlpTape<double> vtape;
  const Eigen::MatrixXd logits = nn::mlp_forward<double>(
      params.policy_layout, params.policy, batch.obs, grad ? &ptape : nullptr);
  const Eigen::MatrixXd values = nn::mlp_forward<double>(
      params.value_layout, params.value, batch.obs, grad ? &vtape : nullptr);
  if (!all_finite(logits) || !all_finite(values)) {
    throw std::domain_error("non-finite network output");
  }
  const Eigen::MatrixXd logp = nn::log_softmax<double>(logits);
  const Eigen::MatrixXd probs = logp.array().exp().matrix();

  LossStats st;
  Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(A, B);
  Eigen::MatrixXd d_values(1, B);
  for (Eigen::Index k = 0; k < B; ++k) {
    const auto a = static_cast<Eigen::Index>(batch.actions[static_cast<std::size_t>(k)]);
    const double adv = batch.advantages[k];
    const double lp = logp(a, k);
    const double ratio = std::exp(lp - batch.old_log_probs[k]);
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
    const double surr = std::min(unclipped, clipped);
    if (adv > 0.0 && ratio > 1.0 + cfg.clip && surr > unclipped) {
      ++st.clip_bound_violations;
    }
    const double entropy = -(probs.col(k).array() * logp.col(k).array()).sum();
    const double verr = values(0, k) - batch.returns[k];

    st.policy += -surr * inv_b;
    st.value += verr * verr * inv_b;
    st.entropy += entropy * inv_b;
    st.approx_kl += (batch.old_log_probs[k] - lp) * inv_b;
    if (std::abs(ratio - 1.0) > cfg.clip) st.clip_fraction += inv_b;

    if (grad) {
      // d(-surr)/d(log pi(a)); zero when the clipped branch is the minimum.
      const double g_lp = unclipped <= clipped ? -ratio * adv * inv_b : 0.0;
      d_logits.col(k) = -g_lp * probs.col(k);
      d_logits(a, k) += g_lp;
      // -c_e dH/dz_j = c_e p_j (log p_j + H)
      d_logits.col(k).array() += cfg.entropy_coef * inv_b * probs.col(k).array() *
                                 (logp.col(k).array() + entropy);
      d_values(0, k) = 2.0 * cfg.value_coef * verr * inv_b;
    }
  }
  st.total = st.policy + cfg.value_coef * st.value - cfg.entropy_coef * st.entropy;

  if (grad) {
    grad->policy.setZero(params.policy.size());
    grad->value.setZero(params.value.size());
    nn::mlp_backward<double>(params.policy_layout, params.policy, ptape, d_logits, grad->policy);
    nn::mlp_backward<double>(params.value_layout, params.value, vtape, d_values, grad->value);
  }
  return st;
}

LossStats ppo_update(PolicyParams& params, std::vector<Trajectory>& batch,
                     const TrainerConfig& cfg, Rng& rng, AdamState* adam) {
  std::size_t total = 0;
  for (const auto& t : batch) total += t.size();
  if (total == 0) throw std::invalid_argument("ppo_update needs a nonempty batch");

  const Eigen::Index in_dim = params.input_dim();
  Eigen::MatrixXd obs(in_dim, static_cast<Eigen::Index>(total));
  std::vector<std::size_t> actions;
  Eigen::VectorXd old_lp(static_cast<Eigen::Index>(total));
  Eigen::VectorXd adv(static_cast<Eigen::Index>(total));
  Eigen::VectorXd ret(static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (auto& t : batch) {
    if (t.advantages.size() != static_cast<Eigen::Index>(t.size())) {
      compute_gae(t, cfg.gamma, cfg.lambda);
    }
    for (std::size_t k = 0; k < t.size(); ++k, ++col) {
      obs.col(col) = t.obs[k];
      actions.push_back(t.actions[k]);
      old_lp[col] = t.log_probs[k];
      adv[col] = t.advantages[static_cast<Eigen::Index>(k)];
      ret[col] = t.returns[static_cast<Eigen::Index>(k)];
    }
  }
  const double mean = adv.mean();
  const double stdev = std::sqrt((adv.array() - mean).square().mean());
  adv = (adv.array() - mean) / std::max(stdev, 1e-8);

  if (adam && adam->m_policy.size() == 0) {
    adam->m_policy = adam->v_policy = Eigen::VectorXd::Zero(params.policy.size());
    adam->m_value = adam->v_value = Eigen::VectorXd::Zero(params.value.size());
  }

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  PolicyParams grad = params.zeros_like();
  LossStats mean_stats;
  std::size_t updates = 0;
  const std::size_t mb = std::min(cfg.minibatch_size, total);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = total; i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < total; start += mb) {
      const std::size_t len = std::min(mb, total - start);
      PpoBatch b;
      b.obs.resize(in_dim, static_cast<Eigen::Index>(len));
      b.old_log_probs.resize(static_cast<Eigen::Index>(len));
      b.advantages.resize(static_cast<Eigen::Index>(len));
      b.returns.resize(static_cast<Eigen::Index>(len));
      for (std::size_t k = 0; k < len; ++k) {
        const auto src = static_cast<Eigen::Index>(order[start + k]);
        const auto dst = static_cast<Eigen::Index>(k);
        b.obs.col(dst) = obs.col(src);
        b.actions.push_back(actions[order[start + k]]);
        b.old_log_probs[dst] = old_lp[src];
        b.advantages[dst] = adv[src];
        b.returns[dst] = ret[src];
      }

      const LossStats st = ppo_loss(params, b, cfg, &grad);
      if (!std::isfinite(st.total) || !grad.policy.allFinite() || !grad.value.allFinite()) {
        throw std::domain_error("non-finite loss or gradient");
      }
      if (adam) {
        constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
        ++adam->t;
        const double c1 = 1.0 - std::pow(kB1, static_cast<double>(adam->t));
        const double c2 = 1.0 - std::pow(kB2, static_cast<double>(adam->t));
        const auto step = [&](Eigen::VectorXd& p, const Eigen::VectorXd& g,
                              Eigen::VectorXd& m, Eigen::VectorXd& v) {
          m = kB1 * m + (1.0 - kB1) * g;
          v = kB2 * v + (1.0 - kB2) * g.cwiseProduct(g);
          p.array() -= cfg.learning_rate * (m.array() / c1) /
                       ((v.array() / c2).sqrt() + kEps);
        };
        step(params.policy, grad.policy, adam->m_policy, adam->v_policy);
        step(params.value, grad.value, adam->m_value, adam->v_value);
      } else {
        params.policy -= cfg.learning_rate * grad.policy;
        params.value -= cfg.learning_rate * grad.value;
      }

      mean_stats.total += st.total;
      mean_stats.policy += st.policy;
      mean_stats.value += st.value;
      mean_stats.entropy += st.entropy;
      mean_stats.approx_kl += st.approx_kl;
      mean_stats.clip_fraction += st.clip_fraction;
      mean_stats.clip_bound_violations += st.clip_bound_violations;
      ++updates;
    }
  }
  const double inv = 1.0 / static_cast<double>(updates);
  mean_stats.total *= inv;
  mean_stats.policy *= inv;
  mean_stats.value *= inv;
  mean_stats.entropy *= inv;
  mean_stats.approx_kl *= inv;
  mean_stats.clip_fraction *= inv;
  return mean_stats;
}

nlohmann::json to_json(const IterationRecord& r) {
  nlohmann::json j;
  j["iteration"] = r.iteration;
  j["steps"] = r.steps;
  j["episodes"] = r.episodes;
  j["mean_episode_reward"] = optional_json(r.mean_episode_reward);
  j["leaks"] = r.leaks;
  j["first_leak_step"] =
      r.first_leak_step ? nlohmann::json(*r.first_leak_step) : nlohmann::json();
  if (r.loss) {
    j["loss"] = r.loss->total;
    j["policy_loss"] = r.loss->policy;
    j["value_loss"] = r.loss->value;
    j["entropy"] = r.loss->entropy;
    j["approx_kl"] = r.loss->approx_kl;
    j["clip_fraction"] = r.loss->clip_fraction;
  }
  return j;
}

std::string to_jsonl(const TrainingLog& log) {
  std::string out;
  for (const auto& it : log.iterations) {
    nlohmann::json j = to_json(it);
    j["method"] = log.method;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_training_log(const TrainingLog& log, const std::string& dir,
                        const std::string& stem) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "leaks");
  std::ofstream(fs::path(dir) / (stem + ".jsonl"), std::ios::binary) << to_jsonl(log);
  for (std::size_t i = 0; i < log.leaks.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03zu", stem.c_str(), i);
    nlohmann::json j = to_json(log.leaks[i].report);
    j["step"] = log.leaks[i].step;
    j["episode"] = log.leaks[i].episode;
    std::ofstream(fs::path(dir) / "leaks" / (std::string(name) + ".json"), std::ios::binary)
        << j.dump(2) << '\n';
    std::ofstream(fs::path(dir) / "leaks" / (std::string(name) + ".asm"), std::ios::binary)
        << render_program(log.leaks[i].report.program) << '\n';
  }
}

namespace {

using ActFn = std::function<ActionChoice(const Eigen::VectorXd&, Rng&)>;
using ValueFn = std::function<double(const Eigen::VectorXd&)>;
using LearnFn = std::function<std::optional<LossStats>(Trajectory&)>;

// Rollout loop shared by PPO and the uniform baseline. Episode e is reset
// with mix_seed(seed, 100, e); actions draw from Rng(mix_seed(seed, 2)).
TrainingLog rollout_loop(SpecEnv& env, std::uint64_t budget, std::uint64_t seed,
                         std::size_t horizon, std::size_t stop_after_leaks,
                         const std::string& method, const ActFn& act,
                         const ValueFn& value, const LearnFn& learn) {
  TrainingLog log;
  log.method = method;
  if (budget == 0) return log;

  const EncodingShape shape = env.encoding_shape();
  Rng sample_rng(mix_seed(seed, 2));
  std::size_t episode = 0;
  Eigen::VectorXd x = encode_observation(env.reset(mix_seed(seed, 100, episode)), shape);
  double episode_reward = 0.0;
  std::uint64_t steps = 0;
  bool stop = false;

  for (std::size_t iteration = 0; steps < budget && !stop; ++iteration) {
    try {
      Trajectory traj;
      std::size_t episodes_done = 0;
      double reward_sum = 0.0;
      const std::uint64_t chunk = std::min<std::uint64_t>(horizon, budget - steps);
      for (std::uint64_t k = 0; k < chunk; ++k) {
        const ActionChoice choice = act(x, sample_rng);
        StepResult r = env.step(choice.action);
        ++steps;
        log.sim_steps += r.info.sim_steps;
        episode_reward += r.reward;
        if (r.info.violation) {
          if (!log.first_leak_step) log.first_leak_step = steps;
          log.leaks.push_back({steps, episode, std::move(*r.info.violation)});
        }
        Eigen::VectorXd next = encode_observation(r.obs, shape);
        const double boot = r.truncated && !r.terminated ? value(next) : 0.0;
        traj.push(x, choice, r.reward, r.terminated, r.truncated, boot);
        if (r.terminated || r.truncated) {
          ++episodes_done;
          reward_sum += episode_reward;
          episode_reward = 0.0;
          ++episode;
          next = encode_observation(env.reset(mix_seed(seed, 100, episode)), shape);
        }
        x = std::move(next);
        if (stop_after_leaks && log.leaks.size() >= stop_after_leaks) {
          stop = true;
          break;
        }
      }
      traj.last_value = value(x);

      IterationRecord rec;
      rec.iteration = iteration;
      if (!stop) rec.loss = learn(traj);
      rec.steps = steps;
      rec.episodes = episodes_done;
      if (episodes_done) rec.mean_episode_reward = reward_sum / static_cast<double>(episodes_done);
      rec.leaks = log.leaks.size();
      rec.first_leak_step = log.first_leak_step;
      log.iterations.push_back(rec);
    } catch (const std::domain_error& e) {
      throw TrainingFault(iteration, e.what());
    }
  }
  log.total_steps = steps;
  return log;
}

}  // namespace

TrainingLog train(SpecEnv& env, const TrainerConfig& cfg) {
  cfg.validate();
  Rng init_rng(mix_seed(cfg.seed, 1));
  Rng shuffle_rng(mix_seed(cfg.seed, 3));
  PolicyParams params = PolicyParams::init(static_cast<Eigen::Index>(env.observation_size()),
                                           static_cast<Eigen::Index>(env.action_space().size()),
                                           cfg.hidden, init_rng);
  AdamState adam;
  AdamState* adam_ptr = cfg.optimizer == OptimizerKind::Adam ? &adam : nullptr;

  return rollout_loop(
      env, cfg.total_steps, cfg.seed, cfg.horizon, cfg.stop_after_leaks, "ppo",
      [&](const Eigen::VectorXd& x, Rng& rng) { return select_action(params, x, rng); },
      [&](const Eigen::VectorXd& x) { return state_value(params, x); },
      [&](Trajectory& traj) -> std::optional<LossStats> {
        compute_gae(traj, cfg.gamma, cfg.lambda);
        std::vector<Trajectory> batch{std::move(traj)};
        return ppo_update(params, batch, cfg, shuffle_rng, adam_ptr);
      });
}

TrainingLog random_search(SpecEnv& env, std::uint64_t budget, std::uint64_t seed,
                          std::size_t horizon, std::size_t stop_after_leaks) {
  const auto a = static_cast<Eigen::Index>(env.action_space().size());
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(a, 1.0 / static_cast<double>(a));
  const double log_p = std::log(1.0 / static_cast<double>(a));
  return rollout_loop(
      env, budget, seed, std::max<std::size_t>(horizon, 1), stop_after_leaks, "random",
      [&](const Eigen::VectorXd&, Rng& rng) {
        return ActionChoice{sample_categorical(uniform, rng), log_p, 0.0};
      },
      [](const Eigen::VectorXd&) { return 0.0; },
      [](Trajectory&) -> std::optional<LossStats> { return std::nullopt; });
}

}  // namespace leakgym

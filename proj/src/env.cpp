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

#include "leakgym/env.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "leakgym/rng.hpp"

namespace leakgym {

void RewardSpec::validate() const {
  if (!(leak > observable && observable > misspec && misspec > 0.0 &&
        0.0 > unobservable && unobservable >= none)) {
    throw ConfigError(
        "reward ordering must be leak > observable > misspec > 0 > "
        "unobservable >= none");
  }
}

void EnvConfig::validate() const {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (inputs < 2) throw ConfigError("need at least 2 inputs");
  if (boosts_per_input < 1) throw ConfigError("boosts_per_input must be >= 1");
  if (contract.mode == ContractMode::CtCond && contract.spec_depth < 1) {
    throw ConfigError("CT_COND needs spec_depth >= 1");
  }
  if (spec.nesting < 1) throw ConfigError("nesting must be >= 1");
  reward.validate();
}

Eigen::VectorXd encode_observation(const Observation& o, const EncodingShape& shape) {
  if (o.records.size() != shape.inputs) {
    throw std::invalid_argument("observation has " + std::to_string(o.records.size()) +
                                " records, expected " + std::to_string(shape.inputs));
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.length()));
  const double b_scale = static_cast<double>(shape.max_len);
  const double t_scale =
      static_cast<double>(shape.max_len * std::max<std::size_t>(shape.window, 1));

  Eigen::Index at = 0;
  for (const InputObservation& r : o.records) {
    for (std::size_t s = 0; s < kCacheSets; ++s) {
      v[at++] = static_cast<double>((r.htrace >> s) & 1);
    }
    v[at++] = static_cast<double>(r.br_misses) / b_scale;
    v[at++] = static_cast<double>(r.tran_uops) / t_scale;
  }

  v[at + static_cast<Eigen::Index>(std::min(o.last_action, shape.space_size))] = 1.0;
  at += static_cast<Eigen::Index>(shape.space_size + 1);

  std::vector<std::size_t> class_of(o.records.size());
  std::vector<const CTrace*> reps;
  for (std::size_t i = 0; i < o.records.size(); ++i) {
    std::size_t c = 0;
    while (c < reps.size() && *reps[c] != o.records[i].ctrace) ++c;
    if (c == reps.size()) reps.push_back(&o.records[i].ctrace);
    v[at + static_cast<Eigen::Index>(c)] = 1.0;
    at += static_cast<Eigen::Index>(shape.inputs);
  }
  return v;
}

SpecEnv::SpecEnv(EnvConfig config)
    : config_(std::move(config)), space_(build_action_space(config_.action_space)) {
  config_.validate();
  inputs_ = generate_inputs(config_.input_seed, config_.inputs);
}

EncodingShape SpecEnv::encoding_shape() const {
  return {config_.inputs, space_.size(), config_.max_len, config_.spec.window};
}

Observation SpecEnv::empty_observation() const {
  Observation o;
  o.records.assign(inputs_.size(), InputObservation{});
  o.last_action = space_.size();
  return o;
}

Observation SpecEnv::reset(std::uint64_t seed) {
  if (config_.randomize_inputs) {
    inputs_ = generate_inputs(mix_seed(config_.input_seed, seed), config_.inputs);
  }
  program_ = Program{};
  history_.clear();
  episode_steps_ = 0;
  done_ = false;
  current_ = empty_observation();
  return current_;
}

StepResult SpecEnv::step(std::size_t action_id) {
  if (done_) throw std::logic_error("step on a finished episode; call reset()");
  if (action_id >= space_.size()) {
    throw std::out_of_range("action " + std::to_string(action_id) + " out of range");
  }
  ++episode_steps_;
  const RewardSpec& rw = config_.reward;
  StepResult out;

  Program candidate = append_action(program_, action_id, space_);
  ObserveResult seen =
      observe(candidate, inputs_, config_.contract, config_.spec, config_.step_budget);
  out.info.sim_steps = seen.sim_steps;

  if (seen.rejected) {
    // The instruction is thrown away; the program and observation stay.
    out.obs = current_;
    out.reward = rw.reject + rw.step;
    out.info.rejected = true;
  } else {
    program_ = std::move(candidate);
    current_ = Observation{std::move(seen.records), action_id};
    history_.push_back(current_);
    out.obs = current_;

    DetectOptions opts;
    opts.boosts_per_input = config_.boosts_per_input;
    opts.boost_seed = mix_seed(config_.input_seed, 0xB0057ULL);
    opts.budget = config_.step_budget;
    DetectResult det =
        detect_violation(program_, inputs_, config_.contract, config_.spec, opts);
    out.info.sim_steps += det.sim_steps;

    out.info.filter = speculation_filter(program_, inputs_, current_.records,
                                         config_.spec, config_.step_budget);
    if (det.violation()) {
      out.info.violation = std::move(det.reports.front());
      out.reward = rw.leak + rw.step;
      out.terminated = true;
    } else {
      switch (out.info.filter) {
        case FilterLevel::Observable: out.reward = rw.observable + rw.step; break;
        case FilterLevel::Misspec: out.reward = rw.unobservable + rw.step; break;
        case FilterLevel::None: out.reward = rw.none + rw.step; break;
      }
    }
  }

  out.truncated = !out.terminated && (program_.size() >= config_.max_len ||
                                      episode_steps_ >= config_.episode_step_cap());
  done_ = out.terminated || out.truncated;
  return out;
}

}  // namespace leakgym

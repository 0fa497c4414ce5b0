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

#ifndef LEAKGYM_DETECT_HPP_
#define LEAKGYM_DETECT_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "leakgym/arch.hpp"
#include "leakgym/isa.hpp"
#include "leakgym/rng.hpp"
#include "leakgym/uarch.hpp"

namespace leakgym {

inline constexpr std::size_t kMaxBoostRounds = 10;

// Builds a sibling of `base` that shares its registers and its contract
// trace but has fresh memory wherever the trace does not look. Memory is
// refilled from rng, then the bytes under every LoadAddr of the sibling's
// own trace are copied from base until the traces agree. Returns nullopt
// when that does not happen within kMaxBoostRounds copy rounds (or when
// base itself does not terminate).
std::optional<Input> boost_input(const Program& p, const Input& base,
                                 const ContractSpec& contract, Rng& rng,
                                 std::size_t budget = kDefaultStepBudget);

struct InputClass {
  CTrace ctrace;
  std::vector<Input> members;
};

struct ViolationReport {
  Program program;
  ContractSpec contract;
  SpecConfig spec;
  std::pair<Input, Input> witness;
  std::pair<HTrace, HTrace> htraces;
  std::vector<std::size_t> diverging_sets;
  // Position of the witness pair: (base input index, member a, member b),
  // member 0 being the base itself.
  std::size_t input_index = 0;
  std::size_t member_a = 0;
  std::size_t member_b = 0;
};

nlohmann::json to_json(const ViolationReport& r);

// Re-simulates both witnesses: true iff the contract traces agree, both
// runs terminate, and the hardware traces differ.
bool revalidate(const ViolationReport& r,
                std::size_t budget = kDefaultStepBudget);

struct DetectOptions {
  std::size_t boosts_per_input = 2;
  // Seed of the boosting streams; sibling j of input i draws from
  // Rng(mix_seed(boost_seed, i, j)).
  std::uint64_t boost_seed = 0;
  // Collect every diverging pair instead of stopping at the first.
  bool exhaustive = false;
  std::size_t budget = kDefaultStepBudget;
};

struct DetectResult {
  enum class Status : std::uint8_t { NoViolation, Violation, Rejected };
  Status status = Status::NoViolation;
  std::vector<ViolationReport> reports;
  std::vector<InputClass> classes;
  // Boost attempts that returned no sibling.
  std::size_t boost_failures = 0;
  std::uint64_t sim_steps = 0;

  bool violation() const { return status == Status::Violation; }
  bool rejected() const { return status == Status::Rejected; }
  const ViolationReport& report() const { return reports.front(); }
};

DetectResult detect_violation(const Program& p, const std::vector<Input>& inputs,
                              const ContractSpec& contract,
                              const SpecConfig& cfg,
                              const DetectOptions& options = {});

enum class FilterLevel : std::uint8_t { None, Misspec, Observable };

const char* to_string(FilterLevel level);

// `none` when no input mispredicts or issues transient uops; `observable`
// when some input's cache footprint changes once speculation is switched
// off; `misspec` otherwise. Requires p to terminate on every input.
FilterLevel speculation_filter(const Program& p, const std::vector<Input>& inputs,
                               const SpecConfig& cfg,
                               std::size_t budget = kDefaultStepBudget);

// Same decision from already-collected observations (taken under cfg) plus
// the W = 0 rerun it needs.
FilterLevel speculation_filter(const Program& p, const std::vector<Input>& inputs,
                               const std::vector<InputObservation>& observed,
                               const SpecConfig& cfg,
                               std::size_t budget = kDefaultStepBudget);

}  // namespace leakgym

#endif  // LEAKGYM_DETECT_HPP_

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

#ifndef LEAKGYM_UARCH_HPP_
#define LEAKGYM_UARCH_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "leakgym/arch.hpp"

namespace leakgym {

inline constexpr std::size_t kCacheSets = 64;
inline constexpr std::size_t kLineSize = 64;
inline constexpr std::size_t kPhtEntries = 64;

constexpr std::size_t cache_set(std::uint32_t addr) {
  return (addr / kLineSize) % kCacheSets;
}

// Direct-mapped cache covering the sandbox exactly. Each set holds either
// the attacker's primed line or a line installed by the program under test.
class CacheModel {
 public:
  enum class Owner : std::uint8_t { Attacker, Victim };

  void prime() { victim_mask_ = 0; }
  void access(std::uint32_t addr) { victim_mask_ |= std::uint64_t{1} << cache_set(addr); }
  Owner owner(std::size_t set) const {
    return (victim_mask_ >> set) & 1 ? Owner::Victim : Owner::Attacker;
  }
  // Probe phase: bit s is set iff the attacker line of set s was evicted.
  std::uint64_t probe() const { return victim_mask_; }

  bool operator==(const CacheModel&) const = default;

 private:
  std::uint64_t victim_mask_ = 0;
};

// Pattern history table of 2-bit saturating counters indexed by the branch's
// instruction index.
class Pht {
 public:
  static constexpr std::uint8_t kReset = 1;  // weakly not-taken

  Pht() { counters_.fill(kReset); }

  bool predict(std::size_t pc) const { return counters_[pc % kPhtEntries] >= 2; }
  void update(std::size_t pc, bool taken) {
    std::uint8_t& c = counters_[pc % kPhtEntries];
    if (taken && c < 3) ++c;
    if (!taken && c > 0) --c;
  }
  std::uint8_t counter(std::size_t pc) const { return counters_[pc % kPhtEntries]; }
  const std::array<std::uint8_t, kPhtEntries>& counters() const { return counters_; }

  bool operator==(const Pht&) const = default;

 private:
  std::array<std::uint8_t, kPhtEntries> counters_{};
};

struct MicroArchState {
  CacheModel cache;
  Pht pht;
  bool operator==(const MicroArchState&) const = default;
};

// Canonical state: every set primed with an attacker line, every PHT
// counter weakly not-taken.
MicroArchState reset_state();

struct SpecConfig {
  // Instructions issued past an unresolved conditional branch before it
  // resolves. 0 disables speculation.
  std::size_t window = 8;
  // Conditional branches that may be in flight at once.
  std::size_t nesting = 1;
  bool operator==(const SpecConfig&) const = default;
};

struct PerfCounters {
  std::uint64_t br_misses = 0;
  std::uint64_t uops_issued = 0;
  std::uint64_t uops_retired = 0;

  std::uint64_t tran_uops() const { return uops_issued - uops_retired; }
  bool operator==(const PerfCounters&) const = default;
};

using HTrace = std::uint64_t;

std::string htrace_hex(HTrace h);
HTrace parse_htrace_hex(const std::string& s);

struct HwRun {
  bool halted = false;
  HTrace htrace = 0;
  PerfCounters counters;
  ArchState final_state;
  MicroArchState final_uarch;
};

// Runs p on the speculative model starting from `start`. Budget counts
// committed instructions.
HwRun hw_run(const Program& p, const Input& in, const SpecConfig& cfg = {},
             std::size_t budget = kDefaultStepBudget,
             const MicroArchState& start = reset_state());

struct InputObservation {
  HTrace htrace = 0;
  CTrace ctrace;
  std::uint64_t br_misses = 0;
  std::uint64_t tran_uops = 0;
  bool operator==(const InputObservation&) const = default;
};

struct ObserveResult {
  // Some input did not terminate in one of the simulators.
  bool rejected = false;
  std::vector<InputObservation> records;
  // Committed plus contract-simulator steps spent, for effort accounting.
  std::uint64_t sim_steps = 0;
};

ObserveResult observe(const Program& p, const std::vector<Input>& inputs,
                      const ContractSpec& contract = {},
                      const SpecConfig& cfg = {},
                      std::size_t budget = kDefaultStepBudget);

}  // namespace leakgym

#endif  // LEAKGYM_UARCH_HPP_

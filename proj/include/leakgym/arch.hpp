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

#ifndef LEAKGYM_ARCH_HPP_
#define LEAKGYM_ARCH_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "leakgym/isa.hpp"

namespace leakgym {

inline constexpr std::size_t kSandboxSize = 4096;
inline constexpr std::size_t kDefaultStepBudget = 10'000;

using Memory = std::array<std::uint8_t, kSandboxSize>;

// Sandbox offset of an access through [BASE+index]: reduced modulo the
// sandbox size, aligned down to 8 bytes.
constexpr std::uint32_t effective_address(std::uint64_t index_value) {
  return static_cast<std::uint32_t>(index_value % kSandboxSize) & ~7U;
}

struct Flags {
  bool sf = false;
  bool cf = false;
  bool zf = false;
  bool operator==(const Flags&) const = default;
};

struct Input {
  std::array<std::uint64_t, kNumGprs> regs{};
  Memory mem{};
  // Seed this input was expanded from. Boosted siblings carry the seed of
  // their random fill and the seed of the base they were boosted from.
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> base_seed;

  bool operator==(const Input& o) const {
    return regs == o.regs && mem == o.mem;
  }
};

struct ArchState {
  std::array<std::uint64_t, kNumGprs> regs{};
  Flags flags;
  std::size_t pc = 0;
  Memory mem{};

  static ArchState from_input(const Input& in);

  std::uint64_t reg(Reg r) const {
    return r == Reg::BASE ? 0 : regs[static_cast<std::size_t>(r)];
  }
  std::uint64_t load64(std::uint32_t addr) const;
  void store64(std::uint32_t addr, std::uint64_t value);

  bool operator==(const ArchState&) const = default;
};

enum class ContractMode : std::uint8_t { CtSeq, CtCond };

struct ContractSpec {
  ContractMode mode = ContractMode::CtSeq;
  // Instructions exposed along the mispredicted direction; CT_COND only.
  std::size_t spec_depth = 8;

  std::string name() const;
  bool operator==(const ContractSpec&) const = default;
};

ContractSpec parse_contract(const std::string& name, std::size_t spec_depth = 8);

struct ContractObservation {
  enum class Kind : std::uint8_t { Load, Store, Pc };
  Kind kind = Kind::Load;
  // Sandbox address for Load/Store, target instruction index for Pc.
  std::uint32_t value = 0;
  bool taken = false;

  static constexpr ContractObservation load(std::uint32_t a) {
    return {Kind::Load, a, false};
  }
  static constexpr ContractObservation store(std::uint32_t a) {
    return {Kind::Store, a, false};
  }
  static constexpr ContractObservation pc(std::uint32_t t, bool taken) {
    return {Kind::Pc, t, taken};
  }
  bool operator==(const ContractObservation&) const = default;
};

using CTrace = std::vector<ContractObservation>;

std::string to_string(const ContractObservation& o);
std::string to_string(const CTrace& t);

// What one instruction did: up to two contract observations (the load and
// the store of a read-modify-write) and, for branches, whether it was taken.
struct StepEffect {
  std::array<ContractObservation, 2> obs{};
  std::uint8_t num_obs = 0;
  std::optional<bool> taken;

  void emit(ContractObservation o) { obs[num_obs++] = o; }
};

// Executes the instruction at s.pc (which must be instr) and advances pc.
// Branch targets are clamped into [0, program_length].
StepEffect arch_step(ArchState& s, const Instruction& instr,
                     std::size_t program_length);

struct ContractRun {
  // False when the step budget ran out before pc reached the end.
  bool halted = false;
  CTrace trace;
  ArchState final_state;
  // Architectural steps executed (excluding CT_COND exploration).
  std::uint64_t steps = 0;
};

ContractRun contract_trace(const Program& p, const Input& in,
                           const ContractSpec& contract = {},
                           std::size_t step_budget = kDefaultStepBudget);

// Deterministic expansion of seed into count inputs. Input k is generated
// from its own stream, seed_k = mix_seed(seed, k): three register words
// followed by 512 words of memory (little-endian), all from Rng(seed_k).
std::vector<Input> generate_inputs(std::uint64_t seed, std::size_t count);
Input generate_input(std::uint64_t input_seed);

// Binary layout: R0, R1, R2 as 8-byte little-endian words, then the
// 4096 sandbox bytes.
inline constexpr std::size_t kInputFileSize = 3 * 8 + kSandboxSize;
void write_input(std::ostream& os, const Input& in);
Input read_input(std::istream& is);

}  // namespace leakgym

#endif  // LEAKGYM_ARCH_HPP_

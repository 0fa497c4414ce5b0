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

#ifndef LEAKGYM_ISA_HPP_
#define LEAKGYM_ISA_HPP_

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace leakgym {

// Thrown for malformed configuration (action spaces, input counts, config
// files).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// BASE is the read-only sandbox base register. It always reads as zero and
// no instruction may write it.
enum class Reg : std::uint8_t { R0 = 0, R1 = 1, R2 = 2, BASE = 3 };

inline constexpr std::size_t kNumGprs = 3;

enum class Opcode : std::uint8_t { SBB, IMUL, JNS, JMP };

std::string_view to_string(Reg r);
std::string_view to_string(Opcode op);

struct Operand {
  enum class Kind : std::uint8_t { None, Reg, Mem };

  Kind kind = Kind::None;
  // For Kind::Mem this is the index register of [BASE+reg].
  leakgym::Reg reg = leakgym::Reg::R0;

  static constexpr Operand reg_op(leakgym::Reg r) { return {Kind::Reg, r}; }
  static constexpr Operand mem_op(leakgym::Reg index) {
    return {Kind::Mem, index};
  }

  bool is_mem() const { return kind == Kind::Mem; }
  bool operator==(const Operand&) const = default;
};

struct Instruction {
  Opcode op = Opcode::SBB;
  Operand dst;
  Operand src;
  // Relative displacement in instructions; branches only, never zero.
  int disp = 0;

  static Instruction alu(Opcode op, Operand dst, Operand src);
  static Instruction branch(Opcode op, int disp);

  bool is_branch() const { return op == Opcode::JNS || op == Opcode::JMP; }
  bool is_conditional() const { return op == Opcode::JNS; }
  bool operator==(const Instruction&) const = default;
};

// Throws std::invalid_argument when the instruction breaks an ISA invariant
// (two memory operands, write to BASE, zero displacement, ...).
void validate(const Instruction& instr);

struct Program {
  std::vector<Instruction> instrs;

  std::size_t size() const { return instrs.size(); }
  bool empty() const { return instrs.empty(); }
  const Instruction& operator[](std::size_t i) const { return instrs[i]; }
  bool operator==(const Program&) const = default;
};

// Accepted grammar, one instruction per line, case-insensitive:
//   SBB|IMUL <op>, <op>     op := R0 | R1 | R2 | BASE | [BASE+Rn]
//   JNS|JMP <+d|-d|d>       d != 0
// Text after ';' is a comment; blank lines are ignored.
Program parse_program(std::string_view text);
std::string render_instruction(const Instruction& instr);
// Canonical form: one instruction per line, joined by '\n', no trailing
// newline.
std::string render_program(const Program& p);

// Action-space templates. Register templates enumerate (dst, src) over the
// configured registers dst-major; branch templates enumerate the configured
// displacements in order.
enum class ActionTemplate : std::uint8_t {
  SbbRegReg,
  SbbRegMem,
  SbbMemReg,
  ImulRegReg,
  Jns,
  Jmp,
};

std::string_view to_string(ActionTemplate t);
ActionTemplate parse_action_template(std::string_view name);

struct ActionSpaceConfig {
  std::vector<Reg> registers{Reg::R0, Reg::R1, Reg::R2};
  std::vector<ActionTemplate> templates{
      ActionTemplate::SbbRegReg, ActionTemplate::SbbRegMem,
      ActionTemplate::SbbMemReg, ActionTemplate::ImulRegReg,
      ActionTemplate::Jns,       ActionTemplate::Jmp};
  std::vector<int> displacements{-2, 2};
  // When non-empty, replaces the template enumeration with exactly these
  // instructions, in order.
  std::vector<Instruction> explicit_actions;
};

struct ActionSpace {
  std::vector<Instruction> actions;

  std::size_t size() const { return actions.size(); }
  const Instruction& operator[](std::size_t i) const { return actions[i]; }
};

ActionSpace build_action_space(const ActionSpaceConfig& config = {});

// Returns p with space[action_id] appended; throws std::out_of_range.
Program append_action(const Program& p, std::size_t action_id,
                      const ActionSpace& space);

}  // namespace leakgym

#endif  // LEAKGYM_ISA_HPP_

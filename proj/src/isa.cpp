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

#include "leakgym/isa.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>

namespace leakgym {

namespace {

std::string upper_no_space(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::optional<Reg> parse_reg(std::string_view s) {
  if (s == "R0") return Reg::R0;
  if (s == "R1") return Reg::R1;
  if (s == "R2") return Reg::R2;
  if (s == "BASE") return Reg::BASE;
  return std::nullopt;
}

std::optional<Operand> parse_operand(std::string_view text) {
  const std::string s = upper_no_space(text);
  if (auto r = parse_reg(s)) return Operand::reg_op(*r);
  constexpr std::string_view kPrefix = "[BASE+";
  if (s.size() > kPrefix.size() + 1 && s.starts_with(kPrefix) &&
      s.back() == ']') {
    const auto idx = parse_reg(std::string_view(s).substr(
        kPrefix.size(), s.size() - kPrefix.size() - 1));
    if (idx && *idx != Reg::BASE) return Operand::mem_op(*idx);
  }
  return std::nullopt;
}

std::string render_operand(const Operand& op) {
  if (op.is_mem()) return "[BASE+" + std::string(to_string(op.reg)) + "]";
  return std::string(to_string(op.reg));
}

}  // namespace

std::string_view to_string(Reg r) {
  switch (r) {
    case Reg::R0: return "R0";
    case Reg::R1: return "R1";
    case Reg::R2: return "R2";
    case Reg::BASE: return "BASE";
  }
  return "?";
}

std::string_view to_string(Opcode op) {
  switch (op) {
    case Opcode::SBB: return "SBB";
    case Opcode::IMUL: return "IMUL";
    case Opcode::JNS: return "JNS";
    case Opcode::JMP: return "JMP";
  }
  return "?";
}

Instruction Instruction::alu(Opcode op, Operand dst, Operand src) {
  Instruction i{op, dst, src, 0};
  validate(i);
  return i;
}

Instruction Instruction::branch(Opcode op, int disp) {
  Instruction i{op, {}, {}, disp};
  validate(i);
  return i;
}

void validate(const Instruction& instr) {
  if (instr.is_branch()) {
    if (instr.disp == 0) {
      throw std::invalid_argument("branch displacement must be nonzero");
    }
    if (instr.dst.kind != Operand::Kind::None ||
        instr.src.kind != Operand::Kind::None) {
      throw std::invalid_argument("branches take no register operands");
    }
    return;
  }
  if (instr.dst.kind == Operand::Kind::None ||
      instr.src.kind == Operand::Kind::None) {
    throw std::invalid_argument("ALU instruction needs two operands");
  }
  if (instr.dst.is_mem() && instr.src.is_mem()) {
    throw std::invalid_argument("at most one memory operand");
  }
  if (instr.dst.kind == Operand::Kind::Reg && instr.dst.reg == Reg::BASE) {
    throw std::invalid_argument("BASE is read-only");
  }
  for (const Operand& op : {instr.dst, instr.src}) {
    if (op.is_mem() && op.reg == Reg::BASE) {
      throw std::invalid_argument("memory index must be R0, R1 or R2");
    }
  }
  if (instr.disp != 0) {
    throw std::invalid_argument("ALU instruction carries no displacement");
  }
}

Program parse_program(std::string_view text) {
  Program p;
  std::size_t line_no = 0;
  while (!text.empty() || line_no == 0) {
    ++line_no;
    const std::size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{}
                                         : text.substr(eol + 1);
    if (const std::size_t semi = line.find(';'); semi != std::string_view::npos) {
      line = line.substr(0, semi);
    }
    line = trim(line);
    if (line.empty()) {
      if (text.empty()) break;
      continue;
    }

    std::size_t split = 0;
    while (split < line.size() &&
           !std::isspace(static_cast<unsigned char>(line[split]))) {
      ++split;
    }
    const std::string mnemonic = upper_no_space(line.substr(0, split));
    const std::string_view rest = trim(line.substr(split));

    Instruction instr;
    if (mnemonic == "SBB" || mnemonic == "IMUL") {
      instr.op = mnemonic == "SBB" ? Opcode::SBB : Opcode::IMUL;
      const std::size_t comma = rest.find(',');
      if (comma == std::string_view::npos ||
          rest.find(',', comma + 1) != std::string_view::npos) {
        throw ParseError(line_no, "expected two operands");
      }
      const auto dst = parse_operand(rest.substr(0, comma));
      const auto src = parse_operand(rest.substr(comma + 1));
      if (!dst || !src) throw ParseError(line_no, "malformed operand");
      instr.dst = *dst;
      instr.src = *src;
    } else if (mnemonic == "JNS" || mnemonic == "JMP") {
      instr.op = mnemonic == "JNS" ? Opcode::JNS : Opcode::JMP;
      std::string num = upper_no_space(rest);
      if (!num.empty() && num.front() == '+') num.erase(0, 1);
      int disp = 0;
      const auto [ptr, ec] =
          std::from_chars(num.data(), num.data() + num.size(), disp);
      if (num.empty() || ec != std::errc{} || ptr != num.data() + num.size()) {
        throw ParseError(line_no, "malformed displacement");
      }
      if (disp == 0) throw ParseError(line_no, "zero displacement");
      instr.disp = disp;
    } else {
      throw ParseError(line_no, "unknown mnemonic '" + mnemonic + "'");
    }

    try {
      validate(instr);
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
    p.instrs.push_back(instr);
  }
  return p;
}

std::string render_instruction(const Instruction& instr) {
  std::string out(to_string(instr.op));
  if (instr.is_branch()) {
    out += instr.disp > 0 ? " +" : " ";
    out += std::to_string(instr.disp);
  } else {
    out += ' ';
    out += render_operand(instr.dst);
    out += ", ";
    out += render_operand(instr.src);
  }
  return out;
}

std::string render_program(const Program& p) {
  std::string out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) out += '\n';
    out += render_instruction(p[i]);
  }
  return out;
}

std::string_view to_string(ActionTemplate t) {
  switch (t) {
    case ActionTemplate::SbbRegReg: return "SBB r,r";
    case ActionTemplate::SbbRegMem: return "SBB r,[BASE+r]";
    case ActionTemplate::SbbMemReg: return "SBB [BASE+r],r";
    case ActionTemplate::ImulRegReg: return "IMUL r,r";
    case ActionTemplate::Jns: return "JNS d";
    case ActionTemplate::Jmp: return "JMP d";
  }
  return "?";
}

ActionTemplate parse_action_template(std::string_view name) {
  const std::string key = upper_no_space(name);
  for (auto t : {ActionTemplate::SbbRegReg, ActionTemplate::SbbRegMem,
                 ActionTemplate::SbbMemReg, ActionTemplate::ImulRegReg,
                 ActionTemplate::Jns, ActionTemplate::Jmp}) {
    if (upper_no_space(to_string(t)) == key) return t;
  }
  throw ConfigError("unknown action template '" + std::string(name) + "'");
}

ActionSpace build_action_space(const ActionSpaceConfig& config) {
  ActionSpace space;
  if (!config.explicit_actions.empty()) {
    for (const auto& instr : config.explicit_actions) {
      try {
        validate(instr);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid action: ") + e.what());
      }
    }
    space.actions = config.explicit_actions;
  } else {
    if (config.registers.empty()) throw ConfigError("empty register set");
    if (config.templates.empty()) throw ConfigError("empty template list");
    for (Reg r : config.registers) {
      if (r == Reg::BASE) throw ConfigError("BASE cannot be an action register");
    }

    const auto reg_pairs = [&](auto make) {
      for (Reg dst : config.registers) {
        for (Reg src : config.registers) space.actions.push_back(make(dst, src));
      }
    };
    for (ActionTemplate t : config.templates) {
      switch (t) {
        case ActionTemplate::SbbRegReg:
          reg_pairs([](Reg d, Reg s) {
            return Instruction::alu(Opcode::SBB, Operand::reg_op(d), Operand::reg_op(s));
          });
          break;
        case ActionTemplate::SbbRegMem:
          reg_pairs([](Reg d, Reg s) {
            return Instruction::alu(Opcode::SBB, Operand::reg_op(d), Operand::mem_op(s));
          });
          break;
        case ActionTemplate::SbbMemReg:
          reg_pairs([](Reg d, Reg s) {
            return Instruction::alu(Opcode::SBB, Operand::mem_op(d), Operand::reg_op(s));
          });
          break;
        case ActionTemplate::ImulRegReg:
          reg_pairs([](Reg d, Reg s) {
            return Instruction::alu(Opcode::IMUL, Operand::reg_op(d), Operand::reg_op(s));
          });
          break;
        case ActionTemplate::Jns:
        case ActionTemplate::Jmp:
          if (config.displacements.empty()) {
            throw ConfigError("branch template without displacements");
          }
          for (int d : config.displacements) {
            if (d == 0) throw ConfigError("zero branch displacement");
            space.actions.push_back(Instruction::branch(
                t == ActionTemplate::Jns ? Opcode::JNS : Opcode::JMP, d));
          }
          break;
      }
    }
  }

  for (std::size_t i = 0; i < space.size(); ++i) {
    for (std::size_t j = i + 1; j < space.size(); ++j) {
      if (space[i] == space[j]) {
        throw ConfigError("duplicate action '" + render_instruction(space[i]) + "'");
      }
    }
  }
  return space;
}

Program append_action(const Program& p, std::size_t action_id,
                      const ActionSpace& space) {
  if (action_id >= space.size()) {
    throw std::out_of_range("action " + std::to_string(action_id) +
                            " outside action space of size " +
                            std::to_string(space.size()));
  }
  Program out = p;
  out.instrs.push_back(space[action_id]);
  return out;
}

}  // namespace leakgym

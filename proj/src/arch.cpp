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

#include "leakgym/arch.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "leakgym/rng.hpp"

namespace leakgym {

namespace {

std::size_t branch_target(std::size_t pc, int disp, std::size_t n) {
  const auto target = static_cast<std::int64_t>(pc) + disp;
  return static_cast<std::size_t>(
      std::clamp<std::int64_t>(target, 0, static_cast<std::int64_t>(n)));
}

std::uint64_t read_operand(const ArchState& s, const Operand& op,
                           StepEffect& fx) {
  if (!op.is_mem()) return s.reg(op.reg);
  const std::uint32_t addr = effective_address(s.reg(op.reg));
  fx.emit(ContractObservation::load(addr));
  return s.load64(addr);
}

void write_operand(ArchState& s, const Operand& op, std::uint64_t value,
                   StepEffect& fx) {
  if (op.is_mem()) {
    const std::uint32_t addr = effective_address(s.reg(op.reg));
    fx.emit(ContractObservation::store(addr));
    s.store64(addr, value);
  } else {
    s.regs[static_cast<std::size_t>(op.reg)] = value;
  }
}

void put_le64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 8);
}

}  // namespace

ArchState ArchState::from_input(const Input& in) {
  ArchState s;
  s.regs = in.regs;
  s.mem = in.mem;
  return s;
}

std::uint64_t ArchState::load64(std::uint32_t addr) const {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | mem[addr + i];
  return v;
}

void ArchState::store64(std::uint32_t addr, std::uint64_t value) {
  for (int i = 0; i < 8; ++i) {
    mem[addr + i] = static_cast<std::uint8_t>(value >> (8 * i));
  }
}

std::string ContractSpec::name() const {
  return mode == ContractMode::CtSeq ? "CT_SEQ" : "CT_COND";
}

ContractSpec parse_contract(const std::string& name, std::size_t spec_depth) {
  if (name == "CT_SEQ" || name == "ct-seq" || name == "CT-SEQ") {
    return {ContractMode::CtSeq, spec_depth};
  }
  if (name == "CT_COND" || name == "ct-cond" || name == "CT-COND") {
    if (spec_depth < 1) throw ConfigError("CT_COND needs spec_depth >= 1");
    return {ContractMode::CtCond, spec_depth};
  }
  throw ConfigError("unknown contract '" + name + "'");
}

std::string to_string(const ContractObservation& o) {
  switch (o.kind) {
    case ContractObservation::Kind::Load:
      return "LoadAddr(" + std::to_string(o.value) + ")";
    case ContractObservation::Kind::Store:
      return "StoreAddr(" + std::to_string(o.value) + ")";
    case ContractObservation::Kind::Pc:
      return "PC(" + std::to_string(o.value) + "," + (o.taken ? "1" : "0") + ")";
  }
  return "?";
}

std::string to_string(const CTrace& t) {
  std::string out = "[";
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) out += ", ";
    out += to_string(t[i]);
  }
  return out + "]";
}

StepEffect arch_step(ArchState& s, const Instruction& instr,
                     std::size_t program_length) {
  StepEffect fx;
  switch (instr.op) {
    case Opcode::SBB: {
      const std::uint64_t a = read_operand(s, instr.dst, fx);
      const std::uint64_t b = read_operand(s, instr.src, fx);
      const std::uint64_t borrow = s.flags.cf ? 1 : 0;
      const std::uint64_t result = a - b - borrow;
      s.flags.cf = static_cast<unsigned __int128>(b) + borrow > a;
      s.flags.sf = (result >> 63) != 0;
      s.flags.zf = result == 0;
      write_operand(s, instr.dst, result, fx);
      ++s.pc;
      break;
    }
    case Opcode::IMUL: {
      const auto a = static_cast<std::int64_t>(read_operand(s, instr.dst, fx));
      const auto b = static_cast<std::int64_t>(read_operand(s, instr.src, fx));
      const __int128 full = static_cast<__int128>(a) * b;
      const auto result = static_cast<std::int64_t>(full);
      s.flags.cf = full != result;
      s.flags.sf = result < 0;
      s.flags.zf = result == 0;
      write_operand(s, instr.dst, static_cast<std::uint64_t>(result), fx);
      ++s.pc;
      break;
    }
    case Opcode::JNS:
    case Opcode::JMP: {
      const bool taken = instr.op == Opcode::JMP || !s.flags.sf;
      s.pc = taken ? branch_target(s.pc, instr.disp, program_length) : s.pc + 1;
      fx.emit(ContractObservation::pc(static_cast<std::uint32_t>(s.pc), taken));
      fx.taken = taken;
      break;
    }
  }
  return fx;
}

ContractRun contract_trace(const Program& p, const Input& in,
                           const ContractSpec& contract,
                           std::size_t step_budget) {
  ContractRun run;
  ArchState& s = run.final_state;
  s = ArchState::from_input(in);
  const std::size_t n = p.size();
  const auto record = [&run](const StepEffect& fx) {
    run.trace.insert(run.trace.end(), fx.obs.begin(), fx.obs.begin() + fx.num_obs);
  };

  while (s.pc < n) {
    if (run.steps >= step_budget) return run;
    const Instruction& instr = p[s.pc];
    const std::size_t branch_pc = s.pc;
    std::optional<ArchState> before;
    if (contract.mode == ContractMode::CtCond && instr.is_conditional()) {
      before = s;
    }
    const StepEffect fx = arch_step(s, instr, n);
    ++run.steps;
    record(fx);

    if (before) {
      // Expose the direction the branch did not take, without nesting.
      ArchState& shadow = *before;
      shadow.pc = *fx.taken ? branch_pc + 1
                            : branch_target(branch_pc, instr.disp, n);
      for (std::size_t k = 0; k < contract.spec_depth && shadow.pc < n; ++k) {
        record(arch_step(shadow, p[shadow.pc], n));
      }
    }
  }
  run.halted = true;
  return run;
}

Input generate_input(std::uint64_t input_seed) {
  Input in;
  in.seed = input_seed;
  Rng rng(input_seed);
  for (auto& r : in.regs) r = rng();
  for (std::size_t off = 0; off < kSandboxSize; off += 8) {
    const std::uint64_t w = rng();
    for (std::size_t i = 0; i < 8; ++i) {
      in.mem[off + i] = static_cast<std::uint8_t>(w >> (8 * i));
    }
  }
  return in;
}

std::vector<Input> generate_inputs(std::uint64_t seed, std::size_t count) {
  if (count < 2) throw ConfigError("need at least 2 inputs");
  std::vector<Input> inputs;
  inputs.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    inputs.push_back(generate_input(mix_seed(seed, k)));
  }
  return inputs;
}

void write_input(std::ostream& os, const Input& in) {
  for (std::uint64_t r : in.regs) put_le64(os, r);
  os.write(reinterpret_cast<const char*>(in.mem.data()), kSandboxSize);
}

Input read_input(std::istream& is) {
  Input in;
  unsigned char buf[8];
  for (auto& r : in.regs) {
    if (!is.read(reinterpret_cast<char*>(buf), 8)) {
      throw std::runtime_error("truncated input file");
    }
    r = 0;
    for (int i = 7; i >= 0; --i) r = (r << 8) | buf[i];
  }
  if (!is.read(reinterpret_cast<char*>(in.mem.data()), kSandboxSize)) {
    throw std::runtime_error("truncated input file");
  }
  return in;
}

}  // namespace leakgym

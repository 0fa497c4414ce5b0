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

#include "leakgym/uarch.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace leakgym {

MicroArchState reset_state() {
  MicroArchState s;
  s.cache.prime();
  return s;
}

std::string htrace_hex(HTrace h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

HTrace parse_htrace_hex(const std::string& s) {
  if (s.size() != 16) throw std::invalid_argument("HTrace must be 16 hex digits");
  return std::stoull(s, nullptr, 16);
}

namespace {

void touch(CacheModel& cache, const StepEffect& fx) {
  for (std::uint8_t k = 0; k < fx.num_obs; ++k) {
    if (fx.obs[k].kind != ContractObservation::Kind::Pc) {
      cache.access(fx.obs[k].value);
    }
  }
}

// Issues instructions down a mispredicted path from `shadow` until the
// window closes, the program ends, or a conditional branch arrives with no
// free speculation slot. Architectural effects stay in `shadow`; cache
// effects land in `cache`. Returns the number of transient uops.
std::uint64_t run_transient(const Program& p, ArchState shadow,
                            const SpecConfig& cfg, const Pht& pht,
                            CacheModel& cache) {
  const std::size_t n = p.size();
  std::uint64_t issued = 0;
  std::size_t in_flight = 1;
  while (issued < cfg.window && shadow.pc < n) {
    const Instruction& instr = p[shadow.pc];
    if (instr.is_conditional()) {
      if (in_flight >= cfg.nesting) break;  // outer branch resolves first
      ++in_flight;
      const std::size_t pc = shadow.pc;
      arch_step(shadow, instr, n);
      if (pht.predict(pc)) {
        const auto target = static_cast<std::int64_t>(pc) + instr.disp;
        shadow.pc = static_cast<std::size_t>(
            std::clamp<std::int64_t>(target, 0, static_cast<std::int64_t>(n)));
      } else {
        shadow.pc = pc + 1;
      }
      ++issued;
      continue;
    }
    touch(cache, arch_step(shadow, instr, n));
    ++issued;
  }
  return issued;
}

}  // namespace

HwRun hw_run(const Program& p, const Input& in, const SpecConfig& cfg,
             std::size_t budget, const MicroArchState& start) {
  HwRun run;
  run.final_uarch = start;
  ArchState& s = run.final_state;
  s = ArchState::from_input(in);
  CacheModel& cache = run.final_uarch.cache;
  Pht& pht = run.final_uarch.pht;
  PerfCounters& ctr = run.counters;
  const std::size_t n = p.size();

  while (s.pc < n) {
    if (ctr.uops_retired >= budget) {
      run.htrace = cache.probe();
      return run;
    }
    const Instruction& instr = p[s.pc];
    if (instr.is_conditional()) {
      const std::size_t pc = s.pc;
      const bool predicted = pht.predict(pc);
      const bool actual = !s.flags.sf;
      if (predicted != actual) {
        if (cfg.window > 0) {
          // Checkpoint, then issue down the predicted (wrong) path.
          ArchState shadow = s;
          if (predicted) {
            const auto target = static_cast<std::int64_t>(pc) + instr.disp;
            shadow.pc = static_cast<std::size_t>(std::clamp<std::int64_t>(
                target, 0, static_cast<std::int64_t>(n)));
          } else {
            shadow.pc = pc + 1;
          }
          ctr.uops_issued += run_transient(p, std::move(shadow), cfg, pht, cache);
        }
        ++ctr.br_misses;
      }
      pht.update(pc, actual);
    }
    // A correctly predicted path commits exactly as the sequential one, so
    // committed execution is always the architectural step.
    touch(cache, arch_step(s, instr, n));
    ++ctr.uops_issued;
    ++ctr.uops_retired;
  }
  run.halted = true;
  run.htrace = cache.probe();
  return run;
}

ObserveResult observe(const Program& p, const std::vector<Input>& inputs,
                      const ContractSpec& contract, const SpecConfig& cfg,
                      std::size_t budget) {
  if (inputs.empty()) throw std::invalid_argument("observe needs inputs");
  ObserveResult out;
  out.records.reserve(inputs.size());
  for (const Input& in : inputs) {
    const HwRun hw = hw_run(p, in, cfg, budget, reset_state());
    out.sim_steps += hw.counters.uops_retired;
    if (!hw.halted) {
      out.rejected = true;
      out.records.clear();
      return out;
    }
    ContractRun ct = contract_trace(p, in, contract, budget);
    out.sim_steps += ct.steps;
    if (!ct.halted) {
      out.rejected = true;
      out.records.clear();
      return out;
    }
    out.records.push_back({hw.htrace, std::move(ct.trace), hw.counters.br_misses,
                           hw.counters.tran_uops()});
  }
  return out;
}

}  // namespace leakgym

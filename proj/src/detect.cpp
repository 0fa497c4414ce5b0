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

#include "leakgym/detect.hpp"

#include <stdexcept>

namespace leakgym {

namespace {

void fill_memory(Memory& mem, std::uint64_t seed) {
  Rng fill(seed);
  for (std::size_t off = 0; off < kSandboxSize; off += 8) {
    const std::uint64_t w = fill();
    for (std::size_t i = 0; i < 8; ++i) {
      mem[off + i] = static_cast<std::uint8_t>(w >> (8 * i));
    }
  }
}

std::vector<std::size_t> diff_sets(HTrace a, HTrace b) {
  std::vector<std::size_t> sets;
  const HTrace d = a ^ b;
  for (std::size_t s = 0; s < kCacheSets; ++s) {
    if ((d >> s) & 1) sets.push_back(s);
  }
  return sets;
}

nlohmann::json input_json(const Input& in) {
  nlohmann::json j;
  j["seed"] = in.seed;
  j["base_seed"] = in.base_seed ? nlohmann::json(*in.base_seed) : nlohmann::json();
  j["regs"] = nlohmann::json::array();
  for (std::uint64_t r : in.regs) j["regs"].push_back(r);
  return j;
}

}  // namespace

std::optional<Input> boost_input(const Program& p, const Input& base,
                                 const ContractSpec& contract, Rng& rng,
                                 std::size_t budget) {
  const ContractRun target = contract_trace(p, base, contract, budget);
  if (!target.halted) return std::nullopt;

  Input sibling;
  sibling.regs = base.regs;
  sibling.seed = rng();
  sibling.base_seed = base.seed;
  fill_memory(sibling.mem, sibling.seed);

  for (std::size_t round = 0;; ++round) {
    const ContractRun run = contract_trace(p, sibling, contract, budget);
    bool changed = false;
    for (const ContractObservation& o : run.trace) {
      if (o.kind != ContractObservation::Kind::Load) continue;
      for (std::uint32_t k = 0; k < 8; ++k) {
        if (sibling.mem[o.value + k] != base.mem[o.value + k]) {
          sibling.mem[o.value + k] = base.mem[o.value + k];
          changed = true;
        }
      }
    }
    if (!changed) {
      if (run.halted && run.trace == target.trace) return sibling;
      break;
    }
    if (round == kMaxBoostRounds) break;
  }
  return std::nullopt;
}

nlohmann::json to_json(const ViolationReport& r) {
  nlohmann::json j;
  j["program"] = render_program(r.program);
  j["contract"] = r.contract.name();
  j["spec_depth"] = r.contract.spec_depth;
  j["window"] = r.spec.window;
  j["nesting"] = r.spec.nesting;
  j["witness"] = {input_json(r.witness.first), input_json(r.witness.second)};
  j["htraces"] = {htrace_hex(r.htraces.first), htrace_hex(r.htraces.second)};
  j["diverging_sets"] = r.diverging_sets;
  j["input_index"] = r.input_index;
  j["members"] = {r.member_a, r.member_b};
  return j;
}

bool revalidate(const ViolationReport& r, std::size_t budget) {
  const ContractRun ca = contract_trace(r.program, r.witness.first, r.contract, budget);
  const ContractRun cb = contract_trace(r.program, r.witness.second, r.contract, budget);
  if (!ca.halted || !cb.halted || ca.trace != cb.trace) return false;
  const HwRun ha = hw_run(r.program, r.witness.first, r.spec, budget);
  const HwRun hb = hw_run(r.program, r.witness.second, r.spec, budget);
  return ha.halted && hb.halted && ha.htrace != hb.htrace &&
         ha.htrace == r.htraces.first && hb.htrace == r.htraces.second;
}

DetectResult detect_violation(const Program& p, const std::vector<Input>& inputs,
                              const ContractSpec& contract,
                              const SpecConfig& cfg,
                              const DetectOptions& options) {
  if (inputs.empty()) throw std::invalid_argument("detect_violation needs inputs");
  if (options.boosts_per_input < 1) {
    throw std::invalid_argument("boosts_per_input must be >= 1");
  }
  DetectResult result;

  std::vector<HTrace> base_htraces;
  base_htraces.reserve(inputs.size());
  for (const Input& in : inputs) {
    const ContractRun ct = contract_trace(p, in, contract, options.budget);
    result.sim_steps += ct.steps;
    if (!ct.halted) {
      result.status = DetectResult::Status::Rejected;
      return result;
    }
    const HwRun hw = hw_run(p, in, cfg, options.budget);
    result.sim_steps += hw.counters.uops_retired;
    if (!hw.halted) {
      result.status = DetectResult::Status::Rejected;
      return result;
    }
    base_htraces.push_back(hw.htrace);
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<Input> members{inputs[i]};
    std::vector<HTrace> htraces{base_htraces[i]};
    for (std::size_t j = 0; j < options.boosts_per_input; ++j) {
      Rng rng(mix_seed(options.boost_seed, i, j));
      std::optional<Input> sibling = boost_input(p, inputs[i], contract, rng, options.budget);
      if (!sibling) {
        ++result.boost_failures;
        continue;
      }
      const HwRun hw = hw_run(p, *sibling, cfg, options.budget);
      result.sim_steps += hw.counters.uops_retired;
      if (!hw.halted) {
        ++result.boost_failures;
        continue;
      }
      members.push_back(std::move(*sibling));
      htraces.push_back(hw.htrace);
    }

    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        if (htraces[a] == htraces[b]) continue;
        ViolationReport r;
        r.program = p;
        r.contract = contract;
        r.spec = cfg;
        r.witness = {members[a], members[b]};
        r.htraces = {htraces[a], htraces[b]};
        r.diverging_sets = diff_sets(htraces[a], htraces[b]);
        r.input_index = i;
        r.member_a = a;
        r.member_b = b;
        result.reports.push_back(std::move(r));
        result.status = DetectResult::Status::Violation;
        if (!options.exhaustive) return result;
      }
    }
    if (options.exhaustive) {
      result.classes.push_back(
          {contract_trace(p, inputs[i], contract, options.budget).trace,
           std::move(members)});
    }
  }
  return result;
}

const char* to_string(FilterLevel level) {
  switch (level) {
    case FilterLevel::None: return "none";
    case FilterLevel::Misspec: return "misspec";
    case FilterLevel::Observable: return "observable";
  }
  return "?";
}

FilterLevel speculation_filter(const Program& p, const std::vector<Input>& inputs,
                               const std::vector<InputObservation>& observed,
                               const SpecConfig& cfg, std::size_t budget) {
  if (observed.size() != inputs.size()) {
    throw std::invalid_argument("one observation per input expected");
  }
  std::uint64_t misses = 0;
  std::uint64_t transient = 0;
  for (const auto& o : observed) {
    misses += o.br_misses;
    transient += o.tran_uops;
  }
  if (misses == 0 && transient == 0) return FilterLevel::None;

  SpecConfig off = cfg;
  off.window = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const HwRun quiet = hw_run(p, inputs[i], off, budget);
    if (!quiet.halted) throw std::invalid_argument("program does not terminate");
    if (quiet.htrace != observed[i].htrace) return FilterLevel::Observable;
  }
  return FilterLevel::Misspec;
}

FilterLevel speculation_filter(const Program& p, const std::vector<Input>& inputs,
                               const SpecConfig& cfg, std::size_t budget) {
  std::vector<InputObservation> observed;
  observed.reserve(inputs.size());
  for (const Input& in : inputs) {
    const HwRun hw = hw_run(p, in, cfg, budget);
    if (!hw.halted) throw std::invalid_argument("program does not terminate");
    observed.push_back({hw.htrace, {}, hw.counters.br_misses, hw.counters.tran_uops()});
  }
  return speculation_filter(p, inputs, observed, cfg, budget);
}

}  // namespace leakgym

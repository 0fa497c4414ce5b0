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

#include <doctest.h>

#include "leakgym/uarch.hpp"
#include "leakgym/rng.hpp"

using namespace leakgym;

namespace {

// Cache footprint of the architectural memory accesses in a CT_SEQ trace.
HTrace footprint(const CTrace& t) {
  HTrace h = 0;
  for (const auto& o : t) {
    if (o.kind != ContractObservation::Kind::Pc) h |= HTrace{1} << ((o.value / 64) % 64);
  }
  return h;
}

Program random_program(Rng& rng, const ActionSpace& space, std::size_t max_len) {
  Program p;
  const std::size_t n = 1 + rng.below(max_len);
  for (std::size_t i = 0; i < n; ++i) p.instrs.push_back(space[rng.below(space.size())]);
  return p;
}

const char* kPlanted = "SBB R0, R0\nJNS +2\nSBB R1, [BASE+R2]";

}  // namespace

TEST_CASE("reset state is canonical") {
  const MicroArchState a = reset_state();
  CHECK(a == reset_state());
  for (std::uint8_t c : a.pht.counters()) CHECK(c == 1);
  CHECK(a.cache.probe() == 0);
  for (std::size_t s = 0; s < kCacheSets; ++s) {
    CHECK(a.cache.owner(s) == CacheModel::Owner::Attacker);
  }
}

TEST_CASE("pht counters saturate") {
  Pht pht;
  CHECK_FALSE(pht.predict(5));
  pht.update(5, true);
  CHECK(pht.predict(5));
  pht.update(5, true);
  pht.update(5, true);
  CHECK(pht.counter(5) == 3);
  for (int i = 0; i < 5; ++i) pht.update(5, false);
  CHECK(pht.counter(5) == 0);
  CHECK(pht.counter(6) == 1);
}

TEST_CASE("htrace hex round-trips") {
  CHECK(htrace_hex(0) == "0000000000000000");
  CHECK(htrace_hex(0x4) == "0000000000000004");
  CHECK(parse_htrace_hex("00000000000000ff") == 0xFF);
  CHECK(parse_htrace_hex(htrace_hex(0xDEADBEEF01234567)) == 0xDEADBEEF01234567);
}

TEST_CASE("empty program leaves no footprint") {
  const HwRun r = hw_run(Program{}, Input{});
  CHECK(r.halted);
  CHECK(r.htrace == 0);
  CHECK(r.counters == PerfCounters{});
}

TEST_CASE("one architectural load sets one cache bit") {
  Input in;
  in.regs[1] = 130;
  const HwRun r = hw_run(parse_program("SBB R0, [BASE+R1]"), in);
  CHECK(r.htrace == (HTrace{1} << 2));
  CHECK(r.counters.tran_uops() == 0);
  CHECK(r.counters.uops_retired == 1);
}

TEST_CASE("mispredicted branch leaves a transient load in the cache") {
  const Program p = parse_program(kPlanted);
  Input in;
  in.regs = {7, 11, 4096 + 1000};
  const HwRun r = hw_run(p, in);
  CHECK(r.halted);
  CHECK(r.counters.br_misses == 1);
  CHECK(r.counters.tran_uops() >= 1);
  CHECK(r.htrace == (HTrace{1} << cache_set(effective_address(in.regs[2]))));
  CHECK(r.final_state.regs[1] == 11);
  CHECK(r.final_uarch.pht.counter(1) == 2);

  const HwRun off = hw_run(p, in, SpecConfig{0, 1});
  CHECK(off.htrace == 0);
  CHECK(off.counters.br_misses == 1);
  CHECK(off.counters.tran_uops() == 0);
}

TEST_CASE("a trained branch predicts correctly") {
  // JNS at pc 1 is taken every iteration; the second visit is predicted taken.
  const Program p = parse_program("SBB R2, R2\nJNS +2\nSBB R0, [BASE+R1]");
  Input in;
  MicroArchState warm = reset_state();
  warm.pht.update(1, true);
  const HwRun r = hw_run(p, in, {}, kDefaultStepBudget, warm);
  CHECK(r.counters.br_misses == 0);
  CHECK(r.counters.tran_uops() == 0);
  CHECK(r.htrace == 0);
}

TEST_CASE("observe examples") {
  const auto inputs = generate_inputs(1, 3);
  const ObserveResult empty = observe(Program{}, inputs);
  REQUIRE_FALSE(empty.rejected);
  REQUIRE(empty.records.size() == 3);
  for (const auto& rec : empty.records) CHECK(rec == InputObservation{});

  CHECK(observe(parse_program("SBB R0, R1\nJMP -1"), inputs).rejected);

  Input a;
  a.regs = {1, 2, 64 * 5};
  Input b = a;
  b.regs[2] = 64 * 9;
  const ObserveResult w = observe(parse_program(kPlanted), {a, b});
  REQUIRE_FALSE(w.rejected);
  CHECK(w.records[0].ctrace == w.records[1].ctrace);
  CHECK(w.records[0].htrace != w.records[1].htrace);
}

TEST_CASE("microarchitectural properties over random programs") {
  const ActionSpace space = build_action_space();
  const auto inputs = generate_inputs(99, 8);
  Rng rng(2024);
  int terminating = 0;
  for (int k = 0; k < 2000; ++k) {
    const Program p = random_program(rng, space, 16);
    const Input& in = inputs[k % inputs.size()];
    const ContractRun arch = contract_trace(p, in, {}, 2000);
    for (SpecConfig cfg : {SpecConfig{}, SpecConfig{0, 1}, SpecConfig{3, 1}, SpecConfig{8, 3}}) {
      const HwRun hw = hw_run(p, in, cfg, 2000);
      CHECK(hw.halted == arch.halted);
      CHECK(hw.counters.uops_issued >= hw.counters.uops_retired);
      if (cfg.window == 0) CHECK(hw.counters.tran_uops() == 0);
      if (!hw.halted) continue;
      ++terminating;
      CHECK(hw.final_state == arch.final_state);
      CHECK(hw.counters.uops_retired == arch.steps);
      if (cfg.window == 0) CHECK(hw.htrace == footprint(arch.trace));
      // Transient accesses only add cache lines.
      CHECK((hw.htrace & footprint(arch.trace)) == footprint(arch.trace));
      const HwRun again = hw_run(p, in, cfg, 2000);
      CHECK(again.htrace == hw.htrace);
      CHECK(again.counters == hw.counters);
    }
    const ObserveResult a = observe(p, {in, inputs[0]}, {}, SpecConfig{}, 2000);
    const ObserveResult b = observe(p, {in, inputs[0]}, {}, SpecConfig{0, 1}, 2000);
    CHECK(a.rejected == b.rejected);
    if (!a.rejected) {
      CHECK(a.records[0].ctrace == b.records[0].ctrace);
      CHECK(a.records[1].ctrace == b.records[1].ctrace);
    }
  }
  CHECK(terminating > 1000);
}

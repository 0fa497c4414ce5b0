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

#include <algorithm>
#include <set>

#include "leakgym/detect.hpp"
#include "leakgym/harness.hpp"

using namespace leakgym;

namespace {

const char* kGadget =
    "SBB R0, R0\n"
    "JNS +2\n"
    "SBB R1, [BASE+R2]\n"
    "SBB R0, [BASE+R1]";

Program random_program(Rng& rng, const ActionSpace& space, std::size_t max_len) {
  Program p;
  const std::size_t n = 1 + rng.below(max_len);
  for (std::size_t i = 0; i < n; ++i) p.instrs.push_back(space[rng.below(space.size())]);
  return p;
}

std::set<std::uint32_t> loaded(const CTrace& t) {
  std::set<std::uint32_t> out;
  for (const auto& o : t) {
    if (o.kind != ContractObservation::Kind::Pc) out.insert(o.value);
  }
  return out;
}

}  // namespace

TEST_CASE("boosting the empty program keeps registers only") {
  const Input base = generate_input(1);
  Rng rng(5);
  const auto sib = boost_input(Program{}, base, {}, rng);
  REQUIRE(sib);
  CHECK(sib->regs == base.regs);
  CHECK(sib->mem != base.mem);
  CHECK(sib->base_seed == base.seed);
}

TEST_CASE("boosting a single load copies exactly the loaded word") {
  const Program p = parse_program("SBB R0, [BASE+R1]");
  const Input base = generate_input(2);
  Rng rng(6);
  const auto sib = boost_input(p, base, {}, rng);
  REQUIRE(sib);
  CHECK(contract_trace(p, *sib).trace == contract_trace(p, base).trace);
  const std::uint32_t a = effective_address(base.regs[1]);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < kSandboxSize; ++i) {
    if (i >= a && i < a + 8) {
      CHECK(sib->mem[i] == base.mem[i]);
    } else {
      differing += sib->mem[i] != base.mem[i];
    }
  }
  CHECK(differing > kSandboxSize / 2);
}

TEST_CASE("boosting follows pointer chains to a fixpoint") {
  const Program p = parse_program(
      "SBB R1, [BASE+R2]\nSBB R2, [BASE+R1]\nSBB R0, [BASE+R2]\nSBB R1, [BASE+R0]");
  Rng rng(7);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Input base = generate_input(s);
    const auto sib = boost_input(p, base, {}, rng);
    REQUIRE(sib);
    const CTrace t = contract_trace(p, base).trace;
    CHECK(contract_trace(p, *sib).trace == t);
    for (std::uint32_t a : loaded(t)) {
      CHECK(std::equal(base.mem.begin() + a, base.mem.begin() + a + 8, sib->mem.begin() + a));
    }
  }
}

TEST_CASE("planted gadget is a violation under the sequential contract") {
  const Program p = parse_program(kGadget);
  const auto inputs = generate_inputs(42, 20);
  DetectOptions opt;
  opt.boost_seed = 9;
  opt.exhaustive = true;
  const DetectResult r = detect_violation(p, inputs, {}, {}, opt);
  REQUIRE(r.violation());
  CHECK(r.boost_failures == 0);
  CHECK_FALSE(r.report().diverging_sets.empty());

  // Oracle: re-simulate every class member and enumerate the diverging pairs.
  REQUIRE(r.classes.size() == inputs.size());
  std::size_t expected_pairs = 0;
  for (const InputClass& cls : r.classes) {
    std::vector<HTrace> hs;
    for (const Input& m : cls.members) {
      CHECK(contract_trace(p, m).trace == cls.ctrace);
      hs.push_back(hw_run(p, m).htrace);
    }
    for (std::size_t a = 0; a < hs.size(); ++a) {
      for (std::size_t b = a + 1; b < hs.size(); ++b) expected_pairs += hs[a] != hs[b];
    }
  }
  CHECK(r.reports.size() == expected_pairs);
  for (const auto& rep : r.reports) {
    CHECK(revalidate(rep));
    HTrace diff = rep.htraces.first ^ rep.htraces.second;
    for (std::size_t s : rep.diverging_sets) {
      CHECK(((diff >> s) & 1) == 1);
      diff &= ~(HTrace{1} << s);
    }
    CHECK(diff == 0);
  }

  opt.exhaustive = false;
  const DetectResult first = detect_violation(p, inputs, {}, {}, opt);
  REQUIRE(first.violation());
  CHECK(first.reports.size() == 1);
  CHECK(first.report().input_index == r.report().input_index);
  CHECK(first.report().member_a == r.report().member_a);
  CHECK(first.report().member_b == r.report().member_b);
}

TEST_CASE("planted gadget is clean without speculation or with a covering contract") {
  const Program p = parse_program(kGadget);
  const auto inputs = generate_inputs(42, 20);
  CHECK(detect_violation(p, inputs, {}, SpecConfig{0, 1}).status ==
        DetectResult::Status::NoViolation);
  const ContractSpec cond{ContractMode::CtCond, 8};
  CHECK(detect_violation(p, inputs, cond, {}).status == DetectResult::Status::NoViolation);
  CHECK(planted_fixture().program == p);
}

TEST_CASE("detector edge cases") {
  const auto inputs = generate_inputs(3, 4);
  CHECK(detect_violation(Program{}, inputs, {}, {}).status == DetectResult::Status::NoViolation);
  CHECK(detect_violation(parse_program("JMP -1"), inputs, {}, {}).rejected());
}

TEST_CASE("speculation filter levels") {
  const auto inputs = generate_inputs(4, 3);
  CHECK(speculation_filter(Program{}, inputs, {}) == FilterLevel::None);
  CHECK(speculation_filter(parse_program("SBB R0, R0\nJNS +2"), inputs, {}) ==
        FilterLevel::Misspec);
  CHECK(speculation_filter(parse_program(kGadget), inputs, {}) == FilterLevel::Observable);
  CHECK(speculation_filter(parse_program(kGadget), inputs, SpecConfig{0, 1}) ==
        FilterLevel::Misspec);
  CHECK(std::string(to_string(FilterLevel::Observable)) == "observable");
}

TEST_CASE("detector properties over random programs") {
  const ActionSpace space = build_action_space();
  const auto inputs = generate_inputs(17, 4);
  Rng rng(31);
  std::size_t reports = 0;
  for (int k = 0; k < 600; ++k) {
    const Program p = random_program(rng, space, 10);
    DetectOptions opt;
    opt.boost_seed = k;
    opt.budget = 1000;

    const DetectResult off = detect_violation(p, inputs, {}, SpecConfig{0, 1}, opt);
    CHECK_FALSE(off.violation());

    opt.exhaustive = true;
    const DetectResult r = detect_violation(p, inputs, {}, {}, opt);
    if (r.rejected()) continue;
    for (const InputClass& cls : r.classes) {
      for (const Input& m : cls.members) CHECK(contract_trace(p, m, {}, 1000).trace == cls.ctrace);
    }
    if (!r.violation()) continue;
    for (const auto& rep : r.reports) {
      ++reports;
      CHECK(revalidate(rep, 1000));
      CHECK(rep.program == p);
    }
    std::vector<Input> all;
    for (const auto& rep : r.reports) {
      all.push_back(rep.witness.first);
      all.push_back(rep.witness.second);
    }
    CHECK(speculation_filter(p, all, {}, 1000) == FilterLevel::Observable);
  }
  CHECK(reports > 0);
}

TEST_CASE("report json carries the witness") {
  const auto inputs = generate_inputs(42, 20);
  const DetectResult r = detect_violation(parse_program(kGadget), inputs, {}, {});
  REQUIRE(r.violation());
  const nlohmann::json j = to_json(r.report());
  CHECK(j.at("program") == kGadget);
  CHECK(j.at("contract") == "CT_SEQ");
  CHECK(j.at("htraces").size() == 2);
  CHECK(j.at("diverging_sets").size() == r.report().diverging_sets.size());
}

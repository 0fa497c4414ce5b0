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

#include <cmath>
#include <stdexcept>

#include "leakgym/harness.hpp"

using namespace leakgym;

TEST_CASE("random_program draws uniformly with replacement") {
  const ActionSpace space = build_action_space();
  Rng a(3);
  CHECK(random_program(1, space, a).size() == 1);
  CHECK(random_program(20, space, a).size() == 20);

  Rng x(17), y(17);
  CHECK(random_program(30, space, x) == random_program(30, space, y));

  // 100k single-instruction draws: every action within 3 sigma of n/a.
  Rng rng(2026);
  std::vector<int> counts(space.size(), 0);
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) {
    const Instruction i = random_program(1, space, rng)[0];
    for (std::size_t a_ix = 0; a_ix < space.size(); ++a_ix) {
      if (space[a_ix] == i) ++counts[a_ix];
    }
  }
  const double p = 1.0 / static_cast<double>(space.size());
  const double mean = draws * p;
  const double sd = std::sqrt(draws * p * (1 - p));
  double chi2 = 0.0;
  for (int n : counts) {
    CHECK(std::abs(n - mean) < 3.5 * sd);
    chi2 += (n - mean) * (n - mean) / mean;
  }
  // 39 degrees of freedom; 99.9th percentile is about 72.
  CHECK(chi2 < 72.0);
}

TEST_CASE("fuzzing formula and statistics helpers") {
  CHECK(expected_fuzz_count(2, 3, 2) == 2.0);
  CHECK(expected_fuzz_count(6, 4, 3) == doctest::Approx(108.0));
  CHECK(std::isinf(expected_fuzz_count(6, 2, 3)));
  CHECK(median({5, 1, 3}) == 3.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK(loglog_slope({1, 2, 4, 8}, {3, 6, 12, 24}) == doctest::Approx(1.0));
  CHECK(loglog_slope({2, 4, 8}, {5, 20, 80}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(loglog_slope({1}, {1}), std::invalid_argument);
}

TEST_CASE("fixture construction") {
  const PlantedFixture fx = planted_fixture();
  CHECK(fx.program.size() <= 8);
  const ActionSpace space = build_action_space(fx.env.action_space);
  CHECK(space.size() <= 8);
  Program rebuilt;
  for (std::size_t a : fx.action_sequence) rebuilt = append_action(rebuilt, a, space);
  CHECK(rebuilt == fx.program);
  CHECK(render_program(fx.program) ==
        "SBB R0, R0\nJNS +2\nSBB R1, [BASE+R2]\nSBB R0, [BASE+R1]");

  // The three-instruction suffix already leaks: flags start cleared.
  Program shortest;
  for (std::size_t i = 1; i < fx.program.size(); ++i) shortest.instrs.push_back(fx.program[i]);
  const auto inputs = generate_inputs(fx.env.input_seed, fx.env.inputs);
  CHECK(detect_violation(shortest, inputs, {}, {}).violation());
  CHECK(shortest.size() == PlantedFixture::kMinimalLeakLength);
}

TEST_CASE("the fixture step budget only cuts off runs longer than itself") {
  const PlantedFixture fx = planted_fixture();
  const ActionSpace space = build_action_space(scaling_action_space());
  const auto inputs = generate_inputs(1, 3);
  Rng rng(12);
  int cut = 0, runs = 0;
  for (int k = 0; k < 3000; ++k) {
    const Program p = random_program(1 + rng.below(64), space, rng);
    for (const Input& in : inputs) {
      const ContractRun full = contract_trace(p, in);
      const ContractRun small = contract_trace(p, in, {}, fx.env.step_budget);
      ++runs;
      if (small.halted) {
        CHECK(full.halted);
        CHECK(full.steps == small.steps);
        CHECK(full.trace == small.trace);
      } else if (full.halted) {
        CHECK(full.steps > fx.env.step_budget);
        ++cut;
      }
    }
  }
  // Only a backward-jump loop holding both the IMUL and a JNS exit can run
  // long and still halt; that is rare.
  CHECK(cut * 100 < runs);
}

TEST_CASE("fuzzing on the fixture space finds leaks and censors short programs") {
  ExperimentConfig cfg;
  cfg.env = planted_fixture().env;
  cfg.fuzz.sizes = {2, 6};
  cfg.fuzz.trials = 3;
  cfg.fuzz.budget = 3000;
  const auto stats = fuzz_campaign(cfg);
  REQUIRE(stats.size() == 2);
  for (const auto& t : stats[0].trials) {
    CHECK(t.censored);
    CHECK(t.programs_tested == cfg.fuzz.budget);
  }
  CHECK(stats[0].median == 3000.0);
  for (const auto& t : stats[1].trials) {
    CHECK_FALSE(t.censored);
    CHECK(t.programs_tested >= 1);
  }
  CHECK(stats[1].median < 3000.0);
  CHECK(stats[1].action_space_size == build_action_space(cfg.env.action_space).size());
  CHECK(stats[1].expected_count ==
        expected_fuzz_count(stats[1].action_space_size, 6, stats[1].leak_length));

  // Same config, same rows.
  const std::string csv = scaling_csv_header() + to_csv_rows("fuzz", stats);
  CHECK(csv == scaling_csv_header() + to_csv_rows("fuzz", fuzz_campaign(cfg)));
  CHECK(csv.rfind("method,n,trial,programs_tested,wall_steps,censored\nfuzz,2,0,3000,", 0) == 0);
}

TEST_CASE("threaded campaigns merge in order") {
  ExperimentConfig cfg;
  cfg.env = planted_fixture().env;
  cfg.fuzz.sizes = {4, 6};
  cfg.fuzz.trials = 3;
  cfg.fuzz.budget = 2000;
  const std::string one = to_csv_rows("fuzz", fuzz_campaign(cfg));
  cfg.threads = 3;
  CHECK(one == to_csv_rows("fuzz", fuzz_campaign(cfg)));
}

TEST_CASE("RL trials report steps to the first leak") {
  ExperimentConfig cfg;
  cfg.env = planted_fixture().env;
  cfg.trainer.hidden = {16};
  cfg.trainer.horizon = 128;
  cfg.scaling.rl_budget = 3000;
  const FuzzTrial t = rl_trial(cfg, 6, 0);
  CHECK(t.n == 6);
  if (t.censored) {
    CHECK(t.programs_tested == 3000);
  } else {
    CHECK(t.programs_tested >= 3);
    CHECK(t.programs_tested <= 3000);
  }
  const FuzzTrial again = rl_trial(cfg, 6, 0);
  CHECK(again.programs_tested == t.programs_tested);
  CHECK(again.sim_steps == t.sim_steps);
}

TEST_CASE("config json round trip and validation") {
  const nlohmann::json j = nlohmann::json::parse(R"({
    "mode": "scaling",
    "seed": 9,
    "out": "results",
    "env": {"max_len": 16, "inputs": 8, "fixture_action_space": true,
            "contract": {"mode": "CT_COND", "spec_depth": 4},
            "spec": {"window": 4}},
    "trainer": {"learning_rate": 0.001, "optimizer": "adam", "hidden": [32]},
    "fuzz": {"sizes": [4, 8], "trials": 7, "budget": 1234},
    "scaling": {"rl_trials": 2, "rl_budget": 5000}
  })");
  const ExperimentConfig c = config_from_json(j);
  CHECK(c.mode == "scaling");
  CHECK(c.seed == 9);
  CHECK(c.out_dir == "results");
  CHECK(c.env.max_len == 16);
  CHECK(c.env.inputs == 8);
  CHECK(c.env.contract == ContractSpec{ContractMode::CtCond, 4});
  CHECK(c.env.spec.window == 4);
  CHECK(c.env.spec.nesting == 1);
  CHECK(c.env.action_space.explicit_actions == fixture_action_space().explicit_actions);
  const ExperimentConfig sc =
      config_from_json(nlohmann::json::parse(R"({"env": {"scaling_action_space": true}})"));
  CHECK(sc.env.action_space.explicit_actions.size() == 7);
  CHECK(c.trainer.optimizer == OptimizerKind::Adam);
  CHECK(c.trainer.hidden == std::vector<Eigen::Index>{32});
  CHECK(c.trainer.gamma == 0.99);
  CHECK(c.fuzz.sizes == std::vector<std::size_t>{4, 8});
  CHECK(c.fuzz.budget == 1234);
  CHECK(c.scaling.rl_trials == 2);

  const ExperimentConfig back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"mode": "dance"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"sed": 1})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"env": {"max_len": "x"}})")),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"trainer": {"clip": 0}})")),
                  ConfigError);
  CHECK_THROWS_AS(
      config_from_json(nlohmann::json::parse(R"({"env": {"action_space": {"actions": ["JMP 0"]}}})")),
      ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

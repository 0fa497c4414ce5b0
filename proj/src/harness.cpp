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

#include "leakgym/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace leakgym {

namespace {

using nlohmann::json;

// Reads the keys of `j` into fields, rejecting anything not listed.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Reg parse_reg_name(const std::string& s) {
  for (Reg r : {Reg::R0, Reg::R1, Reg::R2, Reg::BASE}) {
    if (to_string(r) == s) return r;
  }
  throw ConfigError("unknown register '" + s + "'");
}

ActionSpaceConfig action_space_from_json(const json& j) {
  ActionSpaceConfig a;
  Reader r(j, "env.action_space");
  std::vector<std::string> regs, templates, actions;
  r.get("registers", regs);
  r.get("templates", templates);
  r.get("displacements", a.displacements);
  r.get("actions", actions);
  if (j.contains("registers")) {
    a.registers.clear();
    for (const auto& s : regs) a.registers.push_back(parse_reg_name(s));
  }
  if (j.contains("templates")) {
    a.templates.clear();
    for (const auto& s : templates) a.templates.push_back(parse_action_template(s));
  }
  for (const auto& s : actions) {
    try {
      const Program p = parse_program(s);
      if (p.size() != 1) throw ConfigError("action '" + s + "' is not one instruction");
      a.explicit_actions.push_back(p[0]);
    } catch (const ParseError& e) {
      throw ConfigError("action '" + s + "': " + e.what());
    }
  }
  return a;
}

json action_space_to_json(const ActionSpaceConfig& a) {
  json j;
  if (!a.explicit_actions.empty()) {
    j["actions"] = json::array();
    for (const auto& i : a.explicit_actions) j["actions"].push_back(render_instruction(i));
    return j;
  }
  j["registers"] = json::array();
  for (Reg r : a.registers) j["registers"].push_back(std::string(to_string(r)));
  j["templates"] = json::array();
  for (auto t : a.templates) j["templates"].push_back(std::string(to_string(t)));
  j["displacements"] = a.displacements;
  return j;
}

EnvConfig env_from_json(const json& j, EnvConfig e) {
  Reader r(j, "env");
  r.get("max_len", e.max_len);
  r.get("inputs", e.inputs);
  r.get("input_seed", e.input_seed);
  r.get("boosts_per_input", e.boosts_per_input);
  r.get("step_budget", e.step_budget);
  r.get("max_episode_steps", e.max_episode_steps);
  r.get("randomize_inputs", e.randomize_inputs);
  if (const json* c = r.sub("contract")) {
    Reader cr(*c, "env.contract");
    std::string mode = e.contract.name();
    std::size_t depth = e.contract.spec_depth;
    cr.get("mode", mode);
    cr.get("spec_depth", depth);
    e.contract = parse_contract(mode, depth);
  }
  if (const json* s = r.sub("spec")) {
    Reader sr(*s, "env.spec");
    sr.get("window", e.spec.window);
    sr.get("nesting", e.spec.nesting);
  }
  if (const json* w = r.sub("reward")) {
    Reader wr(*w, "env.reward");
    wr.get("leak", e.reward.leak);
    wr.get("observable", e.reward.observable);
    wr.get("misspec", e.reward.misspec);
    wr.get("unobservable", e.reward.unobservable);
    wr.get("none", e.reward.none);
    wr.get("step", e.reward.step);
    wr.get("reject", e.reward.reject);
  }
  if (const json* a = r.sub("action_space")) e.action_space = action_space_from_json(*a);
  if (const json* f = r.sub("fixture_action_space")) {
    if (f->get<bool>()) e.action_space = fixture_action_space();
  }
  if (const json* f = r.sub("scaling_action_space")) {
    if (f->get<bool>()) e.action_space = scaling_action_space();
  }
  return e;
}

TrainerConfig trainer_from_json(const json& j, TrainerConfig t) {
  Reader r(j, "trainer");
  r.get("gamma", t.gamma);
  r.get("lambda", t.lambda);
  r.get("clip", t.clip);
  r.get("learning_rate", t.learning_rate);
  r.get("epochs", t.epochs);
  r.get("minibatch_size", t.minibatch_size);
  r.get("entropy_coef", t.entropy_coef);
  r.get("value_coef", t.value_coef);
  r.get("horizon", t.horizon);
  r.get("total_steps", t.total_steps);
  r.get("seed", t.seed);
  r.get("hidden", t.hidden);
  r.get("stop_after_leaks", t.stop_after_leaks);
  std::string opt = t.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
  r.get("optimizer", opt);
  if (opt == "sgd") {
    t.optimizer = OptimizerKind::Sgd;
  } else if (opt == "adam") {
    t.optimizer = OptimizerKind::Adam;
  } else {
    throw ConfigError("trainer.optimizer must be 'sgd' or 'adam'");
  }
  return t;
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn fn) {
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Program fixture_program() {
  return parse_program(
      "SBB R0, R0\n"
      "JNS +2\n"
      "SBB R1, [BASE+R2]\n"
      "SBB R0, [BASE+R1]\n");
}

FuzzStats summarize(std::size_t n, std::size_t a, std::vector<FuzzTrial> trials) {
  FuzzStats st;
  st.program_size = n;
  st.action_space_size = a;
  st.leak_length = PlantedFixture::kMinimalLeakLength;
  std::vector<double> counts;
  for (const auto& t : trials) counts.push_back(static_cast<double>(t.programs_tested));
  st.median = median(counts);
  st.mean = counts.empty() ? 0.0
                           : std::accumulate(counts.begin(), counts.end(), 0.0) /
                                 static_cast<double>(counts.size());
  st.expected_count = expected_fuzz_count(a, n, st.leak_length);
  st.trials = std::move(trials);
  return st;
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Reader r(j, "config");
  r.get("mode", c.mode);
  r.get("seed", c.seed);
  r.get("out", c.out_dir);
  r.get("threads", c.threads);
  if (const json* e = r.sub("env")) c.env = env_from_json(*e, c.env);
  if (const json* t = r.sub("trainer")) c.trainer = trainer_from_json(*t, c.trainer);
  if (const json* f = r.sub("fuzz")) {
    Reader fr(*f, "fuzz");
    fr.get("sizes", c.fuzz.sizes);
    fr.get("trials", c.fuzz.trials);
    fr.get("budget", c.fuzz.budget);
  }
  if (const json* s = r.sub("scaling")) {
    Reader sr(*s, "scaling");
    sr.get("rl_trials", c.scaling.rl_trials);
    sr.get("rl_budget", c.scaling.rl_budget);
  }
  static const std::set<std::string> kModes{"train", "fuzz", "detect", "simulate", "scaling"};
  if (!kModes.count(c.mode)) throw ConfigError("unknown mode '" + c.mode + "'");
  c.env.validate();
  c.trainer.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["mode"] = c.mode;
  j["seed"] = c.seed;
  j["out"] = c.out_dir;
  j["threads"] = c.threads;
  const EnvConfig& e = c.env;
  j["env"] = {{"max_len", e.max_len},
              {"inputs", e.inputs},
              {"input_seed", e.input_seed},
              {"boosts_per_input", e.boosts_per_input},
              {"step_budget", e.step_budget},
              {"max_episode_steps", e.max_episode_steps},
              {"randomize_inputs", e.randomize_inputs},
              {"contract", {{"mode", e.contract.name()}, {"spec_depth", e.contract.spec_depth}}},
              {"spec", {{"window", e.spec.window}, {"nesting", e.spec.nesting}}},
              {"reward",
               {{"leak", e.reward.leak},
                {"observable", e.reward.observable},
                {"misspec", e.reward.misspec},
                {"unobservable", e.reward.unobservable},
                {"none", e.reward.none},
                {"step", e.reward.step},
                {"reject", e.reward.reject}}},
              {"action_space", action_space_to_json(e.action_space)}};
  const TrainerConfig& t = c.trainer;
  j["trainer"] = {{"gamma", t.gamma},
                  {"lambda", t.lambda},
                  {"clip", t.clip},
                  {"learning_rate", t.learning_rate},
                  {"epochs", t.epochs},
                  {"minibatch_size", t.minibatch_size},
                  {"entropy_coef", t.entropy_coef},
                  {"value_coef", t.value_coef},
                  {"horizon", t.horizon},
                  {"total_steps", t.total_steps},
                  {"seed", t.seed},
                  {"hidden", t.hidden},
                  {"optimizer", t.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                  {"stop_after_leaks", t.stop_after_leaks}};
  j["fuzz"] = {{"sizes", c.fuzz.sizes}, {"trials", c.fuzz.trials}, {"budget", c.fuzz.budget}};
  j["scaling"] = {{"rl_trials", c.scaling.rl_trials}, {"rl_budget", c.scaling.rl_budget}};
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

Program random_program(std::size_t n, const ActionSpace& space, Rng& rng) {
  Program p;
  p.instrs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) p.instrs.push_back(space[rng.below(space.size())]);
  return p;
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t h = xs.size() / 2;
  return xs.size() % 2 ? xs[h] : 0.5 * (xs[h - 1] + xs[h]);
}

double expected_fuzz_count(std::size_t a, std::size_t n, std::size_t l) {
  if (n < l) return std::numeric_limits<double>::infinity();
  return std::pow(static_cast<double>(a), static_cast<double>(n) - 1.0) /
         static_cast<double>(n - l + 1);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("loglog_slope needs >= 2 paired points");
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

FuzzTrial fuzz_trial(const ExperimentConfig& cfg, std::size_t n, std::size_t trial) {
  const ActionSpace space = build_action_space(cfg.env.action_space);
  const std::vector<Input> inputs = generate_inputs(cfg.env.input_seed, cfg.env.inputs);
  DetectOptions opts;
  opts.boosts_per_input = cfg.env.boosts_per_input;
  opts.boost_seed = mix_seed(cfg.env.input_seed, 0xB0057ULL);
  opts.budget = cfg.env.step_budget;

  FuzzTrial t;
  t.n = n;
  t.trial = trial;
  t.censored = true;
  Rng rng(mix_seed(cfg.seed, n, trial));
  while (t.programs_tested < cfg.fuzz.budget) {
    const Program p = random_program(n, space, rng);
    ++t.programs_tested;
    const DetectResult det =
        detect_violation(p, inputs, cfg.env.contract, cfg.env.spec, opts);
    t.sim_steps += det.sim_steps;
    if (det.violation()) {
      t.censored = false;
      break;
    }
  }
  return t;
}

std::vector<FuzzStats> fuzz_campaign(const ExperimentConfig& cfg) {
  const std::size_t a = build_action_space(cfg.env.action_space).size();
  const std::size_t per = cfg.fuzz.trials;
  std::vector<FuzzTrial> cells(cfg.fuzz.sizes.size() * per);
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
    cells[i] = fuzz_trial(cfg, cfg.fuzz.sizes[i / per], i % per);
  });
  std::vector<FuzzStats> out;
  for (std::size_t s = 0; s < cfg.fuzz.sizes.size(); ++s) {
    out.push_back(summarize(cfg.fuzz.sizes[s], a,
                            {cells.begin() + static_cast<std::ptrdiff_t>(s * per),
                             cells.begin() + static_cast<std::ptrdiff_t>((s + 1) * per)}));
  }
  return out;
}

FuzzTrial rl_trial(const ExperimentConfig& cfg, std::size_t m, std::size_t trial) {
  EnvConfig ec = cfg.env;
  ec.max_len = m;
  SpecEnv env(ec);
  TrainerConfig tc = cfg.trainer;
  tc.seed = mix_seed(cfg.seed, m, trial);
  tc.total_steps = cfg.scaling.rl_budget;
  tc.stop_after_leaks = 1;
  const TrainingLog log = train(env, tc);

  FuzzTrial t;
  t.n = m;
  t.trial = trial;
  t.sim_steps = log.sim_steps;
  t.censored = !log.first_leak_step.has_value();
  t.programs_tested = log.first_leak_step.value_or(cfg.scaling.rl_budget);
  return t;
}

ScalingResult scaling_study(const ExperimentConfig& cfg) {
  ScalingResult res;
  res.fuzz = fuzz_campaign(cfg);
  const std::size_t a = build_action_space(cfg.env.action_space).size();
  const std::size_t per = cfg.scaling.rl_trials;
  std::vector<FuzzTrial> cells(cfg.fuzz.sizes.size() * per);
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
    cells[i] = rl_trial(cfg, cfg.fuzz.sizes[i / per], i % per);
  });
  for (std::size_t s = 0; s < cfg.fuzz.sizes.size(); ++s) {
    res.rl.push_back(summarize(cfg.fuzz.sizes[s], a,
                               {cells.begin() + static_cast<std::ptrdiff_t>(s * per),
                                cells.begin() + static_cast<std::ptrdiff_t>((s + 1) * per)}));
  }
  return res;
}

std::string scaling_csv_header() {
  return "method,n,trial,programs_tested,wall_steps,censored\n";
}

std::string to_csv_rows(const std::string& method, const std::vector<FuzzStats>& stats) {
  std::ostringstream os;
  for (const auto& st : stats) {
    for (const auto& t : st.trials) {
      os << method << ',' << t.n << ',' << t.trial << ',' << t.programs_tested << ','
         << t.sim_steps << ',' << (t.censored ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

ActionSpaceConfig fixture_action_space() {
  ActionSpaceConfig a;
  a.explicit_actions = fixture_program().instrs;
  a.explicit_actions.push_back(Instruction::branch(Opcode::JMP, -1));
  a.explicit_actions.push_back(Instruction::branch(Opcode::JMP, -2));
  return a;
}

ActionSpaceConfig scaling_action_space() {
  ActionSpaceConfig a = fixture_action_space();
  a.explicit_actions.push_back(
      Instruction::alu(Opcode::IMUL, Operand::reg_op(Reg::R1), Operand::reg_op(Reg::R2)));
  return a;
}

PlantedFixture planted_fixture() {
  PlantedFixture f;
  f.program = fixture_program();
  f.env.action_space = fixture_action_space();
  f.env.max_len = 12;
  // Backward jumps are unconditional, so almost every terminating run
  // executes each instruction at most once; the small budget mainly makes
  // rejecting the looping programs cheap.
  f.env.step_budget = PlantedFixture::kFixtureStepBudget;
  f.action_sequence = {0, 1, 2, 3};
  return f;
}

}  // namespace leakgym

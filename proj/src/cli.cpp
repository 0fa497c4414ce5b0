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

#include "leakgym/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "leakgym/harness.hpp"

namespace leakgym {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  os << text;
}

json ctrace_json(const CTrace& t) {
  json arr = json::array();
  for (const auto& o : t) arr.push_back(to_string(o));
  return arr;
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string program_path;
  std::vector<std::string> input_files;
  std::string dump_inputs;
};

ExperimentConfig resolve_config(const Options& o, const std::string& mode) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  cfg.mode = mode;
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  return cfg;
}

int cmd_train(const Options& o, std::ostream& out) {
  ExperimentConfig cfg = resolve_config(o, "train");
  if (o.seed) cfg.trainer.seed = *o.seed;
  SpecEnv env(cfg.env);
  const TrainingLog log = train(env, cfg.trainer);
  write_training_log(log, cfg.out_dir, "training");
  write_file(fs::path(cfg.out_dir) / "config.json", to_json(cfg).dump(2) + "\n");
  out << "steps " << log.total_steps << ", leaks " << log.leaks.size();
  if (log.first_leak_step) out << ", first leak at step " << *log.first_leak_step;
  out << "\n";
  return kExitOk;
}

json stats_json(const std::vector<FuzzStats>& stats) {
  json arr = json::array();
  for (const auto& s : stats) {
    std::size_t censored = 0;
    for (const auto& t : s.trials) censored += t.censored;
    arr.push_back({{"n", s.program_size},
                   {"action_space_size", s.action_space_size},
                   {"leak_length", s.leak_length},
                   {"trials", s.trials.size()},
                   {"censored", censored},
                   {"median_programs", s.median},
                   {"mean_programs", s.mean},
                   {"expected_count_formula", s.expected_count}});
  }
  return arr;
}

int cmd_fuzz(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(o, "fuzz");
  const auto stats = fuzz_campaign(cfg);
  const std::string csv = scaling_csv_header() + to_csv_rows("fuzz", stats);
  write_file(fs::path(cfg.out_dir) / "fuzz.csv", csv);
  write_file(fs::path(cfg.out_dir) / "fuzz_summary.json", stats_json(stats).dump(2) + "\n");
  out << csv;
  return kExitOk;
}

int cmd_scaling(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(o, "scaling");
  const ScalingResult res = scaling_study(cfg);
  const std::string csv =
      scaling_csv_header() + to_csv_rows("fuzz", res.fuzz) + to_csv_rows("rl", res.rl);
  write_file(fs::path(cfg.out_dir) / "scaling.csv", csv);
  json summary{{"fuzz", stats_json(res.fuzz)}, {"rl", stats_json(res.rl)}};
  write_file(fs::path(cfg.out_dir) / "scaling_summary.json", summary.dump(2) + "\n");
  out << csv;
  return kExitOk;
}

std::vector<Input> resolve_inputs(const Options& o, const ExperimentConfig& cfg) {
  if (!o.input_files.empty()) {
    std::vector<Input> inputs;
    for (const auto& f : o.input_files) {
      std::ifstream is(f, std::ios::binary);
      if (!is) throw ConfigError("cannot open input '" + f + "'");
      inputs.push_back(read_input(is));
    }
    return inputs;
  }
  return generate_inputs(o.seed ? *o.seed : cfg.env.input_seed, cfg.env.inputs);
}

Program load_program(const Options& o) {
  try {
    return parse_program(read_file(o.program_path));
  } catch (const ParseError& e) {
    throw ConfigError(o.program_path + ": " + e.what());
  }
}

int cmd_detect(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(o, "detect");
  const Program p = load_program(o);
  const std::vector<Input> inputs = resolve_inputs(o, cfg);
  DetectOptions opts;
  opts.boosts_per_input = cfg.env.boosts_per_input;
  opts.boost_seed = mix_seed(cfg.env.input_seed, 0xB0057ULL);
  opts.budget = cfg.env.step_budget;
  const DetectResult det = detect_violation(p, inputs, cfg.env.contract, cfg.env.spec, opts);
  if (det.rejected()) {
    out << "rejected: program does not terminate on every input\n";
    return kExitOk;
  }
  if (!det.violation()) {
    out << "no violation\n";
    return kExitOk;
  }
  out << to_json(det.report()).dump(2) << "\n";
  if (!o.out_dir.empty()) {
    const fs::path dir(o.out_dir);
    write_file(dir / "report.json", to_json(det.report()).dump(2) + "\n");
    std::ostringstream a, b;
    write_input(a, det.report().witness.first);
    write_input(b, det.report().witness.second);
    write_file(dir / "alpha.bin", a.str());
    write_file(dir / "beta.bin", b.str());
  }
  return kExitLeak;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(o, "simulate");
  const Program p = load_program(o);
  const std::vector<Input> inputs = resolve_inputs(o, cfg);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const HwRun hw = hw_run(p, inputs[i], cfg.env.spec, cfg.env.step_budget);
    const ContractRun ct = contract_trace(p, inputs[i], cfg.env.contract, cfg.env.step_budget);
    json j;
    j["input"] = i;
    j["seed"] = inputs[i].seed;
    j["halted"] = hw.halted && ct.halted;
    j["htrace"] = htrace_hex(hw.htrace);
    j["br_misses"] = hw.counters.br_misses;
    j["uops_issued"] = hw.counters.uops_issued;
    j["uops_retired"] = hw.counters.uops_retired;
    j["tran_uops"] = hw.counters.tran_uops();
    j["regs"] = {{"R0", hw.final_state.regs[0]},
                 {"R1", hw.final_state.regs[1]},
                 {"R2", hw.final_state.regs[2]}};
    j["ctrace"] = ctrace_json(ct.trace);
    out << j.dump() << "\n";
    if (!o.dump_inputs.empty()) {
      std::ostringstream bin;
      write_input(bin, inputs[i]);
      write_file(fs::path(o.dump_inputs) / ("input_" + std::to_string(i) + ".bin"), bin.str());
    }
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speculative leak discovery workbench"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  std::uint64_t seed = 0;
  app.add_option("--config", o.config_path, "JSON experiment config");
  auto* seed_opt = app.add_option("--seed", seed, "Seed override");
  app.add_option("--out", o.out_dir, "Output directory");

  auto* train_cmd = app.add_subcommand("train", "Train the PPO agent");
  auto* fuzz_cmd = app.add_subcommand("fuzz", "Random-fuzzer campaign");
  auto* scaling_cmd = app.add_subcommand("scaling", "Fuzzer vs agent over the size grid");
  auto* detect_cmd = app.add_subcommand("detect", "One-shot detection on a program");
  detect_cmd->add_option("program", o.program_path, "Assembly file")->required();
  detect_cmd->add_option("--input", o.input_files, "Binary input file (repeatable)");
  auto* sim_cmd = app.add_subcommand("simulate", "Dump traces and counters per input");
  sim_cmd->add_option("program", o.program_path, "Assembly file")->required();
  sim_cmd->add_option("--input", o.input_files, "Binary input file (repeatable)");
  sim_cmd->add_option("--dump-inputs", o.dump_inputs, "Write the inputs used to this directory");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kExitUsage;
  }
  if (seed_opt->count()) o.seed = seed;

  try {
    if (*train_cmd) return cmd_train(o, out);
    if (*fuzz_cmd) return cmd_fuzz(o, out);
    if (*scaling_cmd) return cmd_scaling(o, out);
    if (*detect_cmd) return cmd_detect(o, out);
    if (*sim_cmd) return cmd_simulate(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal fault: " << e.what() << "\n";
    return kExitFault;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace leakgym

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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "leakgym/arch.hpp"
#include "leakgym/cli.hpp"

namespace fs = std::filesystem;
using leakgym::run_cli;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("leakgym_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const std::string kFixture = std::string(LEAKGYM_SOURCE_DIR) + "/configs/fixture.asm";

}  // namespace

TEST_CASE("detect reports the fixture leak") {
  const fs::path dir = scratch("detect");
  const Result r = cli({"detect", kFixture, "--seed", "1", "--out", dir.string()});
  CHECK(r.code == 2);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("contract") == "CT_SEQ");
  CHECK_FALSE(j.at("diverging_sets").empty());
  CHECK(fs::file_size(dir / "alpha.bin") == leakgym::kInputFileSize);

  // Replaying the witness pair reproduces the report.
  const Result again = cli({"detect", kFixture, "--input", (dir / "alpha.bin").string(),
                            "--input", (dir / "beta.bin").string()});
  CHECK(again.code == 2);
}

TEST_CASE("detect on clean and looping programs") {
  const fs::path dir = scratch("clean");
  std::ofstream(dir / "empty.asm") << "; nothing\n";
  const Result r = cli({"detect", (dir / "empty.asm").string()});
  CHECK(r.code == 0);
  CHECK(r.out == "no violation\n");

  std::ofstream(dir / "loop.asm") << "SBB R0, R1\nJMP -1\n";
  const Result l = cli({"detect", (dir / "loop.asm").string()});
  CHECK(l.code == 0);
  CHECK(l.out.rfind("rejected:", 0) == 0);

  std::ofstream(dir / "bad.asm") << "SBB R0, R1\nMOV R0, R1\n";
  const Result b = cli({"detect", (dir / "bad.asm").string()});
  CHECK(b.code == 1);
  CHECK(b.err.find("line 2") != std::string::npos);
}

TEST_CASE("simulate prints one JSON line per input") {
  const fs::path dir = scratch("simulate");
  const fs::path cfg = dir / "cfg.json";
  std::ofstream(cfg) << R"({"env": {"inputs": 3}})";
  const Result r = cli({"--config", cfg.string(), "simulate", kFixture, "--dump-inputs",
                        dir.string()});
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("input") == n);
    CHECK(j.at("htrace").get<std::string>().size() == 16);
    CHECK(j.at("br_misses") == 1);
    CHECK(j.at("ctrace").size() == 2);
    ++n;
  }
  CHECK(n == 3);
  CHECK(fs::exists(dir / "input_2.bin"));
}

TEST_CASE("usage and configuration errors exit with 1") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"detect"}).code == 1);
  CHECK(cli({"--config", "/nonexistent.json", "fuzz"}).code == 1);
  const fs::path dir = scratch("badcfg");
  std::ofstream(dir / "cfg.json") << R"({"fuzz": {"trails": 3}})";
  const Result r = cli({"--config", (dir / "cfg.json").string(), "fuzz"});
  CHECK(r.code == 1);
  CHECK(r.err.find("trails") != std::string::npos);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("fuzz and scaling write deterministic CSV") {
  const fs::path dir = scratch("scaling");
  std::ofstream(dir / "cfg.json") << R"({
    "env": {"fixture_action_space": true, "inputs": 4},
    "trainer": {"hidden": [8], "horizon": 64},
    "fuzz": {"sizes": [4, 6], "trials": 2, "budget": 500},
    "scaling": {"rl_trials": 1, "rl_budget": 300}
  })";
  const std::string cfg = (dir / "cfg.json").string();
  const Result s1 = cli({"--config", cfg, "--out", (dir / "a").string(), "scaling"});
  REQUIRE(s1.code == 0);
  const Result s2 = cli({"--config", cfg, "--out", (dir / "b").string(), "scaling"});
  REQUIRE(s2.code == 0);
  const std::string csv = slurp(dir / "a" / "scaling.csv");
  CHECK(csv.rfind("method,n,trial,programs_tested,wall_steps,censored\n", 0) == 0);
  CHECK(csv.find("\nrl,4,0,") != std::string::npos);
  CHECK(csv == slurp(dir / "b" / "scaling.csv"));
  CHECK(fs::exists(dir / "a" / "scaling_summary.json"));

  const Result f = cli({"--config", cfg, "--seed", "5", "--out", (dir / "f").string(), "fuzz"});
  CHECK(f.code == 0);
  CHECK(f.out == slurp(dir / "f" / "fuzz.csv"));
}

TEST_CASE("the installed binary maps exit codes") {
  const std::string bin = LEAKGYM_CLI_PATH;
  const int code = std::system((bin + " detect " + kFixture + " > /dev/null").c_str());
  REQUIRE(WIFEXITED(code));
  CHECK(WEXITSTATUS(code) == 2);
  const int usage = std::system((bin + " --bogus > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(usage) == 1);
}

// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI through the shell; stderr is folded into the captured text.
Run cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" MFS_CLI_PATH "\" " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Small dataset and latency table shared by the search-based cases.
fs::path prepared() {
  static const fs::path dir = [] {
    const fs::path d = mfs::testing::scratch_dir("cli_base");
    const Run gen =
        cli("gen-data --out " + q(d) + " --train-count 4 --val-count 2 --height 32 --width 64");
    REQUIRE(gen.code == 0);
    REQUIRE(cli("bench-latency --out " + q(d) + " --height 32 --width 64 --reps 3").code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("eval on identical label directories reports mIoU 1") {
  const fs::path d = prepared();
  const fs::path labels = d / "data" / "val" / "lab";
  const Run r = cli("eval --out " + q(d) + " --pred " + q(labels) + " --truth " + q(labels));
  CHECK(r.code == 0);
  CHECK(r.out.find("mIoU 1.000000") != std::string::npos);
  const Run j =
      cli("eval --json --out " + q(d) + " --pred " + q(labels) + " --truth " + q(labels));
  REQUIRE(j.code == 0);
  const auto report = nlohmann::json::parse(j.out);
  CHECK(report.at("miou").get<double>() == 1.0);
}

TEST_CASE("search twice with the same seed exports identical specs") {
  const fs::path d = prepared();
  std::vector<std::string> specs;
  for (const char* name : {"cli_search_a", "cli_search_b"}) {
    const fs::path out = mfs::testing::scratch_dir(name);
    const std::string common = "--out " + q(out) + " --data " + q(d / "data");
    REQUIRE(cli("search " + common + " --latency " + q(d / "latency.csv") +
                " --iterations 1 --seed 0")
                .code == 0);
    const Run e = cli("export-spec --out " + q(out) + " --role student");
    REQUIRE(e.code == 0);
    specs.push_back(e.out);
    CHECK(fs::exists(out / "run.json"));
  }
  CHECK(specs[0] == specs[1]);
  CHECK(nlohmann::json::parse(specs[0]).at("role") == "student");
  CHECK(slurp(fs::temp_directory_path() / "mfs_cli_search_a" / "search" / "supernet.bin") ==
        slurp(fs::temp_directory_path() / "mfs_cli_search_b" / "search" / "supernet.bin"));
}

TEST_CASE("pipeline stages write their artifacts and run.json") {
  const fs::path d = prepared();
  const fs::path out = mfs::testing::scratch_dir("cli_pipeline");
  const std::string common = "--data " + q(d / "data");
  const std::string env = "MFS_OUT_DIR=" + q(out);
  REQUIRE(cli("search " + common + " --latency " + q(d / "latency.csv") + " --iterations 2",
              env)
              .code == 0);
  CHECK(fs::exists(out / "search" / "teacher.json"));
  CHECK(fs::exists(out / "search" / "history.csv"));
  REQUIRE(cli("train-teacher " + common + " --epochs 1", env).code == 0);
  CHECK(fs::exists(out / "teacher" / "weights.bin"));
  REQUIRE(cli("distill " + common + " --epochs 1 --temperature 2 --distill-weight 0.5", env)
              .code == 0);
  const auto run = nlohmann::json::parse(slurp(out / "run.json"));
  CHECK(run.at("command") == "distill");
  CHECK(run.at("config").at("temperature").get<double>() == 2.0);
  CHECK(run.at("config").at("distill_weight").get<double>() == 0.5);

  const fs::path pred = out / "pred";
  const Run ev = cli("eval --json " + common + " --save-pred " + q(pred), env);
  REQUIRE(ev.code == 0);
  const auto report = nlohmann::json::parse(ev.out);
  CHECK(report.at("metrics").at("miou").get<double>() >= 0.0);
  // Saved predictions score the same through the directory mode.
  const Run again = cli("eval --json --pred " + q(pred) + " --truth " +
                            q(d / "data" / "val" / "lab") + " --classes 4",
                        env);
  REQUIRE(again.code == 0);
  CHECK(nlohmann::json::parse(again.out).at("miou") == report.at("metrics").at("miou"));

  const Run noatt = cli("distill " + common + " --epochs 1 --no-attention --plain", env);
  REQUIRE(noatt.code == 0);
  CHECK(nlohmann::json::parse(slurp(out / "plain" / "spec.json")).at("attention") == false);
  const Run cost = cli("cost-report --json --model plain " + common, env);
  REQUIRE(cost.code == 0);
  const auto c = nlohmann::json::parse(cost.out);
  for (const char* key : {"flops", "parameters", "fps", "fps_bound", "regularized_latency_ms"}) {
    CHECK(c.at(key).is_number());
  }
}

TEST_CASE("usage errors exit with 2 and runtime failures with 1") {
  const fs::path out = mfs::testing::scratch_dir("cli_errors");
  const std::string o = " --out " + q(out);
  for (const std::string args :
       {std::string(""), "bogus" + o, "search --nope" + o, "distill --temperature 0" + o,
        "search --iterations -3" + o, "eval --pred x" + o, "export-spec --role nobody" + o,
        "eval --model nobody" + o}) {
    CAPTURE(args);
    const Run r = cli(args);
    CHECK(r.code == 2);
    CHECK(r.out.find("usage error") != std::string::npos);
  }
  const Run no_out = cli("eval", "env -u MFS_OUT_DIR");
  CHECK(no_out.code == 2);
  CHECK(no_out.out.find("MFS_OUT_DIR") != std::string::npos);

  const Run missing = cli("search" + o + " --data " + q(out / "absent"));
  CHECK(missing.code == 1);
  CHECK(missing.out.find("error") != std::string::npos);
  CHECK(cli("train-teacher" + o).code == 1);
}

TEST_CASE("help lists every flag of each subcommand") {
  const std::vector<std::pair<std::string, std::vector<std::string>>> expected = {
      {"gen-data", {"--out", "--seed", "--json", "--data", "--classes", "--cityscapes"}},
      {"bench-latency", {"--out", "--seed", "--json", "--reps"}},
      {"search", {"--out", "--seed", "--data", "--iterations", "--lambda-latency",
                  "--no-attention"}},
      {"train-teacher", {"--out", "--seed", "--data", "--epochs", "--no-attention",
                         "--ignore-class"}},
      {"distill", {"--out", "--seed", "--data", "--epochs", "--temperature", "--distill-weight",
                   "--no-attention", "--ignore-class", "--jobs", "--json"}},
      {"eval", {"--out", "--data", "--pred", "--truth", "--save-pred", "--ignore-class"}},
      {"cost-report", {"--out", "--model", "--json"}},
      {"export-spec", {"--out", "--role", "--json"}},
  };
  for (const auto& [sub, flags] : expected) {
    const Run r = cli(sub + " --help");
    CAPTURE(sub);
    CHECK(r.code == 0);
    for (const auto& f : flags) {
      CAPTURE(f);
      CHECK(r.out.find(f) != std::string::npos);
    }
  }
}

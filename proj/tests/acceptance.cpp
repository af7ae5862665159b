// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gradcheck.hpp"
#include "json.hpp"
#include "mfs/attention.hpp"
#include "mfs/data.hpp"
#include "mfs/distill.hpp"
#include "mfs/latency.hpp"
#include "mfs/metrics.hpp"
#include "mfs/network.hpp"
#include "mfs/search.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mfs;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Verdict()>& check) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++failures;
  char buf[64];
  std::snprintf(buf, sizeof buf, " [%.1f s]", seconds_since(t0));
  std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " -- "
            << v.detail << buf << std::endl;
}

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// 1 --------------------------------------------------------------------------

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  const auto cases = testing::gradient_cases();
  double worst = 0;
  std::string worst_name;
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const double err = c.run(rng);
      if (!(err <= worst)) {
        worst = err;
        worst_name = c.name;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-4 && elapsed < 120.0,
          std::to_string(cases.size()) + " ops x 20 seeds, worst rel. err " + num(worst, 3) +
              " (" + worst_name + "), " + num(elapsed, 3) + " s"};
}

// 2 --------------------------------------------------------------------------

Verdict gumbel_fidelity() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  const double tau = 1.0;
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(uniform_open(rng) * 5);
    std::vector<double> gamma(n);
    for (double& g : gamma) g = 0.05 + uniform_open(rng);
    const double total = std::accumulate(gamma.begin(), gamma.end(), 0.0);
    for (double& g : gamma) g /= total;
    // Oracle: softmax(log γ / τ) written out directly.
    std::vector<double> want(n);
    double z = 0;
    for (std::size_t i = 0; i < n; ++i) z += want[i] = std::exp(std::log(gamma[i]) / tau);
    for (double& w : want) w /= z;
    std::vector<double> freq(n, 0.0);
    const int draws = 100000;
    for (int d = 0; d < draws; ++d) freq[static_cast<std::size_t>(gumbel_sample(gamma, tau, rng))] += 1;
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(freq[i] / draws - want[i]));
  }
  const double elapsed = seconds_since(t0);
  return {worst <= 0.01 && elapsed < 30.0,
          "10 vectors x 1e5 draws, worst |freq - softmax(log g / tau)| " + num(worst, 3) + ", " +
              num(elapsed, 3) + " s"};
}

// 3 and 8 share one long search -------------------------------------------

struct LongSearch {
  std::optional<SearchResult> result;
  double worst_sum = 0;
  bool negative = false;
  int steps = 0;
};

const LongSearch& long_search() {
  static const LongSearch s = [] {
    LongSearch out;
    SearchSpaceConfig cfg;
    const Dataset data = testing::synthetic_dataset("acc_search", 8, 32, 64, 4, 11);
    SearchOptions opt;
    opt.iterations = 500;
    opt.seed = 3;
    out.result = search(cfg, data, testing::synthetic_table(cfg), opt,
                        [&](const SearchStep&, const ArchParams& p) {
                          ++out.steps;
                          for (const auto& [node, np] : project_simplex(p).nodes) {
                            for (const auto* v : {&np.alpha, &np.beta, &np.gamma}) {
                              if (v->empty()) continue;
                              const double sum = std::accumulate(v->begin(), v->end(), 0.0);
                              out.worst_sum = std::max(out.worst_sum, std::abs(sum - 1.0));
                              for (double x : *v) out.negative |= x < 0;
                            }
                          }
                        });
    return out;
  }();
  return s;
}

Verdict simplex_constraints() {
  const LongSearch& s = long_search();
  const bool pass = s.steps == 500 && s.worst_sum <= 1e-6 && !s.negative;
  return {pass, std::to_string(s.steps) + " steps checked, worst |sum - 1| " +
                    num(s.worst_sum, 3) + (s.negative ? ", negative entry seen" : ", all >= 0")};
}

Verdict co_search() {
  const SearchResult& r = *long_search().result;
  bool ok = r.teacher.fingerprint == r.student.fingerprint &&
            r.teacher.fingerprint == fingerprint_hex(r.weights.origin());
  const int cap = SearchSpaceConfig{}.student_max_expansion;
  int teacher_min = 1 << 30, student_max = 0;
  auto all_layers = [](const NetworkSpec& spec) {
    std::vector<LayerSpec> v = spec.layers;
    for (const auto& b : spec.branches) v.insert(v.end(), b.layers.begin(), b.layers.end());
    return v;
  };
  for (const auto& l : all_layers(r.teacher)) teacher_min = std::min(teacher_min, l.expansion);
  for (const auto& l : all_layers(r.student)) student_max = std::max(student_max, l.expansion);
  int teacher_max = 0;
  for (const auto& l : all_layers(r.teacher)) teacher_max = std::max(teacher_max, l.expansion);
  ok = ok && teacher_min == 12 && teacher_max == 12 && student_max <= cap;
  return {ok, "fingerprint " + r.teacher.fingerprint + " shared, teacher expansion " +
                  std::to_string(teacher_min) + ".." + std::to_string(teacher_max) +
                  ", student max " + std::to_string(student_max) + " (cap " +
                  std::to_string(cap) + ")"};
}

// 4 --------------------------------------------------------------------------

std::set<std::pair<std::size_t, std::size_t>> changed_sites(const Tensor& a, const Tensor& b) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  const std::size_t c = a.dim(1), h = a.dim(2), w = a.dim(3);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        if (a.at(0, k, y, x) != b.at(0, k, y, x)) out.insert({y, x});
  return out;
}

Verdict receptive_field() {
  ParameterStore store;
  Rng rng(4);
  const SpatialAttention core = SpatialAttention::create(store, "att", 4, rng);
  const Tensor base = testing::random_tensor({1, 4, 8, 8}, rng, 0.5, 1.5);
  int cross_ok = 0, global_ok = 0;
  for (std::size_t ph = 0; ph < 8; ++ph) {
    for (std::size_t pw = 0; pw < 8; ++pw) {
      Tensor bumped = base;
      for (std::size_t c = 0; c < 4; ++c) bumped.at(0, c, ph, pw) += 1.0;
      Graph g;
      Binder bind(g, store);
      std::set<std::pair<std::size_t, std::size_t>> cross;
      for (std::size_t i = 0; i < 8; ++i) {
        cross.insert({ph, i});
        cross.insert({i, pw});
      }
      const auto one = changed_sites(irnn_pass(bind, core.first, g.constant(base)).value(),
                                     irnn_pass(bind, core.first, g.constant(bumped)).value());
      const auto two = changed_sites(two_round_irnn(bind, core, g.constant(base)).value(),
                                     two_round_irnn(bind, core, g.constant(bumped)).value());
      cross_ok += one == cross;
      global_ok += two.size() == 64;
    }
  }
  return {cross_ok == 64 && global_ok == 64,
          "one round = cross at " + std::to_string(cross_ok) + "/64 sites, two rounds global at " +
              std::to_string(global_ok) + "/64 sites"};
}

// 5 --------------------------------------------------------------------------

Verdict metric_oracle() {
  std::mt19937_64 rng(5);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 6);
    std::uniform_int_distribution<int> d(0, k - 1);
    std::vector<int> truth(256), pred(256);
    for (int& v : truth) v = d(rng);
    for (int& v : pred) v = d(rng);
    ConfusionMatrix cm(k);
    cm.accumulate(truth, pred, 16);
    const auto want = testing::brute_force_metrics(truth, pred, k);
    worst = std::max({worst, std::abs(cm.pixel_accuracy() - want.pa),
                      std::abs(cm.mean_pixel_accuracy() - want.mpa),
                      std::abs(cm.mean_iou() - want.miou)});
  }
  ConfusionMatrix ex(2);
  ex.accumulate(std::vector<int>{0, 1, 1, 1}, std::vector<int>{0, 0, 1, 1}, 2);
  const bool example = ex.pixel_accuracy() == 0.75 &&
                       std::abs(ex.mean_pixel_accuracy() - 0.8333) < 1e-4 &&
                       std::abs(ex.mean_iou() - 0.5833) < 1e-4;
  return {worst <= 1e-12 && example,
          "50 random 16x16 pairs, worst deviation " + num(worst, 3) + "; 2x2 example PA " +
              num(ex.pixel_accuracy(), 4) + " mPA " + num(ex.mean_pixel_accuracy(), 4) +
              " mIoU " + num(ex.mean_iou(), 4)};
}

// 6 --------------------------------------------------------------------------

Verdict cost_formulas() {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::uint64_t> ch(1, 32), ks(0, 3), sp(1, 16);
  int flops_ok = 0, params_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint64_t ci = ch(rng), k = 2 * ks(rng) + 1, h = sp(rng), w = sp(rng), co = ch(rng);
    flops_ok += conv_flops(ci, k, h, w, co) == testing::loop_conv_flops(ci, k, h, w, co);
    // Checkpoint-size oracle: values stored for a real convolution layer.
    ParameterStore store;
    Rng init(trial);
    add_conv(store, "c", ci, co, k, init);
    params_ok += conv_params(ci, k, co) == store.total_values();
  }
  // Whole networks: analytic parameter count against the extracted checkpoint.
  SearchSpaceConfig cfg;
  const ParameterStore shared = create_supernet_weights(cfg, 6);
  int nets_ok = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ArchParams p(cfg);
    Rng r(seed);
    for (auto& [name, param] : p.logits())
      for (double& v : param.value.data()) v = -2 + 4 * uniform_open(r);
    NetworkSpec spec = derive_spec(p, seed % 2 ? Role::kTeacher : Role::kStudent);
    spec.attention = seed % 3 != 0;
    nets_ok += network_params(spec) == extract_weights(spec, shared).total_values();
  }
  const std::uint64_t f = conv_flops(3, 3, 4, 4, 8), q = conv_params(3, 3, 8);
  return {flops_ok == 100 && params_ok == 100 && nets_ok == 10 && f == 6784 && q == 224,
          "FLOPs exact " + std::to_string(flops_ok) + "/100, params exact " +
              std::to_string(params_ok) + "/100, networks " + std::to_string(nets_ok) +
              "/10; Ci=3,K=3,H=W=4,C0=8 -> " + std::to_string(f) + " FLOPs, " +
              std::to_string(q) + " params"};
}

// 7 --------------------------------------------------------------------------

Verdict latency_arithmetic() {
  const double v = regularized_latency(LayerMarginals{10, 5, 2});
  SearchSpaceConfig cfg;
  const LatencyTable table = testing::synthetic_table(cfg);
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ArchParams p(cfg);
    Rng r(seed);
    for (auto& [name, param] : p.logits())
      for (double& x : param.value.data()) x = -2 + 4 * uniform_open(r);
    const NetworkSpec spec = derive_spec(p, Role::kStudent);
    const double base = regularized_latency(table, spec);
    for (double c : {0.25, 3.0, 11.5}) {
      worst = std::max(worst, std::abs(regularized_latency(table.scaled(c), spec) - c * base) /
                                  (c * base));
    }
  }
  return {std::abs(v - 4.9992) < 1e-12 && worst <= 1e-12,
          "(10,5,2) ms -> " + num(v, 8) + " ms; worst relative scaling deviation " +
              num(worst, 3)};
}

// 9 and 10 share one paired-seed experiment ------------------------------

struct SeedOutcome {
  double teacher = 0, plain = 0, distilled = 0, no_attention = 0;
  std::uint64_t params_attention = 0, params_plain_head = 0;
};

struct Experiment {
  std::vector<SeedOutcome> seeds;
  double seconds = 0;
};

const Experiment& experiment() {
  static const Experiment e = [] {
    const auto t0 = Clock::now();
    const auto root = testing::scratch_dir("acc_experiment");
    const Dataset train = load_dataset(generate_synthetic(root, "train", 200, 64, 128, 4, 0));
    const Dataset val = load_dataset(generate_synthetic(root, "val", 50, 64, 128, 4, 1000003));
    SearchSpaceConfig cfg;
    const LatencyTable table = benchmark_table(cfg, 64, 128, 3);

    Experiment out;
    out.seeds.resize(5);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t s = next++; s < out.seeds.size(); s = next++) {
        SearchOptions so;
        so.seed = s;
        const SearchResult r = search(cfg, train, table, so);
        TrainConfig tc;
        tc.seed = s;
        auto final_miou = [](const TrainReport& rep) { return rep.epochs.back().val_miou; };
        SeedOutcome o;
        // Attention arm: teacher, then a student that starts from the trained
        // teacher's weights and learns against its softened outputs.
        ParameterStore teacher = r.weights;
        o.teacher = final_miou(train_teacher(r.teacher, teacher, train, &val, tc));
        ParameterStore distilled = teacher;
        o.distilled = final_miou(
            distill_student(r.student, distilled, r.teacher, teacher, train, &val, tc));
        // Plain student: same spec, trained from the search weights alone.
        ParameterStore plain = r.weights;
        o.plain = final_miou(train_student(r.student, plain, train, &val, tc));
        // Ablation arm: the same pipeline with the head removed throughout.
        NetworkSpec bare_teacher = r.teacher;
        bare_teacher.attention = false;
        NetworkSpec bare = r.student;
        bare.attention = false;
        ParameterStore bare_t = r.weights;
        train_teacher(bare_teacher, bare_t, train, &val, tc);
        ParameterStore bare_s = bare_t;
        o.no_attention =
            final_miou(distill_student(bare, bare_s, bare_teacher, bare_t, train, &val, tc));
        o.params_attention = network_params(r.student);
        o.params_plain_head = network_params(bare);
        out.seeds[s] = o;
      }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned threads = std::min<unsigned>(hw, 5);
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    out.seconds = seconds_since(t0);
    for (std::size_t s = 0; s < out.seeds.size(); ++s) {
      const auto& o = out.seeds[s];
      std::cout << "  seed " << s << ": teacher " << num(o.teacher, 4) << ", plain student "
                << num(o.plain, 4) << ", distilled " << num(o.distilled, 4)
                << ", distilled without attention " << num(o.no_attention, 4) << std::endl;
    }
    return out;
  }();
  return e;
}

Verdict distillation_benefit() {
  const Experiment& e = experiment();
  int wins = 0;
  for (const auto& o : e.seeds) wins += o.distilled >= o.plain;
  return {wins >= 4 && e.seconds < 1200,
          "distilled >= plain val mIoU in " + std::to_string(wins) + "/5 seeds, experiment " +
              num(e.seconds, 4) + " s"};
}

Verdict attention_ablation() {
  const Experiment& e = experiment();
  int wins = 0;
  double worst_ratio = 0;
  for (const auto& o : e.seeds) {
    wins += o.distilled >= o.no_attention;
    worst_ratio = std::max(worst_ratio, static_cast<double>(o.params_attention) /
                                            static_cast<double>(o.params_plain_head));
  }
  return {wins >= 4 && worst_ratio <= 1.10,
          "attention >= no attention val mIoU in " + std::to_string(wins) +
              "/5 seeds; parameter ratio " + num(worst_ratio, 5) + " (limit 1.10)"};
}

// 11 -------------------------------------------------------------------------

#ifdef MFS_CLI_PATH
int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = "\"" MFS_CLI_PATH "\" " + args + " >> \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

Verdict cli_smoke() {
#ifndef MFS_CLI_PATH
  return {false, "command-line tool not built (MFS_BUILD_TOOLS=OFF)"};
#else
  const auto t0 = Clock::now();
  const auto out = testing::scratch_dir("acc_cli");
  const auto log = out.parent_path() / "mfs_acc_cli.log";
  std::filesystem::remove(log);
  const std::string o = " --out \"" + out.string() + "\"";
  const std::vector<std::string> stages = {
      "gen-data" + o,       "bench-latency" + o, "search --iterations 200" + o,
      "train-teacher" + o,  "distill" + o,       "eval" + o};
  for (const auto& s : stages) {
    if (const int code = run_cli(s, log); code != 0) {
      return {false, "'" + s.substr(0, s.find(' ')) + "' exited with " + std::to_string(code) +
                         ", see " + log.string()};
    }
  }
  std::ifstream in(out / "eval" / "student.json");
  if (!in) return {false, "no metric report written"};
  const auto j = nlohmann::ordered_json::parse(in);
  int fields = 0, finite = 0;
  std::function<void(const nlohmann::ordered_json&)> walk = [&](const nlohmann::ordered_json& v) {
    if (v.is_object() || v.is_array()) {
      for (const auto& x : v) walk(x);
    } else if (!v.is_string() && !v.is_boolean()) {
      ++fields;
      finite += v.is_number() && std::isfinite(v.get<double>());
    }
  };
  walk(j);
  const auto& m = j.at("metrics");
  const bool complete = m.contains("pa") && m.contains("mpa") && m.contains("miou") &&
                        m.contains("class_iou") && j.contains("flops") && j.contains("parameters");
  const double elapsed = seconds_since(t0);
  return {complete && fields == finite && elapsed < 1800,
          "6 stages ok, " + std::to_string(finite) + "/" + std::to_string(fields) +
              " report fields finite, student mIoU " + num(m.at("miou").get<double>(), 4) + ", " +
              num(elapsed, 4) + " s"};
#endif
}

}  // namespace

int main() {
  std::cout << "acceptance suite" << std::endl;
  report(1, "gradient suite", gradient_suite);
  report(2, "Gumbel sampling fidelity", gumbel_fidelity);
  report(3, "simplex constraints after 500 search steps", simplex_constraints);
  report(4, "IRNN receptive field", receptive_field);
  report(5, "metric oracle equivalence", metric_oracle);
  report(6, "cost formulas", cost_formulas);
  report(7, "regularized latency arithmetic", latency_arithmetic);
  report(8, "shared-weight co-search", co_search);
  report(9, "distillation benefit", distillation_benefit);
  report(10, "attention ablation direction", attention_ablation);
  report(11, "end-to-end command-line smoke run", cli_smoke);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}

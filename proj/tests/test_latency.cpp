// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mfs/latency.hpp"
#include "mfs/network.hpp"
#include "mfs/search.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mfs;

namespace {

NetworkSpec random_spec(Role role, std::uint64_t seed) {
  SearchSpaceConfig cfg;
  ArchParams p(cfg);
  Rng rng(seed);
  for (auto& [name, param] : p.logits()) {
    for (double& v : param.value.data()) v = -2 + 4 * uniform_open(rng);
  }
  return derive_spec(p, role);
}

std::uint64_t loop_conv_params(std::uint64_t ci, std::uint64_t k, std::uint64_t co) {
  std::uint64_t n = 0;
  for (std::uint64_t o = 0; o < co; ++o) {
    for (std::uint64_t c = 0; c < ci; ++c)
      for (std::uint64_t a = 0; a < k * k; ++a) ++n;
    ++n;  // bias
  }
  return n;
}

}  // namespace

TEST_CASE("regularized latency arithmetic") {
  CHECK(std::abs(regularized_latency(LayerMarginals{10, 5, 2}) - 4.9992) < 1e-12);
  CHECK(regularized_latency(LayerMarginals{0, 0, 0}) == 0.0);
}

TEST_CASE("conv cost formulas") {
  CHECK(conv_flops(3, 3, 4, 4, 8) == 6784);
  CHECK(conv_params(3, 3, 8) == 224);
  CHECK(conv_params(1, 1, 1) == 2);
  CHECK(conv_flops(1, 1, 1, 1, 1) == 1);
}

TEST_CASE("conv cost formulas match loop-counting oracles") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> ch(1, 24), ks(0, 2), sp(1, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint64_t ci = ch(rng), k = 2 * ks(rng) + 1, h = sp(rng), w = sp(rng), co = ch(rng);
    CHECK(conv_flops(ci, k, h, w, co) == testing::loop_conv_flops(ci, k, h, w, co));
    CHECK(conv_params(ci, k, co) == loop_conv_params(ci, k, co));
  }
}

TEST_CASE("network parameter count equals the extracted checkpoint size") {
  SearchSpaceConfig cfg;
  const ParameterStore store = create_supernet_weights(cfg, 3);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    for (Role role : {Role::kTeacher, Role::kStudent}) {
      NetworkSpec spec = random_spec(role, seed);
      spec.attention = seed % 2 == 0;
      const ParameterStore own = extract_weights(spec, store);
      CHECK(network_params(spec) == own.total_values());
      // The extracted store drives the same network bit for bit.
      Rng rng(seed);
      const Tensor images = testing::random_tensor({1, 3, 32, 64}, rng, 0, 1);
      ParameterStore shared = store, copy = own;
      Graph g;
      Binder a(g, shared, false), b(g, copy, false);
      CHECK(network_forward(a, spec, g.constant(images)).value() ==
            network_forward(b, spec, g.constant(images)).value());
    }
  }
}

TEST_CASE("student costs never exceed the teacher's") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const NetworkSpec t = random_spec(Role::kTeacher, seed);
    const NetworkSpec s = random_spec(Role::kStudent, seed);
    CHECK(network_flops(s, 64, 128) <= network_flops(t, 64, 128));
    CHECK(network_params(s) <= network_params(t));
    NetworkSpec bare = s;
    bare.attention = false;
    CHECK(network_params(s) - network_params(bare) == adaptive_attention_params(16));
    CHECK(network_flops(bare, 64, 128) < network_flops(s, 64, 128));
  }
}

TEST_CASE("benchmark table is complete and positive") {
  SearchSpaceConfig cfg;
  const LatencyTable t = benchmark_table(cfg, 32, 64, 3);
  CHECK(t.size() == cfg.rates.size() * cfg.ops.size() * 2 * cfg.expansion_ratios.size());
  for (int r : cfg.rates)
    for (OpKind op : cfg.ops)
      for (int s : {1, 2})
        for (int x : cfg.expansion_ratios) {
          REQUIRE(t.contains({op, s, x, r}));
          CHECK(t.get({op, s, x, r}) > 0.0);
        }
  CHECK_THROWS_AS(benchmark_table(cfg, 32, 64, 2), std::invalid_argument);
}

TEST_CASE("latency table marginals, linearity and CSV") {
  SearchSpaceConfig cfg;
  const LatencyTable t = benchmark_table(cfg, 32, 64, 3, 1);
  // Marginals recomputed from raw entries.
  for (int r : cfg.rates) {
    for (OpKind op : cfg.ops) {
      double s = 0;
      int n = 0;
      for (const auto& [k, ms] : t.entries()) {
        if (k.op == op && k.resolution == r) {
          s += ms;
          ++n;
        }
      }
      CHECK(std::abs(t.op_marginal(op, r) - s / n) < 1e-15);
    }
  }
  const NetworkSpec spec = random_spec(Role::kStudent, 4);
  double manual = 0;
  for (const auto& [index, l] : spec.computed_layers()) {
    manual += regularized_latency(layer_marginals(t, l));
  }
  const double base = regularized_latency(t, spec);
  CHECK(std::abs(base - manual) <= 1e-12 * manual);
  for (double c : {0.5, 2.0, 17.0}) {
    CHECK(std::abs(regularized_latency(t.scaled(c), spec) - c * base) <= 1e-12 * c * base);
  }

  const LatencyTable back = LatencyTable::from_csv(t.to_csv());
  CHECK(back.entries() == t.entries());
  CHECK(t.to_csv().rfind("op,stride,expansion,resolution,ms\n", 0) == 0);
  const auto dir = testing::scratch_dir("latency_csv");
  t.save_csv(dir / "t.csv");
  CHECK(LatencyTable::load_csv(dir / "t.csv").entries() == t.entries());
}

TEST_CASE("latency table errors") {
  LatencyTable t;
  CHECK_THROWS_AS(t.set({OpKind::kSkip, 1, 4, 8}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(t.set({OpKind::kSkip, 1, 4, 8}, NAN), std::invalid_argument);
  t.set({OpKind::kSkip, 1, 4, 8}, 0.5);
  try {
    t.get({OpKind::kConv3x3, 2, 6, 16});
    FAIL("expected a throw");
  } catch (const std::out_of_range& e) {
    const std::string msg = e.what();
    CHECK(msg.find("conv3x3") != std::string::npos);
    CHECK(msg.find("16") != std::string::npos);
  }
  CHECK_THROWS_AS(regularized_latency(t, random_spec(Role::kStudent, 0)), std::out_of_range);
  CHECK_THROWS(LatencyTable::from_csv("op,stride\nskip,1\n"));
}

TEST_CASE("frames per second measurement") {
  SearchSpaceConfig cfg;
  const NetworkSpec spec = random_spec(Role::kStudent, 2);
  ParameterStore w = extract_weights(spec, create_supernet_weights(cfg, 0));
  const FpsResult one = measure_fps(spec, w, 32, 64, 1.0);
  CHECK(one.seconds >= 1.0);
  CHECK(one.frames > 0);
  CHECK(std::abs(one.fps - one.frames / one.seconds) < 1e-9);
  CHECK(std::abs(one.bound - 1.0 / one.seconds) < 1e-9);
  const FpsResult two = measure_fps(spec, w, 32, 64, 2.0);
  CHECK(std::abs(two.fps - one.fps) < 0.1 * one.fps);
  CHECK_THROWS_AS(measure_fps(spec, w, 32, 64, 0.5), std::invalid_argument);

  CostReport r{network_flops(spec, 32, 64), network_params(spec), one.fps, one.bound, 1.5};
  const auto j = r.to_json();
  for (const char* key : {"flops", "parameters", "fps", "fps_bound", "regularized_latency_ms"}) {
    CHECK(j.contains(key));
  }
  CHECK(r.to_text().find("parameters") != std::string::npos);
}

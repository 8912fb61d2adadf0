/*
 * Copyright 2026 The A3D-MoE Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "a3d/common.hpp"
#include "a3d/engine.hpp"

using namespace a3d;
using namespace a3d::engine;
using sched::LayerDag;
using sched::OpKind;
using sched::OpNode;

namespace {

SimConfig small_config(Policy policy = Policy::HROFS) {
  SimConfig c;
  c.model.num_layers = 6;
  c.workload.num_requests = 6;
  c.workload.prefill_min = 16;
  c.workload.prefill_max = 48;
  c.workload.decode_len = 10;
  c.workload.chunk_budget = 32;
  c.workload.seed = 3;
  c.policy = policy;
  return c;
}

OpNode gemm_node(int id, ResourceClass rc, std::int64_t M, std::int64_t K, std::int64_t N) {
  OpNode n;
  n.id = id;
  n.kind = OpKind::MoE_high;
  n.resource = rc;
  n.gemms = {{M, K, N, 1}};
  n.flops = 2.0 * double(M * K * N);
  return n;
}

// Lower bound on one op's duration from raw throughput alone: every PE of
// every usable instance doing one MAC per cycle, and the op's raw bytes at
// full bandwidth.
double op_lower_bound(const OpNode& n, const HardwareConfig& hw) {
  double macs_per_cycle = 0;
  switch (n.resource) {
    case ResourceClass::NSA_GEMM: macs_per_cycle = double(hw.nsa.pes() * hw.nsa.count); break;
    case ResourceClass::HBM_SIMD: macs_per_cycle = hw.hbm_simd_flops / 2 / hw.memory.frequency_hz; break;
    default: macs_per_cycle = double(hw.a3d.pes() * hw.a3d.count);
  }
  const double compute = n.flops / 2 / macs_per_cycle;
  double bw = hw.memory.bytes_per_cycle();
  if (n.resource == ResourceClass::HBM_SIMD) bw *= hw.hbm_simd_bandwidth_factor;
  return std::max(compute, n.hbm_bytes() / bw);
}

double longest_path(const LayerDag& dag, const HardwareConfig& hw) {
  std::vector<double> fin(dag.nodes.size(), 0.0);
  double best = 0;
  for (const auto& n : dag.nodes) {  // ids are topologically ordered
    double s = 0;
    for (int d : n.deps) s = std::max(s, fin[std::size_t(d)]);
    fin[std::size_t(n.id)] = s + op_lower_bound(n, hw);
    best = std::max(best, fin[std::size_t(n.id)]);
  }
  return best;
}

double nearest_rank_oracle(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  std::size_t k = 1;
  while (double(k) < q * double(v.size())) ++k;
  return v[k - 1];
}

}  // namespace

TEST(Execute, SingleTileOp) {
  HardwareConfig hw;
  LayerDag dag;
  dag.nodes.push_back(gemm_node(0, ResourceClass::A3D_GEMM, 16, 16, 16));
  memory::AccessLedger l;
  const auto ex = execute_layer(dag, hw, {}, {}, l);
  EXPECT_DOUBLE_EQ(ex.span, 19.0);
  EXPECT_EQ(ex.ops[0].instances, 1);
}

TEST(Execute, TwoOpsOneOrTwoInstances) {
  HardwareConfig hw;
  LayerDag dag;
  dag.nodes.push_back(gemm_node(0, ResourceClass::A3D_GEMM, 16, 16, 16));
  dag.nodes.push_back(gemm_node(1, ResourceClass::A3D_GEMM, 16, 16, 16));
  memory::AccessLedger l;
  hw.a3d.count = 1;
  EXPECT_DOUBLE_EQ(execute_layer(dag, hw, {}, {}, l).span, 38.0);
  hw.a3d.count = 2;
  EXPECT_DOUBLE_EQ(execute_layer(dag, hw, {}, {}, l).span, 19.0);
}

TEST(Execute, DependentOpsSerialize) {
  HardwareConfig hw;
  LayerDag dag;
  dag.nodes.push_back(gemm_node(0, ResourceClass::A3D_GEMM, 16, 16, 16));
  dag.nodes.push_back(gemm_node(1, ResourceClass::A3D_GEMM, 16, 16, 16));
  dag.nodes[1].deps = {0};
  memory::AccessLedger l;
  const auto ex = execute_layer(dag, hw, {}, {}, l);
  EXPECT_DOUBLE_EQ(ex.span, 38.0);
  EXPECT_DOUBLE_EQ(ex.ops[1].start, 19.0);
}

TEST(Execute, MemoryBoundOpRunsAtBandwidth) {
  HardwareConfig hw;
  LayerDag dag;
  auto n = gemm_node(0, ResourceClass::A3D_GEMM, 16, 16, 16);
  n.kv_bytes = 9600.0 * 1000;  // 1000 cycles at 9600 B/cycle, whole rows
  dag.nodes.push_back(n);
  memory::AccessLedger l;
  const auto ex = execute_layer(dag, hw, {}, {}, l);
  EXPECT_DOUBLE_EQ(ex.span, 1000.0);
  // Sum mode adds the compute tile.
  EXPECT_DOUBLE_EQ(execute_layer(dag, hw, {true, true}, {}, l).span, 1019.0);
  // Two such ops share the bandwidth.
  auto m = n;
  m.id = 1;
  dag.nodes.push_back(m);
  EXPECT_NEAR(execute_layer(dag, hw, {}, {}, l).span, 2000.0, 1e-6);
}

TEST(Execute, ZeroWorkNodesAreInstant) {
  HardwareConfig hw;
  LayerDag dag;
  OpNode b;
  b.kind = OpKind::barrier;
  dag.nodes.push_back(b);
  memory::AccessLedger l;
  EXPECT_EQ(execute_layer(dag, hw, {}, {}, l).span, 0.0);
}

TEST(Execute, CyclicDagRejected) {
  HardwareConfig hw;
  LayerDag dag;
  dag.nodes.push_back(gemm_node(0, ResourceClass::A3D_GEMM, 16, 16, 16));
  dag.nodes[0].deps = {0};
  memory::AccessLedger l;
  EXPECT_THROW(execute_layer(dag, hw, {}, {}, l), ContractError);
}

TEST(Execute, MissingCapacityIsAContractError) {
  HardwareConfig hw;
  LayerDag dag;
  dag.nodes.push_back(gemm_node(0, ResourceClass::HBM_SIMD, 1, 16, 16));
  memory::AccessLedger l;
  EXPECT_THROW(execute_layer(dag, hw, {}, {}, l), ContractError);
}

TEST(Percentile, Examples) {
  std::vector<double> s;
  for (int i = 1; i <= 100; ++i) s.push_back(i * 1e-3);
  EXPECT_DOUBLE_EQ(tbt_p99(s), 99e-3);
  EXPECT_DOUBLE_EQ(tbt_p99(std::vector<double>(37, 0.25)), 0.25);
  EXPECT_DOUBLE_EQ(tbt_p99({5.0}), 5.0);
  EXPECT_THROW(tbt_p99({}), MetricsError);
}

TEST(Percentile, MatchesFullSortOracle) {
  std::mt19937_64 rng(17);
  std::lognormal_distribution<double> d(0.0, 1.0);
  for (std::size_t n : {1u, 2u, 99u, 100u, 101u, 100000u}) {
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    EXPECT_EQ(tbt_p99(v), nearest_rank_oracle(v, 0.99)) << n;
  }
}

TEST(Throttle, Algebra) {
  RunMetrics m;
  m.makespan_s = 2.0;
  m.energy_pj = 400e12;  // 200 W
  m.tbt_samples = {0.1, 0.2};
  m.tbt_p99 = 0.2;
  m.throughput_tps = 50;
  EXPECT_EQ(apply_throttle(m, 250), 1.0);
  EXPECT_EQ(m.makespan_s, 2.0);
  EXPECT_DOUBLE_EQ(apply_throttle(m, 100), 0.5);
  EXPECT_DOUBLE_EQ(m.makespan_s, 4.0);
  EXPECT_DOUBLE_EQ(m.tbt_p99, 0.4);
  EXPECT_DOUBLE_EQ(m.tbt_samples[0], 0.2);
  EXPECT_DOUBLE_EQ(m.throughput_tps, 25);
  EXPECT_DOUBLE_EQ(m.energy_pj, 400e12);
  EXPECT_NEAR(m.avg_power_w, 100, 1e-9);
  EXPECT_DOUBLE_EQ(m.throttle, 0.5);
  // Already at the cap: a second pass is a no-op.
  EXPECT_DOUBLE_EQ(apply_throttle(m, 100), 1.0);
  EXPECT_THROW(apply_throttle(m, 0), ConfigError);
}

TEST(Throttle, LatencyRatioEqualsCapRatioWhenPowerBound) {
  auto c = small_config();
  c.hw.power_cap_cooled = c.hw.power_cap_uncooled = 1e9;
  const auto free = run(c);
  ASSERT_EQ(free.throttle, 1.0);
  c.hw.power_cap_cooled = free.avg_power_w / 2;
  c.hw.power_cap_uncooled = free.avg_power_w / 5;
  const auto cooled = run(c);
  c.cooling = false;
  const auto hot = run(c);
  EXPECT_NEAR(hot.tbt_p99 / cooled.tbt_p99, 2.5, 2.5 * 0.01);
  EXPECT_NEAR(hot.makespan_s / cooled.makespan_s, 2.5, 2.5 * 0.01);
  EXPECT_EQ(hot.energy_pj, cooled.energy_pj);
  EXPECT_EQ(hot.energy_pj, free.energy_pj);
}

TEST(Run, MinimalRequestHasOneSample) {
  SimConfig c;
  c.model.num_layers = 1;
  c.workload.num_requests = 1;
  c.workload.prefill_min = c.workload.prefill_max = 1;
  c.workload.decode_len = 2;
  const auto m = run(c);
  EXPECT_EQ(m.tbt_samples.size(), 1u);
  EXPECT_EQ(m.completed_tokens, 2);
  EXPECT_EQ(m.iterations, 2);
  EXPECT_GT(m.tbt_samples[0], 0);
}

TEST(Run, SampleCountAndThroughput) {
  for (auto p : {Policy::Conventional, Policy::HROFS}) {
    const auto c = small_config(p);
    const auto m = run(c);
    const auto reqs = generate_requests(c.workload);
    std::size_t want = 0;
    std::int64_t tokens = 0;
    for (const auto& r : reqs) {
      want += std::size_t(r.decode_len - 1);
      tokens += r.decode_len;
    }
    EXPECT_EQ(m.tbt_samples.size(), want);
    EXPECT_EQ(m.completed_tokens, tokens);
    EXPECT_DOUBLE_EQ(m.throughput_tps, double(tokens) / m.makespan_s);
    for (double s : m.tbt_samples) EXPECT_GT(s, 0);
    for (double t : m.ttft) EXPECT_GT(t, 0);
  }
}

TEST(Run, DeterministicJson) {
  auto c = small_config();
  c.workload.arrival_rate = 2000;
  const auto a = metrics_json(run(c));
  const auto b = metrics_json(run(c));
  EXPECT_EQ(a, b);
  c.workload.seed = 4;
  EXPECT_NE(metrics_json(run(c)), a);
}

TEST(Run, TimelineSoundness) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    for (auto p : {Policy::Conventional, Policy::HROFS}) {
      auto c = small_config(p);
      c.workload.seed = seed;
      std::int64_t layers = 0;
      run(c, [&](const LayerEvent& ev) {
        ++layers;
        const auto& dag = *ev.dag;
        const auto& ex = *ev.exec;
        for (const auto& n : dag.nodes) {
          const auto& t = ex.ops[std::size_t(n.id)];
          EXPECT_LE(t.start, t.finish);
          for (int d : n.deps) EXPECT_GE(t.start, ex.ops[std::size_t(d)].finish - 1e-9);
        }
        EXPECT_GE(ex.span, longest_path(dag, c.hw) * (1 - 1e-9));
        EXPECT_TRUE(ex.conservation_ok);
      });
      EXPECT_GT(layers, 0);
    }
  }
}

TEST(Run, NoInstanceIdlesWhileWorkWaits) {
  auto c = small_config(Policy::Conventional);
  c.hw.a3d.count = 4;
  c.hw.nsa.count = 2;
  const auto cap = class_capacity(c.hw, false);
  std::int64_t waited = 0;
  run(c, [&](const LayerEvent& ev) {
    const auto& dag = *ev.dag;
    const auto& ex = *ev.exec;
    for (const auto& n : dag.nodes) {
      if (n.zero_work()) continue;
      double ready = 0;
      for (int d : n.deps) ready = std::max(ready, ex.ops[std::size_t(d)].finish);
      const double start = ex.ops[std::size_t(n.id)].start;
      if (start <= ready + 1e-9) continue;
      ++waited;
      // It waited, so its class was full right after it became ready.
      std::int64_t busy = 0;
      for (const auto& o : dag.nodes) {
        const auto& t = ex.ops[std::size_t(o.id)];
        if (o.resource == n.resource && t.start <= ready + 1e-9 && t.finish > ready + 1e-9) busy += t.instances;
      }
      EXPECT_EQ(busy, cap[std::size_t(n.resource)]) << "node " << n.id;
    }
  });
  EXPECT_GT(waited, 0);
}

TEST(Run, EnergyIsTheLedgerSum) {
  const auto m = run(small_config());
  const auto& l = m.ledger;
  const double sum =
      l.dram.picojoules + l.sram.picojoules + l.tsv.picojoules + l.serdes.picojoules + l.noc.picojoules + l.mac.picojoules;
  EXPECT_EQ(m.energy_pj, sum);
  EXPECT_GT(l.dram.picojoules, 0);
  EXPECT_GT(l.mac.picojoules, 0);
  EXPECT_NEAR(m.avg_power_w, m.energy_pj * 1e-12 / m.makespan_s, 1e-9 * m.avg_power_w);
}

TEST(Run, ArrivalsBoundTokenTimes) {
  auto c = small_config();
  c.workload.arrival_rate = 500;
  const auto m = run(c);
  for (double t : m.ttft) EXPECT_GT(t, 0);
}

TEST(Run, HrofsNeverSlowerPerIteration) {
  auto c = small_config(Policy::Conventional);
  c.model.num_layers = 8;
  c.workload.num_requests = 12;
  const auto conv = run(c);
  c.policy = Policy::HROFS;
  const auto h = run(c);
  ASSERT_EQ(conv.iteration_spans.size(), h.iteration_spans.size());
  for (std::size_t i = 0; i < h.iteration_spans.size(); ++i)
    EXPECT_LE(h.iteration_spans[i], conv.iteration_spans[i] * (1 + 1e-12)) << i;
}

TEST(Run, CapacityOverflowIsAPlacementError) {
  auto c = small_config();
  c.hw.memory.hbm_capacity = std::int64_t(1) << 30;
  EXPECT_THROW(run(c), PlacementError);
}

TEST(Run, CsvRowMatchesHeader) {
  const auto m = run(small_config());
  const std::string header = metrics_csv_header();
  const auto row = metrics_csv_row(m);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
  EXPECT_EQ(row.rfind(m.config_id + ",hrofs,", 0), 0u);
}

TEST(Config, HashIdTracksCanonicalDump) {
  auto a = small_config();
  auto b = small_config();
  EXPECT_EQ(a.hash_id(), b.hash_id());
  b.predictor_accuracy = 0.8;
  EXPECT_NE(a.hash_id(), b.hash_id());
  const auto c = apply_sim_keys(a, {{"policy", "conventional"}, {"cooling", "off"}, {"plan_check", "0"}});
  EXPECT_EQ(c.policy, Policy::Conventional);
  EXPECT_FALSE(c.cooling);
  EXPECT_FALSE(c.plan_check);
  EXPECT_THROW(apply_sim_keys(a, {{"bogus", "1"}}), ConfigError);
}

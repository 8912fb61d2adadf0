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


#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "a3d/hardware.hpp"
#include "a3d/memory.hpp"
#include "a3d/scheduler.hpp"
#include "a3d/workload.hpp"

namespace a3d::engine {

struct SimConfig {
  ModelConfig model = olmoe_1b_7b();
  HardwareConfig hw;
  WorkloadConfig workload;
  Policy policy = Policy::HROFS;
  bool cooling = true;
  double predictor_accuracy = 0.9;
  std::int64_t hrofs_start_layer = 4;
  double theta_low = 2.0;
  double theta_high = 0.0;  // 0 selects the ridge point
  // Op duration = compute + memory instead of max(compute, memory).
  bool serial_memory = false;
  // Conventional policy normally uses the static A3D split; this lets it
  // share the pool like HR-OFS (isolates the effect of fusion alone).
  bool conventional_pooled = false;
  // HR-OFS times the fused plan against both barrier plans per layer and
  // commits the fastest. Off: the fused plan is always taken.
  bool plan_check = true;
  std::string config_id;  // empty: derived from a hash of the canonical dump

  void validate() const;
  // Flat key = value dump of every field; stable across runs.
  KeyValues canonical() const;
  std::string hash_id() const;
};

SimConfig apply_sim_keys(SimConfig base, const KeyValues& kv);

// Builds a full config from one merged key set. Recognised groups:
// `preset` (hardware preset), `hardware.*`, `model.*`, `workload.*`, `sim.*`.
// The policy defaults to the hardware preset's own unless `sim.policy` is set.
SimConfig sim_config_from_keys(const KeyValues& kv);

// Per-op placement on the layer timeline (cycles from layer start).
struct OpTiming {
  double start = 0;
  double finish = 0;
  std::int64_t instances = 0;
  double hbm_bytes = 0;
};

struct LayerExec {
  double span = 0;
  std::vector<OpTiming> ops;  // indexed by node id
  // Largest number of A3D instances busy at once, per class.
  std::int64_t peak_a3d_busy = 0;
  bool conservation_ok = true;  // busy + idle == pool at every event
  std::int64_t expert_dram_rows = 0;  // rows activated for expert weights
};

struct ExecOptions {
  bool pooled = true;  // A3D instances shared across the three A3D classes
  bool serial_memory = false;
};

// Capacity each class can ever use (indexed by ResourceClass).
std::vector<std::int64_t> class_capacity(const HardwareConfig& hw, bool pooled);

// Compute-only cycles for a node given k instances of its class.
double compute_cycles(const sched::OpNode& n, const HardwareConfig& hw, std::int64_t k);
// Most instances a node can use in parallel.
std::int64_t max_instances(const sched::OpNode& n, const HardwareConfig& hw);

// Fluid list scheduler for one layer DAG. HBM bandwidth is shared max-min
// fairly among running ops; memory traffic is charged to `ledger` when an op
// is dispatched. `placements` is indexed by expert id (may be empty when the
// DAG has no expert nodes).
LayerExec execute_layer(const sched::LayerDag& dag, const HardwareConfig& hw, const ExecOptions& opt,
                        const std::vector<memory::ExpertPlacement>& placements, memory::AccessLedger& ledger);

struct RunMetrics {
  std::string config_id;
  std::string policy;
  std::string hardware;
  std::uint64_t seed = 0;
  bool cooling = true;
  std::vector<double> tbt_samples;  // seconds
  std::vector<double> ttft;         // seconds, per request
  double tbt_p99 = 0;
  double throughput_tps = 0;
  double makespan_s = 0;
  double energy_pj = 0;
  double avg_power_w = 0;
  double throttle = 1.0;  // frequency scale applied (1 = none)
  std::int64_t completed_tokens = 0;
  std::int64_t iterations = 0;
  std::int64_t expert_fetches = 0;
  std::int64_t fp8_fetches = 0;
  std::int64_t mispredictions = 0;
  std::int64_t fused_layers = 0;  // layers that committed an HR-OFS fused plan
  std::int64_t expert_dram_accesses = 0;  // subset of ledger.dram.count
  std::vector<double> iteration_spans;  // seconds
  memory::AccessLedger ledger;
};

double tbt_p99(std::vector<double> samples);

// Scales frequency so energy / walltime <= cap. Returns the frequency factor
// (<= 1); times stretch by its inverse, energy is unchanged.
double apply_throttle(RunMetrics& m, double power_cap_w);

struct LayerEvent {
  std::int64_t iteration = 0;
  const IterationBatch* batch = nullptr;
  const RoutingTrace* trace = nullptr;
  const sched::LayerDag* dag = nullptr;
  const LayerExec* exec = nullptr;
};
using LayerObserver = std::function<void(const LayerEvent&)>;

RunMetrics run(const SimConfig& cfg, const LayerObserver& observer = {});

std::string metrics_json(const RunMetrics& m, bool include_samples = true);
const char* metrics_csv_header();
std::string metrics_csv_row(const RunMetrics& m);

}  // namespace a3d::engine

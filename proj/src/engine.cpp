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


#include "a3d/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "a3d/common.hpp"
#include "json.hpp"

namespace a3d::engine {

using sched::LayerDag;
using sched::OpKind;
using sched::OpNode;

void SimConfig::validate() const {
  model.validate();
  hw.validate();
  workload.validate();
  if (predictor_accuracy < 0 || predictor_accuracy > 1) throw ConfigError("sim.predictor_accuracy must be in [0, 1]");
  if (hrofs_start_layer < 1) throw ConfigError("sim.hrofs_start_layer must be >= 1");
  if (theta_low < 0 || theta_high < 0) throw ConfigError("sim thresholds must be >= 0");
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KeyValues SimConfig::canonical() const {
  KeyValues kv;
  auto put = [&](const std::string& k, const std::string& v) { kv[k] = v; };
  put("model.name", model.name);
  put("model.hidden_dim", std::to_string(model.hidden_dim));
  put("model.num_heads", std::to_string(model.num_heads));
  put("model.head_dim", std::to_string(model.head_dim));
  put("model.ffn_dim", std::to_string(model.ffn_dim));
  put("model.num_layers", std::to_string(model.num_layers));
  put("model.num_experts", std::to_string(model.num_experts));
  put("model.top_k", std::to_string(model.top_k));
  put("model.num_shared_experts", std::to_string(model.num_shared_experts));
  put("model.attention", to_string(model.attention));
  put("model.gqa_groups", std::to_string(model.gqa_groups));
  put("model.mla_latent_dim", std::to_string(model.mla_latent_dim));
  put("model.weight_bits", std::to_string(model.weight_bits));
  put("hardware.name", hw.name);
  put("hardware.nsa", std::to_string(hw.nsa.rows) + "x" + std::to_string(hw.nsa.count));
  put("hardware.a3d", std::to_string(hw.a3d.rows) + "x" + std::to_string(hw.a3d.count));
  const auto& m = hw.memory;
  put("hardware.memory", std::to_string(m.hbm_count) + "," + num(m.bandwidth_per_hbm) + "," +
                             std::to_string(m.hbm_capacity) + "," + std::to_string(m.type1_sram) + "," +
                             std::to_string(m.type2_sram) + "," + std::to_string(m.dram_row_bytes) + "," +
                             num(m.frequency_hz) + "," + (m.interposer ? "1" : "0") + "," +
                             num(m.interposer_distance_mm));
  put("hardware.energy", num(m.dram_pj_per_byte) + "," + num(m.tsv_pj_per_byte) + "," + num(m.serdes_pj_per_byte) +
                             "," + num(m.noc_pj_per_byte_mm) + "," + num(m.sram_pj_per_byte) + "," + num(m.mac_pj));
  put("hardware.simd", num(hw.hbm_simd_flops) + "," + std::to_string(hw.hbm_simd_lanes) + "," +
                           num(hw.hbm_simd_bandwidth_factor) + "," + num(hw.hbm_simd_mac_multiplier) + "," +
                           memory::to_string(hw.hbm_simd_path) + "," + (hw.hbm_simd_runs_moe ? "1" : "0"));
  put("hardware.nsa_path", memory::to_string(hw.nsa_path));
  put("hardware.partition", num(hw.part_gemm) + "," + num(hw.part_simd) + "," + num(hw.part_vcache));
  put("hardware.power_cap", num(hw.power_cap_cooled) + "," + num(hw.power_cap_uncooled));
  put("hardware.codec", std::string(hw.codec_enabled ? "1" : "0") + "," + num(hw.codec_threshold));
  const auto& w = workload;
  put("workload", std::to_string(w.num_requests) + "," + num(w.arrival_rate) + "," + std::to_string(w.prefill_min) +
                      "," + std::to_string(w.prefill_max) + "," + num(w.decode_ratio) + "," +
                      std::to_string(w.decode_len) + "," + std::to_string(w.chunk_budget) + "," +
                      std::to_string(w.seed) + "," + num(w.dirichlet_alpha) + "," + num(w.zipf_s) + "," +
                      w.popularity_file + "," + (w.per_token_normalization ? "per_token" : "per_layer_batch"));
  put("sim.policy", to_string(policy));
  put("sim.cooling", cooling ? "on" : "off");
  put("sim.predictor_accuracy", num(predictor_accuracy));
  put("sim.hrofs_start_layer", std::to_string(hrofs_start_layer));
  put("sim.theta", num(theta_low) + "," + num(theta_high));
  put("sim.serial_memory", serial_memory ? "1" : "0");
  put("sim.conventional_pooled", conventional_pooled ? "1" : "0");
  put("sim.plan_check", plan_check ? "1" : "0");
  return kv;
}

std::string SimConfig::hash_id() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [k, v] : canonical()) {
    for (char ch : k + "=" + v + "\n") {
      h ^= std::uint8_t(ch);
      h *= 1099511628211ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SimConfig apply_sim_keys(SimConfig c, const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    const std::string key = "sim." + k;
    if (k == "policy") c.policy = parse_policy(v);
    else if (k == "cooling") c.cooling = kv_bool(key, v);
    else if (k == "predictor_accuracy") c.predictor_accuracy = kv_double(key, v);
    else if (k == "hrofs_start_layer") c.hrofs_start_layer = kv_int(key, v);
    else if (k == "theta_low") c.theta_low = kv_double(key, v);
    else if (k == "theta_high") c.theta_high = kv_double(key, v);
    else if (k == "serial_memory") c.serial_memory = kv_bool(key, v);
    else if (k == "conventional_pooled") c.conventional_pooled = kv_bool(key, v);
    else if (k == "plan_check") c.plan_check = kv_bool(key, v);
    else if (k == "config_id") c.config_id = v;
    else throw ConfigError("unknown key: " + key);
  }
  return c;
}

SimConfig sim_config_from_keys(const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "preset") continue;
    const auto dot = k.find('.');
    const auto group = dot == std::string::npos ? k : k.substr(0, dot);
    if (group != "hardware" && group != "model" && group != "workload" && group != "sim")
      throw ConfigError("unknown key: " + k);
  }
  SimConfig c;
  auto hw = with_prefix(kv, "hardware");
  if (auto it = kv.find("preset"); it != kv.end() && !hw.count("preset")) hw["preset"] = it->second;
  c.hw = apply_hardware_keys(c.hw, hw);
  c.model = apply_model_keys(c.model, with_prefix(kv, "model"));
  c.workload = apply_workload_keys(c.workload, with_prefix(kv, "workload"));
  c.policy = c.hw.default_policy;
  c = apply_sim_keys(c, with_prefix(kv, "sim"));
  c.validate();
  return c;
}

std::vector<std::int64_t> class_capacity(const HardwareConfig& hw, bool pooled) {
  std::vector<std::int64_t> cap(kNumResourceClasses, 0);
  cap[std::size_t(ResourceClass::NSA_GEMM)] = hw.instances(ResourceClass::NSA_GEMM);
  cap[std::size_t(ResourceClass::HBM_SIMD)] = hw.instances(ResourceClass::HBM_SIMD);
  if (pooled) {
    for (auto c : {ResourceClass::A3D_GEMM, ResourceClass::A3D_SIMD, ResourceClass::A3D_SIMD_VCACHE})
      cap[std::size_t(c)] = hw.a3d.count;
  } else {
    const auto p = hw.static_partition();
    cap[std::size_t(ResourceClass::A3D_GEMM)] = p[0];
    cap[std::size_t(ResourceClass::A3D_SIMD)] = p[1];
    cap[std::size_t(ResourceClass::A3D_SIMD_VCACHE)] = p[2];
  }
  return cap;
}

namespace {

bool is_a3d(ResourceClass c) {
  return c == ResourceClass::A3D_GEMM || c == ResourceClass::A3D_SIMD || c == ResourceClass::A3D_SIMD_VCACHE;
}

struct Segment {
  std::int64_t tiles = 0;
  std::int64_t cycles_per_tile = 0;
};

std::vector<Segment> segments(const OpNode& n, const HardwareConfig& hw) {
  std::vector<Segment> out;
  if (n.resource == ResourceClass::HBM_SIMD) return out;
  const bool nsa = n.resource == ResourceClass::NSA_GEMM;
  const auto& arr = nsa ? hw.nsa : hw.a3d;
  systolic::ScheduleMode mode = systolic::ScheduleMode::GEMM;
  if (n.resource == ResourceClass::A3D_SIMD || n.resource == ResourceClass::A3D_SIMD_VCACHE) {
    mode = systolic::ScheduleMode::GEMV;
  } else if (nsa && n.kind == OpKind::decode_attn) {
    mode = systolic::ScheduleMode::GEMV;
  }
  for (const auto& g : n.gemms) {
    const auto s = systolic::schedule_gemm(g.M, g.K, g.N, arr, mode);
    out.push_back({s.tiles * g.count, s.cycles_per_tile});
  }
  return out;
}

double simd_cycles_per_flop_lane(const HardwareConfig& hw) {
  return double(hw.hbm_simd_lanes) * hw.memory.frequency_hz / hw.hbm_simd_flops;
}

}  // namespace

double compute_cycles(const OpNode& n, const HardwareConfig& hw, std::int64_t k) {
  if (k < 1) throw ContractError("compute_cycles needs k >= 1");
  if (n.resource == ResourceClass::HBM_SIMD) return n.flops * simd_cycles_per_flop_lane(hw) / double(k);
  double c = 0;
  for (const auto& s : segments(n, hw)) c += double(ceil_div(s.tiles, k) * s.cycles_per_tile);
  return c;
}

std::int64_t max_instances(const OpNode& n, const HardwareConfig& hw) {
  if (n.resource == ResourceClass::HBM_SIMD) return hw.hbm_simd_lanes;
  std::int64_t m = 1;
  for (const auto& s : segments(n, hw)) m = std::max(m, s.tiles);
  return m;
}

namespace {

memory::TransportPath path_for(ResourceClass c, const HardwareConfig& hw) {
  if (c == ResourceClass::NSA_GEMM) return hw.nsa_path;
  if (c == ResourceClass::HBM_SIMD) return hw.hbm_simd_path;
  return memory::TransportPath::TSV;
}

// Charges every byte and MAC of `n` to the ledger; returns HBM bytes moved.
double charge(const OpNode& n, const HardwareConfig& hw, const std::vector<memory::ExpertPlacement>& placements,
              memory::AccessLedger& ledger, std::int64_t& expert_rows) {
  const auto& mc = hw.memory;
  const auto path = path_for(n.resource, hw);
  double bytes = 0;
  if (n.expert >= 0) {
    const auto& p = placements.at(std::size_t(n.expert));
    const auto rows_before = ledger.dram.count;
    const auto f = memory::fetch_expert(p, n.precision, path, mc, ledger);
    bytes += double(f.bytes);
    if (n.mispredicted) bytes += double(memory::fetch_expert(p, memory::Precision::BF16, path, mc, ledger).bytes);
    if (n.resource == ResourceClass::A3D_SIMD_VCACHE) {
      // Each token re-reads the resident panels from the V-Cache.
      const std::int64_t eb = n.precision == memory::Precision::FP8 ? 1 : 2;
      std::int64_t spill = 0;
      for (const auto& g : n.gemms) {
        const auto jobs = systolic::decompose_low_ai(g.M, g.K, g.N, mc.type2_sram, eb);
        spill += (systolic::hbm_weight_bytes(jobs) - g.K * g.N * eb) * g.count;
      }
      if (spill > 0) bytes += double(memory::fetch_dram(spill, path, mc, ledger).bytes);
      memory::record_sram(std::int64_t(n.weight_bytes) * n.expert_tokens, mc, ledger);
    }
    expert_rows += ledger.dram.count - rows_before;
  } else if (n.weight_bytes > 0) {
    bytes += double(memory::fetch_dram(std::int64_t(n.weight_bytes), path, mc, ledger).bytes);
  }
  if (n.kv_bytes > 0) bytes += double(memory::fetch_dram(std::int64_t(n.kv_bytes), path, mc, ledger).bytes);
  if (n.act_bytes > 0) memory::record_sram(std::int64_t(n.act_bytes), mc, ledger);
  if (n.flops > 0) {
    memory::record_macs(n.flops / 2, mc, ledger,
                        n.resource == ResourceClass::HBM_SIMD ? hw.hbm_simd_mac_multiplier : 1.0);
  }
  return bytes;
}

struct Running {
  int id = 0;
  double remaining = 1.0;  // fraction of the op left
  double compute = 0;      // cycles at the granted instance count
  double bytes = 0;
  int pool = 0;            // 0 = external HBM bandwidth, 1 = in-stack SIMD bandwidth
  double rate = 0;
};

// Max-min fair split of `capacity` among demands; returns grants.
std::vector<double> water_fill(const std::vector<double>& demand, double capacity) {
  std::vector<double> grant(demand.size(), 0.0);
  std::vector<std::size_t> idx(demand.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return demand[a] < demand[b]; });
  double left = capacity;
  std::size_t n = idx.size();
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const double share = left / double(n - j);
    const double g = std::min(demand[idx[j]], share);
    grant[idx[j]] = g;
    left -= g;
  }
  return grant;
}

}  // namespace

LayerExec execute_layer(const LayerDag& dag, const HardwareConfig& hw, const ExecOptions& opt,
                        const std::vector<memory::ExpertPlacement>& placements, memory::AccessLedger& ledger) {
  dag.validate();
  const auto cap = class_capacity(hw, opt.pooled);
  const bool pooled = opt.pooled;
  const double bw[2] = {hw.memory.bytes_per_cycle(), hw.memory.bytes_per_cycle() * hw.hbm_simd_bandwidth_factor};

  const std::size_t n = dag.nodes.size();
  LayerExec ex;
  ex.ops.assign(n, {});
  std::vector<int> waiting(n, 0);
  std::vector<std::vector<int>> children(n);
  for (const auto& node : dag.nodes) {
    waiting[std::size_t(node.id)] = int(node.deps.size());
    for (int d : node.deps) children[std::size_t(d)].push_back(node.id);
  }
  std::vector<int> ready;  // kept sorted by id (priority)
  for (std::size_t i = 0; i < n; ++i)
    if (waiting[i] == 0) ready.push_back(int(i));

  std::vector<std::int64_t> idle = cap;
  std::int64_t a3d_idle = hw.a3d.count;
  std::vector<std::int64_t> busy(kNumResourceClasses, 0);
  std::vector<Running> running;
  std::size_t done = 0;
  double now = 0;

  auto available = [&](ResourceClass c) -> std::int64_t {
    if (pooled && is_a3d(c)) return a3d_idle;
    return idle[std::size_t(c)];
  };
  auto take = [&](ResourceClass c, std::int64_t k) {
    if (pooled && is_a3d(c)) a3d_idle -= k;
    else idle[std::size_t(c)] -= k;
    busy[std::size_t(c)] += k;
  };
  auto give = [&](ResourceClass c, std::int64_t k) {
    if (pooled && is_a3d(c)) a3d_idle += k;
    else idle[std::size_t(c)] += k;
    busy[std::size_t(c)] -= k;
  };

  auto complete = [&](int id) {
    ex.ops[std::size_t(id)].finish = now;
    ++done;
    for (int ch : children[std::size_t(id)])
      if (--waiting[std::size_t(ch)] == 0) ready.insert(std::lower_bound(ready.begin(), ready.end(), ch), ch);
  };

  while (done < n) {
    // Dispatch in priority order; zero-work nodes finish on the spot.
    bool progressed = true;
    while (progressed) {
      progressed = false;
      for (std::size_t i = 0; i < ready.size(); ++i) {
        const auto& node = dag.nodes[std::size_t(ready[i])];
        if (node.zero_work()) {
          const int id = node.id;
          ready.erase(ready.begin() + std::ptrdiff_t(i));
          ex.ops[std::size_t(id)].start = now;
          complete(id);
          progressed = true;
          break;
        }
        if (cap[std::size_t(node.resource)] < 1) {
          throw ContractError(std::string("no capacity for resource class ") + to_string(node.resource));
        }
        const auto avail = available(node.resource);
        if (avail < 1) continue;
        const double bytes = charge(node, hw, placements, ledger, ex.expert_dram_rows);
        const int pool = node.resource == ResourceClass::HBM_SIMD ? 1 : 0;
        const auto kmax = std::min(avail, max_instances(node, hw));
        std::int64_t k = kmax;
        if (bytes > 0 && !node.gemms.empty()) {
          // Fewest instances that keep the op memory bound at full bandwidth.
          const double mem = bytes / bw[pool];
          std::int64_t lo = 1, hi = kmax;
          while (lo < hi) {
            const auto mid = (lo + hi) / 2;
            if (compute_cycles(node, hw, mid) <= mem) hi = mid;
            else lo = mid + 1;
          }
          k = lo;
        }
        take(node.resource, k);
        Running r;
        r.id = node.id;
        r.compute = node.gemms.empty() && node.flops == 0 ? 0.0 : compute_cycles(node, hw, k);
        r.bytes = bytes;
        r.pool = pool;
        running.push_back(r);
        auto& t = ex.ops[std::size_t(node.id)];
        t.start = now;
        t.instances = k;
        t.hbm_bytes = bytes;
        ready.erase(ready.begin() + std::ptrdiff_t(i));
        progressed = true;
        break;
      }
    }
    std::int64_t a3d_busy = busy[1] + busy[2] + busy[3];
    ex.peak_a3d_busy = std::max(ex.peak_a3d_busy, a3d_busy);
    if (pooled && a3d_busy + a3d_idle != hw.a3d.count) ex.conservation_ok = false;
    if (done == n) break;
    if (running.empty()) throw ContractError("scheduler stalled: ready ops but nothing runs (cyclic DAG?)");

    // Bandwidth shares, then progress rates.
    for (int pool = 0; pool < 2; ++pool) {
      std::vector<double> demand;
      std::vector<std::size_t> who;
      for (std::size_t i = 0; i < running.size(); ++i) {
        const auto& r = running[i];
        if (r.pool != pool || r.bytes <= 0) continue;
        demand.push_back(r.compute > 0 ? r.bytes / r.compute : std::numeric_limits<double>::infinity());
        who.push_back(i);
      }
      const auto grant = water_fill(demand, bw[pool]);
      for (std::size_t j = 0; j < who.size(); ++j) {
        auto& r = running[who[j]];
        const double mem_time = r.bytes / grant[j];
        r.rate = 1.0 / (opt.serial_memory ? r.compute + mem_time : std::max(r.compute, mem_time));
      }
    }
    for (auto& r : running)
      if (r.bytes <= 0) r.rate = 1.0 / r.compute;

    double dt = std::numeric_limits<double>::infinity();
    for (const auto& r : running) dt = std::min(dt, r.remaining / r.rate);
    now += dt;
    std::vector<int> finished;
    for (auto& r : running) {
      r.remaining -= r.rate * dt;
      if (r.remaining <= 1e-12 * std::max(1.0, r.rate * dt) || r.remaining / r.rate <= 1e-9) finished.push_back(r.id);
    }
    std::sort(finished.begin(), finished.end());
    for (int id : finished) {
      auto it = std::find_if(running.begin(), running.end(), [&](const Running& r) { return r.id == id; });
      give(dag.nodes[std::size_t(id)].resource, ex.ops[std::size_t(id)].instances);
      running.erase(it);
      complete(id);
    }
  }
  ex.span = now;
  return ex;
}

double tbt_p99(std::vector<double> samples) {
  if (samples.empty()) throw MetricsError("tbt_p99 of an empty sample set");
  std::sort(samples.begin(), samples.end());
  const auto rank = std::size_t(std::ceil(0.99 * double(samples.size())));
  return samples[std::max<std::size_t>(rank, 1) - 1];
}

double apply_throttle(RunMetrics& m, double cap) {
  if (!(cap > 0)) throw ConfigError("power cap must be > 0");
  if (!(m.makespan_s > 0)) return 1.0;
  const double p = m.energy_pj * 1e-12 / m.makespan_s;
  if (p <= cap) return 1.0;
  const double f = cap / p;
  const double stretch = 1.0 / f;
  for (auto& s : m.tbt_samples) s *= stretch;
  for (auto& s : m.ttft) s *= stretch;
  for (auto& s : m.iteration_spans) s *= stretch;
  m.makespan_s *= stretch;
  m.tbt_p99 *= stretch;
  m.throughput_tps *= f;
  m.avg_power_w = m.energy_pj * 1e-12 / m.makespan_s;
  m.throttle *= f;
  return f;
}

RunMetrics run(const SimConfig& cfg, const LayerObserver& observer) {
  cfg.validate();
  const auto& model = cfg.model;
  const auto& hw = cfg.hw;
  const auto& wl = cfg.workload;
  const double freq = hw.memory.frequency_hz;

  // Static placement of every expert, then a capacity check for the rest.
  memory::RowAllocator alloc(hw.memory);
  std::vector<std::vector<memory::ExpertPlacement>> placements(std::size_t(model.num_layers));
  for (std::int64_t l = 0; l < model.num_layers; ++l)
    for (std::int64_t e = 0; e < model.experts_per_layer(); ++e)
      placements[std::size_t(l)].push_back(alloc.place_expert(model.expert_weight_bytes(), l, e));
  auto requests = generate_requests(wl);
  const double b = double(model.bytes_per_element()), D = double(model.hidden_dim), kv = double(model.kv_dim());
  const double dense = double(model.num_layers) * (D * (D + 2 * kv) + D * D + D * double(model.num_experts)) * b;
  double kv_total = 0;
  for (const auto& r : requests) kv_total += double(r.prefill_len + r.decode_len) * 2 * kv * b * double(model.num_layers);
  if (double(alloc.rows_used() * hw.memory.dram_row_bytes) + dense + kv_total > double(hw.memory.hbm_capacity)) {
    throw PlacementError("model weights plus KV cache exceed HBM capacity");
  }

  Popularity pop = wl.popularity_file.empty() ? zipf_popularity(model, wl.zipf_s)
                                               : load_popularity_csv(wl.popularity_file, model, wl.zipf_s);
  const auto th = sched::Thresholds{cfg.theta_high > 0 ? cfg.theta_high : sched::default_thresholds(hw).high, cfg.theta_low};
  const bool pooled = cfg.policy == Policy::HROFS || cfg.conventional_pooled;
  const auto capacity = class_capacity(hw, pooled);
  const sched::Predictor predictor{cfg.predictor_accuracy, wl.seed};

  RunMetrics m;
  m.config_id = cfg.config_id.empty() ? cfg.hash_id() : cfg.config_id;
  m.policy = to_string(cfg.policy);
  m.hardware = hw.name;
  m.seed = wl.seed;
  m.cooling = cfg.cooling;
  m.ttft.assign(requests.size(), 0.0);

  double now = 0;  // cycles
  std::int64_t iteration = 0;
  std::size_t finished = 0;
  while (finished < requests.size()) {
    auto batch = build_iteration(requests, wl.chunk_budget, now / freq, iteration);
    if (batch.empty()) {
      double next = std::numeric_limits<double>::infinity();
      for (const auto& r : requests)
        if (r.state != RequestState::Done && r.arrival_time * freq > now) next = std::min(next, r.arrival_time * freq);
      if (!std::isfinite(next)) throw ContractError("no runnable request and none arriving");
      now = next;
      continue;
    }
    const auto trace = sample_routing(model, batch.total_tokens(), pop, wl.dirichlet_alpha,
                                      wl.seed * 0x9E3779B97F4A7C15ULL + std::uint64_t(iteration) + 1,
                                      wl.per_token_normalization);
    std::vector<double> token_done(std::size_t(batch.total_tokens()), 0.0);
    double offset = 0;
    for (std::int64_t layer = 0; layer < model.num_layers; ++layer) {
      sched::LayerContext ctx;
      ctx.model = &model;
      ctx.hw = &hw;
      ctx.batch = &batch;
      ctx.trace = &trace;
      ctx.layer = layer;
      ctx.iteration = iteration;
      ctx.codec = hw.codec_enabled;
      ctx.codec_threshold = hw.codec_threshold;
      ctx.thresholds = th;
      ctx.hrofs_start_layer = cfg.hrofs_start_layer;
      const auto& place = placements[std::size_t(layer)];
      sched::LayerDag dag;
      LayerExec ex;
      if (cfg.policy == Policy::HROFS) {
        dag = sched::build_hrofs(ctx, predictor);
        sched::assign_resources(dag, hw, capacity);
        if (cfg.plan_check) {
          // Candidates run on scratch ledgers; only the committed one is charged.
          memory::AccessLedger best_ledger;
          ex = execute_layer(dag, hw, {true, cfg.serial_memory}, place, best_ledger);
          for (const bool pool : {true, false}) {
            if (pool && !dag.fused) continue;  // already the pooled barrier plan
            auto alt = sched::build_conventional(ctx);
            sched::assign_resources(alt, hw, class_capacity(hw, pool));
            memory::AccessLedger alt_ledger;
            auto alt_ex = execute_layer(alt, hw, {pool, cfg.serial_memory}, place, alt_ledger);
            if (alt_ex.span < ex.span) {
              dag = std::move(alt);
              ex = std::move(alt_ex);
              best_ledger = alt_ledger;
            }
          }
          m.ledger.add(best_ledger);
        } else {
          ex = execute_layer(dag, hw, {pooled, cfg.serial_memory}, place, m.ledger);
        }
        if (dag.fused) ++m.fused_layers;
      } else {
        dag = sched::build_conventional(ctx);
        sched::assign_resources(dag, hw, capacity);
        ex = execute_layer(dag, hw, {pooled, cfg.serial_memory}, place, m.ledger);
      }
      m.expert_dram_accesses += ex.expert_dram_rows;
      for (const auto& node : dag.nodes) {
        if (node.expert < 0) continue;
        ++m.expert_fetches;
        if (node.precision == memory::Precision::FP8) ++m.fp8_fetches;
        if (node.mispredicted) ++m.mispredictions;
      }
      if (layer == model.num_layers - 1) {
        for (const auto& node : dag.nodes)
          for (auto t : node.tokens)
            token_done[std::size_t(t)] = std::max(token_done[std::size_t(t)], offset + ex.ops[std::size_t(node.id)].finish);
      }
      if (observer) observer({iteration, &batch, &trace, &dag, &ex});
      offset += ex.span;
    }
    const double start = now;
    now += offset;
    m.iteration_spans.push_back(offset / freq);

    std::int64_t tok = 0;
    for (const auto& slot : batch.decode_tokens) {
      auto& r = requests[std::size_t(slot.request_id)];
      const double t = (start + token_done[std::size_t(tok++)]) / freq;
      m.tbt_samples.push_back(t - r.token_times.back());
      r.token_times.push_back(t);
      ++m.completed_tokens;
      if (++r.decode_progress >= r.decode_len) {
        r.state = RequestState::Done;
        ++finished;
      }
    }
    for (const auto& ch : batch.prefill_chunks) {
      auto& r = requests[std::size_t(ch.request_id)];
      r.state = RequestState::Prefilling;
      r.prefill_progress += ch.tokens;
      tok += ch.tokens;
      if (r.prefill_progress == r.prefill_len) {
        const double t = (start + token_done[std::size_t(tok - 1)]) / freq;
        r.token_times.push_back(t);
        m.ttft[std::size_t(r.id)] = t - r.arrival_time;
        ++m.completed_tokens;
        r.decode_progress = 1;
        r.state = RequestState::Decoding;
        if (r.decode_progress >= r.decode_len) {
          r.state = RequestState::Done;
          ++finished;
        }
      }
    }
    ++iteration;
  }

  m.iterations = iteration;
  double first_arrival = std::numeric_limits<double>::infinity();
  for (const auto& r : requests) first_arrival = std::min(first_arrival, r.arrival_time);
  m.makespan_s = now / freq - (requests.empty() ? 0.0 : first_arrival);
  m.energy_pj = m.ledger.total_pj();
  m.throughput_tps = m.makespan_s > 0 ? double(m.completed_tokens) / m.makespan_s : 0.0;
  m.avg_power_w = m.makespan_s > 0 ? m.energy_pj * 1e-12 / m.makespan_s : 0.0;
  m.tbt_p99 = m.tbt_samples.empty() ? 0.0 : tbt_p99(m.tbt_samples);
  apply_throttle(m, cfg.cooling ? hw.power_cap_cooled : hw.power_cap_uncooled);
  return m;
}

std::string metrics_json(const RunMetrics& m, bool include_samples) {
  nlohmann::ordered_json j;
  j["config_id"] = m.config_id;
  j["policy"] = m.policy;
  j["hardware"] = m.hardware;
  j["seed"] = m.seed;
  j["cooling"] = m.cooling;
  j["tbt_p99_s"] = m.tbt_p99;
  j["tbt_sample_count"] = m.tbt_samples.size();
  j["throughput_tps"] = m.throughput_tps;
  j["makespan_s"] = m.makespan_s;
  j["energy_pj"] = m.energy_pj;
  j["avg_power_w"] = m.avg_power_w;
  j["throttle"] = m.throttle;
  j["completed_tokens"] = m.completed_tokens;
  j["iterations"] = m.iterations;
  j["dram_accesses"] = m.ledger.dram.count;
  j["dram_bytes"] = m.ledger.dram.bytes;
  j["expert_dram_accesses"] = m.expert_dram_accesses;
  j["expert_fetches"] = m.expert_fetches;
  j["fp8_fetches"] = m.fp8_fetches;
  j["mispredictions"] = m.mispredictions;
  j["fused_layers"] = m.fused_layers;
  auto& e = j["energy_breakdown_pj"];
  auto cat = [](const memory::LedgerEntry& x) {
    return nlohmann::ordered_json{{"count", x.count}, {"bytes", x.bytes}, {"picojoules", x.picojoules}};
  };
  e["dram"] = cat(m.ledger.dram);
  e["sram"] = cat(m.ledger.sram);
  e["tsv"] = cat(m.ledger.tsv);
  e["serdes"] = cat(m.ledger.serdes);
  e["noc"] = cat(m.ledger.noc);
  e["mac"] = cat(m.ledger.mac);
  j["ttft_s"] = m.ttft;
  if (include_samples) {
    j["tbt_samples_s"] = m.tbt_samples;
    j["iteration_spans_s"] = m.iteration_spans;
  }
  return j.dump(2);
}

const char* metrics_csv_header() { return "config_id,policy,tbt_p99_ms,throughput_tps,energy_mj,dram_accesses,throttle"; }

std::string metrics_csv_row(const RunMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, ",%.9g,%.9g,%.9g,%lld,%.9g", m.tbt_p99 * 1e3, m.throughput_tps, m.energy_pj * 1e-9,
                static_cast<long long>(m.ledger.dram.count), m.throttle);
  return m.config_id + "," + m.policy + buf;
}

}  // namespace a3d::engine

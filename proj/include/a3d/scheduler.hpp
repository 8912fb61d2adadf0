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

// Per-layer operation DAGs for one serving iteration, under the barrier
// (conventional) policy and the fused HR-OFS policy.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "a3d/hardware.hpp"
#include "a3d/memory.hpp"
#include "a3d/workload.hpp"

namespace a3d::sched {

enum class OpKind { QKV_gen, prefill_attn, decode_attn, out_proj, gating, barrier, MoE_high, MoE_mid, MoE_low };
const char* to_string(OpKind k);
inline bool is_moe(OpKind k) { return k == OpKind::MoE_high || k == OpKind::MoE_mid || k == OpKind::MoE_low; }
inline bool is_attention(OpKind k) { return k == OpKind::prefill_attn || k == OpKind::decode_attn; }

enum class AiLevel { High, Mid, Low };
const char* to_string(AiLevel a);

struct AiClass {
  std::int32_t expert = 0;
  std::int64_t tokens = 0;
  AiLevel level = AiLevel::Low;
};

struct Thresholds {
  double high = 0.0;  // t_j >= high -> High
  double low = 2.0;   // t_j <= low -> Low
};
Thresholds default_thresholds(const HardwareConfig& hw);

// Experts with t_j > 0, in expert-id order.
std::vector<AiClass> classify_experts(const std::vector<std::int64_t>& tokens_per_expert, const Thresholds& th);
AiLevel classify(std::int64_t tokens, const Thresholds& th);

enum class Bottleneck { DecodeOnly, DecodeDominant, PrefillDominant };
const char* to_string(Bottleneck b);
Bottleneck detect_bottleneck(const LayerCostProfile& profile, const HardwareConfig& hw);

struct Gemm {
  std::int64_t M = 1, K = 1, N = 1, count = 1;
};

struct OpNode {
  int id = 0;
  OpKind kind = OpKind::barrier;
  std::int64_t layer = 0;
  ResourceClass resource = ResourceClass::NSA_GEMM;
  std::vector<std::int64_t> tokens;  // batch token indices covered
  std::vector<Gemm> gemms;
  double flops = 0;
  double weight_bytes = 0;  // from HBM, after codec gating
  double kv_bytes = 0;      // from HBM
  double act_bytes = 0;     // on-chip
  double extra_fetch_bytes = 0;  // misprediction reload
  std::int32_t expert = -1;
  std::int64_t expert_tokens = 0;
  bool shared = false;
  memory::Precision precision = memory::Precision::BF16;
  bool mispredicted = false;
  std::vector<int> deps;

  double hbm_bytes() const { return weight_bytes + kv_bytes + extra_fetch_bytes; }
  bool zero_work() const { return gemms.empty() && hbm_bytes() == 0; }
};

struct LayerDag {
  std::int64_t layer = 0;
  Bottleneck bottleneck = Bottleneck::DecodeOnly;
  bool fused = false;
  std::vector<OpNode> nodes;  // index == id, listed in dispatch priority order

  // Throws ContractError on a dangling or forward dependency (which would
  // allow a cycle).
  void validate() const;
};

struct Predictor {
  double accuracy = 0.9;
  std::uint64_t seed = 1;
};

struct LayerContext {
  const ModelConfig* model = nullptr;
  const HardwareConfig* hw = nullptr;
  const IterationBatch* batch = nullptr;
  const RoutingTrace* trace = nullptr;
  std::int64_t layer = 0;  // 0-based
  std::int64_t iteration = 0;
  bool codec = false;
  double codec_threshold = 0.45;
  Thresholds thresholds;
  std::int64_t hrofs_start_layer = 4;  // 1-based, first fused layer
};

LayerDag build_conventional(const LayerContext& ctx);
LayerDag build_hrofs(const LayerContext& ctx, const Predictor& predictor);

// Resource class per node given how many instances each class can ever get
// (indexed by ResourceClass). Classes without capacity fall back along
// VCACHE -> SIMD -> HBM SIMD -> NSA.
void assign_resources(LayerDag& dag, const HardwareConfig& hw, const std::vector<std::int64_t>& capacity);

void write_dag(const LayerDag& dag, std::ostream& os);

}  // namespace a3d::sched

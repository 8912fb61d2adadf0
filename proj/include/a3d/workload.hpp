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


// Serving workload: model topology, requests, chunked-prefill batching,
// Poisson arrivals, synthetic expert routing and per-layer cost profiles.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "a3d/common.hpp"

namespace a3d {

enum class AttentionKind { MHA, GQA, MLA };

AttentionKind parse_attention_kind(const std::string& s);
std::string to_string(AttentionKind k);

struct ModelConfig {
  std::string name = "custom";
  std::int64_t hidden_dim = 2048;
  std::int64_t num_heads = 16;
  std::int64_t head_dim = 128;
  std::int64_t ffn_dim = 1024;
  std::int64_t num_layers = 16;
  std::int64_t num_experts = 64;
  std::int64_t top_k = 8;
  std::int64_t num_shared_experts = 0;
  AttentionKind attention = AttentionKind::MHA;
  std::int64_t gqa_groups = 1;
  // Latent width of the MLA KV cache; 0 selects hidden_dim / 4.
  std::int64_t mla_latent_dim = 0;
  int weight_bits = 16;

  void validate() const;

  // Width of the K (and of the V) projection.
  std::int64_t kv_dim() const;
  std::int64_t bytes_per_element() const { return weight_bits / 8; }
  // One expert: gate, up and down projections.
  std::int64_t expert_weight_bytes() const {
    return 3 * hidden_dim * ffn_dim * bytes_per_element();
  }
  std::int64_t experts_per_layer() const { return num_experts + num_shared_experts; }
};

// Bundled presets. Dimensions come from the public model cards; expert
// topology follows the commonly quoted activated/total split.
ModelConfig olmoe_1b_7b();
ModelConfig deepseek_v2_lite();
ModelConfig qwen15_moe_a27b();
ModelConfig model_preset(const std::string& name);

// Applies "model.*" style keys (without the prefix) on top of `base`.
ModelConfig apply_model_keys(ModelConfig base,
                             const std::map<std::string, std::string>& kv);

enum class RequestState { Queued, Prefilling, Decoding, Done };

struct Request {
  std::int64_t id = 0;
  double arrival_time = 0.0;
  std::int64_t prefill_len = 0;
  std::int64_t decode_len = 0;
  RequestState state = RequestState::Queued;
  std::int64_t prefill_progress = 0;
  std::int64_t decode_progress = 0;
  std::vector<double> token_times;

  // Tokens currently resident in the KV cache.
  std::int64_t context() const { return prefill_progress + decode_progress; }
};

struct WorkloadConfig {
  std::int64_t num_requests = 32;
  // Requests per second; 0 means every request arrives at t = 0.
  double arrival_rate = 0.0;
  std::int64_t prefill_min = 128;
  std::int64_t prefill_max = 128;
  double decode_ratio = 4.0;
  // Fixed decode length; 0 derives it from decode_ratio.
  std::int64_t decode_len = 0;
  std::int64_t chunk_budget = 256;
  std::uint64_t seed = 1;
  double dirichlet_alpha = 1.0;
  double zipf_s = 1.0;
  std::string popularity_file;
  bool per_token_normalization = true;

  void validate() const;
};

WorkloadConfig apply_workload_keys(WorkloadConfig base,
                                   const std::map<std::string, std::string>& kv);

std::vector<double> poisson_arrivals(double rate, std::int64_t count, std::uint64_t seed);

std::vector<Request> generate_requests(const WorkloadConfig& wl);

// ---------------------------------------------------------------------------
// Routing

struct RoutingEntry {
  std::int32_t expert = 0;
  double raw_score = 0.0;
  double normalized_score = 0.0;
};

// Per-layer categorical distribution over routed experts.
using Popularity = std::vector<std::vector<double>>;

Popularity zipf_popularity(const ModelConfig& model, double s);
// CSV rows: layer,expert_id,probability. Layers missing from the file fall
// back to the Zipf default.
Popularity load_popularity_csv(const std::string& path, const ModelConfig& model, double zipf_s);

struct RoutingTrace {
  std::int64_t num_layers = 0;
  std::int64_t num_tokens = 0;
  std::int64_t top_k = 0;
  std::int64_t num_experts = 0;
  std::int64_t num_shared = 0;
  // entries[layer][token] holds top_k routed entries; shared experts are
  // implicit (ids num_experts .. num_experts+num_shared-1, score 1.0).
  std::vector<std::vector<std::vector<RoutingEntry>>> entries;
  // histogram[layer][expert] counts routed selections.
  std::vector<std::vector<std::int64_t>> histogram;

  // Tokens routed to every expert of `layer`, shared experts included.
  std::vector<std::int64_t> tokens_per_expert(std::int64_t layer) const;
};

// Min-max normalisation over `raw`. Degenerate inputs (single element or all
// equal) normalise to 1.0.
std::vector<double> min_max_normalize(const std::vector<double>& raw);

RoutingTrace sample_routing(const ModelConfig& model, std::int64_t tokens,
                            const Popularity& popularity, double alpha, std::uint64_t seed,
                            bool per_token_normalization = true);

// ---------------------------------------------------------------------------
// Batching

struct DecodeSlot {
  std::int64_t request_id = 0;
  std::int64_t context = 0;  // KV entries read by this token, itself included
};

struct PrefillChunk {
  std::int64_t request_id = 0;
  std::int64_t tokens = 0;
  std::int64_t context_before = 0;
};

struct IterationBatch {
  std::int64_t index = 0;
  std::vector<DecodeSlot> decode_tokens;
  std::vector<PrefillChunk> prefill_chunks;
  std::int64_t chunk_budget = 0;

  std::int64_t prefill_tokens() const;
  std::int64_t total_tokens() const { return static_cast<std::int64_t>(decode_tokens.size()) + prefill_tokens(); }
  bool empty() const { return decode_tokens.empty() && prefill_chunks.empty(); }
};

// Stall-free chunked-prefill batching: every decoding request emits one
// token, then the chunk budget is filled FCFS from requests still in prefill.
IterationBatch build_iteration(const std::vector<Request>& queue, std::int64_t chunk_budget,
                               double now, std::int64_t index = 0);

// ---------------------------------------------------------------------------
// Cost model. Token order inside an iteration: decode tokens first, then the
// prefill chunks back to back; RoutingTrace token indices use the same order.

struct OpCost {
  double flops = 0;
  double weight_bytes = 0;
  double act_bytes = 0;
  double kv_bytes = 0;

  double bytes() const { return weight_bytes + act_bytes + kv_bytes; }
};

struct ExpertCost {
  std::int32_t expert = 0;
  std::int64_t tokens = 0;
  bool shared = false;
  OpCost cost;
};

struct LayerCostProfile {
  OpCost qkv;
  std::vector<OpCost> prefill_attn;  // one per chunk
  std::vector<OpCost> decode_attn;   // one per decode token
  OpCost out_proj;
  OpCost gating;
  std::vector<ExpertCost> experts;   // every expert of the layer, t_j may be 0
};

OpCost qkv_cost(const ModelConfig& model, std::int64_t tokens);
OpCost prefill_attention_cost(const ModelConfig& model, const PrefillChunk& chunk);
OpCost decode_attention_cost(const ModelConfig& model, std::int64_t context);
OpCost out_proj_cost(const ModelConfig& model, std::int64_t tokens);
OpCost gating_cost(const ModelConfig& model, std::int64_t tokens);
OpCost expert_cost(const ModelConfig& model, std::int64_t tokens);

LayerCostProfile iteration_cost_profile(const IterationBatch& batch, const RoutingTrace& trace,
                                        const ModelConfig& model, std::int64_t layer);

}  // namespace a3d

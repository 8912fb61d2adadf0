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


#include "a3d/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <tuple>

#include "a3d/codec.hpp"
#include "a3d/common.hpp"

namespace a3d::sched {

const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::QKV_gen: return "QKV_gen";
    case OpKind::prefill_attn: return "prefill_attn";
    case OpKind::decode_attn: return "decode_attn";
    case OpKind::out_proj: return "out_proj";
    case OpKind::gating: return "gating";
    case OpKind::barrier: return "barrier";
    case OpKind::MoE_high: return "MoE_high";
    case OpKind::MoE_mid: return "MoE_mid";
    case OpKind::MoE_low: return "MoE_low";
  }
  return "?";
}

const char* to_string(AiLevel a) {
  switch (a) {
    case AiLevel::High: return "high";
    case AiLevel::Mid: return "mid";
    case AiLevel::Low: return "low";
  }
  return "?";
}

const char* to_string(Bottleneck b) {
  switch (b) {
    case Bottleneck::DecodeOnly: return "decode_only";
    case Bottleneck::DecodeDominant: return "decode_dominant";
    case Bottleneck::PrefillDominant: return "prefill_dominant";
  }
  return "?";
}

// Token counts are integers, so the ridge is taken in whole tokens.
Thresholds default_thresholds(const HardwareConfig& hw) { return {std::floor(hw.ridge_point()), 2.0}; }

AiLevel classify(std::int64_t tokens, const Thresholds& th) {
  if (double(tokens) >= th.high) return AiLevel::High;
  if (double(tokens) <= th.low) return AiLevel::Low;
  return AiLevel::Mid;
}

std::vector<AiClass> classify_experts(const std::vector<std::int64_t>& tokens_per_expert, const Thresholds& th) {
  std::vector<AiClass> out;
  for (std::size_t e = 0; e < tokens_per_expert.size(); ++e) {
    const auto t = tokens_per_expert[e];
    if (t > 0) out.push_back({std::int32_t(e), t, classify(t, th)});
  }
  return out;
}

Bottleneck detect_bottleneck(const LayerCostProfile& p, const HardwareConfig& hw) {
  if (p.prefill_attn.empty()) return Bottleneck::DecodeOnly;
  double kv = 0, flops = 0;
  for (const auto& c : p.decode_attn) kv += c.kv_bytes;
  for (const auto& c : p.prefill_attn) flops += c.flops;
  const double mem_time = kv / hw.memory.aggregate_bandwidth();
  const double compute_time = flops / hw.peak_flops();
  return mem_time > compute_time ? Bottleneck::DecodeDominant : Bottleneck::PrefillDominant;
}

void LayerDag::validate() const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id != int(i)) throw ContractError("DAG node ids must match their position");
    for (int d : nodes[i].deps)
      if (d < 0 || d >= int(i)) throw ContractError("DAG dependency must point at an earlier node");
  }
}

namespace {

double gemm_flops(const std::vector<Gemm>& gs) {
  double f = 0;
  for (const auto& g : gs) f += 2.0 * double(g.M) * double(g.K) * double(g.N) * double(g.count);
  return f;
}

// Everything the two builders share: token bookkeeping and node factories.
struct Builder {
  const LayerContext& c;
  const ModelConfig& m;
  LayerDag dag;
  std::int64_t num_decode = 0;
  std::vector<std::int64_t> chunk_offset;
  std::vector<std::int64_t> tpe;                   // tokens per expert
  std::vector<std::vector<std::int64_t>> expert_tokens;
  std::vector<std::int64_t> token_max_t;           // max t_j over routed experts
  std::vector<std::int32_t> token_max_expert;

  explicit Builder(const LayerContext& ctx) : c(ctx), m(*ctx.model) {
    if (!c.model || !c.hw || !c.batch || !c.trace) throw ContractError("LayerContext is incomplete");
    const auto& b = *c.batch;
    if (b.empty()) throw ContractError("cannot schedule an empty iteration");
    if (c.trace->num_tokens != b.total_tokens()) throw ContractError("routing trace does not cover the batch");
    dag.layer = c.layer;
    num_decode = std::int64_t(b.decode_tokens.size());
    std::int64_t off = num_decode;
    for (const auto& ch : b.prefill_chunks) {
      chunk_offset.push_back(off);
      off += ch.tokens;
    }
    tpe = c.trace->tokens_per_expert(c.layer);
    expert_tokens.assign(tpe.size(), {});
    const auto& ent = c.trace->entries[std::size_t(c.layer)];
    token_max_t.assign(std::size_t(b.total_tokens()), 0);
    token_max_expert.assign(std::size_t(b.total_tokens()), -1);
    for (std::int64_t t = 0; t < b.total_tokens(); ++t) {
      for (const auto& e : ent[std::size_t(t)]) {
        expert_tokens[std::size_t(e.expert)].push_back(t);
        const auto te = tpe[std::size_t(e.expert)];
        auto& mt = token_max_t[std::size_t(t)];
        auto& me = token_max_expert[std::size_t(t)];
        if (te > mt || (te == mt && e.expert < me)) {
          mt = te;
          me = e.expert;
        }
      }
      for (std::int64_t s = 0; s < c.trace->num_shared; ++s)
        expert_tokens[std::size_t(c.trace->num_experts + s)].push_back(t);
    }
    LayerCostProfile prof = iteration_cost_profile(b, *c.trace, m, c.layer);
    dag.bottleneck = detect_bottleneck(prof, *c.hw);
  }

  OpNode& add(OpKind k, std::vector<int> deps = {}) {
    OpNode n;
    n.id = int(dag.nodes.size());
    n.kind = k;
    n.layer = c.layer;
    std::sort(deps.begin(), deps.end());
    deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
    n.deps = std::move(deps);
    dag.nodes.push_back(std::move(n));
    return dag.nodes.back();
  }

  int qkv(std::vector<std::int64_t> tokens, std::vector<int> deps = {}) {
    auto& n = add(OpKind::QKV_gen, std::move(deps));
    const auto t = std::int64_t(tokens.size());
    const auto cost = qkv_cost(m, t);
    n.tokens = std::move(tokens);
    n.gemms = {{t, m.hidden_dim, m.hidden_dim + 2 * m.kv_dim(), 1}};
    n.flops = gemm_flops(n.gemms);
    n.weight_bytes = cost.weight_bytes;
    n.act_bytes = cost.act_bytes;
    return n.id;
  }

  int prefill_attn(std::size_t chunk, std::vector<int> deps) {
    const auto& ch = c.batch->prefill_chunks[chunk];
    auto& n = add(OpKind::prefill_attn, std::move(deps));
    const auto ctx = ch.context_before + ch.tokens;
    for (std::int64_t i = 0; i < ch.tokens; ++i) n.tokens.push_back(chunk_offset[chunk] + i);
    n.gemms = {{ch.tokens, m.head_dim, ctx, m.num_heads}, {ch.tokens, ctx, m.head_dim, m.num_heads}};
    n.flops = gemm_flops(n.gemms);
    const auto cost = prefill_attention_cost(m, ch);
    n.kv_bytes = cost.kv_bytes;
    n.act_bytes = cost.act_bytes;
    return n.id;
  }

  int decode_attn(std::int64_t token, std::vector<int> deps) {
    auto& n = add(OpKind::decode_attn, std::move(deps));
    const auto ctx = c.batch->decode_tokens[std::size_t(token)].context;
    n.tokens = {token};
    n.gemms = {{1, m.head_dim, ctx, m.num_heads}, {1, ctx, m.head_dim, m.num_heads}};
    n.flops = gemm_flops(n.gemms);
    const auto cost = decode_attention_cost(m, ctx);
    n.kv_bytes = cost.kv_bytes;
    n.act_bytes = cost.act_bytes;
    return n.id;
  }

  int out_proj(std::vector<std::int64_t> tokens, std::vector<int> deps) {
    auto& n = add(OpKind::out_proj, std::move(deps));
    const auto t = std::int64_t(tokens.size());
    n.tokens = std::move(tokens);
    n.gemms = {{t, m.hidden_dim, m.hidden_dim, 1}};
    n.flops = gemm_flops(n.gemms);
    const auto cost = out_proj_cost(m, t);
    n.weight_bytes = cost.weight_bytes;
    n.act_bytes = cost.act_bytes;
    return n.id;
  }

  int gating(std::vector<std::int64_t> tokens, std::vector<int> deps) {
    auto& n = add(OpKind::gating, std::move(deps));
    const auto t = std::int64_t(tokens.size());
    n.tokens = std::move(tokens);
    n.gemms = {{t, m.hidden_dim, m.num_experts, 1}};
    n.flops = gemm_flops(n.gemms);
    const auto cost = gating_cost(m, t);
    n.weight_bytes = cost.weight_bytes;
    n.act_bytes = cost.act_bytes;
    return n.id;
  }

  bool shared(std::int32_t e) const { return e >= c.trace->num_experts; }

  memory::Precision precision(std::int32_t e) const {
    if (!c.codec || shared(e)) return memory::Precision::BF16;
    const auto& ent = c.trace->entries[std::size_t(c.layer)];
    for (auto t : expert_tokens[std::size_t(e)])
      for (const auto& r : ent[std::size_t(t)])
        if (r.expert == e && codec::gate_precision(r.normalized_score, c.codec_threshold, false) ==
                                 memory::Precision::BF16)
          return memory::Precision::BF16;
    return memory::Precision::FP8;
  }

  int expert(std::int32_t e, std::vector<int> deps) {
    const auto t = tpe[std::size_t(e)];
    const auto level = classify(t, c.thresholds);
    const OpKind k = level == AiLevel::High ? OpKind::MoE_high : level == AiLevel::Mid ? OpKind::MoE_mid
                                                                                          : OpKind::MoE_low;
    auto& n = add(k, std::move(deps));
    n.expert = e;
    n.expert_tokens = t;
    n.shared = shared(e);
    n.tokens = expert_tokens[std::size_t(e)];
    n.gemms = {{t, m.hidden_dim, m.ffn_dim, 2}, {t, m.ffn_dim, m.hidden_dim, 1}};
    n.flops = gemm_flops(n.gemms);
    const auto cost = expert_cost(m, t);
    n.precision = precision(e);
    n.weight_bytes = n.precision == memory::Precision::FP8 ? cost.weight_bytes / 2 : cost.weight_bytes;
    n.act_bytes = cost.act_bytes;
    return n.id;
  }

  std::vector<std::int32_t> active_experts() const {
    std::vector<std::int32_t> out;
    for (std::size_t e = 0; e < tpe.size(); ++e)
      if (tpe[e] > 0) out.push_back(std::int32_t(e));
    return out;
  }
};

std::vector<std::int64_t> iota(std::int64_t n) {
  std::vector<std::int64_t> v(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) v[std::size_t(i)] = i;
  return v;
}

}  // namespace

LayerDag build_conventional(const LayerContext& ctx) {
  Builder b(ctx);
  const auto& batch = *ctx.batch;
  const auto all = iota(batch.total_tokens());
  const int q = b.qkv(all);
  std::vector<int> attn;
  for (std::size_t ch = 0; ch < batch.prefill_chunks.size(); ++ch) attn.push_back(b.prefill_attn(ch, {q}));
  for (std::int64_t t = 0; t < b.num_decode; ++t) attn.push_back(b.decode_attn(t, {q}));
  const int o = b.out_proj(all, attn);
  const int g = b.gating(all, {o});
  auto bar_deps = attn;
  bar_deps.push_back(o);
  bar_deps.push_back(g);
  const int bar = b.add(OpKind::barrier, bar_deps).id;
  for (auto e : b.active_experts()) b.expert(e, {bar});
  b.dag.validate();
  return std::move(b.dag);
}

LayerDag build_hrofs(const LayerContext& ctx, const Predictor& predictor) {
  if (ctx.layer + 1 < ctx.hrofs_start_layer) return build_conventional(ctx);
  Builder b(ctx);
  const auto& batch = *ctx.batch;
  b.dag.fused = true;
  const bool prefill_first = b.dag.bottleneck == Bottleneck::PrefillDominant;
  const std::int64_t n = batch.total_tokens();

  // Token ranking by arithmetic intensity of the busiest expert it touches.
  auto order = iota(n);
  auto key = [&](std::int64_t t) {
    return std::make_tuple(b.token_max_t[std::size_t(t)], -b.token_max_expert[std::size_t(t)]);
  };
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t x, std::int64_t y) {
    return prefill_first ? key(x) < key(y) : key(x) > key(y);
  });
  const AiLevel levels_hi[] = {AiLevel::High, AiLevel::Mid, AiLevel::Low};
  const AiLevel levels_lo[] = {AiLevel::Low, AiLevel::Mid, AiLevel::High};
  const AiLevel* levels = prefill_first ? levels_lo : levels_hi;

  std::vector<int> group_of(std::size_t(n), -1);
  std::vector<std::vector<std::int64_t>> groups;
  for (int li = 0; li < 3; ++li) {
    std::vector<std::int64_t> g;
    for (auto t : order)
      if (classify(b.token_max_t[std::size_t(t)], ctx.thresholds) == levels[li]) g.push_back(t);
    if (g.empty()) continue;
    for (auto t : g) group_of[std::size_t(t)] = int(groups.size());
    groups.push_back(std::move(g));
  }

  std::vector<int> qkv_ids;
  for (auto& g : groups) {
    auto toks = g;
    std::sort(toks.begin(), toks.end());
    qkv_ids.push_back(b.qkv(toks));
  }
  std::vector<int> prefill_ids;
  std::vector<std::vector<int>> chunk_groups(batch.prefill_chunks.size());
  for (std::size_t ch = 0; ch < batch.prefill_chunks.size(); ++ch) {
    prefill_ids.push_back(b.prefill_attn(ch, qkv_ids));
    for (std::int64_t i = 0; i < batch.prefill_chunks[ch].tokens; ++i)
      chunk_groups[ch].push_back(group_of[std::size_t(b.chunk_offset[ch] + i)]);
  }
  std::vector<int> decode_ids(std::size_t(b.num_decode), -1);
  for (auto t : order)
    if (t < b.num_decode) decode_ids[std::size_t(t)] = b.decode_attn(t, {qkv_ids[std::size_t(group_of[std::size_t(t)])]});

  std::vector<int> out_ids;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    std::vector<int> deps;
    for (auto t : groups[gi])
      if (t < b.num_decode) deps.push_back(decode_ids[std::size_t(t)]);
    for (std::size_t ch = 0; ch < chunk_groups.size(); ++ch)
      if (std::find(chunk_groups[ch].begin(), chunk_groups[ch].end(), int(gi)) != chunk_groups[ch].end())
        deps.push_back(prefill_ids[ch]);
    auto toks = groups[gi];
    std::sort(toks.begin(), toks.end());
    out_ids.push_back(b.out_proj(toks, deps));
  }
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    auto toks = groups[gi];
    std::sort(toks.begin(), toks.end());
    b.gating(toks, {out_ids[gi]});
  }

  // Expert ordering follows the bottleneck: high-AI first when decode bound.
  auto experts = b.active_experts();
  std::stable_sort(experts.begin(), experts.end(), [&](std::int32_t x, std::int32_t y) {
    const auto tx = b.tpe[std::size_t(x)], ty = b.tpe[std::size_t(y)];
    return prefill_first ? tx < ty : tx > ty;
  });
  std::vector<int> all_decode(decode_ids.begin(), decode_ids.end());
  std::mt19937_64 rng(predictor.seed ^ (0x9E3779B97F4A7C15ULL * std::uint64_t(ctx.iteration + 1)) ^
                      (0xC2B2AE3D27D4EB4FULL * std::uint64_t(ctx.layer + 1)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<bool> wrong(b.tpe.size(), false);
  for (std::size_t e = 0; e < b.tpe.size(); ++e)
    if (b.tpe[e] > 0 && !b.shared(std::int32_t(e))) wrong[e] = u(rng) >= predictor.accuracy;

  for (auto e : experts) {
    std::vector<int> deps;
    std::vector<bool> seen(groups.size(), false);
    for (auto t : b.expert_tokens[std::size_t(e)]) {
      const int g = group_of[std::size_t(t)];
      if (!seen[std::size_t(g)]) {
        seen[std::size_t(g)] = true;
        deps.push_back(out_ids[std::size_t(g)]);
      }
    }
    const auto level = classify(b.tpe[std::size_t(e)], ctx.thresholds);
    if (level == AiLevel::High) deps.insert(deps.end(), prefill_ids.begin(), prefill_ids.end());
    if (level == AiLevel::Low) deps.insert(deps.end(), all_decode.begin(), all_decode.end());
    const int id = b.expert(e, deps);
    if (wrong[std::size_t(e)]) {
      auto& node = b.dag.nodes[std::size_t(id)];
      node.mispredicted = true;
      node.extra_fetch_bytes = double(b.m.expert_weight_bytes());
    }
  }
  b.dag.validate();
  return std::move(b.dag);
}

void assign_resources(LayerDag& dag, const HardwareConfig& hw, const std::vector<std::int64_t>& capacity) {
  auto has = [&](ResourceClass c) { return capacity.at(std::size_t(c)) > 0; };
  auto first = [&](std::initializer_list<ResourceClass> chain) {
    for (auto c : chain)
      if (has(c)) return c;
    return ResourceClass::NSA_GEMM;
  };
  for (auto& n : dag.nodes) {
    switch (n.kind) {
      case OpKind::QKV_gen:
      case OpKind::prefill_attn:
      case OpKind::out_proj:
      case OpKind::gating:
      case OpKind::barrier: n.resource = ResourceClass::NSA_GEMM; break;
      case OpKind::MoE_high: n.resource = first({ResourceClass::A3D_GEMM}); break;
      case OpKind::decode_attn: n.resource = first({ResourceClass::A3D_SIMD, ResourceClass::HBM_SIMD}); break;
      case OpKind::MoE_low:
        n.resource = hw.hbm_simd_runs_moe ? first({ResourceClass::A3D_SIMD, ResourceClass::HBM_SIMD})
                                          : first({ResourceClass::A3D_SIMD});
        break;
      case OpKind::MoE_mid:
        n.resource = hw.hbm_simd_runs_moe
                         ? first({ResourceClass::A3D_SIMD_VCACHE, ResourceClass::A3D_SIMD, ResourceClass::HBM_SIMD})
                         : first({ResourceClass::A3D_SIMD_VCACHE, ResourceClass::A3D_SIMD});
        break;
    }
  }
}

void write_dag(const LayerDag& dag, std::ostream& os) {
  os << "# layer " << dag.layer << ' ' << to_string(dag.bottleneck) << (dag.fused ? " fused" : " barrier") << '\n';
  for (const auto& n : dag.nodes) {
    os << n.id << ' ' << to_string(n.kind) << " L" << n.layer << ' ' << to_string(n.resource)
       << " flops=" << n.flops << " hbm_bytes=" << n.hbm_bytes() << " tokens=" << n.tokens.size();
    if (n.expert >= 0) os << " expert=" << n.expert << ' ' << memory::to_string(n.precision) << (n.mispredicted ? " mispredicted" : "");
    os << " deps=";
    for (std::size_t i = 0; i < n.deps.size(); ++i) os << (i ? "," : "") << n.deps[i];
    if (n.deps.empty()) os << '-';
    os << '\n';
  }
}

}  // namespace a3d::sched

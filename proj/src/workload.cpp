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


#include "a3d/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "a3d/kvconfig.hpp"

namespace a3d {

AttentionKind parse_attention_kind(const std::string& s) {
  if (s == "MHA" || s == "mha") return AttentionKind::MHA;
  if (s == "GQA" || s == "gqa") return AttentionKind::GQA;
  if (s == "MLA" || s == "mla") return AttentionKind::MLA;
  throw ConfigError("unknown attention kind: " + s);
}

std::string to_string(AttentionKind k) {
  switch (k) {
    case AttentionKind::MHA: return "MHA";
    case AttentionKind::GQA: return "GQA";
    case AttentionKind::MLA: return "MLA";
  }
  return "?";
}

void ModelConfig::validate() const {
  auto positive = [](std::int64_t v, const char* what) {
    if (v <= 0) throw ConfigError(std::string("model.") + what + " must be positive");
  };
  positive(hidden_dim, "hidden_dim");
  positive(num_heads, "num_heads");
  positive(head_dim, "head_dim");
  positive(ffn_dim, "ffn_dim");
  positive(num_layers, "num_layers");
  positive(num_experts, "num_experts");
  positive(top_k, "top_k");
  positive(gqa_groups, "gqa_groups");
  if (hidden_dim != num_heads * head_dim) {
    throw ConfigError("model: hidden_dim must equal num_heads * head_dim");
  }
  if (num_shared_experts < 0) throw ConfigError("model.num_shared_experts must be >= 0");
  if (top_k > num_experts) throw ConfigError("model.top_k exceeds num_experts");
  if (gqa_groups > num_heads) throw ConfigError("model.gqa_groups exceeds num_heads");
  if (weight_bits != 8 && weight_bits != 16 && weight_bits != 32) {
    throw ConfigError("model.weight_bits must be 8, 16 or 32");
  }
  if (mla_latent_dim < 0) throw ConfigError("model.mla_latent_dim must be >= 0");
}

std::int64_t ModelConfig::kv_dim() const {
  switch (attention) {
    case AttentionKind::MHA: return hidden_dim;
    case AttentionKind::GQA: return hidden_dim * gqa_groups / num_heads;
    case AttentionKind::MLA: return mla_latent_dim > 0 ? mla_latent_dim : hidden_dim / 4;
  }
  throw ConfigError("unknown attention kind");
}

ModelConfig olmoe_1b_7b() {
  ModelConfig m;
  m.name = "olmoe-1b-7b";
  m.hidden_dim = 2048;
  m.num_heads = 16;
  m.head_dim = 128;
  m.ffn_dim = 1024;
  m.num_layers = 16;
  m.num_experts = 64;
  m.top_k = 8;
  m.num_shared_experts = 0;
  m.attention = AttentionKind::MHA;
  return m;
}

ModelConfig deepseek_v2_lite() {
  ModelConfig m;
  m.name = "deepseek-v2-lite";
  m.hidden_dim = 2048;
  m.num_heads = 16;
  m.head_dim = 128;
  m.ffn_dim = 1408;
  m.num_layers = 27;
  m.num_experts = 64;
  m.top_k = 6;
  m.num_shared_experts = 1;
  m.attention = AttentionKind::MLA;
  m.mla_latent_dim = 512;
  return m;
}

ModelConfig qwen15_moe_a27b() {
  ModelConfig m;
  m.name = "qwen1.5-moe-a2.7b";
  m.hidden_dim = 2048;
  m.num_heads = 16;
  m.head_dim = 128;
  m.ffn_dim = 1408;
  m.num_layers = 24;
  m.num_experts = 60;
  m.top_k = 2;
  m.num_shared_experts = 1;
  m.attention = AttentionKind::MHA;
  return m;
}

ModelConfig model_preset(const std::string& name) {
  if (name == "olmoe" || name == "olmoe-1b-7b") return olmoe_1b_7b();
  if (name == "deepseek" || name == "deepseek-v2-lite") return deepseek_v2_lite();
  if (name == "qwen" || name == "qwen1.5-moe-a2.7b") return qwen15_moe_a27b();
  throw ConfigError("unknown model preset: " + name);
}

ModelConfig apply_model_keys(ModelConfig m, const KeyValues& kv) {
  if (auto it = kv.find("preset"); it != kv.end()) m = model_preset(it->second);
  for (const auto& [k, v] : kv) {
    const std::string key = "model." + k;
    if (k == "preset") continue;
    else if (k == "name") m.name = v;
    else if (k == "hidden_dim") m.hidden_dim = kv_int(key, v);
    else if (k == "num_heads") m.num_heads = kv_int(key, v);
    else if (k == "head_dim") m.head_dim = kv_int(key, v);
    else if (k == "ffn_dim") m.ffn_dim = kv_int(key, v);
    else if (k == "num_layers") m.num_layers = kv_int(key, v);
    else if (k == "num_experts") m.num_experts = kv_int(key, v);
    else if (k == "top_k") m.top_k = kv_int(key, v);
    else if (k == "num_shared_experts") m.num_shared_experts = kv_int(key, v);
    else if (k == "attention") m.attention = parse_attention_kind(v);
    else if (k == "gqa_groups") m.gqa_groups = kv_int(key, v);
    else if (k == "mla_latent_dim") m.mla_latent_dim = kv_int(key, v);
    else if (k == "weight_bits") m.weight_bits = static_cast<int>(kv_int(key, v));
    else throw ConfigError("unknown key: " + key);
  }
  m.validate();
  return m;
}

void WorkloadConfig::validate() const {
  if (num_requests < 0) throw ConfigError("workload.num_requests must be >= 0");
  if (arrival_rate < 0) throw ConfigError("workload.arrival_rate must be >= 0");
  if (prefill_min < 1 || prefill_max < prefill_min) {
    throw ConfigError("workload.prefill_min/prefill_max must satisfy 1 <= min <= max");
  }
  if (decode_len == 0 && !(decode_ratio > 1.0)) {
    throw ConfigError("workload.decode_ratio must exceed 1");
  }
  if (decode_len < 0) throw ConfigError("workload.decode_len must be >= 0");
  if (chunk_budget < 1) throw ConfigError("workload.chunk_budget must be >= 1");
  if (!(dirichlet_alpha > 0)) throw ConfigError("workload.dirichlet_alpha must be positive");
  if (zipf_s < 0) throw ConfigError("workload.zipf_s must be >= 0");
}

WorkloadConfig apply_workload_keys(WorkloadConfig w, const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    const std::string key = "workload." + k;
    if (k == "num_requests") w.num_requests = kv_int(key, v);
    else if (k == "arrival_rate") w.arrival_rate = kv_double(key, v);
    else if (k == "prefill_len") w.prefill_min = w.prefill_max = kv_int(key, v);
    else if (k == "prefill_min") w.prefill_min = kv_int(key, v);
    else if (k == "prefill_max") w.prefill_max = kv_int(key, v);
    else if (k == "decode_ratio") w.decode_ratio = kv_double(key, v);
    else if (k == "decode_len") w.decode_len = kv_int(key, v);
    else if (k == "chunk_budget") w.chunk_budget = kv_int(key, v);
    else if (k == "seed") w.seed = static_cast<std::uint64_t>(kv_int(key, v));
    else if (k == "dirichlet_alpha") w.dirichlet_alpha = kv_double(key, v);
    else if (k == "zipf_s") w.zipf_s = kv_double(key, v);
    else if (k == "popularity_file") w.popularity_file = v;
    else if (k == "normalization") {
      if (v == "per_token") w.per_token_normalization = true;
      else if (v == "per_layer_batch") w.per_token_normalization = false;
      else throw ConfigError("workload.normalization must be per_token or per_layer_batch");
    } else {
      throw ConfigError("unknown key: " + key);
    }
  }
  w.validate();
  return w;
}

std::vector<double> poisson_arrivals(double rate, std::int64_t count, std::uint64_t seed) {
  if (!(rate > 0)) throw ConfigError("arrival rate must be positive");
  if (count < 0) throw ConfigError("arrival count must be >= 0");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  double t = 0.0;
  for (std::int64_t i = 0; i < count; ++i) {
    double next = t + gap(rng);
    if (next <= t) next = std::nextafter(t, std::numeric_limits<double>::infinity());
    t = next;
    out.push_back(t);
  }
  return out;
}

std::vector<Request> generate_requests(const WorkloadConfig& wl) {
  wl.validate();
  std::vector<double> arrivals;
  if (wl.arrival_rate > 0) {
    arrivals = poisson_arrivals(wl.arrival_rate, wl.num_requests, wl.seed);
  } else {
    arrivals.assign(static_cast<std::size_t>(wl.num_requests), 0.0);
  }
  std::mt19937_64 rng(wl.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::int64_t> len(wl.prefill_min, wl.prefill_max);
  std::vector<Request> reqs;
  reqs.reserve(arrivals.size());
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    Request r;
    r.id = static_cast<std::int64_t>(i);
    r.arrival_time = arrivals[i];
    r.prefill_len = len(rng);
    r.decode_len = wl.decode_len > 0
                       ? wl.decode_len
                       : static_cast<std::int64_t>(std::ceil(wl.decode_ratio * static_cast<double>(r.prefill_len)));
    reqs.push_back(std::move(r));
  }
  return reqs;
}

// ---------------------------------------------------------------------------

std::vector<std::int64_t> RoutingTrace::tokens_per_expert(std::int64_t layer) const {
  std::vector<std::int64_t> t(static_cast<std::size_t>(num_experts + num_shared), 0);
  for (const auto& tok : entries[static_cast<std::size_t>(layer)]) {
    for (const auto& e : tok) ++t[static_cast<std::size_t>(e.expert)];
  }
  for (std::int64_t s = 0; s < num_shared; ++s) t[static_cast<std::size_t>(num_experts + s)] = num_tokens;
  return t;
}

Popularity zipf_popularity(const ModelConfig& model, double s) {
  const auto n = static_cast<std::size_t>(model.num_experts);
  Popularity pop(static_cast<std::size_t>(model.num_layers), std::vector<double>(n));
  for (std::size_t layer = 0; layer < pop.size(); ++layer) {
    double total = 0;
    for (std::size_t rank = 0; rank < n; ++rank) total += 1.0 / std::pow(double(rank + 1), s);
    // Rotate the rank order per layer so that different layers favour
    // different experts.
    for (std::size_t rank = 0; rank < n; ++rank) {
      std::size_t expert = (rank + layer * 7) % n;
      pop[layer][expert] = (1.0 / std::pow(double(rank + 1), s)) / total;
    }
  }
  return pop;
}

Popularity load_popularity_csv(const std::string& path, const ModelConfig& model, double zipf_s) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open popularity file: " + path);
  Popularity pop = zipf_popularity(model, zipf_s);
  std::vector<std::vector<double>> seen(pop.size());
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && line.find("layer") != std::string::npos) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ',')) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected layer,expert_id,probability");
    }
    auto layer = kv_int("layer", a);
    auto expert = kv_int("expert_id", b);
    double p = kv_double("probability", c);
    if (layer < 0 || layer >= model.num_layers || expert < 0 || expert >= model.num_experts || p < 0) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": value out of range");
    }
    auto& row = seen[static_cast<std::size_t>(layer)];
    if (row.empty()) row.assign(static_cast<std::size_t>(model.num_experts), 0.0);
    row[static_cast<std::size_t>(expert)] = p;
  }
  for (std::size_t l = 0; l < seen.size(); ++l) {
    if (seen[l].empty()) continue;
    double total = std::accumulate(seen[l].begin(), seen[l].end(), 0.0);
    if (std::abs(total - 1.0) > 1e-6) {
      throw ConfigError(path + ": probabilities of layer " + std::to_string(l) + " sum to " +
                        std::to_string(total));
    }
    pop[l] = seen[l];
  }
  return pop;
}

std::vector<double> min_max_normalize(const std::vector<double>& raw) {
  std::vector<double> out(raw.size(), 1.0);
  if (raw.size() < 2) return out;
  auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double span = *hi - *lo;
  if (!(span > 0)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / span;
  return out;
}

RoutingTrace sample_routing(const ModelConfig& model, std::int64_t tokens, const Popularity& popularity,
                            double alpha, std::uint64_t seed, bool per_token_normalization) {
  if (!(alpha > 0)) throw ConfigError("dirichlet alpha must be positive");
  if (static_cast<std::int64_t>(popularity.size()) != model.num_layers) {
    throw ConfigError("popularity must provide one distribution per layer");
  }
  for (const auto& layer : popularity) {
    if (static_cast<std::int64_t>(layer.size()) != model.num_experts) {
      throw ConfigError("popularity length does not match num_experts");
    }
  }
  RoutingTrace tr;
  tr.num_layers = model.num_layers;
  tr.num_tokens = tokens;
  tr.top_k = model.top_k;
  tr.num_experts = model.num_experts;
  tr.num_shared = model.num_shared_experts;
  tr.entries.resize(static_cast<std::size_t>(model.num_layers));
  tr.histogram.assign(static_cast<std::size_t>(model.num_layers),
                      std::vector<std::int64_t>(static_cast<std::size_t>(model.num_experts), 0));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const auto k = static_cast<std::size_t>(model.top_k);

  std::vector<double> weights;
  for (std::int64_t layer = 0; layer < model.num_layers; ++layer) {
    const auto& pop = popularity[static_cast<std::size_t>(layer)];
    auto& layer_entries = tr.entries[static_cast<std::size_t>(layer)];
    layer_entries.resize(static_cast<std::size_t>(tokens));
    for (std::int64_t t = 0; t < tokens; ++t) {
      weights = pop;
      double remaining = std::accumulate(weights.begin(), weights.end(), 0.0);
      auto& sel = layer_entries[static_cast<std::size_t>(t)];
      sel.resize(k);
      std::vector<double> raw(k);
      double raw_sum = 0;
      for (std::size_t i = 0; i < k; ++i) {
        // Weighted draw without replacement; zero-probability experts are only
        // reachable once every positive-weight expert has been taken.
        std::size_t pick = weights.size();
        if (remaining > 0) {
          double u = unit(rng) * remaining;
          for (std::size_t e = 0; e < weights.size(); ++e) {
            if (weights[e] <= 0) continue;
            pick = e;
            if (u < weights[e]) break;
            u -= weights[e];
          }
        }
        if (pick == weights.size()) {
          for (std::size_t e = 0; e < weights.size(); ++e) {
            if (weights[e] == 0.0) { pick = e; break; }
          }
        }
        remaining -= weights[pick];
        weights[pick] = -1.0;
        sel[i].expert = static_cast<std::int32_t>(pick);
        raw[i] = gamma(rng);
        raw_sum += raw[i];
        ++tr.histogram[static_cast<std::size_t>(layer)][pick];
      }
      for (std::size_t i = 0; i < k; ++i) {
        sel[i].raw_score = raw_sum > 0 ? raw[i] / raw_sum : 1.0 / double(k);
      }
      if (per_token_normalization) {
        std::vector<double> scores(k);
        for (std::size_t i = 0; i < k; ++i) scores[i] = sel[i].raw_score;
        auto norm = min_max_normalize(scores);
        for (std::size_t i = 0; i < k; ++i) sel[i].normalized_score = norm[i];
      }
    }
    if (!per_token_normalization) {
      std::vector<double> scores;
      scores.reserve(static_cast<std::size_t>(tokens) * k);
      for (const auto& tok : layer_entries)
        for (const auto& e : tok) scores.push_back(e.raw_score);
      auto norm = min_max_normalize(scores);
      std::size_t i = 0;
      for (auto& tok : layer_entries)
        for (auto& e : tok) e.normalized_score = norm[i++];
    }
  }
  return tr;
}

// ---------------------------------------------------------------------------

std::int64_t IterationBatch::prefill_tokens() const {
  std::int64_t n = 0;
  for (const auto& c : prefill_chunks) n += c.tokens;
  return n;
}

IterationBatch build_iteration(const std::vector<Request>& queue, std::int64_t chunk_budget, double now,
                               std::int64_t index) {
  if (chunk_budget < 1) throw ConfigError("chunk budget must be >= 1");
  IterationBatch b;
  b.index = index;
  b.chunk_budget = chunk_budget;
  std::vector<const Request*> waiting;
  for (const auto& r : queue) {
    if (r.arrival_time > now || r.state == RequestState::Done) continue;
    if (r.state == RequestState::Decoding) {
      b.decode_tokens.push_back({r.id, r.context()});
    } else {
      waiting.push_back(&r);
    }
  }
  std::stable_sort(waiting.begin(), waiting.end(), [](const Request* a, const Request* c) {
    if (a->arrival_time != c->arrival_time) return a->arrival_time < c->arrival_time;
    return a->id < c->id;
  });
  std::int64_t budget = chunk_budget;
  for (const Request* r : waiting) {
    if (budget == 0) break;
    const std::int64_t left = r->prefill_len - r->prefill_progress;
    if (left <= 0) continue;
    const std::int64_t take = std::min(left, budget);
    b.prefill_chunks.push_back({r->id, take, r->prefill_progress});
    budget -= take;
  }
  return b;
}

// ---------------------------------------------------------------------------

OpCost qkv_cost(const ModelConfig& m, std::int64_t tokens) {
  const double t = double(tokens), D = double(m.hidden_dim), kv = double(m.kv_dim()), b = double(m.bytes_per_element());
  OpCost c;
  c.flops = 2 * t * D * (D + 2 * kv);
  c.weight_bytes = D * (D + 2 * kv) * b;
  c.act_bytes = t * (2 * D + 2 * kv) * b;
  return c;
}

OpCost prefill_attention_cost(const ModelConfig& m, const PrefillChunk& chunk) {
  const double ctx = double(chunk.context_before + chunk.tokens);
  const double D = double(m.hidden_dim), b = double(m.bytes_per_element());
  OpCost c;
  c.flops = 2 * double(chunk.tokens) * ctx * D;
  c.kv_bytes = 2 * ctx * double(m.kv_dim()) * b;
  c.act_bytes = 2 * double(chunk.tokens) * D * b;
  return c;
}

OpCost decode_attention_cost(const ModelConfig& m, std::int64_t context) {
  const double ctx = double(context), D = double(m.hidden_dim), b = double(m.bytes_per_element());
  OpCost c;
  c.flops = 2 * ctx * D;
  c.kv_bytes = 2 * ctx * double(m.kv_dim()) * b;
  c.act_bytes = 2 * D * b;
  return c;
}

OpCost out_proj_cost(const ModelConfig& m, std::int64_t tokens) {
  const double t = double(tokens), D = double(m.hidden_dim), b = double(m.bytes_per_element());
  OpCost c;
  c.flops = 2 * t * D * D;
  c.weight_bytes = D * D * b;
  c.act_bytes = 2 * t * D * b;
  return c;
}

OpCost gating_cost(const ModelConfig& m, std::int64_t tokens) {
  const double t = double(tokens), D = double(m.hidden_dim), N = double(m.num_experts);
  const double b = double(m.bytes_per_element());
  OpCost c;
  c.flops = 2 * t * D * N;
  c.weight_bytes = D * N * b;
  c.act_bytes = t * (D + N) * b;
  return c;
}

OpCost expert_cost(const ModelConfig& m, std::int64_t tokens) {
  OpCost c;
  if (tokens <= 0) return c;
  const double t = double(tokens), D = double(m.hidden_dim), F = double(m.ffn_dim);
  const double b = double(m.bytes_per_element());
  c.flops = 6 * t * D * F;
  c.weight_bytes = 3 * D * F * b;
  c.act_bytes = 2 * t * D * b;
  return c;
}

LayerCostProfile iteration_cost_profile(const IterationBatch& batch, const RoutingTrace& trace,
                                        const ModelConfig& model, std::int64_t layer) {
  if (batch.empty()) throw ContractError("iteration_cost_profile: empty batch");
  model.validate();
  if (layer < 0 || layer >= trace.num_layers) throw ContractError("iteration_cost_profile: layer out of range");
  if (trace.num_tokens != batch.total_tokens()) {
    throw ContractError("iteration_cost_profile: trace does not cover the batch");
  }
  const std::int64_t t = batch.total_tokens();
  LayerCostProfile p;
  p.qkv = qkv_cost(model, t);
  for (const auto& chunk : batch.prefill_chunks) p.prefill_attn.push_back(prefill_attention_cost(model, chunk));
  for (const auto& d : batch.decode_tokens) p.decode_attn.push_back(decode_attention_cost(model, d.context));
  p.out_proj = out_proj_cost(model, t);
  p.gating = gating_cost(model, t);
  auto counts = trace.tokens_per_expert(layer);
  for (std::size_t j = 0; j < counts.size(); ++j) {
    ExpertCost e;
    e.expert = static_cast<std::int32_t>(j);
    e.tokens = counts[j];
    e.shared = static_cast<std::int64_t>(j) >= model.num_experts;
    e.cost = expert_cost(model, counts[j]);
    p.experts.push_back(e);
  }
  return p;
}

}  // namespace a3d

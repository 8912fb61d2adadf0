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

// Hand-built iterations for scheduler and engine tests.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "a3d/hardware.hpp"
#include "a3d/scheduler.hpp"
#include "a3d/workload.hpp"

namespace a3d::testing {

struct Scenario {
  ModelConfig model = olmoe_1b_7b();
  HardwareConfig hw;
  IterationBatch batch;
  RoutingTrace trace;

  sched::LayerContext context(std::int64_t layer, std::int64_t iteration = 0) const {
    sched::LayerContext c;
    c.model = &model;
    c.hw = &hw;
    c.batch = &batch;
    c.trace = &trace;
    c.layer = layer;
    c.iteration = iteration;
    c.thresholds = sched::default_thresholds(hw);
    return c;
  }
};

inline void add_decode(Scenario& s, std::int64_t count, std::int64_t context) {
  for (std::int64_t i = 0; i < count; ++i)
    s.batch.decode_tokens.push_back({std::int64_t(s.batch.decode_tokens.size()), context});
}

inline void add_chunk(Scenario& s, std::int64_t tokens, std::int64_t context_before = 0) {
  s.batch.prefill_chunks.push_back({1000 + std::int64_t(s.batch.prefill_chunks.size()), tokens, context_before});
}

// experts_of(layer, token) lists the routed experts of one token; every entry
// gets `score` as its normalised gate score.
inline void route(Scenario& s, const std::function<std::vector<std::int32_t>(std::int64_t, std::int64_t)>& experts_of,
                  double score = 0.9) {
  auto& t = s.trace;
  t.num_layers = s.model.num_layers;
  t.num_tokens = s.batch.total_tokens();
  t.top_k = s.model.top_k;
  t.num_experts = s.model.num_experts;
  t.num_shared = s.model.num_shared_experts;
  t.entries.assign(std::size_t(t.num_layers), std::vector<std::vector<RoutingEntry>>(std::size_t(t.num_tokens)));
  t.histogram.assign(std::size_t(t.num_layers), std::vector<std::int64_t>(std::size_t(t.num_experts), 0));
  for (std::int64_t l = 0; l < t.num_layers; ++l)
    for (std::int64_t k = 0; k < t.num_tokens; ++k)
      for (auto e : experts_of(l, k)) {
        t.entries[std::size_t(l)][std::size_t(k)].push_back({e, score, score});
        ++t.histogram[std::size_t(l)][std::size_t(e)];
      }
}

// Random mixed iteration routed with the library sampler.
inline Scenario random_scenario(std::uint64_t seed) {
  Scenario s;
  std::mt19937_64 rng(seed);
  add_decode(s, std::uniform_int_distribution<std::int64_t>(0, 40)(rng),
             std::uniform_int_distribution<std::int64_t>(1, 4096)(rng));
  const auto chunks = std::uniform_int_distribution<int>(s.batch.decode_tokens.empty() ? 1 : 0, 2)(rng);
  for (int c = 0; c < chunks; ++c)
    add_chunk(s, std::uniform_int_distribution<std::int64_t>(1, 128)(rng),
              std::uniform_int_distribution<std::int64_t>(0, 512)(rng));
  s.trace = sample_routing(s.model, s.batch.total_tokens(), zipf_popularity(s.model, 1.0), 0.3, seed);
  return s;
}

}  // namespace a3d::testing

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

// Comparison table shared by the CLI and its tests.
//
// Columns (fixed order):
//   label,config_id,policy,hardware,cooling,tbt_p99_ms,dram_accesses,
//   energy_mj,throughput_tps,throttle,
//   tbt_p99_ratio,dram_accesses_ratio,energy_ratio,throughput_ratio
//
// A ratio is the row's printed value divided by the first row's printed
// value, so the first row is all 1 and a reader can recompute every ratio
// from the same file.

#include <string>
#include <vector>

#include "a3d/engine.hpp"

namespace a3d::report {

struct CompareEntry {
  std::string label;
  engine::RunMetrics metrics;
};

const char* comparison_header();
std::string comparison_csv(const std::vector<CompareEntry>& rows);

}  // namespace a3d::report

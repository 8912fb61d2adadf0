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


#include "a3d/report.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>

#include "a3d/common.hpp"

namespace a3d::report {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::array<std::string, 4> metric_fields(const engine::RunMetrics& m) {
  return {fmt(m.tbt_p99 * 1e3), std::to_string(m.ledger.dram.count), fmt(m.energy_pj * 1e-9), fmt(m.throughput_tps)};
}

std::string ratio(const std::string& v, const std::string& base) {
  const double b = std::strtod(base.c_str(), nullptr);
  if (b == 0) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", std::strtod(v.c_str(), nullptr) / b);
  return buf;
}

}  // namespace

const char* comparison_header() {
  return "label,config_id,policy,hardware,cooling,tbt_p99_ms,dram_accesses,energy_mj,throughput_tps,throttle,"
         "tbt_p99_ratio,dram_accesses_ratio,energy_ratio,throughput_ratio";
}

std::string comparison_csv(const std::vector<CompareEntry>& rows) {
  if (rows.empty()) throw ContractError("comparison needs at least one row");
  std::string out = comparison_header();
  out += '\n';
  const auto base = metric_fields(rows.front().metrics);
  for (const auto& r : rows) {
    if (r.label.find_first_of(",\"\n") != std::string::npos) throw ConfigError("label may not contain , \" or newline");
    const auto& m = r.metrics;
    const auto f = metric_fields(m);
    out += r.label + "," + m.config_id + "," + m.policy + "," + m.hardware + "," + (m.cooling ? "on" : "off");
    for (const auto& x : f) out += "," + x;
    out += "," + fmt(m.throttle);
    for (std::size_t i = 0; i < f.size(); ++i) out += "," + ratio(f[i], base[i]);
    out += '\n';
  }
  return out;
}

}  // namespace a3d::report

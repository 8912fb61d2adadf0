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


#include "a3d/hardware.hpp"

#include <cmath>

#include "a3d/common.hpp"

namespace a3d {

const char* to_string(ResourceClass c) {
  switch (c) {
    case ResourceClass::NSA_GEMM: return "NSA_GEMM";
    case ResourceClass::A3D_GEMM: return "A3D_GEMM";
    case ResourceClass::A3D_SIMD: return "A3D_SIMD";
    case ResourceClass::A3D_SIMD_VCACHE: return "A3D_SIMD_VCACHE";
    case ResourceClass::HBM_SIMD: return "HBM_SIMD";
  }
  return "?";
}

Policy parse_policy(const std::string& s) {
  if (s == "hrofs" || s == "HR-OFS") return Policy::HROFS;
  if (s == "conventional") return Policy::Conventional;
  throw ConfigError("unknown policy: " + s + " (expected hrofs or conventional)");
}

const char* to_string(Policy p) { return p == Policy::HROFS ? "hrofs" : "conventional"; }

void HardwareConfig::validate() const {
  nsa.validate();
  if (a3d.count > 0) a3d.validate();
  if (nsa.kind != systolic::ArrayKind::NSA || a3d.kind != systolic::ArrayKind::Array3D) {
    throw ConfigError("hardware array kinds are fixed: nsa is NSA, a3d is Array3D");
  }
  if (nsa.count < 1) throw ConfigError("hardware.nsa.count must be >= 1");
  if (a3d.count < 0) throw ConfigError("hardware.a3d.count must be >= 0");
  memory.validate();
  if (hbm_simd_flops < 0 || hbm_simd_lanes < 1 || !(hbm_simd_bandwidth_factor > 0) || hbm_simd_mac_multiplier < 0) {
    throw ConfigError("hardware.simd parameters out of range");
  }
  for (double p : {part_gemm, part_simd, part_vcache})
    if (p < 0 || p > 1) throw ConfigError("hardware.partition fractions must be in [0, 1]");
  if (std::fabs(part_gemm + part_simd + part_vcache - 1.0) > 1e-9) {
    throw ConfigError("hardware.partition fractions must sum to 1");
  }
  if (!(power_cap_cooled > 0) || !(power_cap_uncooled > 0)) throw ConfigError("power caps must be > 0");
  if (codec_threshold < 0 || codec_threshold > 1) throw ConfigError("hardware.codec.threshold must be in [0, 1]");
}

double HardwareConfig::peak_flops() const {
  return 2.0 * double(nsa.pes() * nsa.count + a3d.pes() * a3d.count) * memory.frequency_hz;
}

std::int64_t HardwareConfig::instances(ResourceClass c) const {
  switch (c) {
    case ResourceClass::NSA_GEMM: return nsa.count;
    case ResourceClass::HBM_SIMD: return hbm_simd_flops > 0 ? hbm_simd_lanes : 0;
    default: return a3d.count;
  }
}

std::vector<std::int64_t> HardwareConfig::static_partition() const {
  const auto n = a3d.count;
  const auto g = std::int64_t(std::floor(double(n) * part_gemm));
  const auto s = std::int64_t(std::floor(double(n) * part_simd));
  return {g, s, n - g - s};
}

namespace {

HardwareConfig setting2(HardwareConfig h) {
  h.nsa.count *= 2;
  h.a3d.count *= 2;
  h.memory.hbm_count = 2;
  h.memory.hbm_capacity *= 2;
  h.memory.type1_sram *= 2;
  h.memory.type2_sram *= 2;
  h.power_cap_cooled *= 2;
  h.power_cap_uncooled *= 2;
  return h;
}

// Baselines keep the GEMM PE count of the A3D design by folding the 3D
// arrays into extra 32x32 NSA instances (512 * 256 PEs = 128 * 1024 PEs).
HardwareConfig interposer_base() {
  HardwareConfig h;
  h.nsa.count = 512;
  h.a3d.count = 0;
  h.memory.interposer = true;
  h.nsa_path = memory::TransportPath::SerdesNoc;
  h.codec_enabled = false;
  h.default_policy = Policy::Conventional;
  return h;
}

}  // namespace

std::vector<std::string> hardware_preset_names() {
  return {"a3d1", "a3d2", "neupim", "neupim2", "duplex", "duplex2"};
}

HardwareConfig hardware_preset(const std::string& name) {
  if (name == "a3d1") return HardwareConfig{};
  if (name == "a3d2") {
    auto h = setting2(HardwareConfig{});
    h.name = "a3d2";
    return h;
  }
  if (name == "neupim" || name == "neupim2") {
    auto h = interposer_base();
    h.name = "neupim";
    // SIMD inside the DRAM dies: bank-level bandwidth, DRAM-process logic.
    h.hbm_simd_flops = 8e12;
    h.hbm_simd_bandwidth_factor = 4.0;
    h.hbm_simd_mac_multiplier = 3.0;
    h.hbm_simd_path = memory::TransportPath::None;
    h.power_cap_cooled = 300.0;
    h.power_cap_uncooled = 120.0;
    if (name == "neupim2") {
      h = setting2(h);
      h.name = "neupim2";
      h.hbm_simd_flops *= 2;
    }
    return h;
  }
  if (name == "duplex" || name == "duplex2") {
    auto h = interposer_base();
    h.name = "duplex";
    // SIMD on the HBM logic die, fed over TSVs.
    h.hbm_simd_flops = 32e12;
    h.hbm_simd_bandwidth_factor = 2.0;
    h.hbm_simd_path = memory::TransportPath::TSV;
    h.hbm_simd_runs_moe = true;
    h.power_cap_cooled = 300.0;
    h.power_cap_uncooled = 120.0;
    if (name == "duplex2") {
      h = setting2(h);
      h.name = "duplex2";
      h.hbm_simd_flops *= 2;
    }
    return h;
  }
  throw ConfigError("unknown hardware preset: " + name);
}

namespace {

memory::TransportPath parse_path(const std::string& key, const std::string& v) {
  if (v == "tsv") return memory::TransportPath::TSV;
  if (v == "serdes+noc" || v == "serdes") return memory::TransportPath::SerdesNoc;
  if (v == "noc") return memory::TransportPath::OnDieNoc;
  if (v == "none") return memory::TransportPath::None;
  throw ConfigError(key + ": unknown transport path " + v);
}

}  // namespace

HardwareConfig apply_hardware_keys(HardwareConfig h, const KeyValues& kv) {
  if (auto it = kv.find("preset"); it != kv.end()) h = hardware_preset(it->second);
  KeyValues mem;
  for (const auto& [k, v] : kv) {
    const std::string key = "hardware." + k;
    if (k == "preset") continue;
    else if (k == "name") h.name = v;
    else if (k == "nsa.rows") h.nsa.rows = h.nsa.cols = kv_int(key, v);
    else if (k == "nsa.count") h.nsa.count = kv_int(key, v);
    else if (k == "a3d.rows") h.a3d.rows = h.a3d.cols = kv_int(key, v);
    else if (k == "a3d.count") h.a3d.count = kv_int(key, v);
    else if (k.rfind("memory.", 0) == 0) mem[k.substr(7)] = v;
    else if (k == "simd.flops") h.hbm_simd_flops = kv_double(key, v);
    else if (k == "simd.lanes") h.hbm_simd_lanes = kv_int(key, v);
    else if (k == "simd.bandwidth_factor") h.hbm_simd_bandwidth_factor = kv_double(key, v);
    else if (k == "simd.mac_multiplier") h.hbm_simd_mac_multiplier = kv_double(key, v);
    else if (k == "simd.path") h.hbm_simd_path = parse_path(key, v);
    else if (k == "simd.runs_moe") h.hbm_simd_runs_moe = kv_bool(key, v);
    else if (k == "nsa.path") h.nsa_path = parse_path(key, v);
    else if (k == "partition.gemm") h.part_gemm = kv_double(key, v);
    else if (k == "partition.simd") h.part_simd = kv_double(key, v);
    else if (k == "partition.vcache") h.part_vcache = kv_double(key, v);
    else if (k == "power_cap.cooled") h.power_cap_cooled = kv_double(key, v);
    else if (k == "power_cap.uncooled") h.power_cap_uncooled = kv_double(key, v);
    else if (k == "codec.enabled") h.codec_enabled = kv_bool(key, v);
    else if (k == "codec.threshold") h.codec_threshold = kv_double(key, v);
    else if (k == "policy") h.default_policy = parse_policy(v);
    else throw ConfigError("unknown key: " + key);
  }
  if (!mem.empty()) h.memory = memory::apply_memory_keys(h.memory, mem);
  h.validate();
  return h;
}

}  // namespace a3d

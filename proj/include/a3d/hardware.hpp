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

#include <string>
#include <vector>

#include "a3d/kvconfig.hpp"
#include "a3d/memory.hpp"
#include "a3d/systolic.hpp"

namespace a3d {

enum class ResourceClass { NSA_GEMM, A3D_GEMM, A3D_SIMD, A3D_SIMD_VCACHE, HBM_SIMD };
constexpr int kNumResourceClasses = 5;
const char* to_string(ResourceClass c);

enum class Policy { Conventional, HROFS };
Policy parse_policy(const std::string& s);
const char* to_string(Policy p);

struct HardwareConfig {
  std::string name = "a3d1";
  systolic::ArrayShape nsa{32, 32, 384, systolic::ArrayKind::NSA};
  systolic::ArrayShape a3d{16, 16, 512, systolic::ArrayKind::Array3D};
  memory::MemoryConfig memory;

  // SIMD units inside the HBM stack (DRAM dies or logic die). Absent when
  // hbm_simd_flops is 0.
  double hbm_simd_flops = 0.0;
  std::int64_t hbm_simd_lanes = 32;
  double hbm_simd_bandwidth_factor = 1.0;
  double hbm_simd_mac_multiplier = 1.0;
  memory::TransportPath hbm_simd_path = memory::TransportPath::TSV;
  // Whether low-AI expert work may run on the HBM SIMD units.
  bool hbm_simd_runs_moe = false;
  memory::TransportPath nsa_path = memory::TransportPath::TSV;

  // Static split of the A3D instances used by the conventional policy.
  double part_gemm = 0.5;
  double part_simd = 0.25;
  double part_vcache = 0.25;

  double power_cap_cooled = 400.0;    // watts
  double power_cap_uncooled = 200.0;  // watts

  bool codec_enabled = true;
  double codec_threshold = 0.45;
  Policy default_policy = Policy::HROFS;

  void validate() const;
  double peak_flops() const;
  // FLOPs per byte where compute and HBM bandwidth balance.
  double ridge_point() const { return peak_flops() / memory.aggregate_bandwidth(); }
  std::int64_t instances(ResourceClass c) const;
  // Conventional static split of the A3D pool; sums to a3d.count.
  std::vector<std::int64_t> static_partition() const;
};

HardwareConfig hardware_preset(const std::string& name);
std::vector<std::string> hardware_preset_names();
HardwareConfig apply_hardware_keys(HardwareConfig base, const KeyValues& kv);

}  // namespace a3d

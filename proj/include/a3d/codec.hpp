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

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "a3d/memory.hpp"

namespace a3d::codec {

using Bf16 = std::uint16_t;

inline int bf16_sign(Bf16 w) { return w >> 15; }
inline int bf16_exponent(Bf16 w) { return (w >> 7) & 0xFF; }
inline int bf16_mantissa(Bf16 w) { return w & 0x7F; }

Bf16 bf16_from_float(float f);  // round to nearest even
float float_from_bf16(Bf16 w);

struct Bf16Split {
  std::uint8_t fp8_byte = 0;       // sign | exp_low(4) | mant_hi(3)
  std::uint8_t residual_byte = 0;  // exp_high(4) | mant_lo(4)
  bool operator==(const Bf16Split&) const = default;
};

Bf16Split split(Bf16 w);
Bf16 reassemble(Bf16Split s);

struct RegularMap {
  int exp_min = 112;
  int exp_max = 127;
  int pivot = 0;
  int high_below = 7;
  int high_geq = 7;

  static RegularMap from_window(int exp_min);
  void validate() const;
  bool in_window(int exponent) const { return exponent >= exp_min && exponent <= exp_max; }
  int reconstruct_high(int exp_low) const { return exp_low < pivot ? high_below : high_geq; }
  bool operator==(const RegularMap&) const = default;
};

struct OutlierEntry {
  std::uint64_t address = 0;
  std::uint8_t exp_high = 0;
  bool operator==(const OutlierEntry&) const = default;
};

class OutlierMap {
 public:
  void add(OutlierEntry e);
  std::optional<int> find(std::uint64_t address) const;
  std::size_t size() const { return entries_.size(); }
  // Entries in ascending address order.
  std::vector<OutlierEntry> entries() const;

 private:
  std::unordered_map<std::uint64_t, std::uint8_t> entries_;
};

using ExponentHistogram = std::array<std::int64_t, 256>;
ExponentHistogram exponent_histogram(const std::vector<Bf16>& weights);  // OpenMP
ExponentHistogram exponent_histogram_serial(const std::vector<Bf16>& weights);

struct ProfileResult {
  RegularMap map;
  double coverage = 0.0;
  std::vector<OutlierEntry> outliers;
};

// Window with the most in-range exponents; ties go to the lowest exp_min.
int best_window(const ExponentHistogram& h);
double window_coverage(const ExponentHistogram& h, int exp_min);
ProfileResult profile_exponents(const std::vector<Bf16>& weights);

struct Encoded {
  Bf16Split split;
  std::optional<OutlierEntry> outlier;
};

Encoded encode(Bf16 w, const RegularMap& map, std::uint64_t address);
Bf16 decode_fp8(std::uint8_t fp8_byte, const RegularMap& map, const OutlierMap& outliers, std::uint64_t address);

constexpr double kDefaultThreshold = 0.45;
memory::Precision gate_precision(double normalized_score, double threshold, bool shared_expert);

struct SweepStats {
  std::int64_t patterns = 0;
  std::int64_t lossless_failures = 0;
  std::int64_t decode_failures = 0;  // decode differs from original with low 4 mantissa bits cleared
  std::int64_t outliers = 0;
  bool operator==(const SweepStats&) const = default;
};

// Every one of the 65,536 BF16 patterns through split/reassemble and
// encode/decode_fp8 under `map`.
SweepStats roundtrip_sweep(const RegularMap& map);  // OpenMP
SweepStats roundtrip_sweep_serial(const RegularMap& map);

struct LayerMap {
  RegularMap map;
  std::vector<OutlierEntry> outliers;
  bool operator==(const LayerMap&) const = default;
};

constexpr std::uint32_t kMapFileVersion = 1;
void write_map_file(std::ostream& os, const std::vector<LayerMap>& layers);
std::vector<LayerMap> read_map_file(std::istream& is);

}  // namespace a3d::codec

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


#include "a3d/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>

#include "a3d/common.hpp"

namespace a3d::codec {

Bf16 bf16_from_float(float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  if (std::isnan(f)) return Bf16((bits >> 16) | 0x40);
  const std::uint32_t round = 0x7FFF + ((bits >> 16) & 1);
  return Bf16((bits + round) >> 16);
}

float float_from_bf16(Bf16 w) { return std::bit_cast<float>(std::uint32_t(w) << 16); }

Bf16Split split(Bf16 w) {
  const int e = bf16_exponent(w), m = bf16_mantissa(w);
  Bf16Split s;
  s.fp8_byte = std::uint8_t((bf16_sign(w) << 7) | ((e & 0xF) << 3) | (m >> 4));
  s.residual_byte = std::uint8_t(((e >> 4) << 4) | (m & 0xF));
  return s;
}

Bf16 reassemble(Bf16Split s) {
  const int sign = s.fp8_byte >> 7;
  const int exp = ((s.residual_byte >> 4) << 4) | ((s.fp8_byte >> 3) & 0xF);
  const int mant = ((s.fp8_byte & 0x7) << 4) | (s.residual_byte & 0xF);
  return Bf16((sign << 15) | (exp << 7) | mant);
}

RegularMap RegularMap::from_window(int exp_min) {
  if (exp_min < 0 || exp_min > 240) throw ConfigError("exponent window must start in [0, 240]");
  RegularMap m;
  m.exp_min = exp_min;
  m.exp_max = exp_min + 15;
  m.pivot = exp_min & 0xF;
  m.high_geq = exp_min >> 4;
  m.high_below = std::min(15, m.high_geq + 1);
  return m;
}

void RegularMap::validate() const {
  if (exp_min < 0 || exp_max > 255 || exp_max - exp_min != 15) {
    throw ConfigError("regular map window must span exactly 16 exponents within [0, 255]");
  }
  for (int v : {pivot, high_below, high_geq})
    if (v < 0 || v > 15) throw ConfigError("regular map nibbles must be in [0, 15]");
  for (int e = exp_min; e <= exp_max; ++e)
    if (reconstruct_high(e & 0xF) != e >> 4) throw ConfigError("regular map does not reconstruct its window");
}

void OutlierMap::add(OutlierEntry e) {
  if (!entries_.emplace(e.address, e.exp_high).second) {
    throw ContractError("duplicate outlier address " + std::to_string(e.address));
  }
}

std::optional<int> OutlierMap::find(std::uint64_t address) const {
  auto it = entries_.find(address);
  if (it == entries_.end()) return std::nullopt;
  return int(it->second);
}

std::vector<OutlierEntry> OutlierMap::entries() const {
  std::vector<OutlierEntry> out;
  out.reserve(entries_.size());
  for (auto [a, h] : entries_) out.push_back({a, h});
  std::sort(out.begin(), out.end(), [](auto& x, auto& y) { return x.address < y.address; });
  return out;
}

ExponentHistogram exponent_histogram_serial(const std::vector<Bf16>& weights) {
  ExponentHistogram h{};
  for (Bf16 w : weights) ++h[std::size_t(bf16_exponent(w))];
  return h;
}

ExponentHistogram exponent_histogram(const std::vector<Bf16>& weights) {
  std::int64_t h[256] = {};
  const auto n = std::int64_t(weights.size());
  const Bf16* data = weights.data();
#pragma omp parallel for reduction(+ : h[:256]) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) ++h[bf16_exponent(data[i])];
  ExponentHistogram out{};
  std::copy(std::begin(h), std::end(h), out.begin());
  return out;
}

double window_coverage(const ExponentHistogram& h, int exp_min) {
  std::int64_t total = 0, in = 0;
  for (int e = 0; e < 256; ++e) {
    total += h[std::size_t(e)];
    if (e >= exp_min && e <= exp_min + 15) in += h[std::size_t(e)];
  }
  return total == 0 ? 0.0 : double(in) / double(total);
}

int best_window(const ExponentHistogram& h) {
  int best = 0;
  std::int64_t best_count = -1;
  for (int lo = 0; lo <= 240; ++lo) {
    std::int64_t c = 0;
    for (int e = lo; e <= lo + 15; ++e) c += h[std::size_t(e)];
    if (c > best_count) {
      best_count = c;
      best = lo;
    }
  }
  return best;
}

ProfileResult profile_exponents(const std::vector<Bf16>& weights) {
  if (weights.empty()) throw ProfilingError("cannot profile an empty weight tensor");
  const auto h = exponent_histogram(weights);
  ProfileResult r;
  r.map = RegularMap::from_window(best_window(h));
  r.coverage = window_coverage(h, r.map.exp_min);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const int e = bf16_exponent(weights[i]);
    if (!r.map.in_window(e)) r.outliers.push_back({std::uint64_t(i), std::uint8_t(e >> 4)});
  }
  return r;
}

Encoded encode(Bf16 w, const RegularMap& map, std::uint64_t address) {
  Encoded out;
  out.split = split(w);
  const int e = bf16_exponent(w);
  if (!map.in_window(e)) out.outlier = OutlierEntry{address, std::uint8_t(e >> 4)};
  return out;
}

Bf16 decode_fp8(std::uint8_t fp8_byte, const RegularMap& map, const OutlierMap& outliers, std::uint64_t address) {
  const int sign = fp8_byte >> 7;
  const int exp_low = (fp8_byte >> 3) & 0xF;
  const int mant_hi = fp8_byte & 0x7;
  const auto hit = outliers.find(address);
  const int exp_high = hit ? *hit : map.reconstruct_high(exp_low);
  return Bf16((sign << 15) | (((exp_high << 4) | exp_low) << 7) | (mant_hi << 4));
}

memory::Precision gate_precision(double normalized_score, double threshold, bool shared_expert) {
  if (!(normalized_score >= 0.0 && normalized_score <= 1.0)) {
    throw ContractError("gating score outside [0, 1]: " + std::to_string(normalized_score));
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("codec threshold must be in [0, 1]");
  return !shared_expert && normalized_score < threshold ? memory::Precision::FP8 : memory::Precision::BF16;
}

namespace {

void check_pattern(Bf16 w, const RegularMap& map, SweepStats& s) {
  const auto sp = split(w);
  if (reassemble(sp) != w) ++s.lossless_failures;
  auto enc = encode(w, map, 0);
  OutlierMap om;
  if (enc.outlier) {
    ++s.outliers;
    om.add(*enc.outlier);
  }
  if (decode_fp8(enc.split.fp8_byte, map, om, 0) != Bf16(w & ~0xF)) ++s.decode_failures;
}

}  // namespace

SweepStats roundtrip_sweep_serial(const RegularMap& map) {
  SweepStats s;
  for (std::uint32_t w = 0; w < 65536; ++w) check_pattern(Bf16(w), map, s);
  s.patterns = 65536;
  return s;
}

SweepStats roundtrip_sweep(const RegularMap& map) {
  std::int64_t lossless = 0, decode = 0, outl = 0;
#pragma omp parallel for reduction(+ : lossless, decode, outl) schedule(static)
  for (std::int64_t w = 0; w < 65536; ++w) {
    SweepStats s;
    check_pattern(Bf16(w), map, s);
    lossless += s.lossless_failures;
    decode += s.decode_failures;
    outl += s.outliers;
  }
  return {65536, lossless, decode, outl};
}

namespace {

void put(std::ostream& os, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) os.put(char((v >> (8 * i)) & 0xFF));
}

std::uint64_t get(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("map file truncated");
    v |= std::uint64_t(std::uint8_t(c)) << (8 * i);
  }
  return v;
}

constexpr char kMagic[4] = {'A', '3', 'D', 'M'};

}  // namespace

// Layout (little-endian):
//   "A3DM" u32 version u32 layer_count
//   per layer: u8 exp_min u8 pivot u8 high_below u8 high_geq u64 outlier_count
//              then outlier_count x (u64 address, u8 exp_high)
void write_map_file(std::ostream& os, const std::vector<LayerMap>& layers) {
  os.write(kMagic, 4);
  put(os, kMapFileVersion, 4);
  put(os, layers.size(), 4);
  for (const auto& l : layers) {
    put(os, std::uint64_t(l.map.exp_min), 1);
    put(os, std::uint64_t(l.map.pivot), 1);
    put(os, std::uint64_t(l.map.high_below), 1);
    put(os, std::uint64_t(l.map.high_geq), 1);
    put(os, l.outliers.size(), 8);
    for (const auto& o : l.outliers) {
      put(os, o.address, 8);
      put(os, o.exp_high, 1);
    }
  }
  if (!os) throw FormatError("failed writing map file");
}

std::vector<LayerMap> read_map_file(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw FormatError("not a codec map file");
  const auto version = get(is, 4);
  if (version != kMapFileVersion) throw FormatError("unsupported map file version " + std::to_string(version));
  const auto n = get(is, 4);
  std::vector<LayerMap> layers;
  for (std::uint64_t i = 0; i < n; ++i) {
    LayerMap l;
    l.map.exp_min = int(get(is, 1));
    l.map.exp_max = l.map.exp_min + 15;
    l.map.pivot = int(get(is, 1));
    l.map.high_below = int(get(is, 1));
    l.map.high_geq = int(get(is, 1));
    try {
      l.map.validate();
    } catch (const ConfigError& e) {
      throw FormatError(std::string("bad layer map: ") + e.what());
    }
    const auto count = get(is, 8);
    for (std::uint64_t j = 0; j < count; ++j) {
      OutlierEntry o;
      o.address = get(is, 8);
      o.exp_high = std::uint8_t(get(is, 1));
      if (o.exp_high > 15) throw FormatError("outlier exp_high out of range");
      l.outliers.push_back(o);
    }
    layers.push_back(std::move(l));
  }
  return layers;
}

}  // namespace a3d::codec

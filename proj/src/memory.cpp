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


#include "a3d/memory.hpp"

#include <cmath>
#include <ostream>

#include "a3d/common.hpp"

namespace a3d::memory {

Precision parse_precision(const std::string& s) {
  if (s == "fp8" || s == "FP8") return Precision::FP8;
  if (s == "bf16" || s == "BF16") return Precision::BF16;
  throw ConfigError("unknown precision: " + s);
}

const char* to_string(Precision p) { return p == Precision::FP8 ? "fp8" : "bf16"; }

const char* to_string(TransportPath p) {
  switch (p) {
    case TransportPath::TSV: return "tsv";
    case TransportPath::SerdesNoc: return "serdes+noc";
    case TransportPath::OnDieNoc: return "noc";
    case TransportPath::None: return "none";
  }
  return "?";
}

void MemoryConfig::validate() const {
  if (hbm_count < 1) throw ConfigError("memory.hbm_count must be >= 1");
  if (!(bandwidth_per_hbm > 0)) throw ConfigError("memory.bandwidth_per_hbm must be > 0");
  if (!(frequency_hz > 0)) throw ConfigError("memory.frequency_hz must be > 0");
  if (hbm_capacity < 0 || type1_sram < 0 || type2_sram < 0) throw ConfigError("memory capacities must be >= 0");
  if (dram_row_bytes < 1) throw ConfigError("memory.dram_row_bytes must be >= 1");
  for (double c : {dram_pj_per_byte, tsv_pj_per_byte, serdes_pj_per_byte, noc_pj_per_byte_mm, sram_pj_per_byte,
                   mac_pj, interposer_distance_mm}) {
    if (c < 0 || !std::isfinite(c)) throw ConfigError("memory energy coefficients must be finite and >= 0");
  }
}

MemoryConfig apply_memory_keys(MemoryConfig m, const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    const std::string key = "memory." + k;
    if (k == "hbm_count") m.hbm_count = kv_int(key, v);
    else if (k == "bandwidth_per_hbm") m.bandwidth_per_hbm = kv_double(key, v);
    else if (k == "hbm_capacity") m.hbm_capacity = kv_int(key, v);
    else if (k == "type1_sram") m.type1_sram = kv_int(key, v);
    else if (k == "type2_sram") m.type2_sram = kv_int(key, v);
    else if (k == "dram_row_bytes") m.dram_row_bytes = kv_int(key, v);
    else if (k == "frequency_hz") m.frequency_hz = kv_double(key, v);
    else if (k == "dram_pj_per_byte") m.dram_pj_per_byte = kv_double(key, v);
    else if (k == "tsv_pj_per_byte") m.tsv_pj_per_byte = kv_double(key, v);
    else if (k == "serdes_pj_per_byte") m.serdes_pj_per_byte = kv_double(key, v);
    else if (k == "noc_pj_per_byte_mm") m.noc_pj_per_byte_mm = kv_double(key, v);
    else if (k == "sram_pj_per_byte") m.sram_pj_per_byte = kv_double(key, v);
    else if (k == "mac_pj") m.mac_pj = kv_double(key, v);
    else if (k == "interposer") m.interposer = kv_bool(key, v);
    else if (k == "interposer_distance_mm") m.interposer_distance_mm = kv_double(key, v);
    else throw ConfigError("unknown key: " + key);
  }
  m.validate();
  return m;
}

RowAllocator::RowAllocator(const MemoryConfig& cfg)
    : row_bytes_(cfg.dram_row_bytes), total_rows_(cfg.hbm_capacity / cfg.dram_row_bytes) {}

ExpertPlacement RowAllocator::place_expert(std::int64_t bf16_bytes, std::int64_t layer, std::int64_t expert_id) {
  if (bf16_bytes <= 0 || bf16_bytes % 2 != 0) {
    throw ContractError("expert byte count must be positive and even");
  }
  const std::int64_t half = bf16_bytes / 2;
  const std::int64_t n = ceil_div(half, row_bytes_);
  if (next_row_ % 2 == 0) ++next_row_;
  if (next_row_ + 2 * n > total_rows_) {
    throw PlacementError("HBM capacity exceeded placing expert " + std::to_string(expert_id) + " of layer " +
                         std::to_string(layer));
  }
  ExpertPlacement p;
  p.expert_id = expert_id;
  p.layer = layer;
  p.base_row = next_row_;
  p.bytes_fp8 = half;
  p.bytes_residual = half;
  for (std::int64_t i = 0; i < n; ++i) {
    p.fp8_rows.push_back(next_row_ + 2 * i);
    p.residual_rows.push_back(next_row_ + 2 * i + 1);
  }
  next_row_ += 2 * n;
  return p;
}

double AccessLedger::total_pj() const {
  return dram.picojoules + sram.picojoules + tsv.picojoules + serdes.picojoules + noc.picojoules + mac.picojoules;
}

void AccessLedger::add(const AccessLedger& o) {
  for (auto [dst, src] : {std::pair{&dram, &o.dram}, std::pair{&sram, &o.sram}, std::pair{&tsv, &o.tsv},
                          std::pair{&serdes, &o.serdes}, std::pair{&noc, &o.noc}, std::pair{&mac, &o.mac}}) {
    dst->count += src->count;
    dst->bytes += src->bytes;
    dst->picojoules += src->picojoules;
  }
  noc_byte_mm += o.noc_byte_mm;
}

void AccessLedger::write_csv(std::ostream& os) const {
  os << "category,count,bytes,picojoules\n";
  auto row = [&](const char* name, const LedgerEntry& e) {
    os << name << ',' << e.count << ',' << e.bytes << ',' << e.picojoules << '\n';
  };
  row("dram", dram);
  row("sram", sram);
  row("tsv", tsv);
  row("serdes", serdes);
  row("noc", noc);
  row("mac", mac);
}

double transport_energy(double bytes, TransportPath path, double distance_mm, const MemoryConfig& cfg) {
  if (bytes < 0) throw ContractError("transport bytes must be >= 0");
  if (distance_mm < 0) throw ConfigError("transport distance must be >= 0");
  switch (path) {
    case TransportPath::TSV: return bytes * cfg.tsv_pj_per_byte;
    case TransportPath::SerdesNoc: return bytes * (cfg.serdes_pj_per_byte + cfg.noc_pj_per_byte_mm * distance_mm);
    case TransportPath::OnDieNoc: return bytes * cfg.noc_pj_per_byte_mm * distance_mm;
    case TransportPath::None: return 0.0;
  }
  return 0.0;
}

double record_transport(std::int64_t bytes, TransportPath path, double distance_mm, const MemoryConfig& cfg,
                        AccessLedger& ledger) {
  const double b = double(bytes);
  switch (path) {
    case TransportPath::TSV: {
      const double e = transport_energy(b, path, distance_mm, cfg);
      ledger.tsv.bytes += bytes;
      ledger.tsv.count += 1;
      ledger.tsv.picojoules += e;
      return e;
    }
    case TransportPath::SerdesNoc: {
      const double es = b * cfg.serdes_pj_per_byte;
      const double en = transport_energy(b, TransportPath::OnDieNoc, distance_mm, cfg);
      ledger.serdes.bytes += bytes;
      ledger.serdes.count += 1;
      ledger.serdes.picojoules += es;
      ledger.noc.bytes += bytes;
      ledger.noc_byte_mm += b * distance_mm;
      ledger.noc.count = std::int64_t(std::llround(ledger.noc_byte_mm));
      ledger.noc.picojoules += en;
      return es + en;
    }
    case TransportPath::OnDieNoc: {
      const double en = transport_energy(b, path, distance_mm, cfg);
      ledger.noc.bytes += bytes;
      ledger.noc_byte_mm += b * distance_mm;
      ledger.noc.count = std::int64_t(std::llround(ledger.noc_byte_mm));
      ledger.noc.picojoules += en;
      return en;
    }
    case TransportPath::None: return 0.0;
  }
  return 0.0;
}

double record_sram(std::int64_t bytes, const MemoryConfig& cfg, AccessLedger& ledger) {
  const double e = double(bytes) * cfg.sram_pj_per_byte;
  ledger.sram.count += 1;
  ledger.sram.bytes += bytes;
  ledger.sram.picojoules += e;
  return e;
}

double record_macs(double macs, const MemoryConfig& cfg, AccessLedger& ledger, double multiplier) {
  const double e = macs * cfg.mac_pj * multiplier;
  ledger.mac.count += std::int64_t(std::llround(macs));
  ledger.mac.picojoules += e;
  return e;
}

namespace {

double path_distance(TransportPath path, const MemoryConfig& cfg) {
  return path == TransportPath::TSV || path == TransportPath::None ? 0.0 : cfg.interposer_distance_mm;
}

FetchResult charge_rows(std::int64_t rows, TransportPath path, const MemoryConfig& cfg, AccessLedger& ledger) {
  FetchResult r;
  r.activations = rows;
  r.bytes = rows * cfg.dram_row_bytes;
  r.cycles = double(r.bytes) / cfg.bytes_per_cycle();
  const double ed = double(r.bytes) * cfg.dram_pj_per_byte;
  ledger.dram.count += rows;
  ledger.dram.bytes += r.bytes;
  ledger.dram.picojoules += ed;
  r.energy_pj = ed + record_transport(r.bytes, path, path_distance(path, cfg), cfg, ledger) +
                record_sram(r.bytes, cfg, ledger);
  return r;
}

}  // namespace

FetchResult fetch_dram(std::int64_t bytes, TransportPath path, const MemoryConfig& cfg, AccessLedger& ledger) {
  if (bytes < 0) throw ContractError("fetch bytes must be >= 0");
  return charge_rows(ceil_div(bytes, cfg.dram_row_bytes), path, cfg, ledger);
}

FetchResult fetch_expert(const ExpertPlacement& p, Precision precision, const MemoryConfig& cfg,
                         AccessLedger& ledger) {
  return fetch_expert(p, precision, cfg.default_path(), cfg, ledger);
}

FetchResult fetch_expert(const ExpertPlacement& p, Precision precision, TransportPath path,
                         const MemoryConfig& cfg, AccessLedger& ledger) {
  std::vector<std::int64_t> rows = p.fp8_rows;
  if (precision == Precision::BF16) rows.insert(rows.end(), p.residual_rows.begin(), p.residual_rows.end());
  FetchResult r = charge_rows(std::int64_t(rows.size()), path, cfg, ledger);
  r.rows = std::move(rows);
  return r;
}

VCacheResult vcache_session(std::int64_t panel_bytes, std::int64_t reuse_count, const MemoryConfig& cfg,
                            AccessLedger& ledger) {
  return vcache_session(panel_bytes, reuse_count, cfg.default_path(), cfg, ledger);
}

VCacheResult vcache_session(std::int64_t panel_bytes, std::int64_t reuse_count, TransportPath path,
                            const MemoryConfig& cfg, AccessLedger& ledger) {
  if (panel_bytes > cfg.type2_sram) throw ContractError("panel does not fit in the V-Cache; split it first");
  if (panel_bytes < 0 || reuse_count < 1) throw ContractError("vcache_session needs panel >= 0 and reuse >= 1");
  VCacheResult r;
  // The HBM fill lands in the V-Cache (this is the staging write); every use
  // then reads the panel back out.
  const FetchResult f = fetch_dram(panel_bytes, path, cfg, ledger);
  r.hbm_bytes = f.bytes;
  r.vcache_read_bytes = panel_bytes * reuse_count;
  r.energy_pj = f.energy_pj + record_sram(r.vcache_read_bytes, cfg, ledger);
  return r;
}

}  // namespace a3d::memory

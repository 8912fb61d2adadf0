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

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "a3d/kvconfig.hpp"

namespace a3d::memory {

enum class Precision { FP8, BF16 };
Precision parse_precision(const std::string& s);
const char* to_string(Precision p);

enum class TransportPath { TSV, SerdesNoc, OnDieNoc, None };
const char* to_string(TransportPath p);

struct MemoryConfig {
  std::int64_t hbm_count = 1;
  double bandwidth_per_hbm = 9600e9;  // bytes/s
  std::int64_t hbm_capacity = 36LL << 30;
  std::int64_t type1_sram = 16LL << 20;
  std::int64_t type2_sram = 16LL << 20;
  std::int64_t dram_row_bytes = 1024;
  double frequency_hz = 1e9;

  double dram_pj_per_byte = 3.5;
  double tsv_pj_per_byte = 0.1;
  double serdes_pj_per_byte = 1.5;
  double noc_pj_per_byte_mm = 0.8;
  double sram_pj_per_byte = 0.2;
  double mac_pj = 0.8;

  bool interposer = false;
  double interposer_distance_mm = 10.0;

  void validate() const;
  double aggregate_bandwidth() const { return double(hbm_count) * bandwidth_per_hbm; }
  double bytes_per_cycle() const { return aggregate_bandwidth() / frequency_hz; }
  TransportPath default_path() const { return interposer ? TransportPath::SerdesNoc : TransportPath::TSV; }
};

MemoryConfig apply_memory_keys(MemoryConfig cfg, const KeyValues& kv);

struct ExpertPlacement {
  std::int64_t expert_id = 0;
  std::int64_t layer = 0;
  std::int64_t base_row = 0;
  std::vector<std::int64_t> fp8_rows;
  std::vector<std::int64_t> residual_rows;
  std::int64_t bytes_fp8 = 0;
  std::int64_t bytes_residual = 0;
};

// Hands out DRAM rows for expert weights. Each expert gets a contiguous run
// starting at an odd row; FP8 halves land on odd rows, residuals on even.
class RowAllocator {
 public:
  explicit RowAllocator(const MemoryConfig& cfg);
  ExpertPlacement place_expert(std::int64_t bf16_bytes, std::int64_t layer, std::int64_t expert_id);
  std::int64_t rows_used() const { return next_row_; }
  std::int64_t total_rows() const { return total_rows_; }

 private:
  std::int64_t row_bytes_;
  std::int64_t total_rows_;
  std::int64_t next_row_ = 1;
};

struct LedgerEntry {
  std::int64_t count = 0;
  std::int64_t bytes = 0;
  double picojoules = 0.0;
};

struct AccessLedger {
  LedgerEntry dram;  // count = row activations
  LedgerEntry sram;
  LedgerEntry tsv;
  LedgerEntry serdes;
  LedgerEntry noc;  // count = byte*mm, rounded
  LedgerEntry mac;  // count = MAC operations
  double noc_byte_mm = 0.0;

  double total_pj() const;
  void add(const AccessLedger& other);
  void write_csv(std::ostream& os) const;
};

struct FetchResult {
  std::int64_t bytes = 0;
  std::int64_t activations = 0;
  double cycles = 0.0;
  double energy_pj = 0.0;
  std::vector<std::int64_t> rows;
};

double transport_energy(double bytes, TransportPath path, double distance_mm, const MemoryConfig& cfg);

// Charges transport of `bytes` along `path` to the ledger; returns picojoules.
double record_transport(std::int64_t bytes, TransportPath path, double distance_mm, const MemoryConfig& cfg,
                        AccessLedger& ledger);
double record_sram(std::int64_t bytes, const MemoryConfig& cfg, AccessLedger& ledger);
double record_macs(double macs, const MemoryConfig& cfg, AccessLedger& ledger, double multiplier = 1.0);

// Streams bytes from HBM into on-chip SRAM across `path`. Charged in whole rows.
FetchResult fetch_dram(std::int64_t bytes, TransportPath path, const MemoryConfig& cfg, AccessLedger& ledger);

FetchResult fetch_expert(const ExpertPlacement& p, Precision precision, const MemoryConfig& cfg,
                         AccessLedger& ledger);
FetchResult fetch_expert(const ExpertPlacement& p, Precision precision, TransportPath path,
                         const MemoryConfig& cfg, AccessLedger& ledger);

struct VCacheResult {
  std::int64_t hbm_bytes = 0;
  std::int64_t vcache_read_bytes = 0;
  double energy_pj = 0.0;
};

VCacheResult vcache_session(std::int64_t panel_bytes, std::int64_t reuse_count, const MemoryConfig& cfg,
                            AccessLedger& ledger);
VCacheResult vcache_session(std::int64_t panel_bytes, std::int64_t reuse_count, TransportPath path,
                            const MemoryConfig& cfg, AccessLedger& ledger);

}  // namespace a3d::memory

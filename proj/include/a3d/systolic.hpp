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


// Functional and cycle models of the two systolic array families:
//
//  * NSA      - conventional edge-fed weight-stationary array.
//  * Array3D  - TSV-fed array: operands land on every PE in parallel
//               (two load cycles), row/column buffers are ring-connected and
//               results leave through TSVs in one cycle.
//
// Functional simulation is integer-exact so the result can be compared
// against a plain matrix product.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "a3d/common.hpp"

namespace a3d::systolic {

enum class ArrayKind { NSA, Array3D };

struct ArrayShape {
  std::int64_t rows = 16;
  std::int64_t cols = 16;
  std::int64_t count = 1;
  ArrayKind kind = ArrayKind::Array3D;

  void validate() const;
  std::int64_t pes() const { return rows * cols; }
};

enum class TileOp { GEMM_WS, GEMM_IS, GEMM_OS, GEMV, GEMV_VCACHE };
enum class WeightSource { HBM, VCache, Type1SRAM };

std::string to_string(TileOp op);
bool is_gemv(TileOp op);

struct TileJob {
  TileOp op = TileOp::GEMM_WS;
  // For GEMV variants M counts independent vectors sharing the weight tile.
  std::int64_t M = 1, K = 1, N = 1;
  WeightSource source = WeightSource::HBM;
};

struct Matrix {
  std::int64_t rows = 0, cols = 0;
  std::vector<std::int64_t> data;

  Matrix() = default;
  Matrix(std::int64_t r, std::int64_t c) : rows(r), cols(c), data(static_cast<std::size_t>(r * c), 0) {}

  std::int64_t& operator()(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * cols + c)]; }
  std::int64_t operator()(std::int64_t r, std::int64_t c) const {
    return data[static_cast<std::size_t>(r * cols + c)];
  }
  bool operator==(const Matrix&) const = default;

  Matrix transposed() const;
};

// W'[r][c] = W[(r + c) mod N][c]: column c rotated upward by c.
Matrix interleave(const Matrix& w);
// Inverse of interleave.
Matrix deinterleave(const Matrix& y);

enum class Phase { Load, Compute, Drain, Preload, Stream };

struct CycleRecord {
  Phase phase = Phase::Compute;
  std::vector<std::uint8_t> busy;  // rows*cols, row-major
};

struct CycleTrace {
  std::int64_t rows = 0, cols = 0;
  std::vector<CycleRecord> cycles;

  std::int64_t busy_count(std::size_t cycle) const;
  std::int64_t phase_cycles(Phase p) const;
};

void write_trace_csv(const CycleTrace& trace, std::ostream& out);

struct SimResult {
  Matrix raw;     // values as they sit in / leave the PE grid
  Matrix output;  // restored M x N product
  CycleTrace trace;
};

// Undo the dataflow-specific output skew of `raw` (the de-interleaving step).
Matrix restore_output(TileOp op, ArrayKind kind, const Matrix& raw, std::int64_t M, std::int64_t N);

SimResult functional_sim(const TileJob& job, const ArrayShape& array, const Matrix& x, const Matrix& w);

std::int64_t tile_cycles(const TileJob& job, const ArrayShape& array);

enum class ScheduleMode { GEMM, GEMV };

struct Schedule {
  std::int64_t cycles = 0;
  std::int64_t tiles = 0;
  std::int64_t cycles_per_tile = 0;
};

// Back-to-back tiles, no inter-tile overlap, edge tiles cost a full tile.
Schedule schedule_gemm(std::int64_t M, std::int64_t K, std::int64_t N, const ArrayShape& array,
                       ScheduleMode mode);

struct GemvJob {
  std::int64_t vector = 0;
  std::int64_t col_begin = 0, col_end = 0;
  WeightSource source = WeightSource::HBM;
  std::int64_t weight_bytes = 0;
};

// Low arithmetic-intensity GEMM as M GEMVs with V-Cache panel reuse.
std::vector<GemvJob> decompose_low_ai(std::int64_t M, std::int64_t K, std::int64_t N, std::int64_t vcache_bytes,
                                      std::int64_t element_bytes);
std::int64_t hbm_weight_bytes(const std::vector<GemvJob>& jobs);

}  // namespace a3d::systolic

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


#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "a3d/systolic.hpp"
#include "oracles.hpp"

using namespace a3d;
using namespace a3d::systolic;
using a3d::testing::naive_matmul;
using a3d::testing::random_matrix;

namespace {

ArrayShape a3d_array(std::int64_t r) { return {r, r, 1, ArrayKind::Array3D}; }
ArrayShape nsa_array(std::int64_t r) { return {r, r, 1, ArrayKind::NSA}; }

Matrix from(std::initializer_list<std::initializer_list<std::int64_t>> rows) {
  Matrix m(std::int64_t(rows.size()), std::int64_t(rows.begin()->size()));
  std::int64_t r = 0;
  for (auto& row : rows) {
    std::int64_t c = 0;
    for (auto v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST(Interleave, IdentityForOne) {
  Matrix w(1, 1);
  w(0, 0) = 42;
  EXPECT_EQ(interleave(w), w);
  EXPECT_EQ(deinterleave(w), w);
}

TEST(Interleave, ThreeByThree) {
  auto w = from({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  EXPECT_EQ(interleave(w), from({{1, 5, 9}, {4, 8, 3}, {7, 2, 6}}));
}

TEST(Interleave, NonSquareIsShapeError) {
  EXPECT_THROW(interleave(Matrix(2, 3)), ShapeError);
  EXPECT_THROW(deinterleave(Matrix(3, 2)), ShapeError);
}

TEST(Interleave, RoundTripAndPermutationProperty) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    auto w = random_matrix(4, 4, rng, -100, 100);
    auto wi = interleave(w);
    EXPECT_EQ(deinterleave(wi), w);
    auto a = w.data, b = wi.data;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Interleave, NApplicationsCycleBack) {
  std::mt19937_64 rng(2);
  for (std::int64_t n : {2, 3, 5, 8}) {
    auto w = random_matrix(n, n, rng);
    Matrix cur = w;
    for (std::int64_t i = 0; i < n; ++i) cur = interleave(cur);
    EXPECT_EQ(cur, w);
  }
}

TEST(FunctionalSim, IdentityInputReturnsWeights) {
  std::mt19937_64 rng(3);
  for (auto op : {TileOp::GEMM_WS, TileOp::GEMM_IS, TileOp::GEMM_OS}) {
    Matrix eye(4, 4);
    for (int i = 0; i < 4; ++i) eye(i, i) = 1;
    auto w = random_matrix(4, 4, rng);
    EXPECT_EQ(functional_sim({op, 4, 4, 4}, a3d_array(4), eye, w).output, w) << to_string(op);
    EXPECT_EQ(functional_sim({op, 4, 4, 4}, nsa_array(4), eye, w).output, w) << to_string(op);
  }
}

TEST(FunctionalSim, RandomTilesMatchOracle) {
  std::mt19937_64 rng(4);
  const TileOp ops[] = {TileOp::GEMM_WS, TileOp::GEMM_IS, TileOp::GEMM_OS, TileOp::GEMV, TileOp::GEMV_VCACHE};
  for (int i = 0; i < 2000; ++i) {
    const std::int64_t r = std::vector<std::int64_t>{2, 3, 4, 8}[rng() % 4];
    for (auto op : ops) {
      const std::int64_t M = 1 + std::int64_t(rng() % r), K = 1 + std::int64_t(rng() % r),
                         N = 1 + std::int64_t(rng() % r);
      auto x = random_matrix(M, K, rng), w = random_matrix(K, N, rng);
      auto res = functional_sim({op, M, K, N}, a3d_array(r), x, w);
      ASSERT_EQ(res.output, naive_matmul(x, w)) << to_string(op) << " R=" << r;
      if (op != TileOp::GEMV_VCACHE) {
        const std::int64_t Mn = is_gemv(op) ? 1 : M;
        auto xn = random_matrix(Mn, K, rng);
        ASSERT_EQ(functional_sim({op, Mn, K, N}, nsa_array(r), xn, w).output, naive_matmul(xn, w));
      }
    }
  }
}

TEST(FunctionalSim, GemvThreeByThreeAllPesHoldOutput) {
  std::mt19937_64 rng(5);
  auto x = random_matrix(1, 3, rng), w = random_matrix(3, 3, rng);
  auto res = functional_sim({TileOp::GEMV, 1, 3, 3}, a3d_array(3), x, w);
  auto y = naive_matmul(x, w);
  EXPECT_EQ(res.output, y);
  EXPECT_EQ(res.trace.phase_cycles(Phase::Compute), 3);
  for (std::int64_t r = 0; r < 3; ++r)
    for (std::int64_t c = 0; c < 3; ++c) EXPECT_EQ(res.raw(r, c), y(0, c));
}

TEST(FunctionalSim, Errors) {
  Matrix x(5, 5), w(5, 5);
  EXPECT_THROW(functional_sim({TileOp::GEMM_WS, 5, 5, 5}, a3d_array(4), x, w), ShapeError);
  Matrix v(1, 3), w3(3, 3);
  EXPECT_THROW(functional_sim({TileOp::GEMV_VCACHE, 1, 3, 3}, nsa_array(3), v, w3), ConfigError);
  EXPECT_THROW(functional_sim({TileOp::GEMM_OS, 1, 3, 3}, a3d_array(3), w3, w3), ShapeError);
}

TEST(CycleModel, TraceLengthsMatchFormula) {
  std::mt19937_64 rng(6);
  for (std::int64_t r : {2, 3, 4, 8, 16}) {
    auto x = random_matrix(r, r, rng), w = random_matrix(r, r, rng);
    for (auto op : {TileOp::GEMM_WS, TileOp::GEMM_IS, TileOp::GEMM_OS}) {
      auto a = functional_sim({op, r, r, r}, a3d_array(r), x, w);
      EXPECT_EQ(std::int64_t(a.trace.cycles.size()), tile_cycles({op, r, r, r}, a3d_array(r)));
      EXPECT_EQ(a.trace.phase_cycles(Phase::Load), 2);
      auto n = functional_sim({op, r, r, r}, nsa_array(r), x, w);
      EXPECT_EQ(std::int64_t(n.trace.cycles.size()), tile_cycles({op, r, r, r}, nsa_array(r)));
      EXPECT_EQ(n.trace.phase_cycles(Phase::Preload), r);
    }
    auto v = random_matrix(1, r, rng);
    auto g = functional_sim({TileOp::GEMV, 1, r, r}, nsa_array(r), v, w);
    EXPECT_EQ(std::int64_t(g.trace.cycles.size()), tile_cycles({TileOp::GEMV, 1, r, r}, nsa_array(r)));
  }
}

TEST(CycleModel, StatedValues) {
  EXPECT_EQ(tile_cycles({TileOp::GEMM_WS, 16, 16, 16}, a3d_array(16)), 19);
  EXPECT_EQ(tile_cycles({TileOp::GEMV, 1, 3, 3}, a3d_array(3)), 6);
  EXPECT_EQ(tile_cycles({TileOp::GEMM_WS, 16, 16, 16}, nsa_array(16)), 62);
  EXPECT_THROW(tile_cycles({TileOp::GEMV_VCACHE, 1, 16, 16}, nsa_array(16)), ConfigError);
}

TEST(CycleModel, LoadPhaseConstantVsLinear) {
  for (std::int64_t r = 2; r <= 64; r *= 2) {
    const auto a = tile_cycles({TileOp::GEMM_WS, r, r, r}, a3d_array(r));
    const auto n = tile_cycles({TileOp::GEMM_WS, r, r, r}, nsa_array(r));
    // Both spend R cycles computing; what is left is fill and drain.
    EXPECT_EQ(a - r, 3);
    EXPECT_EQ(n - r, 3 * r - 2);
  }
}

TEST(CycleModel, GemvUtilization) {
  std::mt19937_64 rng(7);
  for (std::int64_t r : {2, 3, 4, 8}) {
    auto x = random_matrix(1, r, rng), w = random_matrix(r, r, rng);
    auto n = functional_sim({TileOp::GEMV, 1, r, r}, nsa_array(r), x, w);
    std::int64_t peak = 0;
    for (std::size_t t = 0; t < n.trace.cycles.size(); ++t) {
      peak = std::max(peak, n.trace.busy_count(t));
      for (std::int64_t row = 0; row < r; ++row)
        for (std::int64_t col = 1; col < r; ++col)
          EXPECT_EQ(n.trace.cycles[t].busy[std::size_t(row * r + col)], 0);
    }
    EXPECT_EQ(peak, r);
    auto a = functional_sim({TileOp::GEMV, 1, r, r}, a3d_array(r), x, w);
    for (std::size_t t = 0; t < a.trace.cycles.size(); ++t) {
      if (a.trace.cycles[t].phase == Phase::Compute) EXPECT_EQ(a.trace.busy_count(t), r * r);
    }
  }
}

TEST(Schedule, Tiling) {
  auto s = schedule_gemm(16, 16, 16, a3d_array(16), ScheduleMode::GEMM);
  EXPECT_EQ(s.tiles, 1);
  EXPECT_EQ(s.cycles, 19);
  s = schedule_gemm(32, 32, 32, a3d_array(16), ScheduleMode::GEMM);
  EXPECT_EQ(s.tiles, 8);
  EXPECT_EQ(s.cycles, 152);
  s = schedule_gemm(17, 16, 16, a3d_array(16), ScheduleMode::GEMM);
  EXPECT_EQ(s.tiles, 2);
}

TEST(Schedule, GemvModeNeverSlowerForVectors) {
  for (std::int64_t k = 1; k <= 96; k += 5)
    for (std::int64_t n = 1; n <= 96; n += 7)
      for (auto arr : {a3d_array(16), nsa_array(16), nsa_array(32)}) {
        auto gemm = schedule_gemm(1, k, n, arr, ScheduleMode::GEMM);
        auto gemv = schedule_gemm(1, k, n, arr, ScheduleMode::GEMV);
        EXPECT_LE(gemv.cycles, gemm.cycles);
      }
}

TEST(Schedule, Array3DGemvGivesEveryPeAnOutput) {
  // One R-deep slice of K per tile, R*R (vector, column) outputs per tile.
  auto s = schedule_gemm(1, 128, 300, a3d_array(16), ScheduleMode::GEMV);
  EXPECT_EQ(s.tiles, 8 * 2);
  EXPECT_EQ(s.cycles, 16 * 19);
  s = schedule_gemm(4, 2048, 1024, a3d_array(16), ScheduleMode::GEMV);
  EXPECT_EQ(s.tiles, 128 * 16);
  // Same shapes on the NSA: one vector per tile, R columns.
  s = schedule_gemm(1, 128, 300, nsa_array(16), ScheduleMode::GEMV);
  EXPECT_EQ(s.tiles, 8 * 19);
  for (std::int64_t m = 1; m <= 20; m += 3)
    for (std::int64_t k = 1; k <= 70; k += 9)
      for (std::int64_t n = 1; n <= 700; n += 61) {
        const auto g = schedule_gemm(m, k, n, a3d_array(16), ScheduleMode::GEMV);
        // Each tile does at most R*R*R MACs, so it can never beat the MAC count.
        EXPECT_GE(g.tiles * 16 * 16 * 16, m * k * n);
        EXPECT_EQ(g.tiles, ((k + 15) / 16) * ((m * n + 255) / 256));
      }
}

TEST(Decompose, SingleVector) {
  auto jobs = decompose_low_ai(1, 1024, 1024, 16 << 20, 2);
  ASSERT_EQ(jobs.size(), 1u);
  EXPECT_EQ(jobs[0].source, WeightSource::HBM);
}

TEST(Decompose, PanelReuse) {
  auto jobs = decompose_low_ai(4, 1024, 1024, 16 << 20, 2);
  EXPECT_EQ(jobs.size(), 4u);
  EXPECT_EQ(hbm_weight_bytes(jobs), 2 << 20);
  EXPECT_THROW(decompose_low_ai(4, 8, 8, 100, 0), ConfigError);
}

TEST(Decompose, TrafficAgainstReuseCountingOracle) {
  // Oracle: walk the vectors in order, keep a set of resident columns of size
  // capacity/column_bytes, and count HBM column loads.
  for (std::int64_t M : {1, 2, 5}) {
    for (std::int64_t vc : {0, 10, 64, 100, 1000, 4096, 1 << 20}) {
      const std::int64_t K = 16, N = 40, eb = 2;
      const std::int64_t col = K * eb, panel = K * N * eb;
      const std::int64_t fit = vc / col;
      std::int64_t oracle = 0;
      if (fit == 0) {
        oracle = M * panel;
      } else {
        for (std::int64_t begin = 0; begin < N; begin += fit) oracle += (std::min(N, begin + fit) - begin) * col;
      }
      auto jobs = decompose_low_ai(M, K, N, vc, eb);
      EXPECT_EQ(hbm_weight_bytes(jobs), oracle);
      EXPECT_LE(hbm_weight_bytes(jobs), M * panel);
      if (M > 1) EXPECT_EQ(hbm_weight_bytes(jobs) == M * panel, fit == 0);
    }
  }
}

TEST(Trace, CsvHeaderAndRows) {
  Matrix x(1, 2), w(2, 2);
  auto res = functional_sim({TileOp::GEMV, 1, 2, 2}, a3d_array(2), x, w);
  std::ostringstream os;
  write_trace_csv(res.trace, os);
  auto s = os.str();
  EXPECT_EQ(s.rfind("cycle,pe_row,pe_col,busy\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 5 * 4);
}

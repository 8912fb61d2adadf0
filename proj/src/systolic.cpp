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


#include "a3d/systolic.hpp"

#include <ostream>

namespace a3d::systolic {

void ArrayShape::validate() const {
  if (rows < 1 || cols < 1 || count < 0) throw ConfigError("array shape must be at least 1x1");
  if (kind == ArrayKind::Array3D && rows != cols) {
    throw ConfigError("Array3D needs a square shape for its ring connections");
  }
}

std::string to_string(TileOp op) {
  switch (op) {
    case TileOp::GEMM_WS: return "GEMM_WS";
    case TileOp::GEMM_IS: return "GEMM_IS";
    case TileOp::GEMM_OS: return "GEMM_OS";
    case TileOp::GEMV: return "GEMV";
    case TileOp::GEMV_VCACHE: return "GEMV_VCACHE";
  }
  return "?";
}

bool is_gemv(TileOp op) { return op == TileOp::GEMV || op == TileOp::GEMV_VCACHE; }

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix interleave(const Matrix& w) {
  if (w.rows != w.cols) throw ShapeError("interleave needs a square matrix");
  const auto n = w.rows;
  Matrix out(n, n);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; ++c) out(r, c) = w((r + c) % n, c);
  return out;
}

Matrix deinterleave(const Matrix& y) {
  if (y.rows != y.cols) throw ShapeError("deinterleave needs a square matrix");
  const auto n = y.rows;
  Matrix out(n, n);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; ++c) out(r, c) = y(((r - c) % n + n) % n, c);
  return out;
}

std::int64_t CycleTrace::busy_count(std::size_t cycle) const {
  std::int64_t n = 0;
  for (auto b : cycles.at(cycle).busy) n += b;
  return n;
}

std::int64_t CycleTrace::phase_cycles(Phase p) const {
  std::int64_t n = 0;
  for (const auto& c : cycles) n += (c.phase == p);
  return n;
}

void write_trace_csv(const CycleTrace& trace, std::ostream& out) {
  out << "cycle,pe_row,pe_col,busy\n";
  for (std::size_t t = 0; t < trace.cycles.size(); ++t) {
    const auto& rec = trace.cycles[t];
    for (std::int64_t r = 0; r < trace.rows; ++r)
      for (std::int64_t c = 0; c < trace.cols; ++c)
        out << t << ',' << r << ',' << c << ',' << int(rec.busy[static_cast<std::size_t>(r * trace.cols + c)])
            << '\n';
  }
}

namespace {

Matrix padded(const Matrix& m, std::int64_t n) {
  Matrix p(n, n);
  for (std::int64_t r = 0; r < m.rows; ++r)
    for (std::int64_t c = 0; c < m.cols; ++c) p(r, c) = m(r, c);
  return p;
}

CycleRecord idle(Phase phase, std::int64_t pes) {
  return CycleRecord{phase, std::vector<std::uint8_t>(static_cast<std::size_t>(pes), 0)};
}

// Shift every column of a grid down by one row through the ring.
template <typename T>
std::vector<T> ring_down(const std::vector<T>& g, std::int64_t n) {
  std::vector<T> out(g.size());
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; ++c)
      out[static_cast<std::size_t>(r * n + c)] = g[static_cast<std::size_t>(((r - 1 + n) % n) * n + c)];
  return out;
}

// Shift every row of a grid right by one column through the ring.
template <typename T>
std::vector<T> ring_right(const std::vector<T>& g, std::int64_t n) {
  std::vector<T> out(g.size());
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; ++c)
      out[static_cast<std::size_t>(r * n + c)] = g[static_cast<std::size_t>(r * n + (c - 1 + n) % n)];
  return out;
}

struct Operand {
  std::int64_t value = 0;
  bool real = false;  // inside the unpadded problem
};

// Array3D GEMM: cycle 1 loads inputs, cycle 2 loads weights (both through
// TSVs, pre-skewed), R compute cycles on the rings, one TSV drain cycle.
SimResult sim_array3d_gemm(const TileJob& job, std::int64_t n, const Matrix& x, const Matrix& w) {
  const auto M = job.M, K = job.K, N = job.N;
  const auto pes = static_cast<std::size_t>(n * n);
  const Matrix X = padded(x, n), W = padded(w, n);
  std::vector<Operand> xin(pes), win(pes);
  std::vector<std::int64_t> acc(pes, 0);
  auto at = [n](std::int64_t r, std::int64_t c) { return static_cast<std::size_t>(r * n + c); };

  // Stationary / moving operand placement per dataflow.
  for (std::int64_t r = 0; r < n; ++r) {
    for (std::int64_t c = 0; c < n; ++c) {
      const auto k = (r + c) % n;
      switch (job.op) {
        case TileOp::GEMM_OS:
          // Cannon-style: X rows and W columns pre-rotated.
          xin[at(r, c)] = {X(r, k), r < M && k < K};
          win[at(r, c)] = {W(k, c), k < K && c < N};
          break;
        case TileOp::GEMM_IS:
          // PE(r,c) keeps X[c][r]; psum lane n=(s+c) walks down column c.
          xin[at(r, c)] = {X(c, r), c < M && r < K};
          win[at(r, c)] = {W(r, k), r < K && k < N};
          break;
        case TileOp::GEMM_WS:
          // PE(r,c) keeps W[r][c]; psum lane m=(s+c) walks down column c.
          xin[at(r, c)] = {X(k, r), k < M && r < K};
          win[at(r, c)] = {W(r, c), r < K && c < N};
          break;
        default:
          throw ContractError("sim_array3d_gemm: not a GEMM op");
      }
    }
  }

  SimResult res;
  res.trace.rows = res.trace.cols = n;
  res.trace.cycles.push_back(idle(Phase::Load, n * n));
  res.trace.cycles.push_back(idle(Phase::Load, n * n));
  for (std::int64_t t = 0; t < n; ++t) {
    CycleRecord rec = idle(Phase::Compute, n * n);
    for (std::size_t i = 0; i < pes; ++i) {
      acc[i] += xin[i].value * win[i].value;
      rec.busy[i] = xin[i].real && win[i].real;
    }
    res.trace.cycles.push_back(std::move(rec));
    switch (job.op) {
      case TileOp::GEMM_OS:
        xin = ring_right(xin, n);
        win = ring_down(win, n);
        break;
      case TileOp::GEMM_IS:
        acc = ring_down(acc, n);
        win = ring_right(win, n);
        break;
      default:
        acc = ring_down(acc, n);
        xin = ring_right(xin, n);
        break;
    }
  }
  res.trace.cycles.push_back(idle(Phase::Drain, n * n));

  res.raw = Matrix(n, n);
  res.raw.data = acc;
  res.output = restore_output(job.op, ArrayKind::Array3D, res.raw, M, N);
  return res;
}

// Array3D GEMV: interleaved weights stay put, up to R vectors stream from the
// stacked die (vector parallelism), psum lanes circulate the column rings.
// With fewer vectors than rows, lanes replicate vectors, so every PE holds a
// final output after R compute cycles.
SimResult sim_array3d_gemv(const TileJob& job, std::int64_t n, const Matrix& x, const Matrix& w) {
  const auto M = job.M, K = job.K, N = job.N;
  const auto pes = static_cast<std::size_t>(n * n);
  const Matrix X = padded(x, n), W = padded(w, n);
  const Matrix Wi = interleave(W);
  auto at = [n](std::int64_t r, std::int64_t c) { return static_cast<std::size_t>(r * n + c); };
  std::vector<std::int64_t> acc(pes, 0);

  SimResult res;
  res.trace.rows = res.trace.cols = n;
  res.trace.cycles.push_back(idle(Phase::Load, n * n));
  res.trace.cycles.push_back(idle(Phase::Load, n * n));
  for (std::int64_t t = 0; t < n; ++t) {
    CycleRecord rec = idle(Phase::Compute, n * n);
    for (std::int64_t r = 0; r < n; ++r) {
      for (std::int64_t c = 0; c < n; ++c) {
        const auto lane = ((r - t) % n + n) % n;
        const auto v = lane % M;
        const auto k = (r + c) % n;
        acc[at(r, c)] += X(v, k) * Wi(r, c);
        rec.busy[at(r, c)] = k < K && c < N;
      }
    }
    res.trace.cycles.push_back(std::move(rec));
    acc = ring_down(acc, n);
  }
  res.trace.cycles.push_back(idle(Phase::Drain, n * n));
  res.raw = Matrix(n, n);
  res.raw.data = acc;
  res.output = restore_output(job.op, ArrayKind::Array3D, res.raw, M, N);
  return res;
}

// NSA GEMM: classic weight-stationary. R cycles shift weights in from the top,
// then inputs enter row k at cycle m+k and psums exit the bottom edge.
SimResult sim_nsa_gemm(const TileJob& job, std::int64_t n, const Matrix& x, const Matrix& w) {
  const auto M = job.M, K = job.K, N = job.N;
  const auto pes = static_cast<std::size_t>(n * n);
  const Matrix W = padded(w, n);
  auto at = [n](std::int64_t r, std::int64_t c) { return static_cast<std::size_t>(r * n + c); };

  SimResult res;
  res.trace.rows = res.trace.cols = n;
  for (std::int64_t t = 0; t < n; ++t) res.trace.cycles.push_back(idle(Phase::Preload, n * n));

  std::vector<Operand> xr(pes);
  std::vector<std::int64_t> ps(pes, 0);
  std::vector<std::uint8_t> pv(pes, 0);
  res.raw = Matrix(M, n);
  const std::int64_t stream = M + 2 * n - 2;
  for (std::int64_t t = 0; t < stream; ++t) {
    std::vector<Operand> nx(pes);
    std::vector<std::int64_t> np(pes, 0);
    std::vector<std::uint8_t> nv(pes, 0);
    CycleRecord rec = idle(Phase::Stream, n * n);
    for (std::int64_t r = 0; r < n; ++r) {
      for (std::int64_t c = 0; c < n; ++c) {
        Operand in;
        if (c == 0) {
          const auto m = t - r;
          if (m >= 0 && m < M) in = {r < K ? x(m, r) : 0, r < K};
          else in = {0, false};
          // A valid wavefront slot even when the K row is padding.
          if (m >= 0 && m < M) nv[at(r, c)] = 1;
        } else {
          in = xr[at(r, c - 1)];
        }
        nx[at(r, c)] = in;
        const bool slot = (c == 0) ? nv[at(r, c)] != 0 : (t - r - c >= 0 && t - r - c < M);
        const std::int64_t above = (r == 0) ? 0 : ps[at(r - 1, c)];
        np[at(r, c)] = slot ? above + in.value * W(r, c) : 0;
        nv[at(r, c)] = slot;
        rec.busy[at(r, c)] = slot && in.real && c < N;
      }
    }
    xr = std::move(nx);
    ps = std::move(np);
    pv = std::move(nv);
    for (std::int64_t c = 0; c < n; ++c) {
      const auto m = t - (n - 1) - c;
      if (m >= 0 && m < M && pv[at(n - 1, c)]) res.raw(m, c) = ps[at(n - 1, c)];
    }
    res.trace.cycles.push_back(std::move(rec));
  }
  res.output = restore_output(job.op, ArrayKind::NSA, res.raw, M, N);
  return res;
}

// NSA GEMV: the vector is preloaded into column 0 (R cycles); weight column
// n enters the rows at cycle n + k and the psum for output n walks down
// column 0. Only one column ever works.
SimResult sim_nsa_gemv(const TileJob& job, std::int64_t n, const Matrix& x, const Matrix& w) {
  const auto K = job.K, N = job.N;
  const Matrix W = padded(w, n);
  auto at = [n](std::int64_t r, std::int64_t c) { return static_cast<std::size_t>(r * n + c); };
  SimResult res;
  res.trace.rows = res.trace.cols = n;
  for (std::int64_t t = 0; t < n; ++t) res.trace.cycles.push_back(idle(Phase::Preload, n * n));
  res.raw = Matrix(1, n);
  std::vector<std::int64_t> ps(static_cast<std::size_t>(n), 0);
  const std::int64_t stream = 1 + 2 * n - 2;
  for (std::int64_t t = 0; t < stream; ++t) {
    std::vector<std::int64_t> np(static_cast<std::size_t>(n), 0);
    CycleRecord rec = idle(Phase::Stream, n * n);
    for (std::int64_t r = 0; r < n; ++r) {
      const auto out = t - r;
      if (out < 0 || out >= n) continue;
      const std::int64_t above = r == 0 ? 0 : ps[static_cast<std::size_t>(r - 1)];
      const std::int64_t xv = r < K ? x(0, r) : 0;
      np[static_cast<std::size_t>(r)] = above + xv * W(r, out);
      rec.busy[at(r, 0)] = r < K && out < N;
    }
    ps = std::move(np);
    const auto done = t - (n - 1);
    if (done >= 0 && done < n) res.raw(0, done) = ps[static_cast<std::size_t>(n - 1)];
    res.trace.cycles.push_back(std::move(rec));
  }
  res.output = restore_output(job.op, ArrayKind::NSA, res.raw, 1, N);
  return res;
}

}  // namespace

Matrix restore_output(TileOp op, ArrayKind kind, const Matrix& raw, std::int64_t M, std::int64_t N) {
  Matrix full;
  if (kind == ArrayKind::NSA) {
    full = raw;
  } else {
    switch (op) {
      case TileOp::GEMM_OS: full = raw; break;
      case TileOp::GEMM_WS: full = deinterleave(raw); break;
      case TileOp::GEMM_IS: full = deinterleave(raw).transposed(); break;
      case TileOp::GEMV:
      case TileOp::GEMV_VCACHE: full = raw; break;
    }
  }
  Matrix out(M, N);
  for (std::int64_t r = 0; r < M; ++r)
    for (std::int64_t c = 0; c < N; ++c) out(r, c) = full(r, c);
  return out;
}

SimResult functional_sim(const TileJob& job, const ArrayShape& array, const Matrix& x, const Matrix& w) {
  array.validate();
  if (array.rows != array.cols) throw ShapeError("functional_sim models square arrays only");
  const auto n = array.rows;
  if (job.M < 1 || job.K < 1 || job.N < 1) throw ShapeError("tile dims must be positive");
  if (job.M > n || job.K > n || job.N > n) throw ShapeError("tile does not fit the array");
  if (x.rows != job.M || x.cols != job.K || w.rows != job.K || w.cols != job.N) {
    throw ShapeError("operand shapes do not match the tile job");
  }
  if (array.kind == ArrayKind::NSA) {
    if (job.op == TileOp::GEMV_VCACHE) throw ConfigError("GEMV_VCACHE is not supported on NSA");
    if (job.op == TileOp::GEMV) {
      if (job.M != 1) throw ShapeError("NSA GEMV takes a single vector");
      return sim_nsa_gemv(job, n, x, w);
    }
    return sim_nsa_gemm(job, n, x, w);
  }
  if (is_gemv(job.op)) return sim_array3d_gemv(job, n, x, w);
  return sim_array3d_gemm(job, n, x, w);
}

std::int64_t tile_cycles(const TileJob& job, const ArrayShape& array) {
  array.validate();
  const auto r = array.rows;
  if (array.kind == ArrayKind::Array3D) {
    // Two parallel TSV loads, R compute cycles, one TSV drain.
    return r + 3;
  }
  if (job.op == TileOp::GEMV_VCACHE) throw ConfigError("GEMV_VCACHE is not supported on NSA");
  const std::int64_t m_t = is_gemv(job.op) ? 1 : job.M;
  if (m_t < 1 || m_t > r) throw ShapeError("tile rows exceed the array");
  return r + m_t + 2 * r - 2;
}

Schedule schedule_gemm(std::int64_t M, std::int64_t K, std::int64_t N, const ArrayShape& array, ScheduleMode mode) {
  array.validate();
  if (M < 1 || K < 1 || N < 1) throw ShapeError("schedule_gemm: dims must be positive");
  const auto r = array.rows, c = array.cols;
  Schedule s;
  const auto kn_tiles = ceil_div(K, r) * ceil_div(N, c);
  TileJob job;
  if (mode == ScheduleMode::GEMM) {
    job.op = TileOp::GEMM_WS;
    job.M = r;
    s.tiles = ceil_div(M, r) * kn_tiles;
  } else {
    job.op = TileOp::GEMV;
    job.M = 1;
    if (array.kind == ArrayKind::Array3D) {
      // Every PE owns one (vector, column) output and takes a fresh weight
      // over the TSV each cycle, so a tile yields R*C outputs over R of K.
      s.tiles = ceil_div(K, r) * ceil_div(M * N, r * c);
    } else {
      // One vector per tile, confined to a single column.
      s.tiles = M * kn_tiles;
    }
  }
  s.cycles_per_tile = tile_cycles(job, array);
  s.cycles = s.tiles * s.cycles_per_tile;
  return s;
}

std::vector<GemvJob> decompose_low_ai(std::int64_t M, std::int64_t K, std::int64_t N, std::int64_t vcache_bytes,
                                      std::int64_t element_bytes) {
  if (element_bytes <= 0) throw ConfigError("element_bytes must be positive");
  if (M < 1 || K < 1 || N < 1) throw ShapeError("decompose_low_ai: dims must be positive");
  if (vcache_bytes < 0) throw ConfigError("vcache_bytes must be >= 0");
  const std::int64_t column_bytes = K * element_bytes;
  const std::int64_t fit_cols = vcache_bytes / column_bytes;
  std::vector<GemvJob> jobs;
  if (fit_cols == 0) {
    // Not even one column fits: every vector streams the panel from HBM.
    for (std::int64_t v = 0; v < M; ++v) jobs.push_back({v, 0, N, WeightSource::HBM, N * column_bytes});
    return jobs;
  }
  const std::int64_t split = std::min(fit_cols, N);
  for (std::int64_t begin = 0; begin < N; begin += split) {
    const auto end = std::min(N, begin + split);
    const auto bytes = (end - begin) * column_bytes;
    for (std::int64_t v = 0; v < M; ++v) {
      jobs.push_back({v, begin, end, v == 0 ? WeightSource::HBM : WeightSource::VCache, bytes});
    }
  }
  return jobs;
}

std::int64_t hbm_weight_bytes(const std::vector<GemvJob>& jobs) {
  std::int64_t total = 0;
  for (const auto& j : jobs)
    if (j.source == WeightSource::HBM) total += j.weight_bytes;
  return total;
}

}  // namespace a3d::systolic

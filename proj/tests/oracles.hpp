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

// Test-only reference implementations. Nothing here calls into the
// dataflow code it is used to check.

#include <cstdint>
#include <random>

#include "a3d/systolic.hpp"

namespace a3d::testing {

inline systolic::Matrix naive_matmul(const systolic::Matrix& x, const systolic::Matrix& w) {
  systolic::Matrix y(x.rows, w.cols);
  for (std::int64_t i = 0; i < x.rows; ++i)
    for (std::int64_t j = 0; j < w.cols; ++j) {
      std::int64_t s = 0;
      for (std::int64_t k = 0; k < x.cols; ++k) s += x(i, k) * w(k, j);
      y(i, j) = s;
    }
  return y;
}

inline systolic::Matrix random_matrix(std::int64_t r, std::int64_t c, std::mt19937_64& rng, int lo = -9,
                                      int hi = 9) {
  std::uniform_int_distribution<int> d(lo, hi);
  systolic::Matrix m(r, c);
  for (auto& v : m.data) v = d(rng);
  return m;
}

}  // namespace a3d::testing

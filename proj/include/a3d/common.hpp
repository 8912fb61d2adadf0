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
#include <stdexcept>
#include <string>

namespace a3d {

// Error taxonomy. The CLI maps these onto exit codes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProfilingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed map files and similar on-disk formats.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return (a + b - 1) / b;
}

}  // namespace a3d

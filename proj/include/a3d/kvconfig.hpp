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


// Flat "dotted.key = value" configuration files.
//
//   # comment
//   preset = a3d1
//   workload.num_requests = 32
//
// Later sources override earlier ones; see merge().

#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace a3d {

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_kv_text(const std::string& text, const std::string& origin = "<string>");
KeyValues load_kv_file(const std::string& path);

// Keys starting with "<prefix>." with the prefix stripped.
KeyValues with_prefix(const KeyValues& kv, const std::string& prefix);
void merge_into(KeyValues& dst, const KeyValues& src);

std::int64_t kv_int(const std::string& key, const std::string& value);
double kv_double(const std::string& key, const std::string& value);
bool kv_bool(const std::string& key, const std::string& value);

}  // namespace a3d

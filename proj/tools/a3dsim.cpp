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


// a3dsim: command-line front end for the simulator.
//
//   a3dsim run --config F [--seed N] [--policy hrofs|conventional]
//              [--cooling on|off] [--set key=value ...] --out F.json
//   a3dsim compare --preset a3d1 --preset duplex[:policy] ... [--config F ...]
//              [--workload F] [--cooling on|off|both] --out DIR
//   a3dsim codec profile (--weights F | --gaussian N) --out MAP
//   a3dsim codec roundtrip [--exp-min E] [--out F.json]
//
// Exit codes: 0 ok, 1 internal error, 2 configuration error, 3 placement
// (capacity) error. A3D_LOG_LEVEL=error|warn|info|debug sets verbosity.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "a3d/codec.hpp"
#include "a3d/common.hpp"
#include "a3d/engine.hpp"
#include "a3d/io.hpp"
#include "a3d/kvconfig.hpp"
#include "a3d/report.hpp"
#include "json.hpp"

namespace {

using a3d::KeyValues;

enum class Level { Error, Warn, Info, Debug };

Level log_level() {
  static const Level level = [] {
    const char* v = std::getenv("A3D_LOG_LEVEL");
    const std::string s = v ? v : "info";
    if (s == "error") return Level::Error;
    if (s == "warn") return Level::Warn;
    if (s == "debug") return Level::Debug;
    return Level::Info;
  }();
  return level;
}

void log(Level l, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (l <= log_level()) std::cerr << "a3dsim: " << names[int(l)] << ": " << msg << '\n';
}

KeyValues parse_sets(const std::vector<std::string>& sets) {
  KeyValues kv;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw a3d::ConfigError("--set expects key=value, got: " + s);
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return kv;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string run_json(const a3d::engine::RunMetrics& m, bool samples, bool timestamp) {
  auto j = nlohmann::ordered_json::parse(a3d::engine::metrics_json(m, samples));
  if (timestamp) j["generated_at"] = utc_now();
  return j.dump(2) + "\n";
}

std::string summary(const a3d::engine::RunMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "tbt_p99=%.4f ms throughput=%.1f tok/s energy=%.3f J power=%.1f W throttle=%.3f",
                m.tbt_p99 * 1e3, m.throughput_tps, m.energy_pj * 1e-12, m.avg_power_w, m.throttle);
  return m.config_id + " " + m.policy + " " + m.hardware + " " + buf;
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::string out;
  std::int64_t seed = -1;
  std::string policy;
  std::string cooling;
  std::vector<std::string> sets;
  bool no_timestamp = false;
  bool no_samples = false;
};

int cmd_run(const RunArgs& a) {
  KeyValues kv = a3d::load_kv_file(a.config);
  a3d::merge_into(kv, parse_sets(a.sets));
  if (a.seed >= 0) kv["workload.seed"] = std::to_string(a.seed);
  if (!a.policy.empty()) kv["sim.policy"] = a.policy;
  if (!a.cooling.empty()) kv["sim.cooling"] = a.cooling;
  const auto cfg = a3d::engine::sim_config_from_keys(kv);
  log(Level::Debug, "config id " + cfg.hash_id());
  const auto m = a3d::engine::run(cfg);
  a3d::write_file_atomic(a.out, run_json(m, !a.no_samples, !a.no_timestamp));
  const auto csv = std::filesystem::path(a.out).replace_extension(".csv").string();
  a3d::write_file_atomic(csv, std::string(a3d::engine::metrics_csv_header()) + "\n" +
                                  a3d::engine::metrics_csv_row(m) + "\n");
  std::cout << summary(m) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct CompareArgs {
  std::vector<std::string> presets;
  std::vector<std::string> configs;
  std::string workload;
  std::string cooling = "on";
  std::int64_t seed = -1;
  std::vector<std::string> sets;
  std::string out;
  bool no_timestamp = false;
};

struct Spec {
  std::string label;
  KeyValues kv;
};

int cmd_compare(const CompareArgs& a) {
  std::vector<Spec> base;
  for (const auto& p : a.presets) {
    Spec s;
    const auto colon = p.find(':');
    s.kv["preset"] = p.substr(0, colon);
    if (colon != std::string::npos) s.kv["sim.policy"] = p.substr(colon + 1);
    s.label = p;
    base.push_back(std::move(s));
  }
  for (const auto& f : a.configs) base.push_back({std::filesystem::path(f).stem().string(), a3d::load_kv_file(f)});
  if (base.size() < 2 && !(base.size() == 1 && a.cooling == "both"))
    throw a3d::ConfigError("compare needs at least two specs");

  KeyValues shared;
  if (!a.workload.empty()) {
    // Hardware and policy belong to each spec; the rest is shared.
    for (const auto& [k, v] : a3d::load_kv_file(a.workload)) {
      const bool spec_key = k == "sim.policy" || !(k.rfind("model.", 0) == 0 || k.rfind("workload.", 0) == 0 ||
                                                   k.rfind("sim.", 0) == 0);
      if (spec_key) log(Level::Warn, "workload file: ignoring per-spec key " + k);
      else shared[k] = v;
    }
  }
  a3d::merge_into(shared, parse_sets(a.sets));
  if (a.seed >= 0) shared["workload.seed"] = std::to_string(a.seed);

  std::vector<std::string> coolings;
  if (a.cooling == "both") coolings = {"on", "off"};
  else if (a.cooling == "on" || a.cooling == "off") coolings = {a.cooling};
  else throw a3d::ConfigError("--cooling must be on, off or both");

  // Every spec is validated before anything runs.
  std::vector<std::pair<std::string, a3d::engine::SimConfig>> jobs;
  std::map<std::string, int> seen;
  for (const auto& s : base) {
    for (const auto& cool : coolings) {
      KeyValues kv = s.kv;
      a3d::merge_into(kv, shared);
      kv["sim.cooling"] = cool;
      std::string label = s.label + (coolings.size() > 1 ? "/cooling-" + cool : "");
      if (const int n = ++seen[label]; n > 1) label += "#" + std::to_string(n);
      jobs.emplace_back(label, a3d::engine::sim_config_from_keys(kv));
    }
  }
  std::vector<a3d::report::CompareEntry> rows;
  for (const auto& [label, cfg] : jobs) {
    log(Level::Info, "running " + label);
    rows.push_back({label, a3d::engine::run(cfg)});
    std::cout << label << ": " << summary(rows.back().metrics) << '\n';
  }
  namespace fs = std::filesystem;
  for (const auto& r : rows) {
    std::string file = r.label;
    for (auto& ch : file)
      if (ch == '/' || ch == ':' || ch == '#') ch = '_';
    a3d::write_file_atomic((fs::path(a.out) / (file + ".json")).string(),
                           run_json(r.metrics, false, !a.no_timestamp));
  }
  a3d::write_file_atomic((fs::path(a.out) / "comparison.csv").string(), a3d::report::comparison_csv(rows));
  return 0;
}

// ---------------------------------------------------------------------------

struct CodecArgs {
  std::string weights;
  std::int64_t gaussian = 0;
  double sigma = 0.02;
  std::uint64_t seed = 1;
  std::string out;
  int exp_min = -1;
};

std::vector<a3d::codec::Bf16> read_bf16_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw a3d::ConfigError("cannot open weights file: " + path);
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (raw.size() % 2) throw a3d::FormatError("weights file has an odd byte count: " + path);
  std::vector<a3d::codec::Bf16> w(raw.size() / 2);
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = a3d::codec::Bf16(std::uint8_t(raw[2 * i]) | (std::uint8_t(raw[2 * i + 1]) << 8));
  return w;
}

int cmd_codec_profile(const CodecArgs& a) {
  std::vector<a3d::codec::Bf16> w;
  if (!a.weights.empty()) {
    w = read_bf16_file(a.weights);
  } else {
    std::mt19937_64 rng(a.seed);
    std::normal_distribution<float> d(0.0f, float(a.sigma));
    w.resize(std::size_t(a.gaussian));
    for (auto& x : w) x = a3d::codec::bf16_from_float(d(rng));
  }
  const auto p = a3d::codec::profile_exponents(w);
  std::ostringstream map;
  a3d::codec::write_map_file(map, {{p.map, p.outliers}});
  a3d::write_file_atomic(a.out, map.str());
  nlohmann::ordered_json r;
  r["weights"] = w.size();
  r["exp_min"] = p.map.exp_min;
  r["exp_max"] = p.map.exp_max;
  r["pivot"] = p.map.pivot;
  r["coverage"] = p.coverage;
  r["outliers"] = p.outliers.size();
  a3d::write_file_atomic(a.out + ".json", r.dump(2) + "\n");
  std::printf("window [%d, %d] coverage %.6f outliers %zu\n", p.map.exp_min, p.map.exp_max, p.coverage,
              p.outliers.size());
  return 0;
}

int cmd_codec_roundtrip(const CodecArgs& a) {
  const auto map = a3d::codec::RegularMap::from_window(a.exp_min < 0 ? 112 : a.exp_min);
  const auto s = a3d::codec::roundtrip_sweep(map);
  const bool pass = s.lossless_failures == 0 && s.decode_failures == 0;
  const auto exact = s.patterns - s.lossless_failures;
  std::printf("roundtrip %s: %lld/%lld exact reassemblies, %lld decode failures, %lld outliers restored\n",
              pass ? "pass" : "FAIL", (long long)exact, (long long)s.patterns, (long long)s.decode_failures,
              (long long)s.outliers);
  if (!a.out.empty()) {
    nlohmann::ordered_json r;
    r["exp_min"] = map.exp_min;
    r["patterns"] = s.patterns;
    r["exact_reassemblies"] = exact;
    r["decode_failures"] = s.decode_failures;
    r["outliers"] = s.outliers;
    r["pass"] = pass;
    a3d::write_file_atomic(a.out, r.dump(2) + "\n");
  }
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"A3D-MoE accelerator simulator"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "simulate one configuration");
  run->add_option("--config", ra.config, "key = value config file")->required();
  run->add_option("--out", ra.out, "metrics JSON path (a .csv row is written beside it)")->required();
  run->add_option("--seed", ra.seed, "workload seed override");
  run->add_option("--policy", ra.policy)->check(CLI::IsMember({"hrofs", "conventional"}));
  run->add_option("--cooling", ra.cooling)->check(CLI::IsMember({"on", "off"}));
  run->add_option("--set", ra.sets, "extra key=value override (repeatable)");
  run->add_flag("--no-timestamp", ra.no_timestamp, "omit generated_at from the JSON");
  run->add_flag("--no-samples", ra.no_samples, "omit per-token samples from the JSON");

  CompareArgs ca;
  auto* cmp = app.add_subcommand("compare", "run several specs on one workload");
  cmp->add_option("--preset", ca.presets, "hardware preset, optionally name:policy (repeatable)");
  cmp->add_option("--config", ca.configs, "config file spec (repeatable)");
  cmp->add_option("--workload", ca.workload, "shared key = value file applied to every spec");
  cmp->add_option("--cooling", ca.cooling, "on, off or both");
  cmp->add_option("--seed", ca.seed);
  cmp->add_option("--set", ca.sets, "extra key=value override (repeatable)");
  cmp->add_option("--out", ca.out, "output directory")->required();
  cmp->add_flag("--no-timestamp", ca.no_timestamp);

  CodecArgs xa;
  auto* codec = app.add_subcommand("codec", "exponent codec tools");
  codec->require_subcommand(1);
  auto* prof = codec->add_subcommand("profile", "fit an exponent window and write a map file");
  auto* src = prof->add_option_group("source");
  src->add_option("--weights", xa.weights, "raw little-endian BF16 file");
  src->add_option("--gaussian", xa.gaussian, "synthesize N Gaussian weights")->check(CLI::PositiveNumber);
  src->require_option(1);
  prof->add_option("--sigma", xa.sigma);
  prof->add_option("--seed", xa.seed);
  prof->add_option("--out", xa.out, "map file path (report at <out>.json)")->required();
  auto* rt = codec->add_subcommand("roundtrip", "exhaustive 2^16 pattern sweep");
  rt->add_option("--exp-min", xa.exp_min, "window start")->check(CLI::Range(0, 240));
  rt->add_option("--out", xa.out, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(ra);
    if (*cmp) return cmd_compare(ca);
    if (*prof) return cmd_codec_profile(xa);
    if (*rt) return cmd_codec_roundtrip(xa);
  } catch (const a3d::PlacementError& e) {
    log(Level::Error, e.what());
    return 3;
  } catch (const a3d::ConfigError& e) {
    log(Level::Error, e.what());
    return 2;
  } catch (const a3d::FormatError& e) {
    log(Level::Error, e.what());
    return 2;
  } catch (const a3d::ProfilingError& e) {
    log(Level::Error, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(Level::Error, std::string("internal: ") + e.what());
    return 1;
  }
  return 1;
}

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "alphaforge/decompiler.hpp"
#include "alphaforge/gp.hpp"

namespace alphaforge {

/// Scalar or array value from the TOML subset the config reader accepts:
/// tables ([a] / [a.b]), key = value pairs, strings, integers, floats,
/// booleans, single-line arrays of scalars, and # comments.
struct TomlValue {
  enum class Kind { kString, kInt, kFloat, kBool, kArray };
  Kind kind = Kind::kString;
  std::string str;
  std::int64_t i = 0;
  double f = 0.0;
  bool b = false;
  std::vector<TomlValue> items;

  std::string describe() const;
};

/// Flat "table.key" -> value map. Throws kConfig with the line number on a
/// syntax error or duplicate key.
std::map<std::string, TomlValue> parse_toml(std::string_view text);

struct RunConfig {
  std::uint64_t seed = 0;
  bool seed_set = false;

  std::filesystem::path data_path;
  std::filesystem::path reference_path;
  bool strict = true;

  int horizon = 5;
  int lag = 1;

  int quantiles = 5;
  double cost_rate = 0.001;

  GpConfig gp;

  HttpOptions llm;
  std::filesystem::path transcript;
  std::filesystem::path knowledge;
  MiningConfig mining;

  std::filesystem::path pool_dir;
  double corr_cap = 0.7;
  int n_planes = 256;
  bool use_lsh = false;

  SynthOptions synth;

  std::filesystem::path output_dir = ".";
  int threads = 1;

  /// Applies one dotted key ("gp.population_size", "seed", ...) from text.
  void set(const std::string& key, const std::string& value);
  /// Applies one parsed value; throws kConfig on an unknown key or a type mismatch.
  void apply(const std::string& key, const TomlValue& value);
  /// Canonical JSON of every effective value.
  std::string to_json() const;
};

/// Defaults overlaid with the file's values; relative paths resolve against
/// the file's directory.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_toml(std::string_view text, const std::filesystem::path& base_dir = {});

}  // namespace alphaforge

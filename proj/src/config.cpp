// SPDX-License-Identifier: Apache-2.0
#include "alphaforge/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace alphaforge {

namespace {

[[noreturn]] void toml_error(std::size_t line, const std::string& msg) {
  throw Error(ErrorCode::kConfig, "config line " + std::to_string(line) + ": " + msg);
}

class ValueReader {
 public:
  ValueReader(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  TomlValue read() {
    skip_ws();
    if (at_end()) toml_error(line_, "missing value");
    const char c = s_[pos_];
    if (c == '"') return string_value(basic_string());
    if (c == '\'') return string_value(literal_string());
    if (c == '[') return array();
    return bare();
  }

  void expect_end() {
    skip_ws();
    if (!at_end() && s_[pos_] != '#') toml_error(line_, "unexpected text after value: '" + std::string(s_.substr(pos_)) + "'");
  }

 private:
  bool at_end() const { return pos_ >= s_.size(); }
  void skip_ws() {
    while (!at_end() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  static TomlValue string_value(std::string s) {
    TomlValue v;
    v.kind = TomlValue::Kind::kString;
    v.str = std::move(s);
    return v;
  }

  std::string basic_string() {
    ++pos_;
    std::string out;
    while (true) {
      if (at_end()) toml_error(line_, "unterminated string");
      const char c = s_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (at_end()) toml_error(line_, "unterminated escape");
      const char e = s_[pos_++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: toml_error(line_, std::string("unsupported escape \\") + e);
      }
    }
  }

  std::string literal_string() {
    ++pos_;
    const std::size_t end = s_.find('\'', pos_);
    if (end == std::string_view::npos) toml_error(line_, "unterminated string");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  TomlValue array() {
    ++pos_;
    TomlValue v;
    v.kind = TomlValue::Kind::kArray;
    skip_ws();
    if (!at_end() && s_[pos_] == ']') {
      ++pos_;
      return v;
    }
    while (true) {
      TomlValue item = read();
      if (item.kind == TomlValue::Kind::kArray) toml_error(line_, "nested arrays are not supported");
      v.items.push_back(std::move(item));
      skip_ws();
      if (at_end()) toml_error(line_, "unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (!at_end() && s_[pos_] == ']') {
          ++pos_;
          return v;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return v;
      }
      toml_error(line_, "expected ',' or ']' in array");
    }
  }

  TomlValue bare() {
    const std::size_t start = pos_;
    while (!at_end() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' && s_[pos_] != ' ' &&
           s_[pos_] != '\t') {
      ++pos_;
    }
    std::string tok(s_.substr(start, pos_ - start));
    TomlValue v;
    if (tok == "true" || tok == "false") {
      v.kind = TomlValue::Kind::kBool;
      v.b = tok == "true";
      return v;
    }
    std::string digits;
    for (char c : tok)
      if (c != '_') digits += c;
    if (digits.empty()) toml_error(line_, "missing value");
    const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits.find("inf") != std::string::npos ||
                          digits.find("nan") != std::string::npos;
    if (!is_float) {
      std::int64_t i = 0;
      const char* b = digits.data() + (digits[0] == '+' ? 1 : 0);
      const char* e = digits.data() + digits.size();
      auto [p, ec] = std::from_chars(b, e, i);
      if (ec != std::errc() || p != e) toml_error(line_, "invalid value '" + tok + "' (strings must be quoted)");
      v.kind = TomlValue::Kind::kInt;
      v.i = i;
      return v;
    }
    try {
      v.f = parse_double(digits);
    } catch (const Error&) {
      toml_error(line_, "invalid number '" + tok + "'");
    }
    v.kind = TomlValue::Kind::kFloat;
    return v;
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::string TomlValue::describe() const {
  switch (kind) {
    case Kind::kString: return "string";
    case Kind::kInt: return "integer";
    case Kind::kFloat: return "float";
    case Kind::kBool: return "boolean";
    case Kind::kArray: return "array";
  }
  return "value";
}

std::map<std::string, TomlValue> parse_toml(std::string_view text) {
  std::map<std::string, TomlValue> out;
  std::string table;
  std::size_t pos = 0, lineno = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      const std::size_t close = line.find(']');
      if (close == std::string::npos) toml_error(lineno, "unterminated table header");
      const std::string rest = trim(line.substr(close + 1));
      if (!rest.empty() && rest[0] != '#') toml_error(lineno, "unexpected text after table header");
      table = trim(line.substr(1, close - 1));
      std::size_t start = 0;
      while (true) {
        const std::size_t dot = table.find('.', start);
        if (!valid_key(std::string_view(table).substr(start, dot == std::string::npos ? std::string::npos : dot - start))) {
          toml_error(lineno, "invalid table name '" + table + "'");
        }
        if (dot == std::string::npos) break;
        start = dot + 1;
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) toml_error(lineno, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) toml_error(lineno, "invalid key '" + key + "'");
    ValueReader reader(std::string_view(line).substr(eq + 1), lineno);
    TomlValue v = reader.read();
    reader.expect_end();
    const std::string full = table.empty() ? key : table + "." + key;
    if (!out.emplace(full, std::move(v)).second) toml_error(lineno, "duplicate key '" + full + "'");
  }
  return out;
}

namespace {

[[noreturn]] void type_error(const std::string& key, const char* want, const TomlValue& v) {
  throw Error(ErrorCode::kConfig, "config key '" + key + "' expects " + want + ", got " + v.describe());
}

std::int64_t as_int(const std::string& key, const TomlValue& v) {
  if (v.kind != TomlValue::Kind::kInt) type_error(key, "an integer", v);
  return v.i;
}

int as_int32(const std::string& key, const TomlValue& v) {
  const auto i = as_int(key, v);
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
    throw Error(ErrorCode::kConfig, "config key '" + key + "' is out of range");
  }
  return static_cast<int>(i);
}

double as_double(const std::string& key, const TomlValue& v) {
  if (v.kind == TomlValue::Kind::kInt) return static_cast<double>(v.i);
  if (v.kind != TomlValue::Kind::kFloat) type_error(key, "a number", v);
  return v.f;
}

bool as_bool(const std::string& key, const TomlValue& v) {
  if (v.kind != TomlValue::Kind::kBool) type_error(key, "a boolean", v);
  return v.b;
}

std::string as_string(const std::string& key, const TomlValue& v) {
  if (v.kind != TomlValue::Kind::kString) type_error(key, "a string", v);
  return v.str;
}

std::uint64_t as_seed(const std::string& key, const TomlValue& v) {
  const auto i = as_int(key, v);
  if (i < 0) throw Error(ErrorCode::kConfig, "config key '" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(i);
}

TomlValue value_from_text(const std::string& key, const std::string& text) {
  // Bare words that are not numbers or booleans are taken as strings so
  // command-line overrides need no quoting.
  try {
    ValueReader r(text, 0);
    TomlValue v = r.read();
    r.expect_end();
    return v;
  } catch (const Error&) {
    TomlValue v;
    v.kind = TomlValue::Kind::kString;
    v.str = text;
    (void)key;
    return v;
  }
}

}  // namespace

void RunConfig::apply(const std::string& key, const TomlValue& v) {
  if (key == "seed") {
    seed = as_seed(key, v);
    seed_set = true;
    gp.seed = seed;
    synth.seed = seed;
  } else if (key == "threads") {
    threads = as_int32(key, v);
  } else if (key == "data.path") {
    data_path = as_string(key, v);
  } else if (key == "data.reference") {
    reference_path = as_string(key, v);
  } else if (key == "data.strict") {
    strict = as_bool(key, v);
  } else if (key == "label.horizon") {
    horizon = as_int32(key, v);
    synth.horizon = horizon;
  } else if (key == "label.lag") {
    lag = as_int32(key, v);
    synth.lag = lag;
  } else if (key == "backtest.quantiles") {
    quantiles = as_int32(key, v);
  } else if (key == "backtest.cost_rate") {
    cost_rate = as_double(key, v);
  } else if (key == "gp.population_size") {
    gp.population_size = as_int32(key, v);
  } else if (key == "gp.generations") {
    gp.generations = as_int32(key, v);
  } else if (key == "gp.tournament_k") {
    gp.tournament_k = as_int32(key, v);
  } else if (key == "gp.p_crossover") {
    gp.p_crossover = as_double(key, v);
  } else if (key == "gp.p_mutation") {
    gp.p_mutation = as_double(key, v);
  } else if (key == "gp.p_reproduction") {
    gp.p_reproduction = as_double(key, v);
  } else if (key == "gp.max_depth") {
    gp.max_depth = as_int32(key, v);
  } else if (key == "gp.init_depth_range") {
    if (v.kind != TomlValue::Kind::kArray || v.items.size() != 2) type_error(key, "a two-element array", v);
    gp.init_depth_min = as_int32(key, v.items[0]);
    gp.init_depth_max = as_int32(key, v.items[1]);
  } else if (key == "gp.parsimony") {
    gp.parsimony = as_double(key, v);
  } else if (key == "gp.diversity_corr_cap") {
    gp.diversity_corr_cap = as_double(key, v);
  } else if (key == "gp.patience") {
    gp.patience = as_int32(key, v);
  } else if (key == "gp.train_fraction") {
    gp.train_fraction = as_double(key, v);
  } else if (key == "gp.seed") {
    gp.seed = as_seed(key, v);
  } else if (key == "gp.elitism_count") {
    gp.elitism_count = as_int32(key, v);
  } else if (key == "gp.max_invalid_retries") {
    gp.max_invalid_retries = as_int32(key, v);
  } else if (key == "gp.max_window") {
    gp.max_window = as_int32(key, v);
  } else if (key == "gp.hall_of_fame_size") {
    gp.hall_of_fame_size = as_int32(key, v);
  } else if (key == "gp.workers") {
    gp.workers = as_int32(key, v);
  } else if (key == "gp.min_obs") {
    gp.min_obs = as_int32(key, v);
  } else if (key == "llm.endpoint") {
    llm.base_url = as_string(key, v);
  } else if (key == "llm.model") {
    llm.model = as_string(key, v);
  } else if (key == "llm.api_key_env") {
    llm.api_key_env = as_string(key, v);
  } else if (key == "llm.timeout_s") {
    llm.timeout = std::chrono::seconds(as_int(key, v));
  } else if (key == "llm.max_retries") {
    llm.max_retries = as_int32(key, v);
  } else if (key == "llm.temperature") {
    llm.temperature = as_double(key, v);
  } else if (key == "llm.transcript") {
    transcript = as_string(key, v);
  } else if (key == "llm.knowledge") {
    knowledge = as_string(key, v);
  } else if (key == "llm.target_valid") {
    mining.target_valid = as_int32(key, v);
  } else if (key == "llm.batch_size") {
    mining.batch_size = as_int32(key, v);
  } else if (key == "llm.max_rounds") {
    mining.max_rounds = as_int32(key, v);
  } else if (key == "llm.k_examples") {
    mining.k_examples = as_int32(key, v);
  } else if (key == "llm.token_budget") {
    mining.token_budget = as_int32(key, v);
  } else if (key == "pool.dir") {
    pool_dir = as_string(key, v);
  } else if (key == "pool.corr_cap") {
    corr_cap = as_double(key, v);
  } else if (key == "pool.n_planes") {
    n_planes = as_int32(key, v);
  } else if (key == "pool.use_lsh") {
    use_lsh = as_bool(key, v);
  } else if (key == "synth.n_dates") {
    synth.n_dates = as_int32(key, v);
  } else if (key == "synth.n_instruments") {
    synth.n_instruments = as_int32(key, v);
  } else if (key == "synth.n_sectors") {
    synth.n_sectors = as_int32(key, v);
  } else if (key == "synth.plant") {
    const std::string p = as_string(key, v);
    if (p.empty()) synth.plant.reset();
    else synth.plant = p;
  } else if (key == "synth.plant_strength") {
    synth.plant_strength = as_double(key, v);
  } else if (key == "output.dir") {
    output_dir = as_string(key, v);
  } else {
    throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
  }
}

void RunConfig::set(const std::string& key, const std::string& value) { apply(key, value_from_text(key, value)); }

RunConfig config_from_toml(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  const auto values = parse_toml(text);
  // Top-level seed first so table-specific seeds can override it.
  if (auto it = values.find("seed"); it != values.end()) cfg.apply(it->first, it->second);
  for (const auto& [k, v] : values)
    if (k != "seed") cfg.apply(k, v);
  if (!base_dir.empty()) {
    for (auto* p : {&cfg.data_path, &cfg.reference_path, &cfg.transcript, &cfg.knowledge, &cfg.pool_dir,
                    &cfg.output_dir}) {
      if (!p->empty() && p->is_relative()) *p = base_dir / *p;
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  try {
    return config_from_toml(ss.str(), base);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["data"] = {{"path", data_path.string()}, {"reference", reference_path.string()}, {"strict", strict}};
  j["label"] = {{"horizon", horizon}, {"lag", lag}};
  j["backtest"] = {{"quantiles", quantiles}, {"cost_rate", cost_rate}};
  nlohmann::ordered_json g;
  g["population_size"] = gp.population_size;
  g["generations"] = gp.generations;
  g["tournament_k"] = gp.tournament_k;
  g["p_crossover"] = gp.p_crossover;
  g["p_mutation"] = gp.p_mutation;
  g["p_reproduction"] = gp.p_reproduction;
  g["max_depth"] = gp.max_depth;
  g["init_depth_range"] = {gp.init_depth_min, gp.init_depth_max};
  g["parsimony"] = gp.parsimony;
  g["diversity_corr_cap"] = gp.diversity_corr_cap;
  g["patience"] = gp.patience;
  g["train_fraction"] = gp.train_fraction;
  g["seed"] = gp.seed;
  g["elitism_count"] = gp.elitism_count;
  g["max_invalid_retries"] = gp.max_invalid_retries;
  g["max_window"] = gp.max_window;
  g["hall_of_fame_size"] = gp.hall_of_fame_size;
  g["workers"] = gp.workers;
  g["min_obs"] = gp.min_obs;
  j["gp"] = std::move(g);
  nlohmann::ordered_json l;
  l["endpoint"] = llm.base_url;
  l["model"] = llm.model;
  l["api_key_env"] = llm.api_key_env;
  l["timeout_s"] = llm.timeout.count();
  l["max_retries"] = llm.max_retries;
  l["temperature"] = llm.temperature;
  l["transcript"] = transcript.string();
  l["knowledge"] = knowledge.string();
  l["target_valid"] = mining.target_valid;
  l["batch_size"] = mining.batch_size;
  l["max_rounds"] = mining.max_rounds;
  l["k_examples"] = mining.k_examples;
  l["token_budget"] = mining.token_budget;
  j["llm"] = std::move(l);
  j["pool"] = {{"dir", pool_dir.string()}, {"corr_cap", corr_cap}, {"n_planes", n_planes}, {"use_lsh", use_lsh}};
  nlohmann::ordered_json s;
  s["n_dates"] = synth.n_dates;
  s["n_instruments"] = synth.n_instruments;
  s["n_sectors"] = synth.n_sectors;
  s["plant"] = synth.plant ? nlohmann::ordered_json(*synth.plant) : nlohmann::ordered_json(nullptr);
  s["plant_strength"] = synth.plant_strength;
  s["seed"] = synth.seed;
  j["synth"] = std::move(s);
  j["output"] = {{"dir", output_dir.string()}};
  return j.dump(2);
}

}  // namespace alphaforge

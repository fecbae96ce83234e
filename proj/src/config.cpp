#include "dualsr/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dualsr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define DUALSR_STRING(name, member) \
  Field { name, [](RunConfig& c, const std::string& v) { c.member = v; }, [](const RunConfig& c) { return c.member; } }
#define DUALSR_UINT(name, member, type)                                                                      \
  Field {                                                                                                     \
    name, [](RunConfig& c, const std::string& v) { c.member = static_cast<type>(parse_uint(name, v)); },     \
        [](const RunConfig& c) { return std::to_string(c.member); }                                          \
  }
#define DUALSR_DOUBLE(name, member)                                                             \
  Field {                                                                                        \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_double(name, v); },         \
        [](const RunConfig& c) { return format_double(c.member); }                              \
  }
#define DUALSR_BOOL(name, member)                                                          \
  Field {                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); },      \
        [](const RunConfig& c) { return format_bool(c.member); }                           \
  }
#define DUALSR_ENUM(name, member, parser)                                                  \
  Field {                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = parser(v); },                \
        [](const RunConfig& c) { return to_string(c.member); }                             \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      DUALSR_STRING("input", input),
      DUALSR_STRING("data_dir", data_dir),
      DUALSR_STRING("output_dir", output_dir),
      DUALSR_UINT("slices", slices, std::uint32_t),
      DUALSR_UINT("min_interactions", min_interactions, std::uint32_t),
      DUALSR_UINT("dim", model.dim, std::size_t),
      DUALSR_UINT("layers", model.layers, std::size_t),
      DUALSR_ENUM("fusion", model.fusion, parse_fusion_mode),
      DUALSR_ENUM("graph", model.graph, parse_graph_mode),
      DUALSR_BOOL("slice_rnn", model.slice_rnn),
      DUALSR_BOOL("concat_id", model.concat_id),
      DUALSR_ENUM("side", model.side, parse_side_mode),
      DUALSR_ENUM("slice_input", model.slice_input, parse_slice_input),
      DUALSR_DOUBLE("dropout", model.dropout),
      DUALSR_BOOL("dropout_propagation", model.dropout_sites.propagation),
      DUALSR_BOOL("dropout_gru", model.dropout_sites.gru),
      DUALSR_BOOL("dropout_mlp", model.dropout_sites.mlp),
      DUALSR_UINT("batch_size", train.batch_size, std::size_t),
      DUALSR_DOUBLE("learning_rate", train.learning_rate),
      DUALSR_DOUBLE("l2", train.l2),
      DUALSR_DOUBLE("beta", train.beta),
      DUALSR_UINT("neg_per_pos", train.neg_per_pos, std::size_t),
      DUALSR_UINT("max_epochs", train.max_epochs, std::size_t),
      DUALSR_UINT("patience", train.patience, std::size_t),
      DUALSR_UINT("seed", train.seed, std::uint64_t),
      DUALSR_ENUM("window", train.window, parse_window),
      DUALSR_UINT("s_min", train.s_min, std::uint32_t),
      DUALSR_DOUBLE("clip_norm", train.clip_norm),
      DUALSR_UINT("eval_k", train.eval_k, std::size_t),
      DUALSR_UINT("eval_negatives", train.eval_negatives, std::size_t),
  };
  return f;
}

#undef DUALSR_STRING
#undef DUALSR_UINT
#undef DUALSR_DOUBLE
#undef DUALSR_BOOL
#undef DUALSR_ENUM

const Field& field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

std::string dump(const RunConfig& cfg, bool include_location) {
  std::string out;
  for (const auto& f : fields()) {
    const std::string k = f.key;
    if (!include_location && (k == "output_dir" || k == "seed")) continue;
    out += k + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (slices < 3) throw ConfigError("slices must be >= 3");
  if (min_interactions < 1) throw ConfigError("min_interactions must be >= 1");
  model.validate();
  train.validate();
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.emplace_back(f.key);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  field(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return field(key).get(cfg); }

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_config_value(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

void apply_env_overrides(RunConfig& cfg, const EnvLookup& lookup) {
  for (const auto& key : config_keys()) {
    std::string name = kEnvPrefix;
    for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (auto v = lookup(name)) {
      try {
        set_config_value(cfg, key, trim(*v));
      } catch (const ConfigError& e) {
        throw ConfigError(name + ": " + e.what());
      }
    }
  }
}

void apply_env_overrides(RunConfig& cfg) {
  apply_env_overrides(cfg, [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  });
}

std::string canonical_config(const RunConfig& cfg) { return dump(cfg, false); }

std::string resolved_config(const RunConfig& cfg) { return dump(cfg, true); }

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_config(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string run_directory(const RunConfig& cfg) {
  return cfg.output_dir + "/" + config_hash(cfg) + "-s" + std::to_string(cfg.train.seed);
}

namespace {

struct Variant {
  const char* name;
  void (*apply)(RunConfig&);
};

const Variant kVariants[] = {
    {"full", [](RunConfig&) {}},
    {"wo_graph", [](RunConfig& c) { c.model.graph = GraphMode::none; }},
    {"wo_rnn", [](RunConfig& c) { c.model.slice_rnn = false; }},
    {"wo_concat_id", [](RunConfig& c) { c.model.concat_id = false; }},
    {"wo_aux", [](RunConfig& c) { c.train.beta = 0.0; }},
    {"global_graph", [](RunConfig& c) { c.model.graph = GraphMode::global; }},
    {"last_graph", [](RunConfig& c) { c.model.graph = GraphMode::last_only; }},
    {"user_slices", [](RunConfig& c) { c.model.side = SideMode::user_only; }},
    {"item_slices", [](RunConfig& c) { c.model.side = SideMode::item_only; }},
    {"concat", [](RunConfig& c) { c.model.fusion = FusionMode::concat; }},
    {"last_layer", [](RunConfig& c) { c.model.fusion = FusionMode::last_layer; }},
    {"mean_pool", [](RunConfig& c) { c.model.fusion = FusionMode::mean_pool; }},
    {"single_gru", [](RunConfig& c) { c.model.fusion = FusionMode::gru_shared; }},
};

}  // namespace

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& v : kVariants) n.emplace_back(v.name);
    return n;
  }();
  return names;
}

RunConfig apply_variant(RunConfig cfg, const std::string& name) {
  for (const auto& v : kVariants) {
    if (name == v.name) {
      v.apply(cfg);
      return cfg;
    }
  }
  std::string list;
  for (const auto& n : variant_names()) list += (list.empty() ? "" : ", ") + n;
  throw ConfigError("unknown variant '" + name + "' (registry: " + list + ")");
}

}  // namespace dualsr

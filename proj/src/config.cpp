#include "dpvqa/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "dpvqa/errors.hpp"
#include "dpvqa/param_store.hpp"

namespace dpvqa {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw FormatError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw FormatError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw FormatError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

using Getter = std::function<std::string(const RunConfig&)>;
using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

struct Field {
  const char* key;
  Getter get;
  Setter set;
};

#define DPVQA_SIZE_FIELD(name)                                                    \
  Field {                                                                         \
    #name, [](const RunConfig& c) { return std::to_string(c.name); },             \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.name = to_size(k, v); } \
  }
#define DPVQA_DOUBLE_FIELD(name)                                                    \
  Field {                                                                           \
    #name, [](const RunConfig& c) { return fmt_double(c.name); },                   \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.name = to_double(k, v); } \
  }
#define DPVQA_STRING_FIELD(name)                                                         \
  Field {                                                                                \
    #name, [](const RunConfig& c) { return c.name; },                                    \
        [](RunConfig& c, const std::string&, const std::string& v) { c.name = v; }       \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> all{
      Field{"variant", [](const RunConfig& c) { return to_string(c.variant); },
            [](RunConfig& c, const std::string&, const std::string& v) {
              c.variant = parse_variant(v);
            }},
      DPVQA_SIZE_FIELD(clips),
      DPVQA_SIZE_FIELD(clip_len),
      DPVQA_SIZE_FIELD(max_order),
      DPVQA_SIZE_FIELD(dim),
      DPVQA_SIZE_FIELD(steps),
      DPVQA_SIZE_FIELD(embed_dim),
      DPVQA_SIZE_FIELD(max_subsets),
      DPVQA_DOUBLE_FIELD(lr),
      DPVQA_DOUBLE_FIELD(count_lr),
      DPVQA_SIZE_FIELD(batch_size),
      DPVQA_SIZE_FIELD(epochs),
      Field{"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.seed = to_u64(k, v);
            }},
      Field{"precision", [](const RunConfig& c) { return to_string(c.precision); },
            [](RunConfig& c, const std::string&, const std::string& v) {
              c.precision = parse_precision(v);
            }},
      DPVQA_STRING_FIELD(corpus),
      DPVQA_STRING_FIELD(out),
      DPVQA_SIZE_FIELD(reader_workers),
      DPVQA_DOUBLE_FIELD(grad_clip),
      DPVQA_DOUBLE_FIELD(weight_decay),
      DPVQA_DOUBLE_FIELD(dropout),
  };
  return all;
}

#undef DPVQA_SIZE_FIELD
#undef DPVQA_DOUBLE_FIELD
#undef DPVQA_STRING_FIELD

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ContractError("config: " + msg); };
  if (steps < 1) fail("steps must be at least 1");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (dim == 0 || dim % 2 != 0) fail("dim must be a positive even number");
  if (embed_dim == 0) fail("embed_dim must be positive");
  if (clips == 0 || clip_len == 0) fail("clips and clip_len must be positive");
  if (max_subsets == 0) fail("max_subsets must be positive");
  const std::size_t k = model_config(16).crn.resolved_max_order();
  if (k < 2 || k > clips) fail("max_order must lie in [2, clips]");
  if (!(lr > 0) || !(count_lr > 0)) fail("learning rates must be positive");
  if (dropout < 0 || dropout >= 1) fail("dropout must lie in [0, 1)");
  if (grad_clip < 0 || weight_decay < 0) fail("grad_clip and weight_decay must be non-negative");
}

ModelConfig RunConfig::model_config(std::size_t in_channels) const {
  ModelConfig m;
  m.variant = variant;
  m.crn.clips = clips;
  m.crn.clip_len = clip_len;
  m.crn.max_order = max_order;
  m.crn.in_channels = in_channels;
  m.crn.dim = dim;
  m.crn.max_subsets = max_subsets;
  m.steps = steps;
  m.embed_dim = embed_dim;
  m.dropout = dropout;
  return m;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(*this) + "\n";
  return out;
}

void set_field(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(config, key, value);
      return;
    }
  }
  throw FormatError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    set_field(c, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void save_config(const std::string& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write config file " + path);
  out << config.to_text();
}

void apply_overrides(RunConfig& config, const std::map<std::string, std::string>& env) {
  for (const auto& f : fields()) {
    std::string name = "DPVQA_" + std::string(f.key);
    std::transform(name.begin(), name.end(), name.begin(), ::toupper);
    auto it = env.find(name);
    if (it != env.end()) f.set(config, f.key, it->second);
  }
}

void apply_env_overrides(RunConfig& config) {
  std::map<std::string, std::string> env;
  for (const auto& f : fields()) {
    std::string name = "DPVQA_" + std::string(f.key);
    std::transform(name.begin(), name.end(), name.begin(), ::toupper);
    if (const char* v = std::getenv(name.c_str())) env[name] = v;
  }
  apply_overrides(config, env);
}

std::uint64_t config_hash(const RunConfig& config, const Vocabulary& vocab) {
  std::string key = "variant=" + to_string(config.variant) +
                    ";clips=" + std::to_string(config.clips) +
                    ";clip_len=" + std::to_string(config.clip_len) +
                    ";max_order=" + std::to_string(config.max_order) +
                    ";dim=" + std::to_string(config.dim) +
                    ";steps=" + std::to_string(config.steps) +
                    ";embed_dim=" + std::to_string(config.embed_dim) +
                    ";max_subsets=" + std::to_string(config.max_subsets) + ";tokens=";
  for (std::size_t i = 0; i < vocab.size(); ++i) key += vocab.token(i) + " ";
  key += ";answers=";
  for (const auto& a : vocab.answers()) key += a + " ";
  return hash_string(key);
}

}  // namespace dpvqa

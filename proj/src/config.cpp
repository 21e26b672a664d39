#include "argan/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

namespace argan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename V>
V parse_number(const std::string& s, const std::string& key) {
  V v{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw ConfigError("invalid value '" + s + "' for " + key);
  }
  return v;
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("invalid boolean '" + s + "' for " + key);
}

struct Field {
  const char* name;
  std::function<void(ArganConfig&, const std::string&)> set;
  std::function<std::string(const ArganConfig&)> get;
};

#define INT_FIELD(f)                                                                      \
  Field {                                                                                 \
    #f, [](ArganConfig& c, const std::string& v) { c.f = parse_number<int>(v, #f); },     \
        [](const ArganConfig& c) { return std::to_string(c.f); }                          \
  }
#define DOUBLE_FIELD(f)                                                                   \
  Field {                                                                                 \
    #f, [](ArganConfig& c, const std::string& v) { c.f = parse_number<double>(v, #f); },  \
        [](const ArganConfig& c) { return format_double(c.f); }                           \
  }
#define BOOL_FIELD(f)                                                                     \
  Field {                                                                                 \
    #f, [](ArganConfig& c, const std::string& v) { c.f = parse_bool(v, #f); },            \
        [](const ArganConfig& c) { return std::string(c.f ? "true" : "false"); }         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      INT_FIELD(N),
      DOUBLE_FIELD(lambda),
      INT_FIELD(image_size),
      INT_FIELD(depth),
      INT_FIELD(base_channels),
      INT_FIELD(channel_cap),
      INT_FIELD(batch_size),
      DOUBLE_FIELD(lr),
      DOUBLE_FIELD(momentum_mu),
      DOUBLE_FIELD(adam_beta1),
      DOUBLE_FIELD(adam_beta2),
      DOUBLE_FIELD(adam_eps),
      INT_FIELD(iterations),
      Field{"seed",
            [](ArganConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v, "seed"); },
            [](const ArganConfig& c) { return std::to_string(c.seed); }},
      BOOL_FIELD(share_weights),
      BOOL_FIELD(semi_supervised),
      INT_FIELD(detector_channels),
      INT_FIELD(detector_layers),
      INT_FIELD(checkpoint_every),
  };
  return all;
}

}  // namespace

void validate(const ArganConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.N < 1) fail("N must be >= 1");
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) fail("lambda must lie in [0, 1]");
  if (c.depth < 2 || c.depth > 12) fail("depth must lie in [2, 12]");
  const int divisor = std::max(1 << c.depth, 32);
  if (c.image_size < divisor || c.image_size % divisor != 0) {
    fail("image_size " + std::to_string(c.image_size) + " must be a multiple of " + std::to_string(divisor));
  }
  if (c.base_channels < 1 || c.channel_cap < c.base_channels) fail("need 1 <= base_channels <= channel_cap");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (!(c.lr > 0.0)) fail("lr must be positive");
  if (!(c.momentum_mu >= 0.0 && c.momentum_mu < 1.0)) fail("momentum_mu must lie in [0, 1)");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0)) fail("adam_beta1 must lie in [0, 1)");
  if (!(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) fail("adam_beta2 must lie in [0, 1)");
  if (!(c.adam_eps > 0.0)) fail("adam_eps must be positive");
  if (c.iterations < 0) fail("iterations must be >= 0");
  if (c.detector_channels < 1) fail("detector_channels must be >= 1");
  if (c.detector_layers < 1) fail("detector_layers must be >= 1");
  if (c.checkpoint_every < 0) fail("checkpoint_every must be >= 0");
}

ArganConfig parse_config(const std::string& text) {
  std::map<std::string, const Field*> by_name;
  for (const auto& f : fields()) by_name[f.name] = &f;
  ArganConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = by_name.find(key);
    if (it == by_name.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      it->second->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

ArganConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string serialize_config(const ArganConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.name) + " = " + f.get(cfg) + "\n";
  return out;
}

NetConfig net_config(const ArganConfig& c) {
  NetConfig n;
  n.image_size = c.image_size;
  n.steps = c.N;
  n.depth = c.depth;
  n.base_channels = c.base_channels;
  n.channel_cap = c.channel_cap;
  n.detector_channels = c.detector_channels;
  n.detector_layers = c.detector_layers;
  n.share_weights = c.share_weights;
  return n;
}

}  // namespace argan

#include "remogen/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace remogen {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("config: bad value for '" + key + "': " + v);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got " + v);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  return out;
}

}  // namespace

void EngineConfig::validate() const {
  generation.validate();
  if (latent_dim == 0 || width == 0 || heads == 0 || layers == 0 || ffn_mult == 0) {
    throw ConfigError("config: architecture sizes must be positive");
  }
  if (width % heads != 0) throw ConfigError("config: width must be divisible by heads");
  for (int l : injection_layers) {
    if (l < 0 || static_cast<std::size_t>(l) >= layers) throw ConfigError("config: injection layer out of range");
  }
  if (!(beta_sens >= 0.0)) throw ConfigError("config: beta_sens must be >= 0");
  if (!(h_step > 0.0)) throw ConfigError("config: h_step must be positive");
  if (!(radii.collision_radius > 0.0) || !(radii.contact_radius > 0.0)) throw ConfigError("config: radii must be > 0");
  if (!(epsilon > 0.0)) throw ConfigError("config: epsilon must be positive");
  if (others_window == 0) throw ConfigError("config: others_window must be >= 1");
  for (const auto& [id, a] : alpha) {
    if (!std::isfinite(a)) throw ConfigError("config: alpha for " + id + " is not finite");
  }
}

std::map<std::string, double> parse_alpha(std::string_view text) {
  std::map<std::string, double> out;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("alpha: expected id=weight, got " + item);
    const std::string id = trim(item.substr(0, eq));
    if (id.empty()) throw ConfigError("alpha: empty module id");
    out[id] = parse_number<double>("alpha", trim(item.substr(eq + 1)));
  }
  return out;
}

std::string format_alpha(const std::map<std::string, double>& alpha) {
  std::string out;
  for (const auto& [id, a] : alpha) {
    if (!out.empty()) out += ",";
    std::ostringstream v;
    v << a;
    out += id + "=" + v.str();
  }
  return out;
}

EngineConfig parse_config(std::string_view text) {
  EngineConfig c;
  std::stringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    auto& g = c.generation;
    if (key == "H") g.history = parse_number<std::size_t>(key, v);
    else if (key == "F") g.future = parse_number<std::size_t>(key, v);
    else if (key == "steps") g.steps = parse_number<std::size_t>(key, v);
    else if (key == "guidance_scale") g.guidance_scale = parse_number<double>(key, v);
    else if (key == "fps") g.fps = parse_number<double>(key, v);
    else if (key == "seed") g.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "d_z") c.latent_dim = parse_number<std::size_t>(key, v);
    else if (key == "width") c.width = parse_number<std::size_t>(key, v);
    else if (key == "heads") c.heads = parse_number<std::size_t>(key, v);
    else if (key == "layers") c.layers = parse_number<std::size_t>(key, v);
    else if (key == "ffn_mult") c.ffn_mult = parse_number<std::size_t>(key, v);
    else if (key == "injection_layers") c.injection_layers = parse_int_list(key, v);
    else if (key == "beta_sens") c.beta_sens = parse_number<double>(key, v);
    else if (key == "h_step") c.h_step = parse_number<double>(key, v);
    else if (key == "alpha") c.alpha = parse_alpha(v);
    else if (key == "fwsr") c.fwsr = parse_bool(key, v);
    else if (key == "collision_radius") c.radii.collision_radius = parse_number<double>(key, v);
    else if (key == "contact_radius") c.radii.contact_radius = parse_number<double>(key, v);
    else if (key == "epsilon") c.epsilon = parse_number<double>(key, v);
    else if (key == "others_window") c.others_window = parse_number<std::size_t>(key, v);
    else if (key == "scene") c.scene = v;
    else if (key == "text") c.text = v;
    else if (key == "clamp_scope") {
      if (v == "joint") c.clamp_scope = ClampScope::kJoint;
      else if (v == "per_layer") c.clamp_scope = ClampScope::kPerLayer;
      else throw ConfigError("config: clamp_scope must be joint or per_layer");
    } else {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_environment(EngineConfig& cfg) {
  if (const char* s = std::getenv("REMOGEN_SEED"); s && *s) {
    cfg.generation.seed = parse_number<std::uint64_t>("REMOGEN_SEED", trim(s));
  }
}

}  // namespace remogen

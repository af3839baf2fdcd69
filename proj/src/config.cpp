#include "pourmon/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>

namespace pourmon {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T, typename Parse>
T parse_number(const std::string& key, const std::string& v, Parse parse) {
  try {
    std::size_t used = 0;
    T out = parse(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad value for '" + key + "': '" + v + "'");
  }
}

int as_int(const std::string& k, const std::string& v) {
  return parse_number<int>(k, v, [](const std::string& s, std::size_t* n) { return std::stoi(s, n); });
}
double as_double(const std::string& k, const std::string& v) {
  return parse_number<double>(k, v, [](const std::string& s, std::size_t* n) { return std::stod(s, n); });
}
std::uint64_t as_u64(const std::string& k, const std::string& v) {
  if (!v.empty() && v.front() == '-') throw ConfigError("bad value for '" + k + "': '" + v + "'");
  return parse_number<std::uint64_t>(k, v, [](const std::string& s, std::size_t* n) { return std::stoull(s, n); });
}
bool as_bool(const std::string& k, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("bad value for '" + k + "': '" + v + "' (expected true | false)");
}

template <typename F>
auto translate(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      // dataset
      {"preset",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto seed = c.sim.seed;
         if (v == "full") c.sim = SimConfig::full();
         else if (v == "desk-cross-user") c.sim = SimConfig::desk_cross_user();
         else if (v == "desk-cross-trial") c.sim = SimConfig::desk_cross_trial();
         else throw ConfigError("bad value for '" + k + "': '" + v + "' (expected full | desk-cross-user | desk-cross-trial)");
         c.sim.seed = seed;
       }},
      {"frames", [](RunConfig& c, auto& k, auto& v) { c.sim.frames = as_int(k, v); }},
      {"feature_dim",
       [](RunConfig& c, auto& k, auto& v) { c.sim.feature_dim = c.train.model.feature_dim = as_int(k, v); }},
      {"imu_samples",
       [](RunConfig& c, auto& k, auto& v) { c.sim.imu_samples = c.train.model.imu_samples = as_int(k, v); }},
      {"frame_interval", [](RunConfig& c, auto& k, auto& v) { c.sim.frame_interval = as_double(k, v); }},
      {"users", [](RunConfig& c, auto& k, auto& v) { c.sim.users = as_int(k, v); }},
      {"trials", [](RunConfig& c, auto& k, auto& v) { c.sim.trials = as_int(k, v); }},
      {"sim_seed", [](RunConfig& c, auto& k, auto& v) { c.sim.seed = as_u64(k, v); }},
      {"noise_fraction", [](RunConfig& c, auto& k, auto& v) { c.sim.noise_fraction = as_double(k, v); }},
      // model
      {"encoder",
       [](RunConfig& c, auto& k, auto& v) { c.train.model.encoder = translate(k, [&] { return parse_encoder(v); }); }},
      {"sizes",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto d = c.train.model.feature_dim, n = c.train.model.imu_samples;
         const auto enc = c.train.model.encoder;
         if (v == "desk") c.train.model = ModelConfig::desk();
         else if (v == "large") c.train.model = ModelConfig::large();
         else throw ConfigError("bad value for '" + k + "': '" + v + "' (expected desk | large)");
         // Input dimensions stay tied to the data.
         c.train.model.feature_dim = d;
         c.train.model.imu_samples = n;
         c.train.model.encoder = enc;
       }},
      {"img_hidden", [](RunConfig& c, auto& k, auto& v) { c.train.model.img_hidden = as_int(k, v); }},
      {"pos_hidden", [](RunConfig& c, auto& k, auto& v) { c.train.model.pos_hidden = as_int(k, v); }},
      {"rot_hidden", [](RunConfig& c, auto& k, auto& v) { c.train.model.rot_hidden = as_int(k, v); }},
      {"fuse_hidden", [](RunConfig& c, auto& k, auto& v) { c.train.model.fuse_hidden = as_int(k, v); }},
      {"gen_width", [](RunConfig& c, auto& k, auto& v) { c.train.model.gen_width = as_int(k, v); }},
      {"disc_width", [](RunConfig& c, auto& k, auto& v) { c.train.model.disc_width = as_int(k, v); }},
      {"monitor_width", [](RunConfig& c, auto& k, auto& v) { c.train.model.monitor_width = as_int(k, v); }},
      // training
      {"variant",
       [](RunConfig& c, auto& k, auto& v) { c.train.variant = translate(k, [&] { return parse_variant(v); }); }},
      {"lambda", [](RunConfig& c, auto& k, auto& v) { c.train.lambda = as_double(k, v); }},
      {"learning_rate", [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = as_double(k, v); }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = as_int(k, v); }},
      {"epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = as_int(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = as_u64(k, v); }},
      {"clip_norm", [](RunConfig& c, auto& k, auto& v) { c.train.clip_norm = as_double(k, v); }},
      {"aux_success_only", [](RunConfig& c, auto& k, auto& v) { c.train.aux_success_only = as_bool(k, v); }},
      // split and paths
      {"scheme",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "none") c.scheme.reset();
         else c.scheme = translate(k, [&] { return parse_scheme(v); });
       }},
      {"holdout", [](RunConfig& c, auto&, auto& v) { c.holdout = v; }},
      {"data_dir", [](RunConfig& c, auto&, auto& v) { c.data_dir = v; }},
      {"out", [](RunConfig& c, auto&, auto& v) { c.out = v; }},
  };
  return table;
}

}  // namespace

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second(cfg, key, value);
}

void apply_assignment(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string() + ": cannot open");
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_assignment(cfg, line);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

void RunConfig::validate() const {
  try {
    sim.validate();
    TrainConfig t = train;
    if (scheme) t.model.num_classes = scheme_num_classes(*scheme);
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (sim.feature_dim != train.model.feature_dim || sim.imu_samples != train.model.imu_samples)
    throw ConfigError("simulator and model input dimensions disagree");
  const auto& m = train.model;
  for (int v : {m.img_hidden, m.pos_hidden, m.rot_hidden, m.fuse_hidden, m.gen_width, m.disc_width, m.monitor_width})
    if (v < 1) throw ConfigError("layer sizes must be positive");
  if (!holdout.empty() && !scheme) throw ConfigError("holdout given without a scheme");
}

}  // namespace pourmon

#include "tsn/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace tsn {

const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::routing: return "routing";
    case FusionMode::pixel_only: return "pixel_only";
    case FusionMode::equal: return "equal";
    case FusionMode::instance_only: return "instance_only";
  }
  return "?";
}

const char* to_string(InstanceMode m) {
  switch (m) {
    case InstanceMode::per_frame_heads: return "per_frame_heads";
    case InstanceMode::single_pooled_head: return "single_pooled_head";
    case InstanceMode::gap_predictor: return "gap_predictor";
  }
  return "?";
}

const char* to_string(PositionMode m) {
  switch (m) {
    case PositionMode::rel_coord: return "rel_coord";
    case PositionMode::sine: return "sine";
    case PositionMode::none: return "none";
  }
  return "?";
}

FusionMode fusion_mode_from(const std::string& s) {
  if (s == "routing") return FusionMode::routing;
  if (s == "pixel_only") return FusionMode::pixel_only;
  if (s == "equal") return FusionMode::equal;
  if (s == "instance_only") return FusionMode::instance_only;
  throw ConfigError("unknown fusion mode: " + s);
}

InstanceMode instance_mode_from(const std::string& s) {
  if (s == "per_frame_heads") return InstanceMode::per_frame_heads;
  if (s == "single_pooled_head") return InstanceMode::single_pooled_head;
  if (s == "gap_predictor") return InstanceMode::gap_predictor;
  throw ConfigError("unknown instance mode: " + s);
}

PositionMode position_mode_from(const std::string& s) {
  if (s == "rel_coord") return PositionMode::rel_coord;
  if (s == "sine") return PositionMode::sine;
  if (s == "none") return PositionMode::none;
  throw ConfigError("unknown position mode: " + s);
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

long to_long(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long out = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": " + v);
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": " + v);
  }
}

void apply(ModelConfig& cfg, const std::string& key, const std::string& val) {
  if (key == "s") cfg.s = static_cast<int>(to_long(key, val));
  else if (key == "c_k") cfg.c_k = static_cast<int>(to_long(key, val));
  else if (key == "c_v") cfg.c_v = static_cast<int>(to_long(key, val));
  else if (key == "enc_c1") cfg.enc_c1 = static_cast<int>(to_long(key, val));
  else if (key == "enc_tap") cfg.enc_tap = static_cast<int>(to_long(key, val));
  else if (key == "k_topk") cfg.k_topk = static_cast<int>(to_long(key, val));
  else if (key == "n_max") cfg.n_max = static_cast<int>(to_long(key, val));
  else if (key == "fusion_mode") cfg.fusion = fusion_mode_from(val);
  else if (key == "instance_mode") cfg.instance = instance_mode_from(val);
  else if (key == "position_mode") cfg.position = position_mode_from(val);
  else if (key == "lr") cfg.lr = to_double(key, val);
  else if (key == "poly_power") cfg.poly_power = to_double(key, val);
  else if (key == "iterations") cfg.iterations = static_cast<int>(to_long(key, val));
  else if (key == "batch") cfg.batch = static_cast<int>(to_long(key, val));
  else if (key == "bootstrap_final") cfg.bootstrap_final = to_double(key, val);
  else if (key == "bootstrap_warm") cfg.bootstrap_warm = to_double(key, val);
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(to_long(key, val));
  else if (key == "write_every") cfg.write_every = static_cast<int>(to_long(key, val));
  else throw ConfigError("unknown config key: " + key);
}

}  // namespace

ModelConfig parse_config_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    apply(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate(cfg);
  return cfg;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open config: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_text(const ModelConfig& c) {
  std::ostringstream os;
  os << "s = " << c.s << "\n";
  os << "c_k = " << c.c_k << "\n";
  os << "c_v = " << c.c_v << "\n";
  os << "enc_c1 = " << c.enc_c1 << "\n";
  os << "enc_tap = " << c.enc_tap << "\n";
  os << "k_topk = " << c.k_topk << "\n";
  os << "n_max = " << c.n_max << "\n";
  os << "fusion_mode = " << to_string(c.fusion) << "\n";
  os << "instance_mode = " << to_string(c.instance) << "\n";
  os << "position_mode = " << to_string(c.position) << "\n";
  os << "lr = " << c.lr << "\n";
  os << "poly_power = " << c.poly_power << "\n";
  os << "iterations = " << c.iterations << "\n";
  os << "batch = " << c.batch << "\n";
  os << "bootstrap_final = " << c.bootstrap_final << "\n";
  os << "bootstrap_warm = " << c.bootstrap_warm << "\n";
  os << "seed = " << c.seed << "\n";
  os << "write_every = " << c.write_every << "\n";
  return os.str();
}

void validate(const ModelConfig& c) {
  if (c.s != 4) throw ConfigError("s must be 4 for the fixed three-layer encoder");
  if (c.c_k < 1 || c.c_v < 1 || c.enc_c1 < 1 || c.enc_tap < 1)
    throw ConfigError("channel widths must be positive");
  if (c.c_v % 4 != 0) throw ConfigError("c_v must be divisible by 4 for the decoder widths");
  if (c.k_topk < 1) throw ConfigError("k_topk must be >= 1");
  if (c.n_max < 1) throw ConfigError("n_max must be >= 1");
  if (c.iterations < 1 || c.batch < 1) throw ConfigError("iterations and batch must be >= 1");
  if (c.bootstrap_final <= 0.0 || c.bootstrap_final > 1.0)
    throw ConfigError("bootstrap_final must be in (0, 1]");
  if (c.bootstrap_warm < 0.0 || c.bootstrap_warm > 1.0)
    throw ConfigError("bootstrap_warm must be in [0, 1]");
  if (c.write_every < 1) throw ConfigError("write_every must be >= 1");
  if (c.lr < 0.0) throw ConfigError("lr must be >= 0");
}

std::string config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["s"] = c.s;
  j["c_k"] = c.c_k;
  j["c_v"] = c.c_v;
  j["enc_c1"] = c.enc_c1;
  j["enc_tap"] = c.enc_tap;
  j["k_topk"] = c.k_topk;
  j["n_max"] = c.n_max;
  j["fusion_mode"] = to_string(c.fusion);
  j["instance_mode"] = to_string(c.instance);
  j["position_mode"] = to_string(c.position);
  j["lr"] = c.lr;
  j["poly_power"] = c.poly_power;
  j["iterations"] = c.iterations;
  j["batch"] = c.batch;
  j["bootstrap_final"] = c.bootstrap_final;
  j["bootstrap_warm"] = c.bootstrap_warm;
  j["seed"] = c.seed;
  j["write_every"] = c.write_every;
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelConfig c;
  c.s = j.at("s").get<int>();
  c.c_k = j.at("c_k").get<int>();
  c.c_v = j.at("c_v").get<int>();
  c.enc_c1 = j.at("enc_c1").get<int>();
  c.enc_tap = j.at("enc_tap").get<int>();
  c.k_topk = j.at("k_topk").get<int>();
  c.n_max = j.at("n_max").get<int>();
  c.fusion = fusion_mode_from(j.at("fusion_mode").get<std::string>());
  c.instance = instance_mode_from(j.at("instance_mode").get<std::string>());
  c.position = position_mode_from(j.at("position_mode").get<std::string>());
  c.lr = j.at("lr").get<double>();
  c.poly_power = j.at("poly_power").get<double>();
  c.iterations = j.at("iterations").get<int>();
  c.batch = j.at("batch").get<int>();
  c.bootstrap_final = j.at("bootstrap_final").get<double>();
  c.bootstrap_warm = j.at("bootstrap_warm").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.write_every = j.at("write_every").get<int>();
  validate(c);
  return c;
}

}  // namespace tsn

#include "omcl/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace omcl {

namespace {

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

void set_field(TrainConfig& cfg, const std::string& raw_key, const nlohmann::json& v,
               const std::string& origin) {
  const std::string key = normalize_key(raw_key);
  try {
    if (key == "dataset" || key == "dataset_path") cfg.dataset_path = v.get<std::string>();
    else if (key == "split_file") cfg.split_file = v.get<std::string>();
    else if (key == "trial") cfg.trial = v.get<int>();
    else if (key == "backbone") cfg.backbone = v.get<std::string>();
    else if (key == "mlp_hidden") cfg.mlp_hidden = v.get<std::vector<int>>();
    else if (key == "embed_dim" || key == "d") cfg.embed_dim = v.get<int>();
    else if (key == "batch_size") cfg.batch_size = v.get<int>();
    else if (key == "epochs") cfg.epochs = v.get<int>();
    else if (key == "lr") cfg.lr = v.get<double>();
    else if (key == "s0") cfg.s0 = v.get<double>();
    else if (key == "margin" || key == "m") cfg.margin = v.get<double>();
    else if (key == "threshold" || key == "t") cfg.threshold = v.get<double>();
    else if (key == "lambda") cfg.lambda = v.get<double>();
    else if (key == "descriptors" || key == "num_descriptors")
      cfg.descriptors = v.get<int>();
    else if (key == "descriptor_mode") cfg.descriptor_mode = v.get<std::string>();
    else if (key == "scoring") cfg.scoring = v.get<std::string>();
    else if (key == "seed") cfg.seed = v.get<uint64_t>();
    else if (key == "enable_mlas") cfg.enable_mlas = v.get<bool>();
    else if (key == "enable_oss") cfg.enable_oss = v.get<bool>();
    else if (key == "adaptive_scale") cfg.adaptive_scale = v.get<bool>();
    else if (key == "augment") cfg.augment = v.get<bool>();
    else if (key == "threads") cfg.threads = v.get<int>();
    else if (key == "label") cfg.label = v.get<std::string>();
    else if (key == "out_dir" || key == "out") cfg.out_dir = v.get<std::string>();
    else throw ConfigError(origin + ": unknown config key '" + raw_key + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(origin + ": bad value for '" + raw_key + "': " + e.what());
  }
}

// flat "key = value" format: strings quoted, bools true/false, int lists
// as [a, b]; '#' starts a comment
nlohmann::json parse_flat_value(const std::string& raw, const std::string& origin,
                                const std::string& key) {
  std::string v = raw;
  const auto trim = [](std::string& s) {
    const size_t a = s.find_first_not_of(" \t");
    const size_t b = s.find_last_not_of(" \t");
    s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
  };
  trim(v);
  if (v.empty()) throw ConfigError(origin + ": empty value for '" + key + "'");
  if (v.front() == '"' || v.front() == '\'') {
    if (v.size() < 2 || v.back() != v.front())
      throw ConfigError(origin + ": unterminated string for '" + key + "'");
    return v.substr(1, v.size() - 2);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '[') {
    std::vector<int> items;
    std::string digits;
    for (char c : v)
      if ((c >= '0' && c <= '9') || c == '-') digits += c;
      else if (!digits.empty()) {
        items.push_back(std::stoi(digits));
        digits.clear();
      }
    if (!digits.empty()) items.push_back(std::stoi(digits));
    return items;
  }
  try {
    if (v.find('.') != std::string::npos || v.find('e') != std::string::npos ||
        v.find('E') != std::string::npos)
      return std::stod(v);
    return std::stoll(v);
  } catch (const std::exception&) {
    throw ConfigError(origin + ": cannot parse value '" + v + "' for '" + key + "'");
  }
}

}  // namespace

void apply_config_text(TrainConfig& cfg, const std::string& text, bool is_json,
                       const std::string& origin) {
  if (is_json) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(origin + ": invalid JSON: " + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it)
      set_field(cfg, it.key(), it.value(), origin);
    return;
  }
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": expected 'key = value'");
      continue;
    }
    std::string key = line.substr(0, eq);
    key.erase(std::remove_if(key.begin(), key.end(),
                             [](char c) { return c == ' ' || c == '\t'; }),
              key.end());
    set_field(cfg, key, parse_flat_value(line.substr(eq + 1), origin, key), origin);
  }
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  TrainConfig cfg;
  const bool is_json = path.size() > 5 && path.substr(path.size() - 5) == ".json";
  apply_config_text(cfg, text, is_json, path);
  return cfg;
}

std::string config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["dataset"] = cfg.dataset_path;
  j["split_file"] = cfg.split_file;
  j["trial"] = cfg.trial;
  j["backbone"] = cfg.backbone;
  j["mlp_hidden"] = cfg.mlp_hidden;
  j["embed_dim"] = cfg.embed_dim;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["lr"] = cfg.lr;
  j["s0"] = cfg.s0;
  j["margin"] = cfg.margin;
  j["threshold"] = cfg.threshold;
  j["lambda"] = cfg.lambda;
  j["descriptors"] = cfg.descriptors;
  j["descriptor_mode"] = cfg.descriptor_mode;
  j["scoring"] = cfg.scoring;
  j["seed"] = cfg.seed;
  j["enable_mlas"] = cfg.enable_mlas;
  j["enable_oss"] = cfg.enable_oss;
  j["adaptive_scale"] = cfg.adaptive_scale;
  j["augment"] = cfg.augment;
  j["threads"] = cfg.threads;
  j["label"] = cfg.label;
  return j.dump(2);
}

uint64_t fnv1a64_bytes(const void* data, size_t len) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return s;
}

std::string config_digest(const TrainConfig& cfg) {
  // out_dir intentionally excluded: moving outputs must not change identity
  const std::string canon = config_to_json(cfg);
  return hex64(fnv1a64_bytes(canon.data(), canon.size()));
}

}  // namespace omcl

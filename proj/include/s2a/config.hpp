#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "s2a/common.hpp"
#include "s2a/train.hpp"

namespace s2a {

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out{};
  char rest;
  if (!(is >> out) || is >> rest)
    fail(Err::BadConfig, "config key '" + key + "' expects a number, got '" + value + "'");
  return out;
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::string item;
  std::istringstream is(value);
  while (std::getline(is, item, ','))
    out.push_back(parse_number<int>(key, trim(item)));
  require(!out.empty(), Err::BadConfig, "config key '" + key + "' expects a comma list");
  return out;
}

}  // namespace detail

// Dataset split fractions ride along with the training knobs.
struct SplitConfig {
  double val = 0.1;
  double test = 0.1;
  double train() const { return 1.0 - val - test; }
};

// Applies one `key = value` assignment; rejects unknown keys.
inline void apply_config_kv(TrainConfig& cfg, SplitConfig& split, const std::string& key,
                            const std::string& value) {
  using detail::parse_number;
  if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "batch") cfg.batch = parse_number<int>(key, value);
  else if (key == "lr") cfg.lr = parse_number<double>(key, value);
  else if (key == "beta1") cfg.beta1 = parse_number<double>(key, value);
  else if (key == "beta2") cfg.beta2 = parse_number<double>(key, value);
  else if (key == "pretrain_epochs") cfg.pretrain_epochs = parse_number<int>(key, value);
  else if (key == "critic_updates_per_gen") cfg.critic_updates_per_gen = parse_number<int>(key, value);
  else if (key == "adv_steps") cfg.adv_steps = parse_number<int>(key, value);
  else if (key == "factor") cfg.factor = parse_number<int>(key, value);
  else if (key == "checkpoint_every") cfg.checkpoint_every = parse_number<int>(key, value);
  else if (key == "eval_every") cfg.eval_every = parse_number<int>(key, value);
  else if (key == "attention") cfg.attention = attention_variant_from_string(value);
  else if (key == "split.val") split.val = parse_number<double>(key, value);
  else if (key == "split.test") split.test = parse_number<double>(key, value);
  else if (key == "net.rdb_count") cfg.net.rdb_count = parse_number<int>(key, value);
  else if (key == "net.rdb_channels") cfg.net.rdb_channels = parse_number<int>(key, value);
  else if (key == "net.rdb_layers") cfg.net.rdb_layers = parse_number<int>(key, value);
  else if (key == "net.rdb_growth") cfg.net.rdb_growth = parse_number<int>(key, value);
  else if (key == "net.ca_reduction") cfg.net.ca_reduction = parse_number<int>(key, value);
  else if (key == "net.dilations") cfg.net.dilations = detail::parse_int_list(key, value);
  else if (key == "net.encoder_mid") cfg.net.encoder_mid = parse_number<int>(key, value);
  else if (key == "net.decoder_mid") cfg.net.decoder_mid = parse_number<int>(key, value);
  else if (key == "net.mlp_hidden1") cfg.net.mlp_hidden1 = parse_number<int>(key, value);
  else if (key == "net.mlp_hidden2") cfg.net.mlp_hidden2 = parse_number<int>(key, value);
  else if (key == "net.leaky_slope") cfg.net.leaky_slope = parse_number<float>(key, value);
  else if (key == "net.conditioning") cfg.net.conditioning = conditioning_from_string(value);
  else if (key == "loss.lambda_gp") cfg.weights.gp = parse_number<float>(key, value);
  else if (key == "loss.lambda_sa") cfg.weights.sa = parse_number<float>(key, value);
  else if (key == "loss.lambda_da") cfg.weights.da = parse_number<float>(key, value);
  else if (key == "loss.lambda_p") cfg.weights.pixel = parse_number<float>(key, value);
  else fail(Err::BadConfig, "unknown config key '" + key + "'");
}

// Flat `key = value` lines; '#' starts a comment; blank lines ignored.
inline std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), Err::IoFailure, "cannot open config file: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    require(eq != std::string::npos, Err::BadConfig,
            "config line " + std::to_string(lineno) + " is not 'key = value': " + line);
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    require(!key.empty(), Err::BadConfig, "config line " + std::to_string(lineno) + " has no key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

inline void apply_config_file(TrainConfig& cfg, SplitConfig& split, const std::string& path) {
  for (const auto& [k, v] : parse_config_file(path)) apply_config_kv(cfg, split, k, v);
}

// `key=value` as passed on the command line.
inline void apply_config_assignment(TrainConfig& cfg, SplitConfig& split, const std::string& kv) {
  auto eq = kv.find('=');
  require(eq != std::string::npos && eq > 0, Err::BadConfig,
          "--set expects key=value, got '" + kv + "'");
  apply_config_kv(cfg, split, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
}

}  // namespace s2a

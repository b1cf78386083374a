#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "s2a/config.hpp"

using namespace s2a;
using Catch::Matchers::WithinAbs;

namespace {

bool is_bad_config(const Error& e) { return e.code == Err::BadConfig; }

std::string write_temp(const std::string& name, const std::string& body) {
  auto path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream f(path);
  f << body;
  return path;
}

}  // namespace

TEST_CASE("split fractions leave the remainder for training") {
  SplitConfig s;
  REQUIRE_THAT(s.val, WithinAbs(0.1, 1e-12));
  REQUIRE_THAT(s.test, WithinAbs(0.1, 1e-12));
  REQUIRE_THAT(s.train(), WithinAbs(0.8, 1e-12));
  s.val = 0.25;
  s.test = 0.05;
  REQUIRE_THAT(s.train(), WithinAbs(0.70, 1e-12));
}

TEST_CASE("assignments reach every config family") {
  TrainConfig cfg;
  SplitConfig split;

  apply_config_kv(cfg, split, "seed", "77");
  apply_config_kv(cfg, split, "batch", "4");
  apply_config_kv(cfg, split, "lr", "2.5e-4");
  apply_config_kv(cfg, split, "beta1", "0.0");
  apply_config_kv(cfg, split, "beta2", "0.99");
  apply_config_kv(cfg, split, "pretrain_epochs", "3");
  apply_config_kv(cfg, split, "critic_updates_per_gen", "5");
  apply_config_kv(cfg, split, "adv_steps", "123");
  apply_config_kv(cfg, split, "factor", "2");
  apply_config_kv(cfg, split, "checkpoint_every", "50");
  apply_config_kv(cfg, split, "eval_every", "25");
  apply_config_kv(cfg, split, "attention", "v1");
  apply_config_kv(cfg, split, "split.val", "0.2");
  apply_config_kv(cfg, split, "split.test", "0.15");
  apply_config_kv(cfg, split, "net.rdb_count", "3");
  apply_config_kv(cfg, split, "net.rdb_channels", "32");
  apply_config_kv(cfg, split, "net.rdb_layers", "4");
  apply_config_kv(cfg, split, "net.rdb_growth", "16");
  apply_config_kv(cfg, split, "net.ca_reduction", "8");
  apply_config_kv(cfg, split, "net.dilations", "1, 2, 4");
  apply_config_kv(cfg, split, "net.encoder_mid", "24");
  apply_config_kv(cfg, split, "net.decoder_mid", "20");
  apply_config_kv(cfg, split, "net.mlp_hidden1", "48");
  apply_config_kv(cfg, split, "net.mlp_hidden2", "12");
  apply_config_kv(cfg, split, "net.leaky_slope", "0.1");
  apply_config_kv(cfg, split, "net.conditioning", "multiply");
  apply_config_kv(cfg, split, "loss.lambda_gp", "7");
  apply_config_kv(cfg, split, "loss.lambda_sa", "0.3");
  apply_config_kv(cfg, split, "loss.lambda_da", "0.4");
  apply_config_kv(cfg, split, "loss.lambda_p", "50");

  REQUIRE(cfg.seed == 77);
  REQUIRE(cfg.batch == 4);
  REQUIRE_THAT(cfg.lr, WithinAbs(2.5e-4, 1e-12));
  REQUIRE_THAT(cfg.beta1, WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(cfg.beta2, WithinAbs(0.99, 1e-12));
  REQUIRE(cfg.pretrain_epochs == 3);
  REQUIRE(cfg.critic_updates_per_gen == 5);
  REQUIRE(cfg.adv_steps == 123);
  REQUIRE(cfg.factor == 2);
  REQUIRE(cfg.checkpoint_every == 50);
  REQUIRE(cfg.eval_every == 25);
  REQUIRE(cfg.attention == AttentionVariant::V1);
  REQUIRE_THAT(split.val, WithinAbs(0.2, 1e-12));
  REQUIRE_THAT(split.test, WithinAbs(0.15, 1e-12));
  REQUIRE(cfg.net.rdb_count == 3);
  REQUIRE(cfg.net.rdb_channels == 32);
  REQUIRE(cfg.net.rdb_layers == 4);
  REQUIRE(cfg.net.rdb_growth == 16);
  REQUIRE(cfg.net.ca_reduction == 8);
  REQUIRE(cfg.net.dilations == (std::vector<int>{1, 2, 4}));
  REQUIRE(cfg.net.encoder_mid == 24);
  REQUIRE(cfg.net.decoder_mid == 20);
  REQUIRE(cfg.net.mlp_hidden1 == 48);
  REQUIRE(cfg.net.mlp_hidden2 == 12);
  REQUIRE_THAT(cfg.net.leaky_slope, WithinAbs(0.1, 1e-6));
  REQUIRE(cfg.net.conditioning == Conditioning::Multiply);
  REQUIRE_THAT(cfg.weights.gp, WithinAbs(7.0, 1e-6));
  REQUIRE_THAT(cfg.weights.sa, WithinAbs(0.3, 1e-6));
  REQUIRE_THAT(cfg.weights.da, WithinAbs(0.4, 1e-6));
  REQUIRE_THAT(cfg.weights.pixel, WithinAbs(50.0, 1e-6));
}

TEST_CASE("bad keys and bad values are rejected") {
  TrainConfig cfg;
  SplitConfig split;
  auto bad = Catch::Matchers::Predicate<Error>(is_bad_config);

  REQUIRE_THROWS_MATCHES(apply_config_kv(cfg, split, "nope", "1"), Error, bad);
  REQUIRE_THROWS_MATCHES(apply_config_kv(cfg, split, "lr", "fast"), Error, bad);
  REQUIRE_THROWS_MATCHES(apply_config_kv(cfg, split, "batch", "4x"), Error, bad);
  REQUIRE_THROWS_MATCHES(apply_config_kv(cfg, split, "net.dilations", ""), Error, bad);
  REQUIRE_THROWS_MATCHES(apply_config_kv(cfg, split, "attention", "v9"), Error, bad);
  REQUIRE_THROWS_MATCHES(apply_config_kv(cfg, split, "net.conditioning", "divide"), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code == Err::UnknownConditioningMode;
                         }));
}

TEST_CASE("command line assignments split on the first equals sign") {
  TrainConfig cfg;
  SplitConfig split;
  apply_config_assignment(cfg, split, "adv_steps=42");
  REQUIRE(cfg.adv_steps == 42);
  apply_config_assignment(cfg, split, " lr = 0.002 ");
  REQUIRE_THAT(cfg.lr, WithinAbs(0.002, 1e-12));

  auto bad = Catch::Matchers::Predicate<Error>(is_bad_config);
  REQUIRE_THROWS_MATCHES(apply_config_assignment(cfg, split, "no_equals"), Error, bad);
  REQUIRE_THROWS_MATCHES(apply_config_assignment(cfg, split, "=5"), Error, bad);
}

TEST_CASE("config files tolerate comments and blank lines") {
  auto path = write_temp("s2a_cfg_ok.cfg",
                         "# training run\n"
                         "\n"
                         "seed = 9   # inline comment\n"
                         "batch=8\n"
                         "  attention = v2  \n"
                         "net.rdb_channels = 48\n");
  auto kvs = parse_config_file(path);
  REQUIRE(kvs.size() == 4);
  REQUIRE(kvs[0].first == "seed");
  REQUIRE(kvs[0].second == "9");
  REQUIRE(kvs[2].first == "attention");
  REQUIRE(kvs[2].second == "v2");

  TrainConfig cfg;
  SplitConfig split;
  apply_config_file(cfg, split, path);
  REQUIRE(cfg.seed == 9);
  REQUIRE(cfg.batch == 8);
  REQUIRE(cfg.attention == AttentionVariant::V2);
  REQUIRE(cfg.net.rdb_channels == 48);
}

TEST_CASE("malformed config files are rejected with location info") {
  auto bad = Catch::Matchers::Predicate<Error>(is_bad_config);
  auto no_eq = write_temp("s2a_cfg_noeq.cfg", "seed 9\n");
  REQUIRE_THROWS_MATCHES(parse_config_file(no_eq), Error, bad);

  auto no_key = write_temp("s2a_cfg_nokey.cfg", "= 9\n");
  REQUIRE_THROWS_MATCHES(parse_config_file(no_key), Error, bad);

  REQUIRE_THROWS_MATCHES(parse_config_file("/nonexistent/path.cfg"), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code == Err::IoFailure; }));

  try {
    parse_config_file(no_eq);
    FAIL("expected a throw");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("later assignments override earlier ones") {
  TrainConfig cfg;
  SplitConfig split;
  auto path = write_temp("s2a_cfg_base.cfg", "batch = 8\nlr = 1e-3\n");
  apply_config_file(cfg, split, path);
  apply_config_assignment(cfg, split, "batch=2");  // command line wins
  REQUIRE(cfg.batch == 2);
  REQUIRE_THAT(cfg.lr, WithinAbs(1e-3, 1e-12));
}

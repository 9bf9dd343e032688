// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include "doctest.h"
#include "vamt/config.hpp"
#include "vamt/errors.hpp"

using namespace vamt;
using config::RunConfig;
using config::Split;

namespace {

std::string written(const RunConfig& cfg) {
  std::ostringstream out;
  config::write(cfg, out);
  return out.str();
}

RunConfig parsed(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  config::read(cfg, in);
  return cfg;
}

}  // namespace

TEST_CASE("defaults validate") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.train.lr == doctest::Approx(3e-4));
  CHECK(cfg.train.lambda_fwd == doctest::Approx(0.2));
  CHECK(cfg.data.dev_fraction == doctest::Approx(0.1));
}

TEST_CASE("write then read reproduces every value") {
  RunConfig cfg;
  cfg.model.d = 32;
  cfg.model.init_range = 0.1 + 0.2;  // not exactly representable in short form
  cfg.model.use_coattention = false;
  cfg.train.mode = train::RegMode::soft;
  cfg.train.weighting = model::Weighting::frozen;
  cfg.train.lambda_fwd = 1.0 / 3.0;
  cfg.train.seed = 18446744073709551615ULL;
  cfg.data.test_fraction = 0.05;
  const std::string text = written(cfg);
  const RunConfig back = parsed(text);
  CHECK(written(back) == text);
  CHECK(back.model.init_range == cfg.model.init_range);
  CHECK(back.train.lambda_fwd == cfg.train.lambda_fwd);
  CHECK(back.train.seed == cfg.train.seed);
  CHECK(back.train.mode == train::RegMode::soft);
  CHECK(back.train.weighting == model::Weighting::frozen);
  CHECK_FALSE(back.model.use_coattention);
  CHECK(back.data == cfg.data);
}

TEST_CASE("entries follow the written order") {
  RunConfig cfg;
  const auto es = config::entries(cfg);
  REQUIRE(es.size() == 25);
  CHECK(es.front()[0] == "model");
  CHECK(es.front()[1] == "d");
  CHECK(es.back()[0] == "data");
  const std::string text = written(cfg);
  std::size_t at = 0;
  for (const auto& e : es) {
    const auto pos = text.find(e[1] + " = " + e[2], at);
    REQUIRE(pos != std::string::npos);
    at = pos;
  }
}

TEST_CASE("read applies on top and skips comments") {
  const RunConfig cfg = parsed(
      "# comment\n"
      "; other comment\n"
      "\n"
      "[model]\n"
      "  d = 48  \n"
      "[train]\n"
      "mode=none\n"
      "epochs = 3\n");
  CHECK(cfg.model.d == 48);
  CHECK(cfg.model.heads == RunConfig{}.model.heads);
  CHECK(cfg.train.mode == train::RegMode::none);
  CHECK(cfg.train.epochs == 3);
}

TEST_CASE("parse errors carry the line number") {
  auto line_of = [](const std::string& text) {
    try {
      parsed(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("[model]\nd = 4\n[optim]\n") == 3);
  CHECK(line_of("[model]\n\nwidth = 4\n") == 3);
  CHECK(line_of("d = 4\n") == 1);
  CHECK(line_of("[model]\nd 4\n") == 2);
  CHECK(line_of("[model\n") == 1);
  CHECK(line_of("[train]\nlr = fast\n") == 2);
  CHECK(line_of("[train]\nepochs = 2.5\n") == 2);
  CHECK(line_of("[model]\nuse_visual = yes\n") == 2);
}

TEST_CASE("set and set_assignment") {
  RunConfig cfg;
  config::set(cfg, "train", "lr", "0.01");
  CHECK(cfg.train.lr == 0.01);
  config::set_assignment(cfg, "model.heads = 4");
  CHECK(cfg.model.heads == 4);
  config::set_assignment(cfg, "train.mode=soft");
  CHECK(cfg.train.mode == train::RegMode::soft);
  CHECK_THROWS_AS(config::set(cfg, "train", "bogus", "1"), ConfigError);
  CHECK_THROWS_AS(config::set(cfg, "misc", "d", "1"), ConfigError);
  CHECK_THROWS_AS(config::set(cfg, "train", "seed", "-1"), ConfigError);
  CHECK_THROWS_AS(config::set_assignment(cfg, "lr=0.1"), ConfigError);
  CHECK_THROWS_AS(config::set_assignment(cfg, "train.lr"), ConfigError);
  CHECK_THROWS_AS(config::set(cfg, "train", "mode", "strict"), ConfigError);
}

TEST_CASE("validation rejects inconsistent settings") {
  RunConfig cfg;
  cfg.model.use_visual = false;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // co-attention needs the visual branch
  cfg.model.use_coattention = false;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // so does regularization
  cfg.train.mode = train::RegMode::none;
  CHECK_NOTHROW(cfg.validate());

  RunConfig bad;
  bad.data.dev_fraction = 0.6;
  bad.data.test_fraction = 0.4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.data.align_iterations = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.data.vocab_cap = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("splits are contiguous: train, dev, test") {
  config::DataConfig data;
  using R = std::pair<int, int>;
  CHECK(config::split_range(data, 2000, Split::train) == R{0, 1600});
  CHECK(config::split_range(data, 2000, Split::dev) == R{1600, 1800});
  CHECK(config::split_range(data, 2000, Split::test) == R{1800, 2000});
  CHECK(config::split_range(data, 2000, Split::all) == R{0, 2000});
  CHECK(config::split_range(data, 3, Split::train) == R{0, 3});
  CHECK(config::split_range(data, 3, Split::dev) == R{3, 3});
  data.dev_fraction = 0.5;
  data.test_fraction = 0.45;
  CHECK_THROWS_AS(config::split_range(data, 4, Split::train), ContractError);
  CHECK_THROWS_AS(config::split_range(config::DataConfig{}, 0, Split::all), ContractError);
  for (const char* s : {"all", "train", "dev", "test"}) {
    CHECK(std::string(config::to_string(config::split_from_string(s))) == s);
  }
  CHECK_THROWS_AS(config::split_from_string("valid"), ConfigError);
}

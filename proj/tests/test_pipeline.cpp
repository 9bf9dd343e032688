// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "json.hpp"
#include "vamt/errors.hpp"
#include "vamt/pipeline.hpp"

using namespace vamt;
namespace fs = std::filesystem;
using pipeline::Direction;

namespace {

// Fresh directory under the system temp dir, removed on scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("vamt_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

config::RunConfig small_config() {
  config::RunConfig cfg;
  cfg.model.d = 8;
  cfg.model.init_range = 0.4;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 8;
  cfg.train.lr = 0.005;
  cfg.train.lambda_fwd = cfg.train.lambda_bwd = 0.0025;
  cfg.train.seed = 5;
  cfg.data.align_iterations = 3;
  return cfg;
}

}  // namespace

TEST_CASE("generation is a pure function of the seed") {
  TempDir tmp("gen");
  pipeline::generate_corpus(3, 40, 4, "default", tmp / "a.jsonl");
  pipeline::generate_corpus(3, 40, 4, "default", tmp / "b.jsonl");
  pipeline::generate_corpus(4, 40, 4, "default", tmp / "c.jsonl");
  CHECK(slurp(tmp / "a.jsonl") == slurp(tmp / "b.jsonl"));
  CHECK(slurp(tmp / "a.jsonl") != slurp(tmp / "c.jsonl"));
  CHECK(pipeline::file_digest(tmp / "a.jsonl") == pipeline::file_digest(tmp / "b.jsonl"));
  CHECK(corpus::load_file(tmp / "a.jsonl").size() == 40);
  CHECK_FALSE(fs::exists(tmp / "a.jsonl.tmp"));
  CHECK_THROWS_AS(pipeline::world_preset("tiny", 1), ConfigError);
}

TEST_CASE("file digest is FNV-1a 64") {
  TempDir tmp("digest");
  { std::ofstream(tmp / "empty"); }
  { std::ofstream(tmp / "a") << "a"; }
  CHECK(pipeline::file_digest(tmp / "empty") == "cbf29ce484222325");
  CHECK(pipeline::file_digest(tmp / "a") == "af63dc4c8601ec8c");
  CHECK_THROWS_AS(pipeline::file_digest(tmp / "missing"), IoError);
}

TEST_CASE("aligning a corpus file writes a loadable table") {
  TempDir tmp("align");
  pipeline::generate_corpus(1, 60, 4, "default", tmp / "c.jsonl");
  const auto r = pipeline::align_corpus(tmp / "c.jsonl", 4, Direction::bwd, tmp / "t");
  REQUIRE(r.log_likelihood.size() == 5);
  const auto t = align::AlignmentTable::load_file(tmp / "t");
  CHECK(t.direction() == Direction::bwd);
  CHECK_THROWS_AS(pipeline::align_corpus(tmp / "missing", 4, Direction::fwd, tmp / "u"), IoError);
}

TEST_CASE("train, reload, translate and evaluate") {
  TempDir tmp("train");
  pipeline::generate_corpus(2, 120, 4, "default", tmp / "c.jsonl");
  const auto cfg = small_config();
  std::vector<std::string> lines;
  const auto s = pipeline::train_run(tmp / "c.jsonl", cfg, tmp / "ck",
                                     [&](const std::string& l) { lines.push_back(l); });
  CHECK(s.train_size == 96);
  CHECK(s.dev_size == 12);
  CHECK(s.epochs_run == 2);
  REQUIRE(lines.size() == 4);
  CHECK(nlohmann::json::parse(lines[0])["type"] == "config");
  CHECK(nlohmann::json::parse(lines[0])["corpus_digest"] == pipeline::file_digest(tmp / "c.jsonl"));
  CHECK(nlohmann::json::parse(lines[1])["epoch"] == 1);
  CHECK(nlohmann::json::parse(lines[3])["type"] == "summary");
  std::string log;
  for (const auto& l : lines) log += l + "\n";
  CHECK(slurp(tmp / "ck/log.jsonl") == log);
  for (const char* f : {"config.ini", "src.vocab", "tgt.vocab", "align.fwd", "align.bwd",
                        "fwd.params", "bwd.params"}) {
    CHECK_MESSAGE(fs::exists(tmp.path / "ck" / f), f);
  }

  const auto ckpt = pipeline::load_checkpoint(tmp / "ck");
  CHECK(ckpt.config.model.d == 8);
  CHECK(ckpt.config.train.seed == 5);
  const auto test = pipeline::load_split(tmp / "c.jsonl", ckpt.config.data, config::Split::test);
  REQUIRE(test.size() == 12);
  const auto hyps = pipeline::translate(ckpt, test, Direction::fwd, 1, 0);
  REQUIRE(hyps.size() == 12);
  for (const auto& h : hyps) CHECK(h.size() <= test[0].src.size() * 2 + 5 + 20);

  pipeline::translate_file(tmp / "ck", tmp / "c.jsonl", config::Split::test, Direction::fwd, 1,
                           tmp / "h.txt");
  CHECK(pipeline::read_sentences(tmp / "h.txt") == hyps);

  const auto r = pipeline::evaluate_files(tmp / "h.txt", tmp / "c.jsonl", config::Split::test,
                                          Direction::fwd, tmp / "ck", config::DataConfig{},
                                          tmp / "r.json");
  CHECK(r.sentences == 12);
  CHECK(r.has_checkpoint);
  CHECK(r.vad.count_visual > 0);
  CHECK(r.vad.vad_visual >= 0.0);
  CHECK(r.vad.vad_visual <= 2.0);
  CHECK(r.beta_visual > 0.0);
  CHECK(r.beta_visual < 1.0);
  const auto j = nlohmann::json::parse(slurp(tmp / "r.json"));
  CHECK(j["bleu"].get<double>() == doctest::Approx(r.bleu.score));
  CHECK(j["sentences"] == 12);
  CHECK(pipeline::report_text(r).find("vad_visual: ") != std::string::npos);

  // References scored against themselves, no checkpoint: 100 and no VAD fields.
  std::vector<eval::Sentence> refs;
  for (const auto& inst : test) refs.push_back(inst.tgt);
  const auto self = pipeline::evaluate(refs, test, Direction::fwd, nullptr);
  CHECK(self.bleu.score == doctest::Approx(100.0));
  CHECK(pipeline::report_json(self).find("vad") == std::string::npos);
  CHECK_THROWS_AS(pipeline::evaluate(hyps, std::vector<corpus::Instance>(test.begin(), test.end() - 1),
                                     Direction::fwd, nullptr),
                  ContractError);
  CHECK_THROWS_AS(pipeline::translate(ckpt, test, Direction::fwd, 0, 0), ConfigError);
}

TEST_CASE("training twice gives identical bytes") {
  TempDir tmp("det");
  pipeline::generate_corpus(6, 80, 4, "default", tmp / "c.jsonl");
  auto cfg = small_config();
  cfg.train.mode = train::RegMode::soft;
  pipeline::train_run(tmp / "c.jsonl", cfg, tmp / "a");
  pipeline::train_run(tmp / "c.jsonl", cfg, tmp / "b");
  for (const char* f : {"config.ini", "log.jsonl", "fwd.params", "bwd.params", "align.fwd"}) {
    CHECK_MESSAGE(slurp(tmp / (std::string("a/") + f)) == slurp(tmp / (std::string("b/") + f)), f);
  }
  cfg.train.seed = 6;
  pipeline::train_run(tmp / "c.jsonl", cfg, tmp / "c");
  CHECK(slurp(tmp / "a/fwd.params") != slurp(tmp / "c/fwd.params"));
}

TEST_CASE("checkpoint loading rejects mismatched parameters") {
  TempDir tmp("bad");
  pipeline::generate_corpus(2, 60, 4, "default", tmp / "c.jsonl");
  auto cfg = small_config();
  cfg.train.epochs = 1;
  pipeline::train_run(tmp / "c.jsonl", cfg, tmp / "ck");
  {
    std::ofstream out(tmp / "ck/config.ini", std::ios::app);
    out << "[model]\nuse_coattention = false\n";
  }
  CHECK_THROWS_AS(pipeline::load_checkpoint(tmp / "ck"), ParseError);
  CHECK_THROWS_AS(pipeline::load_checkpoint(tmp / "nothing"), IoError);
}

TEST_CASE("invalid run configuration fails before writing") {
  TempDir tmp("cfg");
  pipeline::generate_corpus(2, 30, 4, "default", tmp / "c.jsonl");
  auto cfg = small_config();
  cfg.train.epochs = 0;
  CHECK_THROWS_AS(pipeline::train_run(tmp / "c.jsonl", cfg, tmp / "ck"), ConfigError);
  CHECK_FALSE(fs::exists(tmp.path / "ck"));
}

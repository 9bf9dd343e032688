// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0
//
// vamt command line: gen, align, train, translate, eval. Talks to the
// library only through the C API. Failures print one line to stderr,
//   error status=<name> message=<JSON string>
// and exit with the status code; usage errors print the usage text.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vamt/vamt.h"

namespace {

// Raised after a failing C call; main turns it into the error line.
struct Failure {
  vamt_status status;
  std::string message;
};

void check(vamt_status s) {
  if (s != VAMT_OK) throw Failure{s, vamt_last_error()};
}

vamt_direction parse_direction(const std::string& s) {
  if (s == "fwd") return VAMT_FWD;
  if (s == "bwd") return VAMT_BWD;
  throw Failure{VAMT_ERR_CONFIG, "direction must be fwd or bwd, got '" + s + "'"};
}

// Owns a config handle.
class Config {
 public:
  Config() { check(vamt_config_new(&cfg_)); }
  ~Config() { vamt_config_free(cfg_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;

  void read(const std::string& path) { check(vamt_config_read(cfg_, path.c_str())); }
  void set(const std::string& section, const std::string& key, const std::string& value) {
    check(vamt_config_set(cfg_, section.c_str(), key.c_str(), value.c_str()));
  }
  // "section.key=value"
  void assign(const std::string& a) {
    const auto eq = a.find('=');
    const auto dot = a.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw Failure{VAMT_ERR_CONFIG, "expected section.key=value, got '" + a + "'"};
    }
    set(a.substr(0, dot), a.substr(dot + 1, eq - dot - 1), a.substr(eq + 1));
  }
  vamt_config* get() const { return cfg_; }

 private:
  vamt_config* cfg_ = nullptr;
};

void print_log_line(const char* line, void*) {
  std::fputs(line, stdout);
  std::fputc('\n', stdout);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vamt: visual-agreement regularized bidirectional multimodal translation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(vamt_version()));

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic grounded bilingual corpus");
  std::uint64_t gen_seed = 0;
  int gen_count = 2000;
  int gen_regions = 4;
  std::string gen_preset = "default";
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "World and sampling seed")->required();
  gen->add_option("--count", gen_count, "Number of instances")->capture_default_str();
  gen->add_option("-m,--regions", gen_regions, "Regions per image")->capture_default_str();
  gen->add_option("--preset", gen_preset, "World preset")->capture_default_str();
  gen->add_option("--out", gen_out, "Output corpus (JSONL)")->required();

  // align
  auto* aln = app.add_subcommand("align", "Train an IBM Model 1 alignment table");
  std::string aln_corpus, aln_out, aln_dir = "fwd";
  int aln_iters = 10;
  aln->add_option("--corpus", aln_corpus, "Corpus file")->required();
  aln->add_option("--iterations", aln_iters, "EM iterations")->capture_default_str();
  aln->add_option("--direction", aln_dir, "fwd: p(src|tgt), bwd: p(tgt|src)")
      ->check(CLI::IsMember({"fwd", "bwd"}))
      ->capture_default_str();
  aln->add_option("--out", aln_out, "Output table")->required();

  // train
  auto* trn = app.add_subcommand("train", "Jointly train the forward and backward models");
  std::string trn_corpus, trn_config, trn_out, trn_mode, trn_weighting;
  std::uint64_t trn_seed = 0;
  std::vector<std::string> trn_set;
  trn->add_option("--corpus", trn_corpus, "Corpus file")->required();
  trn->add_option("--config", trn_config, "Config file ([model], [train], [data])");
  trn->add_option("--seed", trn_seed, "Training seed (overrides train.seed)")->required();
  trn->add_option("--mode", trn_mode, "Agreement regularization")
      ->check(CLI::IsMember({"none", "hard", "soft"}));
  trn->add_option("--weighting", trn_weighting, "Regularization weighting")
      ->check(CLI::IsMember({"adaptive", "frozen"}));
  trn->add_option("--set", trn_set, "Override, section.key=value (repeatable)");
  trn->add_option("--out", trn_out, "Checkpoint directory")->required();

  // translate
  auto* trl = app.add_subcommand("translate", "Translate a corpus split with a checkpoint");
  std::string trl_ckpt, trl_corpus, trl_split = "test", trl_dir = "fwd", trl_out;
  int trl_beam = 1;
  trl->add_option("--checkpoint", trl_ckpt, "Checkpoint directory")->required();
  trl->add_option("--corpus", trl_corpus, "Corpus file")->required();
  trl->add_option("--split", trl_split, "all, train, dev or test")
      ->check(CLI::IsMember({"all", "train", "dev", "test"}))
      ->capture_default_str();
  trl->add_option("--direction", trl_dir, "fwd (src->tgt) or bwd (tgt->src)")
      ->check(CLI::IsMember({"fwd", "bwd"}))
      ->capture_default_str();
  trl->add_option("--beam", trl_beam, "Beam size, 1 is greedy")->capture_default_str();
  trl->add_option("--out", trl_out, "Hypotheses file")->required();

  // eval
  auto* evl = app.add_subcommand("eval", "Score hypotheses: BLEU, and VAD with a checkpoint");
  std::string evl_hyps, evl_corpus, evl_split = "test", evl_dir = "fwd", evl_ckpt, evl_config,
                                    evl_out;
  evl->add_option("--hyps", evl_hyps, "Hypotheses file")->required();
  evl->add_option("--corpus", evl_corpus, "Corpus file with the references")->required();
  evl->add_option("--split", evl_split, "all, train, dev or test")
      ->check(CLI::IsMember({"all", "train", "dev", "test"}))
      ->capture_default_str();
  evl->add_option("--direction", evl_dir, "Direction of the hypotheses")
      ->check(CLI::IsMember({"fwd", "bwd"}))
      ->capture_default_str();
  evl->add_option("--checkpoint", evl_ckpt, "Checkpoint directory (adds VAD and beta)");
  evl->add_option("--config", evl_config, "Config file for the split fractions");
  evl->add_option("--out", evl_out, "Report file (one JSON record)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      check(vamt_generate(gen_seed, gen_count, gen_regions, gen_preset.c_str(), gen_out.c_str()));
    } else if (*aln) {
      double ll = 0.0;
      check(vamt_align(aln_corpus.c_str(), aln_iters, parse_direction(aln_dir), aln_out.c_str(),
                       &ll));
      std::printf("log_likelihood: %.6f\n", ll);
    } else if (*trn) {
      Config cfg;
      if (!trn_config.empty()) cfg.read(trn_config);
      cfg.set("train", "seed", std::to_string(trn_seed));
      if (!trn_mode.empty()) cfg.set("train", "mode", trn_mode);
      if (!trn_weighting.empty()) cfg.set("train", "weighting", trn_weighting);
      for (const auto& a : trn_set) cfg.assign(a);
      check(vamt_train(cfg.get(), trn_corpus.c_str(), trn_out.c_str(), print_log_line, nullptr));
    } else if (*trl) {
      check(vamt_translate_file(trl_ckpt.c_str(), trl_corpus.c_str(), trl_split.c_str(),
                                parse_direction(trl_dir), trl_beam, trl_out.c_str()));
    } else if (*evl) {
      Config cfg;
      if (!evl_config.empty()) cfg.read(evl_config);
      vamt_report report{};
      std::string text(4096, '\0');
      size_t needed = 0;
      auto run = [&] {
        return vamt_evaluate(evl_hyps.c_str(), evl_corpus.c_str(), evl_split.c_str(),
                             parse_direction(evl_dir),
                             evl_ckpt.empty() ? nullptr : evl_ckpt.c_str(), cfg.get(),
                             evl_out.c_str(), &report, text.data(), text.size(), &needed);
      };
      vamt_status s = run();
      if (s == VAMT_ERR_BUFFER) {
        text.assign(needed, '\0');
        s = run();
      }
      check(s);
      std::fputs(text.c_str(), stdout);
    }
  } catch (const Failure& f) {
    std::cerr << "error status=" << vamt_status_name(f.status)
              << " message=" << nlohmann::json(f.message).dump() << '\n';
    return static_cast<int>(f.status);
  }
  return 0;
}

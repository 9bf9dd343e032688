// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one line per criterion,
//   PASS|FAIL C<k> <name>: <measurements>
// followed by a summary line. Exit status is 0 when the set of failing
// criteria equals the set given with --expect-fail (empty by default), so
// a known red criterion stays visible without breaking the test run, and
// an unexpected pass or fail still does.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "../joint_fixture.hpp"
#include "CLI11.hpp"
#include "vamt/aligner.hpp"
#include "vamt/config.hpp"
#include "vamt/corpus.hpp"
#include "vamt/eval.hpp"
#include "vamt/train.hpp"

#ifndef VAMT_CLI_PATH
#error "VAMT_CLI_PATH must name the vamt executable"
#endif

using namespace vamt;
namespace fs = std::filesystem;
using train::Direction;
using train::Example;
using train::Matrix;
using train::RegMode;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Pinned settings of the training comparisons.

constexpr int kCorpusSize = 2000;
constexpr int kRegions = 4;
const std::vector<std::uint64_t> kSeeds{101, 102, 103};
constexpr double kMaxLadderSeconds = 600.0;
constexpr double kMaxGradSeconds = 60.0;

std::uint64_t world_seed(std::uint64_t seed) { return 1000 + seed; }

model::ModelConfig desk_model(const corpus::Vocab& sv, const corpus::Vocab& tv) {
  model::ModelConfig mc;
  mc.d = 32;
  mc.heads = 2;
  mc.init_range = 0.4;
  mc.src_vocab = sv.size();
  mc.tgt_vocab = tv.size();
  return mc;
}

train::TrainConfig desk_train(std::uint64_t seed) {
  train::TrainConfig tc;
  tc.lr = 0.005;
  tc.lr_decay_start = 8;
  tc.epochs = 12;
  tc.batch_size = 8;
  tc.lambda_fwd = tc.lambda_bwd = 0.0025;
  tc.dropout = 0.1;
  tc.seed = seed;
  return tc;
}

enum class Variant { text, coattention, hard, soft, soft_frozen };

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::text: return "text";
    case Variant::coattention: return "co-attention";
    case Variant::hard: return "co-attention+hard";
    case Variant::soft: return "soft adaptive";
    case Variant::soft_frozen: return "soft frozen";
  }
  return "?";
}

struct RunResult {
  double bleu = 0.0;  // best dev BLEU, mean of both directions
  int best_epoch = 0;
  double vad_visual = std::nan("");
  double vad_nonvisual = std::nan("");
  double beta_visual = std::nan("");
  double beta_nonvisual = std::nan("");
  double seconds = 0.0;
};

// Corpus, split, vocabularies, tables and encoded examples for one seed.
struct SeedData {
  std::vector<corpus::Instance> train_set;
  std::vector<corpus::Instance> dev_set;
  corpus::Vocab src_vocab;
  corpus::Vocab tgt_vocab;
  std::vector<Example> train_ex;
  std::vector<Example> dev_ex;

  explicit SeedData(std::uint64_t seed) {
    const auto all = corpus::generate(corpus::default_world(world_seed(seed)), kCorpusSize, kRegions);
    const config::DataConfig data;
    const auto [tb, te] = config::split_range(data, kCorpusSize, config::Split::train);
    const auto [db, de] = config::split_range(data, kCorpusSize, config::Split::dev);
    train_set.assign(all.begin() + tb, all.begin() + te);
    dev_set.assign(all.begin() + db, all.begin() + de);
    src_vocab = corpus::build_vocab(train_set, corpus::Side::src, data.vocab_cap);
    tgt_vocab = corpus::build_vocab(train_set, corpus::Side::tgt, data.vocab_cap);
    const auto pairs = align::sentence_pairs(train_set);
    const auto ft = align::train_ibm1(pairs, data.align_iterations, Direction::fwd).table;
    const auto bt = align::train_ibm1(pairs, data.align_iterations, Direction::bwd).table;
    train_ex = train::prepare(train_set, src_vocab, tgt_vocab, &ft, &bt);
    dev_ex = train::prepare(dev_set, src_vocab, tgt_vocab, &ft, &bt);
  }
};

// Trains each (seed, variant) once and caches the result.
class Runs {
 public:
  const RunResult& get(std::uint64_t seed, Variant v) {
    const auto key = std::make_pair(seed, static_cast<int>(v));
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto dit = data_.find(seed);
    if (dit == data_.end()) dit = data_.try_emplace(seed, seed).first;  // in place: examples point into it
    const RunResult r = train_one(dit->second, seed, v);
    std::printf("  run seed=%llu %-18s bleu %.2f (epoch %d) vad %.3f/%.3f beta %.3f/%.3f %.0f s\n",
                static_cast<unsigned long long>(seed), variant_name(v), r.bleu, r.best_epoch,
                r.vad_visual, r.vad_nonvisual, r.beta_visual, r.beta_nonvisual, r.seconds);
    std::fflush(stdout);
    return cache_.emplace(key, r).first->second;
  }

  double mean(Variant v, double RunResult::*field) {
    double s = 0.0;
    for (auto seed : kSeeds) s += get(seed, v).*field;
    return s / static_cast<double>(kSeeds.size());
  }

 private:
  static RunResult train_one(const SeedData& d, std::uint64_t seed, Variant v) {
    model::ModelConfig mc = desk_model(d.src_vocab, d.tgt_vocab);
    train::TrainConfig tc = desk_train(seed);
    switch (v) {
      case Variant::text:
        mc.use_visual = mc.use_coattention = false;
        tc.mode = RegMode::none;
        break;
      case Variant::coattention: tc.mode = RegMode::none; break;
      case Variant::hard: tc.mode = RegMode::hard; break;
      case Variant::soft: tc.mode = RegMode::soft; break;
      case Variant::soft_frozen:
        tc.mode = RegMode::soft;
        tc.weighting = model::Weighting::frozen;
        break;
    }
    const auto t0 = Clock::now();
    train::JointState st = train::make_joint_state(mc, tc);
    const auto fit = train::fit(d.train_ex, d.dev_ex, st, tc, d.src_vocab, d.tgt_vocab);
    RunResult r;
    r.seconds = seconds_since(t0);
    r.bleu = fit.best_dev_bleu;
    r.best_epoch = fit.best_epoch;
    if (!mc.use_visual) return r;
    // Attention statistics of the selected (best dev) parameters.
    st.fwd.params.assign_values(fit.best_fwd);
    st.bwd.params.assign_values(fit.best_bwd);
    const auto fwd = train::compute_traces(st.fwd, d.dev_ex, Direction::fwd);
    const auto bwd = train::compute_traces(st.bwd, d.dev_ex, Direction::bwd);
    std::vector<eval::PairSet> pairs;
    std::vector<std::vector<bool>> masks;
    for (const auto& ex : d.dev_ex) {
      pairs.push_back(ex.vad_pairs);
      masks.push_back(*ex.instance->visual_mask_tgt);
    }
    const auto vad = eval::vad(fwd, bwd, pairs);
    r.vad_visual = vad.vad_visual;
    r.vad_nonvisual = vad.vad_nonvisual;
    std::tie(r.beta_visual, r.beta_nonvisual) = eval::beta_separation(fwd, masks);
    return r;
  }

  std::map<std::uint64_t, SeedData> data_;
  std::map<std::pair<std::uint64_t, int>, RunResult> cache_;
};

// ---------------------------------------------------------------------------
// C1

Outcome gradient_check() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  double gap = 0.0;
  bool ok = true;
  int params = 0;
  for (RegMode mode : {RegMode::hard, RegMode::soft}) {
    for (Direction dir : {Direction::fwd, Direction::bwd}) {
      const auto r = testing::joint_gradient_check(mode, dir, 1e-5, 1e-3);
      ok = ok && r.finite_diff.passed;
      worst = std::max(worst, r.finite_diff.max_rel_error);
      gap = std::max({gap, r.loss_gap, r.grad_gap});
      params += static_cast<int>(r.finite_diff.entries.size());
    }
  }
  const double secs = seconds_since(t0);
  ok = ok && gap < 1e-12 && secs < kMaxGradSeconds;
  return {ok, fmt("max rel error %.2e < 1e-3 over %d parameter blocks (hard, soft x fwd, bwd), "
                  "objective gap %.1e, %.1f s < %.0f s",
                  worst, params, gap, secs, kMaxGradSeconds)};
}

// ---------------------------------------------------------------------------
// C2

double row_sum_error(const Matrix& m) {
  return (m.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

Outcome normalization() {
  std::mt19937_64 rng(2024);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::normal_distribution<double> g;
  double attn_err = 0.0;
  double target_err = 0.0;
  double beta_min = 1.0;
  double beta_max = 0.0;
  long rows = 0;
  const int shapes = 1000;
  for (int s = 0; s < shapes; ++s) {
    model::ModelConfig cfg;
    cfg.d = pick(2, 8);
    cfg.heads = pick(1, 3);
    cfg.depth = pick(1, 2);
    cfg.region_dim = pick(1, 5);
    cfg.src_vocab = pick(5, 12);
    cfg.tgt_vocab = pick(5, 12);
    cfg.use_coattention = pick(0, 3) != 0;
    cfg.init_range = std::uniform_real_distribution<double>(0.05, 2.0)(rng);
    model::ModelConfig back = cfg;
    std::swap(back.src_vocab, back.tgt_vocab);
    const int m = pick(1, 6);
    const int n = pick(1, 6);
    const int l = pick(1, 6);
    std::vector<int> src(static_cast<std::size_t>(n)), tgt(static_cast<std::size_t>(l));
    for (int& w : src) w = pick(corpus::kUnk, cfg.src_vocab - 1);
    for (int& w : tgt) w = pick(corpus::kUnk, cfg.tgt_vocab - 1);
    Matrix regions(m, cfg.region_dim);
    for (Eigen::Index k = 0; k < regions.size(); ++k) regions.data()[k] = 3.0 * g(rng);

    ad::ParamStore fp = model::init_params(cfg, rng());
    ad::ParamStore bp = model::init_params(back, rng());
    ad::Tape tape;
    model::Network fnet(cfg, fp, tape, false);
    model::Network bnet(back, bp, tape, false);
    model::Dropout none;
    if (cfg.use_coattention) {
      const auto enc = fnet.encode(src, regions, none);
      const auto co = fnet.co_attend(enc.X, enc.V);
      for (std::size_t k = 0; k < co.Ax.size(); ++k) {
        attn_err = std::max({attn_err, row_sum_error(co.Ax[k].value()),
                             row_sum_error(co.Av[k].value())});
        rows += co.Ax[k].value().rows() + co.Av[k].value().rows();
      }
    }
    const auto fd = fnet.forward(src, regions, tgt, none);
    const auto bd = bnet.forward(tgt, regions, src, none);
    for (const auto* trace : {&fd.trace, &bd.trace}) {
      for (std::size_t j = 0; j < trace->steps(); ++j) {
        attn_err = std::max({attn_err, row_sum_error(trace->visual[j].value()),
                             row_sum_error(trace->textual[j].value())});
        rows += 2;
        const double b = trace->beta[j].value()(0, 0);
        beta_min = std::min(beta_min, b);
        beta_max = std::max(beta_max, b);
      }
    }
    for (const auto& t : train::soft_targets(fd.trace, bd.trace, static_cast<std::size_t>(l))) {
      target_err = std::max(target_err, row_sum_error(t));
    }
    for (const auto& t : train::soft_targets(bd.trace, fd.trace, static_cast<std::size_t>(n))) {
      target_err = std::max(target_err, row_sum_error(t));
    }
  }
  const bool ok = attn_err < 1e-9 && target_err < 1e-9 && beta_min > 0.0 && beta_max < 1.0;
  return {ok, fmt("%d shapes, %ld attention rows, max |sum-1| %.1e; soft targets %.1e; "
                  "beta in [%.3g, %.3g]",
                  shapes, rows, attn_err, target_err, beta_min, beta_max)};
}

// ---------------------------------------------------------------------------
// C3

bool bitwise_equal(const ad::ParamStore& a, const ad::ParamStore& b) {
  if (a.names() != b.names()) return false;
  for (const auto& [name, p] : a) {
    if (p.value != b.at(name).value) return false;
  }
  return true;
}

Outcome reductions() {
  // (a) lambda = 0: joint updates equal two NLL-only trainers with the same seeds.
  const auto all = corpus::generate(corpus::default_world(7), 80, kRegions);
  const std::vector<corpus::Instance> inst(all.begin(), all.begin() + 64);
  const auto sv = corpus::build_vocab(inst, corpus::Side::src, 10000);
  const auto tv = corpus::build_vocab(inst, corpus::Side::tgt, 10000);
  const auto pairs = align::sentence_pairs(inst);
  const auto ft = align::train_ibm1(pairs, 5, Direction::fwd).table;
  const auto bt = align::train_ibm1(pairs, 5, Direction::bwd).table;
  const auto ex = train::prepare(inst, sv, tv, &ft, &bt);
  model::ModelConfig mc = desk_model(sv, tv);
  mc.d = 8;
  train::TrainConfig tc = desk_train(31);
  tc.lambda_fwd = tc.lambda_bwd = 0.0;
  train::JointState joint = train::make_joint_state(mc, tc);
  train::DirectionState solo_fwd = train::make_direction_state(mc, tc, Direction::fwd);
  train::DirectionState solo_bwd = train::make_direction_state(mc, tc, Direction::bwd);
  int steps = 0;
  bool nll_equal = true;
  for (int epoch = 1; epoch <= 2; ++epoch) {
    const auto order = train::permutation(static_cast<int>(ex.size()), 900 + epoch);
    for (std::size_t start = 0; start < ex.size(); start += 8) {
      std::vector<const Example*> batch;
      for (std::size_t k = start; k < std::min(ex.size(), start + 8); ++k) {
        batch.push_back(&ex[static_cast<std::size_t>(order[k])]);
      }
      const auto m = train::joint_step(batch, joint, tc, tc.lr);
      nll_equal = nll_equal && m.nll_fwd == train::single_step(batch, solo_fwd, Direction::fwd, tc.lr);
      nll_equal = nll_equal && m.nll_bwd == train::single_step(batch, solo_bwd, Direction::bwd, tc.lr);
      ++steps;
    }
  }
  const bool same = nll_equal && bitwise_equal(joint.fwd.params, solo_fwd.params) &&
                    bitwise_equal(joint.bwd.params, solo_bwd.params);

  // (b) one-hot textual attention: soft penalty equals hard penalty exactly.
  const auto tiny = testing::tiny_examples();
  train::TrainConfig ttc;
  ttc.dropout = 0.0;
  train::JointState st = train::make_joint_state(testing::tiny_config(), ttc);
  testing::widen(st.fwd.params, 8, 0.5);
  testing::widen(st.bwd.params, 9, 0.5);
  ad::Tape tape;
  model::Network fnet(st.fwd.cfg, st.fwd.params, tape, false);
  model::Network bnet(st.bwd.cfg, st.bwd.params, tape, false);
  model::Dropout none;
  bool onehot_equal = true;
  int onehot_cases = 0;
  for (const auto& e : tiny) {
    const auto fd = fnet.forward(e.src, e.regions, e.tgt, none);
    const auto bd = bnet.forward(e.tgt, e.regions, e.src, none);
    model::AttentionTrace own = fd.trace;
    own.textual.clear();
    for (int link : e.links_fwd) {
      Matrix row = Matrix::Zero(1, static_cast<Eigen::Index>(e.src.size()));
      row(0, link) = 1.0;
      own.textual.push_back(tape.constant(row));
    }
    for (auto w : {model::Weighting::adaptive, model::Weighting::frozen}) {
      const double soft = train::soft_penalty(own, bd.trace, e.tgt.size(), w).scalar();
      const double hard = train::hard_penalty(own, bd.trace, e.links_fwd, w).scalar();
      onehot_equal = onehot_equal && soft == hard && hard > 0.0;
      ++onehot_cases;
    }
  }

  // (c) K=1 co-attention: the pooled output is the single subspace output.
  model::ModelConfig one = testing::tiny_config(5, 1);
  ad::ParamStore op = model::init_params(one, 12);
  testing::widen(op, 13, 0.7);
  ad::Tape t1;
  model::Network onet(one, op, t1, false);
  bool pooled_equal = true;
  for (const auto& e : tiny) {
    const auto enc = onet.encode(e.src, e.regions, none);
    const auto co = onet.co_attend(enc.X, enc.V);
    pooled_equal = pooled_equal && co.Xhat.value() == co.Xhat_k[0].value() &&
                   co.Vhat.value() == co.Vhat_k[0].value();
  }
  return {same && onehot_equal && pooled_equal,
          fmt("lambda=0 joint vs two NLL trainers over %d steps: %s; one-hot soft == hard in "
              "%d cases: %s; K=1 pooled == subspace: %s",
              steps, same ? "bitwise equal" : "DIFFERENT", onehot_cases,
              onehot_equal ? "exact" : "NOT exact", pooled_equal ? "exact" : "NOT exact")};
}

// ---------------------------------------------------------------------------
// C4

Outcome detachment() {
  const auto examples = testing::tiny_examples();
  const auto batch = testing::pointers(examples);
  double leak = 0.0;
  double own_norm = std::numeric_limits<double>::infinity();
  int checks = 0;
  for (RegMode mode : {RegMode::hard, RegMode::soft}) {
    for (Direction dir : {Direction::fwd, Direction::bwd}) {
      train::TrainConfig tc;
      tc.mode = mode;
      tc.dropout = 0.0;
      tc.lambda_fwd = tc.lambda_bwd = 0.7;
      train::JointState st = train::make_joint_state(testing::tiny_config(), tc);
      testing::widen(st.fwd.params, 21, 0.5);
      testing::widen(st.bwd.params, 22, 0.5);
      auto& own = dir == Direction::fwd ? st.fwd : st.bwd;
      auto& other = dir == Direction::fwd ? st.bwd : st.fwd;
      const Direction other_dir = dir == Direction::fwd ? Direction::bwd : Direction::fwd;
      // Both networks live on one tape, so any path from the other model's
      // parameters into the loss would show up in its gradients.
      ad::Tape tape;
      model::Network onet(own.cfg, own.params, tape);
      model::Network xnet(other.cfg, other.params, tape);
      model::Dropout none;
      train::TrainConfig nll_only = tc;
      nll_only.mode = RegMode::none;
      std::vector<model::AttentionTrace> other_traces;
      train::direction_objective(xnet, batch, other_dir, nll_only, none, {}, &other_traces);
      const auto obj = train::direction_objective(onet, batch, dir, tc, none, other_traces);
      own.params.zero_grad();
      other.params.zero_grad();
      tape.backward(obj.loss);
      double norm = 0.0;
      for (const auto& [name, p] : own.params) norm += p.grad.cwiseAbs().sum();
      for (const auto& [name, p] : other.params) {
        leak = std::max(leak, p.grad.cwiseAbs().maxCoeff());
        ++checks;
      }
      own_norm = std::min(own_norm, norm);
      if (obj.penalty <= 0.0) own_norm = 0.0;
    }
  }
  return {leak == 0.0 && own_norm > 0.0,
          fmt("max |dL/dtheta_other| = %g over %d parameter blocks (hard, soft x fwd, bwd); "
              "own gradient l1 >= %.3g with an active penalty",
              leak, checks, own_norm)};
}

// ---------------------------------------------------------------------------
// C5

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

Outcome aligner() {
  const auto corpus = corpus::generate(corpus::default_world(world_seed(kSeeds[0])), kCorpusSize,
                                       kRegions);
  const auto pairs = align::sentence_pairs(corpus);
  bool monotone = true;
  double worst_drop = 0.0;
  double acc[2] = {0.0, 0.0};
  for (Direction dir : {Direction::fwd, Direction::bwd}) {
    const auto r = align::train_ibm1(pairs, 10, dir);
    for (std::size_t i = 1; i < r.log_likelihood.size(); ++i) {
      const double drop = r.log_likelihood[i - 1] - r.log_likelihood[i];
      worst_drop = std::max(worst_drop, drop);
      monotone = monotone && drop <= 1e-9 * std::abs(r.log_likelihood[i - 1]);
    }
    acc[dir == Direction::fwd ? 0 : 1] = eval::aligner_accuracy(r.table, corpus, true);
  }
  const std::vector<align::SentencePair> hf{{words("la maison"), words("the house")},
                                            {words("la fleur"), words("the flower")}};
  const auto t = align::train_ibm1(hf, 10, Direction::fwd).table;
  const bool example = align::align_argmax(t, "the", words("la maison")) == 0 &&
                       align::align_argmax(t, "house", words("la maison")) == 1 &&
                       align::align_argmax(t, "the", words("la fleur")) == 0 &&
                       align::align_argmax(t, "flower", words("la fleur")) == 1;
  const bool ok = monotone && acc[0] >= 0.95 && acc[1] >= 0.95 && example;
  return {ok, fmt("EM log-likelihood non-decreasing over 10 iterations: %s (largest drop %.1e); "
                  "visual link accuracy fwd %.4f bwd %.4f >= 0.95; house/flower argmax: %s",
                  monotone ? "yes" : "NO", worst_drop, acc[0], acc[1],
                  example ? "the->la, house->maison, flower->fleur" : "WRONG")};
}

// ---------------------------------------------------------------------------
// C6-C9

Outcome ladder(Runs& runs) {
  double secs = 0.0;
  for (auto v : {Variant::text, Variant::coattention, Variant::hard}) {
    for (auto s : kSeeds) secs += runs.get(s, v).seconds;
  }
  const double text = runs.mean(Variant::text, &RunResult::bleu);
  const double co = runs.mean(Variant::coattention, &RunResult::bleu);
  const double hard = runs.mean(Variant::hard, &RunResult::bleu);
  const bool ok = co - text > 0.0 && hard - co > 0.0 && secs < kMaxLadderSeconds;
  return {ok, fmt("mean dev BLEU text %.2f < co-attention %.2f < co-attention+hard %.2f "
                  "(gaps %+.2f, %+.2f); 9 runs %.0f s < %.0f s",
                  text, co, hard, co - text, hard - co, secs, kMaxLadderSeconds)};
}

Outcome vad_reduction(Runs& runs) {
  const double v0 = runs.mean(Variant::coattention, &RunResult::vad_visual);
  const double v1 = runs.mean(Variant::hard, &RunResult::vad_visual);
  const double n0 = runs.mean(Variant::coattention, &RunResult::vad_nonvisual);
  const double n1 = runs.mean(Variant::hard, &RunResult::vad_nonvisual);
  const double rv = (v0 - v1) / v0;
  const double rn = (n0 - n1) / n0;
  return {v1 < v0 && rv > rn,
          fmt("visual pairs %.3f -> %.3f (%.1f%% lower), non-visual %.3f -> %.3f (%.1f%% lower); "
              "without -> with agreement, mean of 3 seeds",
              v0, v1, 100.0 * rv, n0, n1, 100.0 * rn)};
}

Outcome weighting(Runs& runs) {
  const double adaptive = runs.mean(Variant::soft, &RunResult::bleu);
  const double frozen = runs.mean(Variant::soft_frozen, &RunResult::bleu);
  return {adaptive >= frozen, fmt("mean dev BLEU soft adaptive %.2f vs soft frozen %.2f (%+.2f)",
                                  adaptive, frozen, adaptive - frozen)};
}

Outcome beta_gap(Runs& runs) {
  const double bv = runs.mean(Variant::hard, &RunResult::beta_visual);
  const double bn = runs.mean(Variant::hard, &RunResult::beta_nonvisual);
  return {bv - bn > 0.05, fmt("co-attention+hard, dev: mean beta visual %.3f, non-visual %.3f, "
                              "gap %.3f > 0.05",
                              bv, bn, bv - bn)};
}

// ---------------------------------------------------------------------------
// C10

Outcome bleu_selftest() {
  const auto corpus = corpus::generate(corpus::default_world(world_seed(kSeeds[0])), 200, kRegions);
  std::vector<eval::Sentence> refs;
  for (const auto& inst : corpus) refs.push_back(inst.tgt);
  const double self = eval::bleu(refs, refs);
  // "the" occurs three times but the reference has it once: unigram 2/4
  // after clipping, then add-one smoothed (1+1)/(3+1), (0+1)/(2+1),
  // (0+1)/(1+1); the product is 1/24 and the lengths match.
  const auto rep = eval::bleu_report({words("the the the cat")}, {words("the cat sat down")});
  const double expected = 100.0 * std::pow(1.0 / 24.0, 0.25);
  const bool ok = self == 100.0 && std::abs(rep.score - expected) < 1e-6 &&
                  rep.precisions[0] == 0.5 && rep.brevity_penalty == 1.0;
  return {ok, fmt("BLEU(refs, refs) = %.10g on %zu sentences; clipping example %.9f vs "
                  "hand value %.9f (|diff| %.1e < 1e-6)",
                  self, refs.size(), rep.score, expected, std::abs(rep.score - expected))};
}

// ---------------------------------------------------------------------------
// C11

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool run(const std::string& cmd) { return std::system(cmd.c_str()) == 0; }

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

// Runs gen -> align -> train -> translate -> eval in dir.
bool pipeline_once(const fs::path& dir) {
  const std::string v = quoted(VAMT_CLI_PATH);
  const std::string c = quoted(dir / "corpus.jsonl");
  return run(v + " gen --seed 41 --count 300 --out " + c) &&
         run(v + " align --corpus " + c + " --out " + quoted(dir / "align.fwd") + " > " +
             quoted(dir / "align.out")) &&
         run(v + " train --corpus " + c + " --seed 3 --mode soft --set model.d=12 "
                 "--set train.epochs=2 --set train.batch_size=8 --set train.lr=0.005 "
                 "--set model.init_range=0.4 --set train.lambda_fwd=0.0025 "
                 "--set train.lambda_bwd=0.0025 --out " +
             quoted(dir / "ckpt") + " > " + quoted(dir / "train.out")) &&
         run(v + " translate --checkpoint " + quoted(dir / "ckpt") + " --corpus " + c +
             " --beam 3 --out " + quoted(dir / "hyps.txt")) &&
         run(v + " eval --hyps " + quoted(dir / "hyps.txt") + " --corpus " + c +
             " --checkpoint " + quoted(dir / "ckpt") + " --out " + quoted(dir / "report.json") +
             " > " + quoted(dir / "report.txt"));
}

Outcome determinism() {
  const fs::path root =
      fs::temp_directory_path() / ("vamt_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root / "a");
  fs::create_directories(root / "b");
  const bool ran = pipeline_once(root / "a") && pipeline_once(root / "b");
  int files = 0;
  std::vector<std::string> differ;
  if (ran) {
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
      if (!e.is_regular_file()) continue;
      const fs::path rel = fs::relative(e.path(), root / "a");
      ++files;
      if (slurp(e.path()) != slurp(root / "b" / rel)) differ.push_back(rel.string());
    }
    for (const auto& e : fs::recursive_directory_iterator(root / "b")) {
      if (e.is_regular_file() && !fs::exists(root / "a" / fs::relative(e.path(), root / "b"))) {
        differ.push_back(fs::relative(e.path(), root / "b").string());
      }
    }
  }
  fs::remove_all(root);
  std::string which;
  for (const auto& d : differ) which += " " + d;
  const bool ok = ran && differ.empty() && files >= 14;
  return {ok, ran ? fmt("two gen/align/train/translate/eval runs: %d files compared, %zu differ%s",
                        files, differ.size(), which.c_str())
                  : std::string("pipeline command failed")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vamt acceptance checks"};
  std::vector<std::string> only;
  std::vector<std::string> expect_fail;
  app.add_option("--only", only, "Run only these criteria (C1 ... C11)")->delimiter(',');
  app.add_option("--expect-fail", expect_fail, "Criteria known to fail")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  Runs runs;
  const std::vector<std::pair<std::string, std::pair<std::string, std::function<Outcome()>>>>
      criteria{
          {"C1", {"gradient_check", gradient_check}},
          {"C2", {"normalization", normalization}},
          {"C3", {"reduction_identities", reductions}},
          {"C4", {"detachment", detachment}},
          {"C5", {"aligner", aligner}},
          {"C6", {"ablation_ladder", [&] { return ladder(runs); }}},
          {"C7", {"vad_reduction", [&] { return vad_reduction(runs); }}},
          {"C8", {"adaptive_weighting", [&] { return weighting(runs); }}},
          {"C9", {"beta_separation", [&] { return beta_gap(runs); }}},
          {"C10", {"bleu_selftest", bleu_selftest}},
          {"C11", {"determinism", determinism}},
      };
  std::set<std::string> expected(expect_fail.begin(), expect_fail.end());
  std::set<std::string> failed;
  int passed = 0;
  for (const auto& [id, c] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = c.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s %s: %s\n", o.pass ? "PASS" : "FAIL", id.c_str(), c.first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
    if (o.pass) {
      ++passed;
    } else {
      failed.insert(id);
    }
  }
  std::string failed_list;
  for (const auto& f : failed) failed_list += " " + f;
  std::printf("summary: %d passed, %zu failed%s\n", passed, failed.size(), failed_list.c_str());
  for (const auto& e : expected) {
    if (!failed.count(e) && (only.empty() || std::count(only.begin(), only.end(), e))) {
      std::printf("note: %s was expected to fail but passed\n", e.c_str());
    }
  }
  std::set<std::string> expected_here;
  for (const auto& e : expected) {
    if (only.empty() || std::count(only.begin(), only.end(), e)) expected_here.insert(e);
  }
  return failed == expected_here ? 0 : 1;
}

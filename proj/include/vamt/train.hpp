// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Joint training of the forward (src -> tgt) and backward (tgt -> src)
// models with visual agreement regularization.
//
// Per instance the forward objective is
//   nll_fwd + lambda_fwd * sum_y w_y * mse(A_{y->v}, target_y)
// where target_y is the backward model's visual attention at the aligned
// source word (hard) or its mixture under the forward textual attention
// (soft), and w_y is beta_y (adaptive) or 1 (frozen). Targets are plain
// matrices, so no gradient reaches the other model. The backward objective
// is symmetric.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vamt/aligner.hpp"
#include "vamt/corpus.hpp"
#include "vamt/eval.hpp"
#include "vamt/model.hpp"

namespace vamt::train {

using ad::Matrix;
using ad::Node;
using ad::ParamStore;
using ad::Tape;
using align::Direction;
using model::AttentionTrace;
using model::ModelConfig;
using model::Weighting;

enum class RegMode { none, hard, soft };

const char* to_string(RegMode m);
RegMode reg_mode_from_string(const std::string& s);

struct TrainConfig {
  double lambda_fwd = 0.2;
  double lambda_bwd = 0.2;
  RegMode mode = RegMode::hard;
  Weighting weighting = Weighting::adaptive;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // The learning rate is halved after every epoch from this one on.
  int lr_decay_start = 1;
  int epochs = 30;
  int batch_size = 16;
  std::uint64_t seed = 0;
  double dropout = 0.1;
  // Dev decoding length; 0 means 2 * source length + 5.
  int max_decode_len = 0;

  void validate() const;
};

// lr for a 1-based epoch.
double learning_rate(const TrainConfig& cfg, int epoch);

// Mean negative log-likelihood over non-PAD rows.
Node nll_loss(Node logits, std::span<const int> gold);

// For each word generated by a model, the position in the other sentence
// the aligner prefers (fwd table: tgt word -> src position).
std::vector<int> hard_links(const align::AlignmentTable& table,
                            const std::vector<std::string>& generated,
                            const std::vector<std::string>& other);

// sum_j w_j * mse(own.visual[j], targets[j]) over j < targets.size().
Node agreement_penalty(const AttentionTrace& own, std::span<const Matrix> targets, Weighting w);

// Targets: the other model's visual attention at the linked step.
std::vector<Matrix> hard_targets(const AttentionTrace& own, const AttentionTrace& other,
                                 std::span<const int> links);
// Targets: sum_x A_{y->x}(own) * A_{x->v}(other), using the first
// own.textual[0].cols() steps of the other trace.
std::vector<Matrix> soft_targets(const AttentionTrace& own, const AttentionTrace& other,
                                 std::size_t steps);

Node hard_penalty(const AttentionTrace& own, const AttentionTrace& other,
                  std::span<const int> links, Weighting w);
Node hard_penalty(const AttentionTrace& own, const AttentionTrace& other,
                  const align::AlignmentTable& table, const std::vector<std::string>& generated,
                  const std::vector<std::string>& given, Weighting w);
Node soft_penalty(const AttentionTrace& own, const AttentionTrace& other, std::size_t steps,
                  Weighting w);

// Adam with bias correction. Moments are created lazily per parameter name.
class Adam {
 public:
  Adam() = default;
  Adam(double beta1, double beta2, double epsilon);

  // Applies one update from the accumulated gradients, then zeroes them.
  void step(ParamStore& params, double lr);
  long steps() const { return t_; }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  long t_ = 0;
  std::map<std::string, std::pair<Matrix, Matrix>> moments_;
};

// One encoded instance.
struct Example {
  const corpus::Instance* instance = nullptr;
  std::vector<int> src;
  std::vector<int> tgt;
  Matrix regions;
  std::vector<int> links_fwd;  // per tgt position: hard-aligned src position
  std::vector<int> links_bwd;  // per src position: hard-aligned tgt position
  eval::PairSet vad_pairs;
};

// Links are filled when tables are given; VAD pairs come from gold links or
// mutual pairs of the tables.
std::vector<Example> prepare(const std::vector<corpus::Instance>& instances,
                             const corpus::Vocab& src_vocab, const corpus::Vocab& tgt_vocab,
                             const align::AlignmentTable* fwd, const align::AlignmentTable* bwd);

struct DirectionState {
  ModelConfig cfg;
  ParamStore params;
  Adam adam;
  std::mt19937_64 dropout_rng;
};

struct JointState {
  DirectionState fwd;
  DirectionState bwd;
  int epoch = 0;
};

// Seeds for parameter init and dropout, derived per direction.
std::uint64_t derive_seed(std::uint64_t seed, Direction dir, int purpose);

// fwd_cfg describes src -> tgt; the backward config swaps the vocabularies.
// The weighting and dropout rate come from the training config.
DirectionState make_direction_state(const ModelConfig& fwd_cfg, const TrainConfig& tc,
                                    Direction dir);
JointState make_joint_state(const ModelConfig& fwd_cfg, const TrainConfig& tc);

struct StepMetrics {
  double nll_fwd = 0.0;
  double penalty_fwd = 0.0;
  double nll_bwd = 0.0;
  double penalty_bwd = 0.0;
};

// One joint update on a batch: forward objective and Adam on the forward
// model, then the backward objective against forward traces recomputed
// with the updated parameters. Penalties are only built when they enter
// an objective (lambda > 0 and mode != none); otherwise they read 0.
StepMetrics joint_step(std::span<const Example* const> batch, JointState& state,
                       const TrainConfig& cfg, double lr);

// NLL-only update of one direction; with lambda = 0 the joint step performs
// exactly these updates.
double single_step(std::span<const Example* const> batch, DirectionState& state, Direction dir,
                   double lr);

// Objective of one direction on a batch with the other model's traces given
// as targets. Exposed for gradient and detachment checks.
struct Objective {
  Node loss;
  double nll = 0.0;
  double penalty = 0.0;
};

// Builds the per-direction loss on `tape`. other_traces holds the other
// direction's traces for the same batch (ignored when no penalty is
// active).
Objective direction_objective(model::Network& net, std::span<const Example* const> batch,
                              Direction dir, const TrainConfig& cfg, model::Dropout& drop,
                              const std::vector<AttentionTrace>& other_traces,
                              std::vector<AttentionTrace>* own_traces = nullptr);

// Teacher-forced traces of one direction without dropout.
std::vector<model::TraceValues> compute_traces(const DirectionState& state,
                                               std::span<const Example> examples, Direction dir);

std::vector<std::vector<int>> decode_all(const DirectionState& state,
                                         std::span<const Example> examples, Direction dir,
                                         int max_len, int beam);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double nll_fwd = 0.0;
  double penalty_fwd = 0.0;
  double nll_bwd = 0.0;
  double penalty_bwd = 0.0;
  double dev_bleu_fwd = 0.0;
  double dev_bleu_bwd = 0.0;
  double vad_visual = 0.0;
  double vad_nonvisual = 0.0;
};

struct DevReport {
  double bleu_fwd = 0.0;
  double bleu_bwd = 0.0;
  eval::VadReport vad;
};

DevReport evaluate_dev(const JointState& state, std::span<const Example> dev,
                       const corpus::Vocab& src_vocab, const corpus::Vocab& tgt_vocab,
                       int max_decode_len);

struct FitResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_dev_bleu = 0.0;  // mean of both directions
  ParamStore best_fwd;
  ParamStore best_bwd;
};

using EpochCallback = std::function<void(const EpochLog&, const JointState&, bool improved)>;

// Epoch loop: seeded shuffle, joint steps, dev BLEU and VAD, best-dev
// snapshot. Throws NumericError on a non-finite loss.
FitResult fit(std::span<const Example> train, std::span<const Example> dev, JointState& state,
              const TrainConfig& cfg, const corpus::Vocab& src_vocab,
              const corpus::Vocab& tgt_vocab, const EpochCallback& on_epoch = {});

// Seeded Fisher-Yates permutation of 0..n-1.
std::vector<int> permutation(int n, std::uint64_t seed);

}  // namespace vamt::train

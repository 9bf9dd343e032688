// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0
//
// One translation direction: bidirectional LSTM text encoder, linear visual
// projection, multi-head co-attention, and an LSTM decoder with dual
// additive attention, gated fusion and the visual-dependence gate beta.
//
// A Network binds a ParamStore to a Tape for one forward pass. The model is
// written for a generic source -> target direction; the backward model is
// the same network with the languages swapped.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vamt/autodiff.hpp"

namespace vamt::model {

using ad::Matrix;
using ad::Node;
using ad::ParamStore;
using ad::Tape;

enum class Weighting { adaptive, frozen };

const char* to_string(Weighting w);
Weighting weighting_from_string(const std::string& s);

struct ModelConfig {
  int d = 32;
  int heads = 2;
  int region_dim = 16;
  int src_vocab = 0;
  int tgt_vocab = 0;
  int depth = 1;
  Weighting weighting = Weighting::adaptive;
  // use_visual=false is the text-only baseline; use_coattention=false keeps
  // the visual attention but drops the co-attention branch and fusion.
  bool use_visual = true;
  bool use_coattention = true;
  double dropout = 0.1;
  // Half-width of the uniform initializer. 0.08 suits wide models; small
  // desk-scale models train faster with a wider range.
  double init_range = 0.08;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ParamShape {
  std::string name;
  int rows;
  int cols;
};

// Every parameter the config needs, sorted by name.
std::vector<ParamShape> parameter_shapes(const ModelConfig& cfg);

// uniform(-init_range, init_range), forget-gate biases 1.0.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

// Inverted dropout driven by its own generator. A default-constructed
// Dropout, or rate 0, is the identity and draws nothing.
class Dropout {
 public:
  Dropout() = default;
  Dropout(double rate, std::mt19937_64* rng);

  Node apply(Node x);
  bool active() const { return rng_ != nullptr && rate_ > 0.0; }

 private:
  double rate_ = 0.0;
  std::mt19937_64* rng_ = nullptr;
};

// m×d_v region matrix; rows must all have the same length.
Matrix regions_matrix(const std::vector<std::vector<double>>& regions);

struct EncoderOutputs {
  Node X;  // n×d
  Node V;  // m×d, invalid for the text-only model
};

struct CoAttentionOutputs {
  std::vector<Node> S;       // m×n
  std::vector<Node> Ax;      // m×n, softmax over the rows of S
  std::vector<Node> Av;      // n×m, softmax over the rows of S^T
  std::vector<Node> Xhat_k;  // m×d
  std::vector<Node> Vhat_k;  // n×d
  Node Xhat;                 // m×d, mean over heads
  Node Vhat;                 // n×d, mean over heads
};

struct Attention {
  Node weights;  // 1×rows
  Node context;  // 1×d
};

struct Fusion {
  Node gate;   // 1×d
  Node fused;  // 1×d
};

// Per decoder step. visual/beta/gates are empty for the text-only model and
// the gates are empty without co-attention.
struct AttentionTrace {
  std::vector<Node> visual;   // 1×m over V
  std::vector<Node> textual;  // 1×n over X
  std::vector<Node> beta;     // 1×1
  std::vector<Node> gate_v;   // 1×d
  std::vector<Node> gate_x;   // 1×d

  std::size_t steps() const { return textual.size(); }
};

struct Decoded {
  Node logits;  // steps×tgt_vocab
  AttentionTrace trace;
};

struct DecoderState {
  std::vector<Node> h;  // per layer, 1×d
  std::vector<Node> c;
};

// Attention keys with their projection precomputed once per sentence.
struct Keys {
  std::string name;
  Node keys;
  Node proj;
};

struct StepOutput {
  Node logits;  // 1×tgt_vocab
  Node visual;
  Node textual;
  Node beta;
  Node gate_v;
  Node gate_x;
  DecoderState state;
};

struct TranslateOptions {
  int max_len = 20;
  int beam = 1;  // 1 is greedy
};

class Network {
 public:
  // trainable=false binds parameters as constants (inference).
  Network(const ModelConfig& cfg, ParamStore& params, Tape& tape, bool trainable = true);

  const ModelConfig& config() const { return cfg_; }
  Tape& tape() { return tape_; }
  Node param(const std::string& name);

  Node encode_text(std::span<const int> ids, Dropout& drop);
  Node encode_visual(const Matrix& regions);
  EncoderOutputs encode(std::span<const int> ids, const Matrix& regions, Dropout& drop);
  CoAttentionOutputs co_attend(Node X, Node V);

  Keys prepare_keys(const std::string& name, Node keys);
  Attention attend(const Keys& keys, Node query);
  // Uses parameters att.<name>.*.
  Attention attend(const std::string& name, Node query, Node keys);
  // Uses parameters fuse.<name>.U1 / U2.
  Fusion fuse(const std::string& name, Node c, Node c_hat);
  Node compute_beta(Node s, Node cv);

  DecoderState initial_state(const EncoderOutputs& enc);
  // One decoder step from state s_{t-1} given the previous target token.
  StepOutput step(const std::vector<Keys>& keys, const DecoderState& state, int prev_token,
                  Dropout& drop);
  std::vector<Keys> decoder_keys(const EncoderOutputs& enc, const CoAttentionOutputs* co);

  // tgt_in starts with BOS; one step and one logits row per input token.
  Decoded decode_teacher_forced(const EncoderOutputs& enc, const CoAttentionOutputs* co,
                                std::span<const int> tgt_in, Dropout& drop);

  // Encoder, co-attention and teacher-forced decoder over [BOS] + tgt. The
  // result has tgt.size() + 1 steps; the last one predicts EOS.
  Decoded forward(std::span<const int> src, const Matrix& regions, std::span<const int> tgt,
                  Dropout& drop);

  // Token ids without the final EOS. Beam scores are plain sums of
  // log-probabilities; beam 1 is exactly greedy.
  std::vector<int> translate(std::span<const int> src, const Matrix& regions,
                             const TranslateOptions& opts);
  // Argmax decoding, lowest id on ties.
  std::vector<int> greedy(std::span<const int> src, const Matrix& regions, int max_len);

 private:
  Node lstm_step(const std::string& prefix, Node x_proj, Node h, Node c, Node* c_out);

  const ModelConfig& cfg_;
  ParamStore& params_;
  Tape& tape_;
  bool trainable_;
  std::unordered_map<std::string, Node> bound_;
};

// Cross-entropy targets for forward(): tgt followed by EOS.
std::vector<int> with_eos(std::span<const int> tgt);

// Plain values of a trace, for dumps and diagnostics.
struct TraceValues {
  std::vector<std::vector<double>> visual;
  std::vector<std::vector<double>> textual;
  std::vector<double> beta;
};

TraceValues trace_values(const AttentionTrace& trace);

// One JSON record per target step: {id, step, tgt_token, visual_attention,
// textual_attention, beta}. Steps beyond tgt_tokens are labelled "</s>".
void write_attention_dump(std::ostream& out, const std::string& id,
                          const std::vector<std::string>& tgt_tokens, const TraceValues& trace);

}  // namespace vamt::model

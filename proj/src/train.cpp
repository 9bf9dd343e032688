// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0

#include "vamt/train.hpp"

#include <cmath>
#include <sstream>

#include "vamt/errors.hpp"

namespace vamt::train {

const char* to_string(RegMode m) {
  switch (m) {
    case RegMode::none: return "none";
    case RegMode::hard: return "hard";
    case RegMode::soft: return "soft";
  }
  return "?";
}

RegMode reg_mode_from_string(const std::string& s) {
  if (s == "none") return RegMode::none;
  if (s == "hard") return RegMode::hard;
  if (s == "soft") return RegMode::soft;
  throw ConfigError("mode must be 'none', 'hard' or 'soft', got '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lambda_fwd >= 0.0) || !(lambda_bwd >= 0.0)) throw ConfigError("train: lambda must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be > 0");
  if (lr_decay_start < 1) throw ConfigError("train: lr_decay_start must be at least 1");
  if (epochs < 1) throw ConfigError("train: epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train: dropout must be in [0, 1)");
  if (max_decode_len < 0) throw ConfigError("train: max_decode_len must be >= 0");
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  const int halvings = std::max(0, epoch - cfg.lr_decay_start);
  return std::ldexp(cfg.lr, -halvings);
}

Node nll_loss(Node logits, std::span<const int> gold) {
  return ad::cross_entropy(logits, gold, corpus::kPad);
}

std::vector<int> hard_links(const align::AlignmentTable& table,
                            const std::vector<std::string>& generated,
                            const std::vector<std::string>& other) {
  std::vector<int> out;
  out.reserve(generated.size());
  for (const auto& w : generated) out.push_back(align::align_argmax(table, w, other));
  return out;
}

namespace {

void require_visual(const AttentionTrace& t, const char* what) {
  if (t.visual.empty()) throw ContractError(std::string(what) + ": trace has no visual attention");
}

}  // namespace

Node agreement_penalty(const AttentionTrace& own, std::span<const Matrix> targets, Weighting w) {
  require_visual(own, "agreement_penalty");
  if (targets.size() > own.visual.size()) {
    throw ContractError("agreement_penalty: " + std::to_string(targets.size()) +
                        " targets for a trace of " + std::to_string(own.visual.size()) + " steps");
  }
  if (w == Weighting::adaptive && own.beta.size() < targets.size()) {
    throw ContractError("agreement_penalty: adaptive weighting needs beta at every step");
  }
  Tape& tape = *own.visual.front().tape();
  if (targets.empty()) return tape.constant(Matrix::Zero(1, 1));
  std::vector<Node> terms;
  terms.reserve(targets.size());
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (targets[j].cols() != own.visual[j].cols()) {
      throw ContractError("agreement_penalty: region counts differ (" +
                          std::to_string(own.visual[j].cols()) + " vs " +
                          std::to_string(targets[j].cols()) + ")");
    }
    Node term = ad::mse(own.visual[j], tape.constant(targets[j]));
    terms.push_back(w == Weighting::adaptive ? ad::scale_by(term, own.beta[j]) : term);
  }
  return ad::sum(ad::concat_cols(terms));
}

std::vector<Matrix> hard_targets(const AttentionTrace& own, const AttentionTrace& other,
                                 std::span<const int> links) {
  require_visual(own, "hard_penalty");
  require_visual(other, "hard_penalty");
  if (own.visual.front().cols() != other.visual.front().cols()) {
    throw ContractError("hard_penalty: region counts differ between traces");
  }
  std::vector<Matrix> out;
  out.reserve(links.size());
  for (int i : links) {
    if (i < 0 || static_cast<std::size_t>(i) >= other.visual.size()) {
      throw ContractError("hard_penalty: link " + std::to_string(i) + " outside the other trace");
    }
    out.push_back(other.visual[static_cast<std::size_t>(i)].value());
  }
  return out;
}

std::vector<Matrix> soft_targets(const AttentionTrace& own, const AttentionTrace& other,
                                 std::size_t steps) {
  require_visual(own, "soft_penalty");
  require_visual(other, "soft_penalty");
  if (steps > own.textual.size()) throw ContractError("soft_penalty: trace shorter than sentence");
  const Eigen::Index n = own.textual.front().cols();
  if (other.visual.size() < static_cast<std::size_t>(n)) {
    throw ContractError("soft_penalty: other trace has " + std::to_string(other.visual.size()) +
                        " steps for " + std::to_string(n) + " attended words");
  }
  const Eigen::Index m = other.visual.front().cols();
  if (own.visual.front().cols() != m) {
    throw ContractError("soft_penalty: region counts differ between traces");
  }
  Matrix other_v(n, m);
  for (Eigen::Index x = 0; x < n; ++x) other_v.row(x) = other.visual[static_cast<std::size_t>(x)].value();
  std::vector<Matrix> out;
  out.reserve(steps);
  for (std::size_t j = 0; j < steps; ++j) out.push_back(own.textual[j].value() * other_v);
  return out;
}

Node hard_penalty(const AttentionTrace& own, const AttentionTrace& other,
                  std::span<const int> links, Weighting w) {
  const std::vector<Matrix> t = hard_targets(own, other, links);
  return agreement_penalty(own, t, w);
}

Node hard_penalty(const AttentionTrace& own, const AttentionTrace& other,
                  const align::AlignmentTable& table, const std::vector<std::string>& generated,
                  const std::vector<std::string>& given, Weighting w) {
  const std::vector<int> links = hard_links(table, generated, given);
  return hard_penalty(own, other, links, w);
}

Node soft_penalty(const AttentionTrace& own, const AttentionTrace& other, std::size_t steps,
                  Weighting w) {
  const std::vector<Matrix> t = soft_targets(own, other, steps);
  return agreement_penalty(own, t, w);
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Adam::step(ParamStore& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto it = moments_.find(name);
    if (it == moments_.end()) {
      it = moments_
               .emplace(name, std::make_pair(Matrix::Zero(p.value.rows(), p.value.cols()),
                                             Matrix::Zero(p.value.rows(), p.value.cols())))
               .first;
    }
    Matrix& m = it->second.first;
    Matrix& v = it->second.second;
    m = beta1_ * m + (1.0 - beta1_) * p.grad;
    v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon_);
    p.grad.setZero();
  }
}

// ---------------------------------------------------------------------------
// Examples and state

std::vector<Example> prepare(const std::vector<corpus::Instance>& instances,
                             const corpus::Vocab& src_vocab, const corpus::Vocab& tgt_vocab,
                             const align::AlignmentTable* fwd, const align::AlignmentTable* bwd) {
  std::vector<Example> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    Example ex;
    ex.instance = &inst;
    ex.src = corpus::encode(inst.src, src_vocab);
    ex.tgt = corpus::encode(inst.tgt, tgt_vocab);
    ex.regions = model::regions_matrix(inst.regions);
    if (fwd != nullptr) ex.links_fwd = hard_links(*fwd, inst.tgt, inst.src);
    if (bwd != nullptr) ex.links_bwd = hard_links(*bwd, inst.src, inst.tgt);
    if (inst.gold_align || (fwd != nullptr && bwd != nullptr)) {
      ex.vad_pairs = eval::vad_pairs(inst, fwd, bwd);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, Direction dir, int purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(dir), static_cast<std::uint32_t>(purpose)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

enum Purpose { kInit = 1, kDropout = 2, kShuffle = 3 };

}  // namespace

DirectionState make_direction_state(const ModelConfig& fwd_cfg, const TrainConfig& tc,
                                    Direction dir) {
  tc.validate();
  DirectionState st;
  st.cfg = fwd_cfg;
  if (dir == Direction::bwd) std::swap(st.cfg.src_vocab, st.cfg.tgt_vocab);
  st.cfg.weighting = tc.weighting;
  st.cfg.dropout = tc.dropout;
  st.cfg.validate();
  if (tc.mode != RegMode::none && !st.cfg.use_visual) {
    throw ConfigError("train: agreement regularization needs the visual branch");
  }
  st.params = model::init_params(st.cfg, derive_seed(tc.seed, dir, kInit));
  st.adam = Adam(tc.beta1, tc.beta2, tc.epsilon);
  st.dropout_rng.seed(derive_seed(tc.seed, dir, kDropout));
  return st;
}

JointState make_joint_state(const ModelConfig& fwd_cfg, const TrainConfig& tc) {
  JointState st;
  st.fwd = make_direction_state(fwd_cfg, tc, Direction::fwd);
  st.bwd = make_direction_state(fwd_cfg, tc, Direction::bwd);
  return st;
}

// ---------------------------------------------------------------------------
// Objectives

namespace {

struct View {
  std::span<const int> src;
  std::span<const int> tgt;
  std::span<const int> links;
};

View view(const Example& ex, Direction dir) {
  if (dir == Direction::fwd) return {ex.src, ex.tgt, ex.links_fwd};
  return {ex.tgt, ex.src, ex.links_bwd};
}

std::vector<model::Decoded> passes(model::Network& net, std::span<const Example* const> batch,
                                   Direction dir, model::Dropout& drop) {
  std::vector<model::Decoded> out;
  out.reserve(batch.size());
  for (const Example* ex : batch) {
    const View v = view(*ex, dir);
    out.push_back(net.forward(v.src, ex->regions, v.tgt, drop));
  }
  return out;
}

bool penalty_active(const TrainConfig& cfg, Direction dir) {
  const double lambda = dir == Direction::fwd ? cfg.lambda_fwd : cfg.lambda_bwd;
  return cfg.mode != RegMode::none && lambda > 0.0;
}

Objective objective_from(const std::vector<model::Decoded>& decoded,
                         std::span<const Example* const> batch, Direction dir,
                         const TrainConfig& cfg, const std::vector<AttentionTrace>& other) {
  const bool active = penalty_active(cfg, dir);
  const double lambda = dir == Direction::fwd ? cfg.lambda_fwd : cfg.lambda_bwd;
  if (active && other.size() != batch.size()) {
    throw ContractError("objective: other-direction traces missing");
  }
  Objective obj;
  std::vector<Node> losses;
  losses.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const View v = view(*batch[i], dir);
    Node nll = nll_loss(decoded[i].logits, model::with_eos(v.tgt));
    obj.nll += nll.scalar();
    if (!active) {
      losses.push_back(nll);
      continue;
    }
    Node pen;
    if (cfg.mode == RegMode::hard) {
      if (v.links.size() != v.tgt.size()) {
        throw ContractError("objective: hard mode needs aligner links for every word");
      }
      pen = hard_penalty(decoded[i].trace, other[i], v.links, cfg.weighting);
    } else {
      pen = soft_penalty(decoded[i].trace, other[i], v.tgt.size(), cfg.weighting);
    }
    obj.penalty += pen.scalar();
    losses.push_back(ad::add(nll, ad::scale(pen, lambda)));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  obj.loss = ad::scale(ad::sum(ad::concat_cols(losses)), inv);
  obj.nll *= inv;
  obj.penalty *= inv;
  return obj;
}

std::vector<AttentionTrace> traces_of(const std::vector<model::Decoded>& decoded) {
  std::vector<AttentionTrace> out;
  out.reserve(decoded.size());
  for (const auto& d : decoded) out.push_back(d.trace);
  return out;
}

void require_finite(const Objective& obj, std::span<const Example* const> batch, Direction dir) {
  const double v = obj.loss.scalar();
  if (std::isfinite(v)) return;
  std::ostringstream msg;
  msg << "non-finite " << align::to_string(dir) << " loss (nll " << obj.nll << ", penalty "
      << obj.penalty << ") on batch";
  for (const Example* ex : batch) msg << ' ' << (ex->instance ? ex->instance->id : "?");
  throw NumericError(msg.str());
}

}  // namespace

Objective direction_objective(model::Network& net, std::span<const Example* const> batch,
                              Direction dir, const TrainConfig& cfg, model::Dropout& drop,
                              const std::vector<AttentionTrace>& other_traces,
                              std::vector<AttentionTrace>* own_traces) {
  const auto decoded = passes(net, batch, dir, drop);
  if (own_traces != nullptr) *own_traces = traces_of(decoded);
  return objective_from(decoded, batch, dir, cfg, other_traces);
}

StepMetrics joint_step(std::span<const Example* const> batch, JointState& state,
                       const TrainConfig& cfg, double lr) {
  if (batch.empty()) throw ContractError("joint_step: empty batch");
  state.fwd.params.zero_grad();
  state.bwd.params.zero_grad();
  Tape tape;
  model::Network fnet(state.fwd.cfg, state.fwd.params, tape);
  model::Network bnet(state.bwd.cfg, state.bwd.params, tape);
  model::Dropout fdrop(cfg.dropout, &state.fwd.dropout_rng);
  model::Dropout bdrop(cfg.dropout, &state.bwd.dropout_rng);

  const auto bwd_decoded = passes(bnet, batch, Direction::bwd, bdrop);
  const auto fwd_decoded = passes(fnet, batch, Direction::fwd, fdrop);

  StepMetrics out;
  Objective f = objective_from(fwd_decoded, batch, Direction::fwd, cfg, traces_of(bwd_decoded));
  require_finite(f, batch, Direction::fwd);
  tape.backward(f.loss);
  state.fwd.adam.step(state.fwd.params, lr);
  out.nll_fwd = f.nll;
  out.penalty_fwd = f.penalty;

  std::vector<AttentionTrace> refreshed;
  if (penalty_active(cfg, Direction::bwd)) {
    model::Dropout none;
    refreshed = traces_of(passes(fnet, batch, Direction::fwd, none));
  }
  Objective b = objective_from(bwd_decoded, batch, Direction::bwd, cfg, refreshed);
  require_finite(b, batch, Direction::bwd);
  tape.backward(b.loss);
  state.bwd.adam.step(state.bwd.params, lr);
  out.nll_bwd = b.nll;
  out.penalty_bwd = b.penalty;
  return out;
}

double single_step(std::span<const Example* const> batch, DirectionState& state, Direction dir,
                   double lr) {
  if (batch.empty()) throw ContractError("single_step: empty batch");
  state.params.zero_grad();
  Tape tape;
  model::Network net(state.cfg, state.params, tape);
  model::Dropout drop(state.cfg.dropout, &state.dropout_rng);
  TrainConfig nll_only;
  nll_only.mode = RegMode::none;
  Objective obj = objective_from(passes(net, batch, dir, drop), batch, dir, nll_only, {});
  require_finite(obj, batch, dir);
  tape.backward(obj.loss);
  state.adam.step(state.params, lr);
  return obj.nll;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

std::vector<model::TraceValues> compute_traces(const DirectionState& state,
                                               std::span<const Example> examples, Direction dir) {
  // Inference binds parameters as constants, so the store is never written.
  auto& params = const_cast<ParamStore&>(state.params);
  std::vector<model::TraceValues> out;
  out.reserve(examples.size());
  model::Dropout none;
  for (const Example& ex : examples) {
    Tape tape;
    model::Network net(state.cfg, params, tape, false);
    const View v = view(ex, dir);
    out.push_back(model::trace_values(net.forward(v.src, ex.regions, v.tgt, none).trace));
  }
  return out;
}

std::vector<std::vector<int>> decode_all(const DirectionState& state,
                                         std::span<const Example> examples, Direction dir,
                                         int max_len, int beam) {
  auto& params = const_cast<ParamStore&>(state.params);
  std::vector<std::vector<int>> out;
  out.reserve(examples.size());
  for (const Example& ex : examples) {
    Tape tape;
    model::Network net(state.cfg, params, tape, false);
    const View v = view(ex, dir);
    const int len = max_len > 0 ? max_len : 2 * static_cast<int>(v.src.size()) + 5;
    out.push_back(net.translate(v.src, ex.regions, {len, beam}));
  }
  return out;
}

DevReport evaluate_dev(const JointState& state, std::span<const Example> dev,
                       const corpus::Vocab& src_vocab, const corpus::Vocab& tgt_vocab,
                       int max_decode_len) {
  DevReport r;
  if (dev.empty()) return r;
  for (Direction dir : {Direction::fwd, Direction::bwd}) {
    const DirectionState& st = dir == Direction::fwd ? state.fwd : state.bwd;
    const corpus::Vocab& out_vocab = dir == Direction::fwd ? tgt_vocab : src_vocab;
    const auto hyps_ids = decode_all(st, dev, dir, max_decode_len, 1);
    std::vector<eval::Sentence> hyps;
    std::vector<eval::Sentence> refs;
    for (std::size_t i = 0; i < dev.size(); ++i) {
      hyps.push_back(corpus::decode(hyps_ids[i], out_vocab));
      refs.push_back(dir == Direction::fwd ? dev[i].instance->tgt : dev[i].instance->src);
    }
    (dir == Direction::fwd ? r.bleu_fwd : r.bleu_bwd) = eval::bleu(hyps, refs);
  }
  if (state.fwd.cfg.use_visual && state.bwd.cfg.use_visual) {
    std::vector<eval::PairSet> pairs;
    for (const Example& ex : dev) pairs.push_back(ex.vad_pairs);
    r.vad = eval::vad(compute_traces(state.fwd, dev, Direction::fwd),
                      compute_traces(state.bwd, dev, Direction::bwd), pairs);
  } else {
    r.vad.vad_visual = r.vad.vad_nonvisual = std::nan("");
  }
  return r;
}

std::vector<int> permutation(int n, std::uint64_t seed) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

FitResult fit(std::span<const Example> train, std::span<const Example> dev, JointState& state,
              const TrainConfig& cfg, const corpus::Vocab& src_vocab,
              const corpus::Vocab& tgt_vocab, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw ContractError("fit: empty training set");
  FitResult result;
  result.best_dev_bleu = -1.0;
  const int n = static_cast<int>(train.size());
  for (int epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = learning_rate(cfg, epoch);
    const auto order = permutation(
        n, derive_seed(cfg.seed, Direction::fwd, kShuffle) + static_cast<std::uint64_t>(epoch));
    std::vector<const Example*> batch;
    for (int start = 0; start < n; start += cfg.batch_size) {
      batch.clear();
      for (int k = start; k < std::min(n, start + cfg.batch_size); ++k) {
        batch.push_back(&train[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]);
      }
      const StepMetrics m = joint_step(batch, state, cfg, log.lr);
      const double w = static_cast<double>(batch.size()) / n;
      log.nll_fwd += w * m.nll_fwd;
      log.penalty_fwd += w * m.penalty_fwd;
      log.nll_bwd += w * m.nll_bwd;
      log.penalty_bwd += w * m.penalty_bwd;
    }
    state.epoch = epoch;
    const DevReport dr = evaluate_dev(state, dev, src_vocab, tgt_vocab, cfg.max_decode_len);
    log.dev_bleu_fwd = dr.bleu_fwd;
    log.dev_bleu_bwd = dr.bleu_bwd;
    log.vad_visual = dr.vad.vad_visual;
    log.vad_nonvisual = dr.vad.vad_nonvisual;
    result.log.push_back(log);
    const double mean_bleu = 0.5 * (dr.bleu_fwd + dr.bleu_bwd);
    const bool improved = mean_bleu > result.best_dev_bleu;
    if (improved) {
      result.best_dev_bleu = mean_bleu;
      result.best_epoch = epoch;
      result.best_fwd = state.fwd.params;
      result.best_bwd = state.bwd.params;
    }
    if (on_epoch) on_epoch(log, state, improved);
  }
  return result;
}

}  // namespace vamt::train

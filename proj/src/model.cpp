// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0

#include "vamt/model.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "json.hpp"

#include "vamt/corpus.hpp"
#include "vamt/errors.hpp"

namespace vamt::model {

using corpus::kBos;
using corpus::kEos;
using corpus::kPad;

const char* to_string(Weighting w) { return w == Weighting::adaptive ? "adaptive" : "frozen"; }

Weighting weighting_from_string(const std::string& s) {
  if (s == "adaptive") return Weighting::adaptive;
  if (s == "frozen") return Weighting::frozen;
  throw ConfigError("weighting must be 'adaptive' or 'frozen', got '" + s + "'");
}

void ModelConfig::validate() const {
  if (d < 1) throw ConfigError("model: d must be at least 1");
  if (heads < 1) throw ConfigError("model: heads must be at least 1");
  if (depth < 1) throw ConfigError("model: depth must be at least 1");
  if (region_dim < 1) throw ConfigError("model: region_dim must be at least 1");
  if (src_vocab < 5 || tgt_vocab < 5) throw ConfigError("model: vocabularies need more than 4 ids");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must be in [0, 1)");
  if (!(init_range > 0.0 && std::isfinite(init_range))) {
    throw ConfigError("model: init_range must be positive");
  }
  if (use_coattention && !use_visual) {
    throw ConfigError("model: co-attention requires the visual branch");
  }
}

std::vector<ParamShape> parameter_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const int d = cfg.d;
  std::vector<ParamShape> out;
  auto lstm = [&](const std::string& prefix, int in) {
    out.push_back({prefix + ".Wx", in, 4 * d});
    out.push_back({prefix + ".Wh", d, 4 * d});
    out.push_back({prefix + ".b", 1, 4 * d});
  };
  out.push_back({"enc.emb", cfg.src_vocab, d});
  for (int l = 0; l < cfg.depth; ++l) {
    lstm("enc.l" + std::to_string(l) + ".fwd", d);
    lstm("enc.l" + std::to_string(l) + ".bwd", d);
  }
  auto attention = [&](const std::string& name) {
    out.push_back({"att." + name + ".Ws", d, d});
    out.push_back({"att." + name + ".Wh", d, d});
    out.push_back({"att." + name + ".v", d, 1});
  };
  attention("x");
  if (cfg.use_visual) {
    out.push_back({"vis.W", cfg.region_dim, d});
    out.push_back({"vis.b", 1, d});
    attention("v");
    out.push_back({"beta.W1", d, d});
    out.push_back({"beta.W2", d, d});
    out.push_back({"beta.w", d, 1});
  }
  if (cfg.use_coattention) {
    for (int k = 0; k < cfg.heads; ++k) out.push_back({"coatt.M" + std::to_string(k), d, d});
    attention("vhat");
    attention("xhat");
    for (const char* m : {"v", "x"}) {
      out.push_back({std::string("fuse.") + m + ".U1", d, d});
      out.push_back({std::string("fuse.") + m + ".U2", d, d});
    }
  }
  out.push_back({"dec.emb", cfg.tgt_vocab, d});
  for (int l = 0; l < cfg.depth; ++l) {
    const int in = l > 0 ? d : (cfg.use_visual ? 3 * d : 2 * d);
    lstm("dec.l" + std::to_string(l), in);
    out.push_back({"dec.init.l" + std::to_string(l) + ".W", d, d});
    out.push_back({"dec.init.l" + std::to_string(l) + ".b", 1, d});
  }
  out.push_back({"out.W", d, cfg.tgt_vocab});
  out.push_back({"out.b", 1, cfg.tgt_vocab});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

namespace {

// 53 random bits mapped to [0, 1); fixed across standard libraries.
double unit_real(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

bool is_lstm_bias(const std::string& name) {
  return name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0 &&
         (name.rfind("enc.l", 0) == 0 || (name.rfind("dec.l", 0) == 0));
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore store;
  for (const auto& s : parameter_shapes(cfg)) {
    Matrix m(s.rows, s.cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = cfg.init_range * (2.0 * unit_real(rng) - 1.0);
    if (is_lstm_bias(s.name)) m.middleCols(cfg.d, cfg.d).setOnes();
    store.add(s.name, std::move(m));
  }
  return store;
}

Dropout::Dropout(double rate, std::mt19937_64* rng) : rate_(rate), rng_(rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
}

Node Dropout::apply(Node x) {
  if (!active()) return x;
  const double keep = 1.0 - rate_;
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = unit_real(*rng_) < keep ? 1.0 / keep : 0.0;
  }
  return ad::mul(x, x.tape()->constant(std::move(mask)));
}

Matrix regions_matrix(const std::vector<std::vector<double>>& regions) {
  if (regions.empty()) throw DimensionError("regions: need at least one region");
  const std::size_t dv = regions.front().size();
  Matrix m(static_cast<Eigen::Index>(regions.size()), static_cast<Eigen::Index>(dv));
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].size() != dv) {
      throw DimensionError("regions: region " + std::to_string(i) + " has length " +
                           std::to_string(regions[i].size()) + ", expected " + std::to_string(dv));
    }
    for (std::size_t j = 0; j < dv; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = regions[i][j];
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(const ModelConfig& cfg, ParamStore& params, Tape& tape, bool trainable)
    : cfg_(cfg), params_(params), tape_(tape), trainable_(trainable) {
  cfg_.validate();
}

Node Network::param(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  if (!params_.contains(name)) throw ContractError("model: missing parameter '" + name + "'");
  Node n = tape_.param(params_.at(name), !trainable_);
  bound_.emplace(name, n);
  return n;
}

Node Network::lstm_step(const std::string& prefix, Node x_proj, Node h, Node c, Node* c_out) {
  Node z = h.valid() ? ad::add(x_proj, ad::matmul(h, param(prefix + ".Wh"))) : x_proj;
  Node packed = ad::lstm_cell(z, c);
  *c_out = ad::slice_cols(packed, cfg_.d, cfg_.d);
  return ad::slice_cols(packed, 0, cfg_.d);
}

Node Network::encode_text(std::span<const int> ids, Dropout& drop) {
  if (ids.empty()) throw ContractError("encode_text: empty sentence");
  for (int id : ids) {
    if (id < 0 || id >= cfg_.src_vocab) {
      throw ContractError("encode_text: id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(cfg_.src_vocab));
    }
  }
  const int n = static_cast<int>(ids.size());
  Node input = drop.apply(ad::gather_rows(param("enc.emb"), ids));
  Node zero_c = tape_.constant(Matrix::Zero(1, cfg_.d));
  for (int l = 0; l < cfg_.depth; ++l) {
    Node dirs[2];
    for (int dir = 0; dir < 2; ++dir) {
      const std::string prefix = "enc.l" + std::to_string(l) + (dir == 0 ? ".fwd" : ".bwd");
      Node xp = ad::add_row(ad::matmul(input, param(prefix + ".Wx")), param(prefix + ".b"));
      std::vector<Node> hs(static_cast<std::size_t>(n));
      Node h;
      Node c = zero_c;
      for (int s = 0; s < n; ++s) {
        const int t = dir == 0 ? s : n - 1 - s;
        h = lstm_step(prefix, n == 1 ? xp : ad::row(xp, t), h, c, &c);
        hs[static_cast<std::size_t>(t)] = h;
      }
      dirs[dir] = n == 1 ? hs[0] : ad::stack_rows(hs);
    }
    input = ad::add(dirs[0], dirs[1]);
  }
  return input;
}

Node Network::encode_visual(const Matrix& regions) {
  if (regions.rows() < 1) throw DimensionError("encode_visual: need at least one region");
  if (regions.cols() != cfg_.region_dim) {
    throw DimensionError("encode_visual: regions " + ad::shape_string(regions) +
                         " do not match region_dim " + std::to_string(cfg_.region_dim));
  }
  return ad::add_row(ad::matmul(tape_.constant(regions), param("vis.W")), param("vis.b"));
}

EncoderOutputs Network::encode(std::span<const int> ids, const Matrix& regions, Dropout& drop) {
  EncoderOutputs out;
  out.X = encode_text(ids, drop);
  if (cfg_.use_visual) out.V = encode_visual(regions);
  return out;
}

CoAttentionOutputs Network::co_attend(Node X, Node V) {
  if (cfg_.heads < 1) throw ConfigError("co_attend: need at least one head");
  if (X.cols() != V.cols()) {
    throw DimensionError("co_attend: X " + ad::shape_string(X.value()) + " vs V " +
                         ad::shape_string(V.value()));
  }
  CoAttentionOutputs out;
  Node Xt = ad::transpose(X);
  for (int k = 0; k < cfg_.heads; ++k) {
    Node S = ad::matmul(ad::matmul(V, param("coatt.M" + std::to_string(k))), Xt);
    Node Ax = ad::softmax_rows(S);
    Node Av = ad::softmax_rows(ad::transpose(S));
    out.S.push_back(S);
    out.Ax.push_back(Ax);
    out.Av.push_back(Av);
    out.Xhat_k.push_back(ad::matmul(Ax, X));
    out.Vhat_k.push_back(ad::matmul(Av, V));
  }
  out.Xhat = ad::mean_of(out.Xhat_k);
  out.Vhat = ad::mean_of(out.Vhat_k);
  return out;
}

Keys Network::prepare_keys(const std::string& name, Node keys) {
  return {name, keys, ad::matmul(keys, param("att." + name + ".Wh"))};
}

Attention Network::attend(const Keys& k, Node query) {
  if (k.keys.rows() < 1) throw ContractError("attend: no keys");
  const std::string prefix = "att." + k.name;
  Node q = ad::matmul(query, param(prefix + ".Ws"));
  Node scores = ad::matmul(ad::tanh(ad::add_row(k.proj, q)), param(prefix + ".v"));
  Node weights = ad::softmax_rows(ad::transpose(scores));
  return {weights, ad::matmul(weights, k.keys)};
}

Attention Network::attend(const std::string& name, Node query, Node keys) {
  return attend(prepare_keys(name, keys), query);
}

Fusion Network::fuse(const std::string& name, Node c, Node c_hat) {
  const std::string prefix = "fuse." + name;
  Node g = ad::sigmoid(ad::add(ad::matmul(c, param(prefix + ".U1")),
                               ad::matmul(c_hat, param(prefix + ".U2"))));
  // c_hat + g*(c - c_hat) is the same convex combination and returns c
  // exactly when c == c_hat.
  return {g, ad::add(c_hat, ad::mul(g, ad::sub(c, c_hat)))};
}

Node Network::compute_beta(Node s, Node cv) {
  Node pre = ad::tanh(
      ad::add(ad::matmul(s, param("beta.W1")), ad::matmul(cv, param("beta.W2"))));
  return ad::sigmoid(ad::matmul(pre, param("beta.w")));
}

DecoderState Network::initial_state(const EncoderOutputs& enc) {
  DecoderState st;
  Node mean = ad::mean_rows(enc.X);
  Node zero_c = tape_.constant(Matrix::Zero(1, cfg_.d));
  for (int l = 0; l < cfg_.depth; ++l) {
    const std::string prefix = "dec.init.l" + std::to_string(l);
    st.h.push_back(
        ad::tanh(ad::add_row(ad::matmul(mean, param(prefix + ".W")), param(prefix + ".b"))));
    st.c.push_back(zero_c);
  }
  return st;
}

std::vector<Keys> Network::decoder_keys(const EncoderOutputs& enc, const CoAttentionOutputs* co) {
  std::vector<Keys> keys{prepare_keys("x", enc.X)};
  if (cfg_.use_visual) keys.push_back(prepare_keys("v", enc.V));
  if (cfg_.use_coattention) {
    if (co == nullptr) throw ContractError("decoder: co-attention outputs required");
    keys.push_back(prepare_keys("vhat", co->Vhat));
    keys.push_back(prepare_keys("xhat", co->Xhat));
  }
  return keys;
}

StepOutput Network::step(const std::vector<Keys>& keys, const DecoderState& state,
                         int prev_token, Dropout& drop) {
  if (prev_token < 0 || prev_token >= cfg_.tgt_vocab) {
    throw ContractError("decoder: id " + std::to_string(prev_token) + " outside vocabulary of " +
                        std::to_string(cfg_.tgt_vocab));
  }
  StepOutput out;
  Node s = state.h.back();
  Attention ax = attend(keys[0], s);
  out.textual = ax.weights;
  Node cx = ax.context;
  std::vector<Node> parts;
  const int ids[1] = {prev_token};
  parts.push_back(ad::gather_rows(param("dec.emb"), ids));
  if (cfg_.use_visual) {
    Attention av = attend(keys[1], s);
    out.visual = av.weights;
    Node cv = av.context;
    if (cfg_.use_coattention) {
      Fusion fv = fuse("v", cv, attend(keys[2], s).context);
      Fusion fx = fuse("x", cx, attend(keys[3], s).context);
      out.gate_v = fv.gate;
      out.gate_x = fx.gate;
      cv = fv.fused;
      cx = fx.fused;
    }
    out.beta = compute_beta(s, cv);
    parts.push_back(cfg_.weighting == Weighting::adaptive ? ad::scale_by(cv, out.beta) : cv);
  }
  parts.push_back(cx);
  Node input = drop.apply(ad::concat_cols(parts));
  for (int l = 0; l < cfg_.depth; ++l) {
    const std::string prefix = "dec.l" + std::to_string(l);
    Node xp = ad::add_row(ad::matmul(input, param(prefix + ".Wx")), param(prefix + ".b"));
    Node c;
    Node h = lstm_step(prefix, xp, state.h[static_cast<std::size_t>(l)],
                       state.c[static_cast<std::size_t>(l)], &c);
    out.state.h.push_back(h);
    out.state.c.push_back(c);
    input = h;
  }
  out.logits = ad::add_row(ad::matmul(input, param("out.W")), param("out.b"));
  return out;
}

Decoded Network::decode_teacher_forced(const EncoderOutputs& enc, const CoAttentionOutputs* co,
                                       std::span<const int> tgt_in, Dropout& drop) {
  if (tgt_in.empty()) throw ContractError("decode_teacher_forced: empty target");
  if (tgt_in.front() != kBos) throw ContractError("decode_teacher_forced: target must start with BOS");
  const std::vector<Keys> keys = decoder_keys(enc, co);
  DecoderState st = initial_state(enc);
  Decoded out;
  std::vector<Node> logits;
  for (int tok : tgt_in) {
    StepOutput so = step(keys, st, tok, drop);
    logits.push_back(so.logits);
    out.trace.textual.push_back(so.textual);
    if (cfg_.use_visual) {
      out.trace.visual.push_back(so.visual);
      out.trace.beta.push_back(so.beta);
    }
    if (cfg_.use_coattention) {
      out.trace.gate_v.push_back(so.gate_v);
      out.trace.gate_x.push_back(so.gate_x);
    }
    st = std::move(so.state);
  }
  out.logits = logits.size() == 1 ? logits[0] : ad::stack_rows(logits);
  return out;
}

Decoded Network::forward(std::span<const int> src, const Matrix& regions,
                         std::span<const int> tgt, Dropout& drop) {
  EncoderOutputs enc = encode(src, regions, drop);
  std::optional<CoAttentionOutputs> co;
  if (cfg_.use_coattention) co = co_attend(enc.X, enc.V);
  std::vector<int> tgt_in;
  tgt_in.reserve(tgt.size() + 1);
  tgt_in.push_back(kBos);
  tgt_in.insert(tgt_in.end(), tgt.begin(), tgt.end());
  return decode_teacher_forced(enc, co ? &*co : nullptr, tgt_in, drop);
}

namespace {

std::vector<double> log_softmax(const Matrix& logits) {
  const double mx = logits.maxCoeff();
  double z = 0.0;
  for (Eigen::Index k = 0; k < logits.cols(); ++k) z += std::exp(logits(0, k) - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index k = 0; k < logits.cols(); ++k) out[static_cast<std::size_t>(k)] = logits(0, k) - lz;
  return out;
}

// PAD and BOS are never emitted.
bool emittable(int k) { return k != kPad && k != kBos; }

struct Hyp {
  DecoderState state;
  std::vector<int> tokens;
  double score = 0.0;
};

}  // namespace

std::vector<int> Network::translate(std::span<const int> src, const Matrix& regions,
                                    const TranslateOptions& opts) {
  if (opts.max_len < 1) throw ContractError("translate: max_len must be at least 1");
  if (opts.beam < 1) throw ContractError("translate: beam must be at least 1");
  Dropout none;
  EncoderOutputs enc = encode(src, regions, none);
  std::optional<CoAttentionOutputs> co;
  if (cfg_.use_coattention) co = co_attend(enc.X, enc.V);
  const std::vector<Keys> keys = decoder_keys(enc, co ? &*co : nullptr);

  std::vector<Hyp> alive{{initial_state(enc), {}, 0.0}};
  std::vector<Hyp> finished;
  const auto beam = static_cast<std::size_t>(opts.beam);
  for (int t = 0; t < opts.max_len && !alive.empty() && finished.size() < beam; ++t) {
    struct Cand {
      double score;
      std::size_t hyp;
      int token;
    };
    std::vector<Cand> cands;
    std::vector<DecoderState> next_states;
    for (std::size_t b = 0; b < alive.size(); ++b) {
      const int prev = alive[b].tokens.empty() ? kBos : alive[b].tokens.back();
      StepOutput so = step(keys, alive[b].state, prev, none);
      const std::vector<double> lp = log_softmax(so.logits.value());
      for (std::size_t k = 0; k < lp.size(); ++k) {
        if (emittable(static_cast<int>(k))) cands.push_back({alive[b].score + lp[k], b, static_cast<int>(k)});
      }
      next_states.push_back(std::move(so.state));
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.score > b.score; });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < cands.size() && next.size() + finished.size() < beam; ++i) {
      const Cand& c = cands[i];
      Hyp h{next_states[c.hyp], alive[c.hyp].tokens, c.score};
      if (c.token == kEos) {
        finished.push_back(std::move(h));
      } else {
        h.tokens.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    alive = std::move(next);
  }
  // Hypotheses cut off by max_len compete with finished ones.
  const Hyp* best = nullptr;
  for (const auto* pool : {&finished, &alive}) {
    for (const Hyp& h : *pool) {
      if (best == nullptr || h.score > best->score) best = &h;
    }
  }
  return best->tokens;
}

std::vector<int> Network::greedy(std::span<const int> src, const Matrix& regions, int max_len) {
  if (max_len < 1) throw ContractError("greedy: max_len must be at least 1");
  Dropout none;
  EncoderOutputs enc = encode(src, regions, none);
  std::optional<CoAttentionOutputs> co;
  if (cfg_.use_coattention) co = co_attend(enc.X, enc.V);
  const std::vector<Keys> keys = decoder_keys(enc, co ? &*co : nullptr);
  DecoderState st = initial_state(enc);
  std::vector<int> out;
  int prev = kBos;
  for (int t = 0; t < max_len; ++t) {
    StepOutput so = step(keys, st, prev, none);
    const Matrix& v = so.logits.value();
    int best = -1;
    for (int k = 0; k < static_cast<int>(v.cols()); ++k) {
      if (emittable(k) && (best < 0 || v(0, k) > v(0, best))) best = k;
    }
    if (best == kEos) break;
    out.push_back(best);
    prev = best;
    st = std::move(so.state);
  }
  return out;
}

std::vector<int> with_eos(std::span<const int> tgt) {
  std::vector<int> out(tgt.begin(), tgt.end());
  out.push_back(kEos);
  return out;
}

TraceValues trace_values(const AttentionTrace& trace) {
  auto row = [](Node n) {
    const Matrix& v = n.value();
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  TraceValues out;
  for (Node n : trace.visual) out.visual.push_back(row(n));
  for (Node n : trace.textual) out.textual.push_back(row(n));
  for (Node n : trace.beta) out.beta.push_back(n.scalar());
  return out;
}

void write_attention_dump(std::ostream& out, const std::string& id,
                          const std::vector<std::string>& tgt_tokens, const TraceValues& trace) {
  for (std::size_t t = 0; t < trace.textual.size(); ++t) {
    nlohmann::ordered_json rec;
    rec["id"] = id;
    rec["step"] = t;
    rec["tgt_token"] = t < tgt_tokens.size() ? tgt_tokens[t] : std::string("</s>");
    rec["visual_attention"] = t < trace.visual.size() ? trace.visual[t] : std::vector<double>{};
    rec["textual_attention"] = trace.textual[t];
    if (t < trace.beta.size()) {
      rec["beta"] = trace.beta[t];
    } else {
      rec["beta"] = nullptr;
    }
    out << rec.dump() << '\n';
  }
}

}  // namespace vamt::model

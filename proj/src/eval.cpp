// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0

#include "vamt/eval.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "vamt/errors.hpp"

namespace vamt::eval {

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const Sentence& s, int n) {
  NgramCounts out;
  const auto len = static_cast<int>(s.size());
  for (int i = 0; i + n <= len; ++i) ++out[Sentence(s.begin() + i, s.begin() + i + n)];
  return out;
}

}  // namespace

BleuReport bleu_report(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs,
                       int max_n) {
  if (hyps.size() != refs.size()) {
    throw ContractError("bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                        std::to_string(refs.size()) + " references");
  }
  if (hyps.empty()) throw ContractError("bleu: empty corpus");
  if (max_n < 1) throw ContractError("bleu: max_n must be at least 1");

  std::vector<long> matches(static_cast<std::size_t>(max_n), 0);
  std::vector<long> totals(static_cast<std::size_t>(max_n), 0);
  BleuReport r;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    r.hyp_length += static_cast<long>(hyps[s].size());
    r.ref_length += static_cast<long>(refs[s].size());
    for (int n = 1; n <= max_n; ++n) {
      const NgramCounts h = ngrams(hyps[s], n);
      const NgramCounts ref = ngrams(refs[s], n);
      for (const auto& [g, c] : h) {
        auto it = ref.find(g);
        matches[n - 1] += it == ref.end() ? 0 : std::min(c, it->second);
        totals[n - 1] += c;
      }
    }
  }
  if (r.hyp_length == 0) {
    r.score = r.ref_length == 0 ? 100.0 : 0.0;
    return r;
  }
  r.brevity_penalty = r.hyp_length >= r.ref_length
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(r.ref_length) / r.hyp_length);
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const double m = static_cast<double>(matches[n - 1]);
    const double t = static_cast<double>(totals[n - 1]);
    const double p = n == 1 ? m / t : (m + 1.0) / (t + 1.0);
    r.precisions.push_back(p);
    if (p == 0.0) {
      r.score = 0.0;
      return r;
    }
    log_sum += std::log(p);
  }
  r.score = 100.0 * r.brevity_penalty * std::exp(log_sum / max_n);
  return r;
}

double bleu(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs, int max_n) {
  return bleu_report(hyps, refs, max_n).score;
}

PairSet vad_pairs(const corpus::Instance& inst, const align::AlignmentTable* fwd,
                  const align::AlignmentTable* bwd) {
  PairSet out;
  if (inst.gold_align) {
    out.pairs = *inst.gold_align;
  } else if (fwd != nullptr && bwd != nullptr) {
    out.pairs = align::mutual_pairs(*fwd, *bwd, inst);
  } else {
    throw ContractError("vad_pairs: instance " + inst.id + " has no gold links and no tables");
  }
  for (auto [i, j] : out.pairs) {
    bool v = false;
    if (inst.visual_mask_src && inst.visual_mask_tgt) {
      v = (*inst.visual_mask_src)[static_cast<std::size_t>(i)] &&
          (*inst.visual_mask_tgt)[static_cast<std::size_t>(j)];
    }
    out.visual.push_back(v);
  }
  return out;
}

double l1_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw ContractError("l1_distance: lengths " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
  return s;
}

VadReport vad(const std::vector<model::TraceValues>& fwd, const std::vector<model::TraceValues>& bwd,
              const std::vector<PairSet>& pairs) {
  if (fwd.size() != bwd.size() || fwd.size() != pairs.size()) {
    throw ContractError("vad: trace and pair counts differ");
  }
  VadReport r;
  double sum_v = 0.0;
  double sum_n = 0.0;
  for (std::size_t s = 0; s < fwd.size(); ++s) {
    InstanceVad iv;
    const PairSet& ps = pairs[s];
    for (std::size_t p = 0; p < ps.pairs.size(); ++p) {
      const auto [i, j] = ps.pairs[p];
      if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= bwd[s].visual.size() ||
          static_cast<std::size_t>(j) >= fwd[s].visual.size()) {
        throw ContractError("vad: pair out of range in instance " + std::to_string(s));
      }
      const double dist = l1_distance(bwd[s].visual[static_cast<std::size_t>(i)],
                                      fwd[s].visual[static_cast<std::size_t>(j)]);
      if (ps.visual[p]) {
        iv.sum_visual += dist;
        ++iv.count_visual;
      } else {
        iv.sum_nonvisual += dist;
        ++iv.count_nonvisual;
      }
    }
    sum_v += iv.sum_visual;
    sum_n += iv.sum_nonvisual;
    r.count_visual += iv.count_visual;
    r.count_nonvisual += iv.count_nonvisual;
    r.per_instance.push_back(iv);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.vad_visual = r.count_visual > 0 ? sum_v / r.count_visual : nan;
  r.vad_nonvisual = r.count_nonvisual > 0 ? sum_n / r.count_nonvisual : nan;
  return r;
}

double aligner_accuracy(const align::AlignmentTable& table,
                        const std::vector<corpus::Instance>& instances, bool visual_only) {
  const bool fwd = table.direction() == align::Direction::fwd;
  long hit = 0;
  long total = 0;
  for (const auto& inst : instances) {
    if (!inst.gold_align) throw ContractError("aligner_accuracy: " + inst.id + " has no gold links");
    if (visual_only && (!inst.visual_mask_src || !inst.visual_mask_tgt)) {
      throw ContractError("aligner_accuracy: " + inst.id + " has no visual masks");
    }
    std::vector<int> src_links(inst.src.size(), 0);
    std::vector<int> tgt_links(inst.tgt.size(), 0);
    for (auto [i, j] : *inst.gold_align) {
      ++src_links[static_cast<std::size_t>(i)];
      ++tgt_links[static_cast<std::size_t>(j)];
    }
    for (auto [i, j] : *inst.gold_align) {
      const auto si = static_cast<std::size_t>(i);
      const auto tj = static_cast<std::size_t>(j);
      if (src_links[si] != 1 || tgt_links[tj] != 1) continue;
      if (visual_only && !((*inst.visual_mask_src)[si] && (*inst.visual_mask_tgt)[tj])) continue;
      ++total;
      if (fwd) {
        hit += align::align_argmax(table, inst.tgt[tj], inst.src) == i;
      } else {
        hit += align::align_argmax(table, inst.src[si], inst.tgt) == j;
      }
    }
  }
  if (total == 0) throw ContractError("aligner_accuracy: no one-to-one gold links");
  return static_cast<double>(hit) / static_cast<double>(total);
}

std::pair<double, double> beta_separation(const std::vector<model::TraceValues>& traces,
                                          const std::vector<std::vector<bool>>& masks) {
  if (traces.size() != masks.size()) throw ContractError("beta_separation: count mismatch");
  double sv = 0.0;
  double sn = 0.0;
  long nv = 0;
  long nn = 0;
  for (std::size_t s = 0; s < traces.size(); ++s) {
    if (traces[s].beta.size() < masks[s].size()) {
      throw ContractError("beta_separation: trace shorter than mask");
    }
    for (std::size_t t = 0; t < masks[s].size(); ++t) {
      if (masks[s][t]) {
        sv += traces[s].beta[t];
        ++nv;
      } else {
        sn += traces[s].beta[t];
        ++nn;
      }
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {nv > 0 ? sv / nv : nan, nn > 0 ? sn / nn : nan};
}

}  // namespace vamt::eval

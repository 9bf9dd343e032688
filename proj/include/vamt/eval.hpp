// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus BLEU, visual attention distance (VAD), aligner accuracy against
// gold links and beta separation between visual and function words.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vamt/aligner.hpp"
#include "vamt/corpus.hpp"
#include "vamt/model.hpp"

namespace vamt::eval {

using Sentence = std::vector<std::string>;

struct BleuReport {
  double score = 0.0;              // 0..100
  std::vector<double> precisions;  // n = 1..max_n, after smoothing
  double brevity_penalty = 0.0;
  long hyp_length = 0;
  long ref_length = 0;
};

// Corpus-level BLEU with clipped n-gram counts. Precisions for n >= 2 use
// add-one smoothing; zero unigram overlap gives 0.
BleuReport bleu_report(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs,
                       int max_n = 4);
double bleu(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs, int max_n = 4);

// Word pairs (src index, tgt index) for one instance with a visual flag each.
struct PairSet {
  std::vector<std::pair<int, int>> pairs;
  std::vector<bool> visual;
};

// Gold links when present, else mutual argmax pairs from the two tables. A
// pair is visual when both of its words are (gold masks, when present).
PairSet vad_pairs(const corpus::Instance& inst, const align::AlignmentTable* fwd,
                  const align::AlignmentTable* bwd);

struct InstanceVad {
  double sum_visual = 0.0;
  double sum_nonvisual = 0.0;
  int count_visual = 0;
  int count_nonvisual = 0;
};

// Means are NaN when the corresponding count is 0.
struct VadReport {
  double vad_visual = 0.0;
  double vad_nonvisual = 0.0;
  int count_visual = 0;
  int count_nonvisual = 0;
  std::vector<InstanceVad> per_instance;
};

// Mean l1 distance between the backward model's visual attention at source
// word i and the forward model's visual attention at target word j, over
// the pairs, split by the pair's visual flag. Traces are teacher-forced.
VadReport vad(const std::vector<model::TraceValues>& fwd, const std::vector<model::TraceValues>& bwd,
              const std::vector<PairSet>& pairs);

double l1_distance(const std::vector<double>& a, const std::vector<double>& b);

// Fraction of gold one-to-one links the table's argmax recovers. For a fwd
// table the target word picks a source position, for bwd the reverse. With
// visual_only, only links between visual words count.
double aligner_accuracy(const align::AlignmentTable& table,
                        const std::vector<corpus::Instance>& instances, bool visual_only = false);

// Mean beta over target steps whose token is visual vs. not, from forward
// traces; masks are the per-instance target visual masks.
std::pair<double, double> beta_separation(const std::vector<model::TraceValues>& traces,
                                          const std::vector<std::vector<bool>>& masks);

}  // namespace vamt::eval

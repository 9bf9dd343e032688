// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0
//
// IBM Model 1 lexical aligner trained by EM, without a NULL word.

#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vamt/corpus.hpp"

namespace vamt::align {

// fwd scores aligner(src word | tgt word); bwd scores aligner(tgt word | src word).
enum class Direction { fwd, bwd };

const char* to_string(Direction d);
Direction direction_from_string(const std::string& s);

using SentencePair = std::pair<std::vector<std::string>, std::vector<std::string>>;  // (src, tgt)

class AlignmentTable {
 public:
  explicit AlignmentTable(Direction direction = Direction::fwd) : direction_(direction) {}

  Direction direction() const { return direction_; }

  // Probability of `word` given the conditioning word `given`; 0 if unseen.
  // For fwd tables given is a target word, for bwd a source word.
  double prob(const std::string& given, const std::string& word) const;
  void set(const std::string& given, const std::string& word, double p);
  // Multiplies every entry of a conditioning row (testing hook).
  void scale_row(const std::string& given, double factor);

  const std::unordered_map<std::string, std::unordered_map<std::string, double>>& rows() const {
    return rows_;
  }

  // "tgt_word src_word prob" lines, sorted, preceded by a direction comment.
  void save(std::ostream& out) const;
  static AlignmentTable load(std::istream& in);
  void save_file(const std::string& path) const;
  static AlignmentTable load_file(const std::string& path);

 private:
  Direction direction_;
  std::unordered_map<std::string, std::unordered_map<std::string, double>> rows_;
};

struct TrainResult {
  AlignmentTable table;
  // Corpus log-likelihood of the initial table followed by one entry per EM
  // iteration.
  std::vector<double> log_likelihood;
  int skipped_pairs = 0;
};

// Uniform t(word | given) over words co-occurring with `given`.
TrainResult init_ibm1(const std::vector<SentencePair>& pairs, Direction direction);
TrainResult train_ibm1(const std::vector<SentencePair>& pairs, int iterations,
                       Direction direction = Direction::fwd);

std::vector<SentencePair> sentence_pairs(const std::vector<corpus::Instance>& instances);

// Index of the largest score; ties and all-zero rows go to the lowest index.
int argmax_index(std::span<const double> scores);

// Position of the candidate with the highest probability given `given`.
int align_argmax(const AlignmentTable& table, const std::string& given,
                 const std::vector<std::string>& candidates);

// Pairs (src index, tgt index) that are each other's argmax in both tables,
// sorted by target index.
std::vector<std::pair<int, int>> mutual_pairs(const AlignmentTable& fwd, const AlignmentTable& bwd,
                                              const corpus::Instance& instance);

}  // namespace vamt::align

// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0

#include "vamt/aligner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vamt/errors.hpp"

namespace vamt::align {

const char* to_string(Direction d) { return d == Direction::fwd ? "fwd" : "bwd"; }

Direction direction_from_string(const std::string& s) {
  if (s == "fwd") return Direction::fwd;
  if (s == "bwd") return Direction::bwd;
  throw ConfigError("direction must be 'fwd' or 'bwd', got '" + s + "'");
}

double AlignmentTable::prob(const std::string& given, const std::string& word) const {
  auto row = rows_.find(given);
  if (row == rows_.end()) return 0.0;
  auto it = row->second.find(word);
  return it == row->second.end() ? 0.0 : it->second;
}

void AlignmentTable::set(const std::string& given, const std::string& word, double p) {
  rows_[given][word] = p;
}

void AlignmentTable::scale_row(const std::string& given, double factor) {
  for (auto& [w, p] : rows_[given]) p *= factor;
}

void AlignmentTable::save(std::ostream& out) const {
  std::vector<std::tuple<std::string, std::string, double>> lines;
  for (const auto& [given, row] : rows_) {
    for (const auto& [word, p] : row) {
      if (direction_ == Direction::fwd) {
        lines.emplace_back(given, word, p);
      } else {
        lines.emplace_back(word, given, p);
      }
    }
  }
  std::sort(lines.begin(), lines.end());
  out << "# direction " << to_string(direction_) << '\n';
  out << std::setprecision(17);
  for (const auto& [t, s, p] : lines) out << t << ' ' << s << ' ' << p << '\n';
}

AlignmentTable AlignmentTable::load(std::istream& in) {
  std::string line;
  int lineno = 0;
  AlignmentTable table;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string key;
      std::string value;
      if (ss >> key >> value && key == "direction") {
        table.direction_ = direction_from_string(value);
        have_header = true;
      }
      continue;
    }
    std::istringstream ss(line);
    std::string tgt;
    std::string src;
    double p = 0.0;
    if (!(ss >> tgt >> src >> p)) throw ParseError("expected 'tgt_word src_word prob'", lineno);
    if (table.direction_ == Direction::fwd) {
      table.set(tgt, src, p);
    } else {
      table.set(src, tgt, p);
    }
  }
  if (!have_header) throw ParseError("missing '# direction' header");
  return table;
}

void AlignmentTable::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  save(out);
}

AlignmentTable AlignmentTable::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return load(in);
}

// ---------------------------------------------------------------------------
// EM

namespace {

// Integer-coded corpus: for each pair, the generated words and the
// conditioning words.
struct Coded {
  std::vector<std::string> given_words;
  std::vector<std::string> gen_words;
  std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;  // (gen, given)
  int skipped = 0;
};

Coded code_pairs(const std::vector<SentencePair>& pairs, Direction direction) {
  Coded c;
  std::unordered_map<std::string, int> given_ids;
  std::unordered_map<std::string, int> gen_ids;
  auto intern = [](std::unordered_map<std::string, int>& ids, std::vector<std::string>& words,
                   const std::string& w) {
    auto [it, inserted] = ids.emplace(w, static_cast<int>(words.size()));
    if (inserted) words.push_back(w);
    return it->second;
  };
  for (const auto& [src, tgt] : pairs) {
    if (src.empty() || tgt.empty()) {
      ++c.skipped;
      continue;
    }
    const auto& gen = direction == Direction::fwd ? src : tgt;
    const auto& given = direction == Direction::fwd ? tgt : src;
    std::vector<int> g1;
    std::vector<int> g2;
    for (const auto& w : gen) g1.push_back(intern(gen_ids, c.gen_words, w));
    for (const auto& w : given) g2.push_back(intern(given_ids, c.given_words, w));
    c.pairs.emplace_back(std::move(g1), std::move(g2));
  }
  if (c.pairs.empty()) throw ContractError("train_ibm1: corpus has no non-empty sentence pairs");
  return c;
}

using Rows = std::vector<std::unordered_map<int, double>>;  // given id -> gen id -> t

double log_likelihood(const Coded& c, const Rows& t) {
  double ll = 0.0;
  for (const auto& [gen, given] : c.pairs) {
    const double inv_l = 1.0 / static_cast<double>(given.size());
    for (int x : gen) {
      double s = 0.0;
      for (int y : given) s += t[static_cast<std::size_t>(y)].at(x);
      ll += std::log(s * inv_l);
    }
  }
  return ll;
}

AlignmentTable to_table(const Coded& c, const Rows& t, Direction direction) {
  AlignmentTable table(direction);
  for (std::size_t y = 0; y < t.size(); ++y) {
    for (const auto& [x, p] : t[y]) {
      table.set(c.given_words[y], c.gen_words[static_cast<std::size_t>(x)], p);
    }
  }
  return table;
}

Rows uniform_rows(const Coded& c) {
  Rows t(c.given_words.size());
  for (const auto& [gen, given] : c.pairs) {
    for (int y : given) {
      for (int x : gen) t[static_cast<std::size_t>(y)][x] = 0.0;
    }
  }
  for (auto& row : t) {
    const double u = 1.0 / static_cast<double>(row.size());
    for (auto& [x, p] : row) p = u;
  }
  return t;
}

}  // namespace

TrainResult init_ibm1(const std::vector<SentencePair>& pairs, Direction direction) {
  const Coded c = code_pairs(pairs, direction);
  const Rows t = uniform_rows(c);
  TrainResult r{to_table(c, t, direction), {log_likelihood(c, t)}, c.skipped};
  return r;
}

TrainResult train_ibm1(const std::vector<SentencePair>& pairs, int iterations,
                       Direction direction) {
  if (iterations < 1) throw ContractError("train_ibm1: iterations must be at least 1");
  const Coded c = code_pairs(pairs, direction);
  Rows t = uniform_rows(c);
  TrainResult result{AlignmentTable(direction), {log_likelihood(c, t)}, c.skipped};

  std::vector<double> post;
  for (int it = 0; it < iterations; ++it) {
    Rows counts(t.size());
    for (const auto& [gen, given] : c.pairs) {
      for (int x : gen) {
        post.resize(given.size());
        double denom = 0.0;
        for (std::size_t i = 0; i < given.size(); ++i) {
          post[i] = t[static_cast<std::size_t>(given[i])].at(x);
          denom += post[i];
        }
        for (std::size_t i = 0; i < given.size(); ++i) {
          counts[static_cast<std::size_t>(given[i])][x] += post[i] / denom;
        }
      }
    }
    for (std::size_t y = 0; y < t.size(); ++y) {
      double total = 0.0;
      for (const auto& [x, v] : counts[y]) total += v;
      for (auto& [x, p] : t[y]) {
        auto found = counts[y].find(x);
        p = found == counts[y].end() ? 0.0 : found->second / total;
      }
    }
    result.log_likelihood.push_back(log_likelihood(c, t));
  }
  result.table = to_table(c, t, direction);
  return result;
}

std::vector<SentencePair> sentence_pairs(const std::vector<corpus::Instance>& instances) {
  std::vector<SentencePair> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.emplace_back(inst.src, inst.tgt);
  return out;
}

int argmax_index(std::span<const double> scores) {
  if (scores.empty()) throw ContractError("argmax_index: no candidates");
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

int align_argmax(const AlignmentTable& table, const std::string& given,
                 const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw ContractError("align_argmax: no candidates");
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& w : candidates) scores.push_back(table.prob(given, w));
  return argmax_index(scores);
}

std::vector<std::pair<int, int>> mutual_pairs(const AlignmentTable& fwd, const AlignmentTable& bwd,
                                              const corpus::Instance& instance) {
  std::vector<std::pair<int, int>> out;
  if (instance.src.empty() || instance.tgt.empty()) return out;
  std::vector<int> tgt_choice(instance.tgt.size());
  for (std::size_t j = 0; j < instance.tgt.size(); ++j) {
    tgt_choice[j] = align_argmax(fwd, instance.tgt[j], instance.src);
  }
  for (std::size_t i = 0; i < instance.src.size(); ++i) {
    const int j = align_argmax(bwd, instance.src[i], instance.tgt);
    if (tgt_choice[static_cast<std::size_t>(j)] == static_cast<int>(i)) {
      out.emplace_back(static_cast<int>(i), j);
    }
  }
  std::sort(out.begin(), out.end(), [](auto a, auto b) { return a.second < b.second; });
  return out;
}

}  // namespace vamt::align

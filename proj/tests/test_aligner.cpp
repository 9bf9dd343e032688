// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "vamt/aligner.hpp"
#include "vamt/errors.hpp"

using namespace vamt::align;

namespace {

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

void check_rows_normalized(const AlignmentTable& t) {
  for (const auto& [given, row] : t.rows()) {
    double s = 0.0;
    for (const auto& [w, p] : row) s += p;
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

}  // namespace

TEST_CASE("single candidate gets all mass") {
  auto r = train_ibm1({{words("a"), words("b")}}, 1);
  CHECK(r.table.prob("b", "a") == 1.0);
}

TEST_CASE("initialization is uniform over co-occurring words") {
  std::vector<SentencePair> pairs{{words("la maison"), words("the house")},
                                  {words("la fleur"), words("the flower")}};
  auto r = init_ibm1(pairs, Direction::fwd);
  CHECK(r.table.prob("the", "la") == doctest::Approx(1.0 / 3.0));
  CHECK(r.table.prob("the", "fleur") == doctest::Approx(1.0 / 3.0));
  CHECK(r.table.prob("house", "maison") == 0.5);
  CHECK(r.table.prob("house", "fleur") == 0.0);
  CHECK_THROWS_AS(train_ibm1(pairs, 0), vamt::ContractError);
}

TEST_CASE("house/flower example recovers the expected alignments") {
  std::vector<SentencePair> pairs{{words("la maison"), words("the house")},
                                  {words("la fleur"), words("the flower")}};
  auto r = train_ibm1(pairs, 10);
  // Frozen from an independent EM script.
  CHECK(r.table.prob("the", "la") == doctest::Approx(0.982003652902086).epsilon(1e-12));
  CHECK(r.table.prob("house", "maison") == doctest::Approx(0.9036886221911258).epsilon(1e-12));
  CHECK(r.log_likelihood.front() == doctest::Approx(-3.5018749494156003).epsilon(1e-12));
  CHECK(r.log_likelihood.back() == doctest::Approx(-2.804514403719261).epsilon(1e-12));
  REQUIRE(r.log_likelihood.size() == 11);
  for (std::size_t i = 1; i < r.log_likelihood.size(); ++i) {
    CHECK(r.log_likelihood[i] >= r.log_likelihood[i - 1] - 1e-9);
  }
  check_rows_normalized(r.table);

  const auto src = words("la maison");
  CHECK(align_argmax(r.table, "the", src) == 0);
  CHECK(align_argmax(r.table, "house", src) == 1);
  CHECK(align_argmax(r.table, "flower", words("la fleur")) == 1);
}

TEST_CASE("argmax rules") {
  CHECK(argmax_index(std::vector<double>{0.2, 0.5, 0.3}) == 1);
  CHECK(argmax_index(std::vector<double>{0.4, 0.4, 0.2}) == 0);
  CHECK(argmax_index(std::vector<double>{0.0, 0.0}) == 0);
  AlignmentTable t;
  CHECK(align_argmax(t, "unseen", words("x")) == 0);
  CHECK(align_argmax(t, "unseen", words("x y z")) == 0);
  CHECK_THROWS_AS(align_argmax(t, "y", {}), vamt::ContractError);
}

TEST_CASE("argmax is invariant to scaling a row") {
  std::vector<SentencePair> pairs{{words("a b c"), words("x y")},
                                  {words("a c"), words("x z")},
                                  {words("b c d"), words("y z w")}};
  auto r = train_ibm1(pairs, 5);
  for (const auto& given : {"x", "y", "z", "w"}) {
    const int before = align_argmax(r.table, given, words("a b c d"));
    AlignmentTable scaled = r.table;
    scaled.scale_row(given, 7.5);
    CHECK(align_argmax(scaled, given, words("a b c d")) == before);
  }
}

TEST_CASE("empty sentence pairs are skipped") {
  std::vector<SentencePair> pairs{{words("a"), words("b")}, {{}, words("b")}};
  auto r = train_ibm1(pairs, 2);
  CHECK(r.skipped_pairs == 1);
  CHECK_THROWS_AS(train_ibm1({{{}, {}}}, 1), vamt::ContractError);
}

TEST_CASE("mutual pairs") {
  SUBCASE("identity corpus pairs every position") {
    std::vector<SentencePair> pairs;
    const std::vector<std::string> src{"a", "b", "c", "d", "e"};
    const std::vector<std::string> tgt{"A", "B", "C", "D", "E"};
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        if (i == j) continue;
        pairs.push_back({{src[i], src[j]}, {tgt[i], tgt[j]}});
        const int k = (i + j + 1) % 5;
        if (k != i && k != j) pairs.push_back({{src[i], src[j], src[k]}, {tgt[k], tgt[i], tgt[j]}});
      }
    }
    auto fwd = train_ibm1(pairs, 10, Direction::fwd).table;
    auto bwd = train_ibm1(pairs, 10, Direction::bwd).table;
    vamt::corpus::Instance inst;
    inst.src = {"c", "a", "e"};
    inst.tgt = {"C", "A", "E"};
    auto mp = mutual_pairs(fwd, bwd, inst);
    CHECK(mp == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}});
  }
  SUBCASE("one-sided links are excluded") {
    AlignmentTable fwd(Direction::fwd);
    AlignmentTable bwd(Direction::bwd);
    // tgt word "Y" prefers src position 0; src "p" prefers tgt "Z".
    fwd.set("Y", "p", 0.9);
    fwd.set("Y", "q", 0.1);
    fwd.set("Z", "q", 1.0);
    bwd.set("p", "Z", 0.8);
    bwd.set("p", "Y", 0.2);
    bwd.set("q", "Z", 1.0);
    vamt::corpus::Instance inst;
    inst.src = {"p", "q"};
    inst.tgt = {"Y", "Z"};
    auto mp = mutual_pairs(fwd, bwd, inst);
    CHECK(mp == std::vector<std::pair<int, int>>{{1, 1}});
  }
  SUBCASE("empty sentence") {
    vamt::corpus::Instance inst;
    CHECK(mutual_pairs(AlignmentTable(), AlignmentTable(Direction::bwd), inst).empty());
  }
}

TEST_CASE("table text format round trips") {
  std::vector<SentencePair> pairs{{words("la maison"), words("the house")},
                                  {words("la fleur"), words("the flower")}};
  for (Direction d : {Direction::fwd, Direction::bwd}) {
    auto t = train_ibm1(pairs, 3, d).table;
    std::stringstream ss;
    t.save(ss);
    auto back = AlignmentTable::load(ss);
    CHECK(back.direction() == d);
    CHECK(back.rows() == t.rows());
  }
  std::stringstream bad("# direction fwd\nthe la\n");
  CHECK_THROWS_AS(AlignmentTable::load(bad), vamt::ParseError);
}

TEST_CASE("synthetic corpus: EM is monotone and visual links are recovered") {
  auto corpus = vamt::corpus::generate(vamt::corpus::default_world(11), 2000, 4);
  auto r = train_ibm1(sentence_pairs(corpus), 10);
  for (std::size_t i = 1; i < r.log_likelihood.size(); ++i) {
    CHECK(r.log_likelihood[i] >= r.log_likelihood[i - 1] - 1e-9);
  }
  check_rows_normalized(r.table);

  int hit = 0;
  int total = 0;
  for (const auto& inst : corpus) {
    std::vector<int> src_links(inst.src.size()), tgt_links(inst.tgt.size());
    for (auto [i, j] : *inst.gold_align) {
      ++src_links[i];
      ++tgt_links[j];
    }
    for (auto [i, j] : *inst.gold_align) {
      if (src_links[i] != 1 || tgt_links[j] != 1 || !(*inst.visual_mask_tgt)[j]) continue;
      ++total;
      hit += align_argmax(r.table, inst.tgt[j], inst.src) == i;
    }
  }
  REQUIRE(total > 0);
  MESSAGE("visual link accuracy " << static_cast<double>(hit) / total);
  CHECK(static_cast<double>(hit) / total >= 0.95);
}

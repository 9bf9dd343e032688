// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic grounded bilingual corpus: each instance pairs a set of region
// feature vectors with a source and a target sentence that mention some of
// the depicted concepts, plus gold word alignments and gold groundings.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace vamt::corpus {

enum class Side { src, tgt };

struct Instance {
  std::string id;
  std::vector<std::vector<double>> regions;
  std::vector<std::string> src;
  std::vector<std::string> tgt;
  std::optional<std::vector<std::pair<int, int>>> gold_align;  // (src index, tgt index)
  std::optional<std::map<int, int>> gold_grounding_src;        // token position -> region
  std::optional<std::map<int, int>> gold_grounding_tgt;
  std::optional<std::vector<bool>> visual_mask_src;
  std::optional<std::vector<bool>> visual_mask_tgt;

  const std::vector<std::string>& tokens(Side side) const { return side == Side::src ? src : tgt; }
  bool has_gold() const {
    return gold_align && gold_grounding_src && gold_grounding_tgt && visual_mask_src &&
           visual_mask_tgt;
  }
  bool operator==(const Instance&) const = default;
};

// Throws ContractError describing the first violated invariant.
void validate(const Instance& inst);

// ---------------------------------------------------------------------------
// World

struct Concept {
  std::string name;
  int category = 0;
  // One or two words; two-word entries are the one-to-many case where a
  // single target word translates a source phrase.
  std::vector<std::string> src_words;
  std::string tgt_word;
};

struct Category {
  std::string src_word;
  std::string tgt_word;
};

struct FunctionWord {
  std::string src;
  std::string tgt;
};

// A template is a sequence of units; a unit is a function word or a concept
// slot. tgt_order permutes the units for the target language. A generic slot
// is rendered with its category word in that language, so the concept can
// only be recovered from the image.
struct TemplateUnit {
  int function_word = -1;  // index into WorldSpec::function_words, or -1
  int slot = -1;           // concept slot, or -1
  bool generic_src = false;
  bool generic_tgt = false;
};

struct Template {
  std::vector<TemplateUnit> units;
  std::vector<int> tgt_order;
  int num_slots() const;
};

struct WorldSpec {
  std::vector<Concept> concepts;
  std::vector<Category> categories;
  std::vector<FunctionWord> function_words;
  std::vector<Template> templates;
  std::vector<std::vector<double>> prototypes;  // one per concept
  int region_dim = 16;
  double noise = 0.3;
  std::uint64_t seed = 0;
};

// 12 concepts in 6 categories, 7 templates with 1-3 slots, one two-word
// source entry. Each prototype is its category's N(0, 1) centre plus a
// N(0, 0.7^2) concept offset, drawn with the given seed.
WorldSpec default_world(std::uint64_t seed, int region_dim = 16, double noise = 0.3);

// Throws ContractError if maps are not injective or no one-to-many entry
// exists.
void validate(const WorldSpec& world);

// Deterministic in (world, count, m).
std::vector<Instance> generate(const WorldSpec& world, int count, int m);

// ---------------------------------------------------------------------------
// Persistence: one JSON object per line.

void save(const std::vector<Instance>& instances, std::ostream& out);
std::vector<Instance> load(std::istream& in);
void save_file(const std::vector<Instance>& instances, const std::string& path);
std::vector<Instance> load_file(const std::string& path);

// ---------------------------------------------------------------------------
// Vocabulary and batching

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;

class Vocab {
 public:
  Vocab();
  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  int add(const std::string& token);
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line in id order.
  void save(std::ostream& out) const;
  static Vocab load(std::istream& in);
  void save_file(const std::string& path) const;
  static Vocab load_file(const std::string& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Most frequent tokens first, ties broken lexicographically, truncated so the
// vocabulary (including the four reserved ids) has at most cap entries.
Vocab build_vocab(const std::vector<Instance>& instances, Side side, int cap);
std::vector<int> encode(const std::vector<std::string>& tokens, const Vocab& vocab);
std::vector<std::string> decode(const std::vector<int>& ids, const Vocab& vocab);

struct Batch {
  std::vector<const Instance*> instances;
  std::vector<std::vector<int>> src_ids;  // padded with kPad to the batch max
  std::vector<std::vector<int>> tgt_ids;
  std::vector<int> src_lengths;
  std::vector<int> tgt_lengths;
};

std::vector<Batch> batch(const std::vector<Instance>& instances, int size, const Vocab& src_vocab,
                         const Vocab& tgt_vocab);
// Same, but visiting instances in the given order.
std::vector<Batch> batch(const std::vector<Instance>& instances, const std::vector<int>& order,
                         int size, const Vocab& src_vocab, const Vocab& tgt_vocab);

}  // namespace vamt::corpus

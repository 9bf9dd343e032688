// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0

#include "vamt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vamt/errors.hpp"

namespace vamt::corpus {

using nlohmann::json;

namespace {

std::string where(const Instance& inst) { return "instance '" + inst.id + "': "; }

}  // namespace

void validate(const Instance& inst) {
  if (inst.regions.empty()) throw ContractError(where(inst) + "no regions");
  if (inst.src.empty()) throw ContractError(where(inst) + "empty source sentence");
  if (inst.tgt.empty()) throw ContractError(where(inst) + "empty target sentence");
  const std::size_t dim = inst.regions[0].size();
  for (const auto& r : inst.regions) {
    if (r.size() != dim || dim == 0) {
      throw ContractError(where(inst) + "region vectors differ in length");
    }
  }
  const int m = static_cast<int>(inst.regions.size());
  const int n = static_cast<int>(inst.src.size());
  const int l = static_cast<int>(inst.tgt.size());
  if (inst.gold_align) {
    for (auto [i, j] : *inst.gold_align) {
      if (i < 0 || i >= n || j < 0 || j >= l) {
        throw ContractError(where(inst) + "gold_align pair out of range");
      }
    }
  }
  auto check_side = [&](const std::optional<std::map<int, int>>& grounding,
                        const std::optional<std::vector<bool>>& mask, int len, const char* side) {
    if (grounding) {
      for (auto [pos, region] : *grounding) {
        if (pos < 0 || pos >= len || region < 0 || region >= m) {
          throw ContractError(where(inst) + "gold_grounding_" + side + " entry out of range");
        }
      }
    }
    if (mask) {
      if (static_cast<int>(mask->size()) != len) {
        throw ContractError(where(inst) + "visual_mask_" + side + " length mismatch");
      }
      if (grounding) {
        for (int pos = 0; pos < len; ++pos) {
          const bool grounded = grounding->count(pos) != 0;
          if ((*mask)[static_cast<std::size_t>(pos)] != grounded) {
            throw ContractError(where(inst) + "visual_mask_" + side +
                                " disagrees with grounding at position " + std::to_string(pos));
          }
        }
      }
    }
  };
  check_side(inst.gold_grounding_src, inst.visual_mask_src, n, "src");
  check_side(inst.gold_grounding_tgt, inst.visual_mask_tgt, l, "tgt");
}

// ---------------------------------------------------------------------------
// World

int Template::num_slots() const {
  int k = 0;
  for (const auto& u : units) {
    if (u.slot >= 0) k = std::max(k, u.slot + 1);
  }
  return k;
}

namespace {
constexpr double kConceptSpread = 0.7;
}  // namespace

WorldSpec default_world(std::uint64_t seed, int region_dim, double noise) {
  WorldSpec w;
  w.seed = seed;
  w.region_dim = region_dim;
  w.noise = noise;
  w.categories = {
      {"animal", "bete"},  {"person", "personne"}, {"toy", "jouet"},
      {"vehicle", "engin"}, {"plant", "plante"},     {"beast", "betail"},
  };
  w.concepts = {
      {"dog", 0, {"dog"}, "chien"},
      {"cat", 0, {"cat"}, "chat"},
      {"woman", 1, {"woman"}, "femme"},
      {"footballer", 1, {"soccer", "player"}, "footballeur"},
      {"ball", 2, {"ball"}, "ballon"},
      {"kite", 2, {"kite"}, "cervolant"},
      {"car", 3, {"car"}, "voiture"},
      {"bike", 3, {"bike"}, "velo"},
      {"tree", 4, {"tree"}, "arbre"},
      {"flower", 4, {"flower"}, "fleur"},
      {"horse", 5, {"horse"}, "cheval"},
      {"cow", 5, {"cow"}, "vache"},
  };
  w.function_words = {
      {"a", "un"},      {"the", "le"},    {"near", "pres"},       {"with", "avec"},
      {"and", "et"},    {"on", "sur"},    {"is", "est"},          {"there", "la"},
      {"behind", "derriere"}, {"by", "par"}, {"here", "ici"},
  };
  auto fw = [](int i) { return TemplateUnit{i, -1}; };
  auto slot = [](int k) { return TemplateUnit{-1, k}; };
  auto gsrc = [](int k) { return TemplateUnit{-1, k, true, false}; };
  auto gtgt = [](int k) { return TemplateUnit{-1, k, false, true}; };
  // Six of the 13 slots are generic in each language, never both sides of
  // one mention. Target orders only swap neighbouring units.
  w.templates = {
      {{fw(1), gtgt(0), fw(6), fw(7)}, {0, 1, 3, 2}},
      {{fw(0), gtgt(0), fw(2), fw(1), gsrc(1)}, {0, 1, 2, 4, 3}},
      {{fw(1), gtgt(0), fw(3), fw(0), gsrc(1)}, {1, 0, 2, 3, 4}},
      {{fw(0), gsrc(0), fw(4), fw(0), slot(1), fw(5), fw(1), gtgt(2)}, {0, 1, 2, 4, 3, 5, 6, 7}},
      {{fw(1), gtgt(0), fw(8), fw(1), gsrc(1), fw(6), fw(7)}, {0, 1, 2, 3, 4, 6, 5}},
      {{fw(0), gsrc(0), fw(6), fw(10)}, {0, 1, 3, 2}},
      {{fw(1), gsrc(0), fw(9), fw(1), gtgt(1)}, {1, 0, 2, 4, 3}},
  };
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Concepts of one category share a centre, like detector features of
  // related objects; the offset keeps them apart.
  std::vector<std::vector<double>> centres(w.categories.size());
  for (auto& c : centres) {
    c.resize(static_cast<std::size_t>(region_dim));
    for (auto& x : c) x = normal(rng);
  }
  w.prototypes.resize(w.concepts.size());
  for (std::size_t i = 0; i < w.concepts.size(); ++i) {
    const auto& centre = centres[static_cast<std::size_t>(w.concepts[i].category)];
    auto& p = w.prototypes[i];
    p.resize(static_cast<std::size_t>(region_dim));
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = centre[k] + kConceptSpread * normal(rng);
  }
  return w;
}

void validate(const WorldSpec& world) {
  if (world.concepts.empty()) throw ContractError("world has no concepts");
  if (world.prototypes.size() != world.concepts.size()) {
    throw ContractError("world needs one prototype per concept");
  }
  std::set<std::vector<std::string>> src_seen;
  std::set<std::string> tgt_seen;
  bool one_to_many = false;
  for (const auto& c : world.concepts) {
    if (c.src_words.empty() || c.src_words.size() > 2) {
      throw ContractError("concept '" + c.name + "' needs one or two source words");
    }
    if (c.category < 0 || c.category >= static_cast<int>(world.categories.size())) {
      throw ContractError("concept '" + c.name + "' has an unknown category");
    }
    if (!src_seen.insert(c.src_words).second) {
      throw ContractError("source lexicon is not injective at '" + c.name + "'");
    }
    if (!tgt_seen.insert(c.tgt_word).second) {
      throw ContractError("target lexicon is not injective at '" + c.name + "'");
    }
    one_to_many = one_to_many || c.src_words.size() == 2;
  }
  if (!one_to_many) throw ContractError("world has no one-to-many lexicon entry");
  for (const auto& p : world.prototypes) {
    if (static_cast<int>(p.size()) != world.region_dim) {
      throw ContractError("prototype length differs from region_dim");
    }
  }
  for (const auto& t : world.templates) {
    std::vector<int> order = t.tgt_order;
    std::sort(order.begin(), order.end());
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (order[i] != static_cast<int>(i) || order.size() != t.units.size()) {
        throw ContractError("template target order is not a permutation of its units");
      }
    }
    for (const auto& u : t.units) {
      if ((u.slot < 0) == (u.function_word < 0)) {
        throw ContractError("template unit must be exactly one of function word or slot");
      }
      if (u.function_word >= static_cast<int>(world.function_words.size())) {
        throw ContractError("template refers to an unknown function word");
      }
      if (u.slot < 0 && (u.generic_src || u.generic_tgt)) {
        throw ContractError("only concept slots can be generic");
      }
    }
    if (t.num_slots() > static_cast<int>(world.categories.size())) {
      throw ContractError("template needs more concepts than there are categories");
    }
  }
  if (world.templates.empty()) throw ContractError("world has no templates");
}

std::vector<Instance> generate(const WorldSpec& world, int count, int m) {
  validate(world);
  if (count < 1) throw ContractError("generate: count must be at least 1");
  if (m < 1) throw ContractError("generate: m must be at least 1");
  for (const auto& t : world.templates) {
    if (t.num_slots() > m) {
      throw ContractError("generate: a template mentions " + std::to_string(t.num_slots()) +
                          " concepts but only " + std::to_string(m) + " regions are allowed");
    }
  }

  const int num_categories = static_cast<int>(world.categories.size());
  std::vector<std::vector<int>> by_category(static_cast<std::size_t>(num_categories));
  for (int c = 0; c < static_cast<int>(world.concepts.size()); ++c) {
    by_category[static_cast<std::size_t>(world.concepts[static_cast<std::size_t>(c)].category)]
        .push_back(c);
  }

  std::vector<Instance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int idx = 0; idx < count; ++idx) {
    // Per-instance stream so a corpus prefix does not depend on count.
    std::seed_seq seq{static_cast<std::uint32_t>(world.seed),
                      static_cast<std::uint32_t>(world.seed >> 32),
                      static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(m)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);

    const Template& tpl = world.templates[std::uniform_int_distribution<std::size_t>(
        0, world.templates.size() - 1)(rng)];
    const int k = tpl.num_slots();

    std::vector<int> cats(static_cast<std::size_t>(num_categories));
    for (int i = 0; i < num_categories; ++i) cats[static_cast<std::size_t>(i)] = i;
    std::shuffle(cats.begin(), cats.end(), rng);
    std::vector<int> mentioned;
    for (int s = 0; s < k; ++s) {
      const auto& pool = by_category[static_cast<std::size_t>(cats[static_cast<std::size_t>(s)])];
      mentioned.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
    }
    // Distractors come from categories that are not mentioned, so a category
    // word stays resolvable from the image.
    std::vector<int> distractor_pool;
    for (int s = k; s < num_categories; ++s) {
      const auto& pool = by_category[static_cast<std::size_t>(cats[static_cast<std::size_t>(s)])];
      distractor_pool.insert(distractor_pool.end(), pool.begin(), pool.end());
    }
    std::sort(distractor_pool.begin(), distractor_pool.end());
    std::shuffle(distractor_pool.begin(), distractor_pool.end(), rng);
    std::vector<int> region_concepts = mentioned;
    for (int r = k, j = 0; r < m; ++r, ++j) {
      if (distractor_pool.empty()) {
        region_concepts.push_back(mentioned[static_cast<std::size_t>(j % k)]);
      } else {
        region_concepts.push_back(
            distractor_pool[static_cast<std::size_t>(j) % distractor_pool.size()]);
      }
    }
    std::vector<int> placement(static_cast<std::size_t>(m));
    for (int r = 0; r < m; ++r) placement[static_cast<std::size_t>(r)] = r;
    std::shuffle(placement.begin(), placement.end(), rng);
    // placement[i] = region index of the i-th entry of region_concepts.

    Instance inst;
    inst.id = "syn-" + std::to_string(world.seed) + "-" + std::to_string(idx);
    inst.regions.assign(static_cast<std::size_t>(m), {});
    for (int i = 0; i < m; ++i) {
      const auto& proto =
          world.prototypes[static_cast<std::size_t>(region_concepts[static_cast<std::size_t>(i)])];
      std::vector<double> v(proto.size());
      for (std::size_t d = 0; d < v.size(); ++d) v[d] = proto[d] + world.noise * normal(rng);
      inst.regions[static_cast<std::size_t>(placement[static_cast<std::size_t>(i)])] = std::move(v);
    }

    std::map<int, int> ground_src;
    std::map<int, int> ground_tgt;
    std::vector<bool> mask_src;
    std::vector<bool> mask_tgt;
    std::vector<std::vector<int>> unit_src(tpl.units.size());
    std::vector<std::vector<int>> unit_tgt(tpl.units.size());

    auto render = [&](Side side, std::size_t u) {
      const TemplateUnit& unit_ref = tpl.units[u];
      auto& toks = side == Side::src ? inst.src : inst.tgt;
      auto& mask = side == Side::src ? mask_src : mask_tgt;
      auto& ground = side == Side::src ? ground_src : ground_tgt;
      auto& positions = side == Side::src ? unit_src[u] : unit_tgt[u];
      std::vector<std::string> words;
      int region = -1;
      if (unit_ref.function_word >= 0) {
        const auto& f = world.function_words[static_cast<std::size_t>(unit_ref.function_word)];
        words.push_back(side == Side::src ? f.src : f.tgt);
      } else {
        const auto s = static_cast<std::size_t>(unit_ref.slot);
        const Concept& c = world.concepts[static_cast<std::size_t>(mentioned[s])];
        const Category& cat = world.categories[static_cast<std::size_t>(c.category)];
        region = placement[s];
        if (side == Side::src) {
          words = unit_ref.generic_src ? std::vector<std::string>{cat.src_word} : c.src_words;
        } else {
          words = {unit_ref.generic_tgt ? cat.tgt_word : c.tgt_word};
        }
      }
      for (const auto& wd : words) {
        const int pos = static_cast<int>(toks.size());
        toks.push_back(wd);
        mask.push_back(region >= 0);
        if (region >= 0) ground[pos] = region;
        positions.push_back(pos);
      }
    };
    for (std::size_t u = 0; u < tpl.units.size(); ++u) render(Side::src, u);
    for (int u : tpl.tgt_order) render(Side::tgt, static_cast<std::size_t>(u));

    std::vector<std::pair<int, int>> align;
    for (std::size_t u = 0; u < tpl.units.size(); ++u) {
      for (int i : unit_src[u]) {
        for (int j : unit_tgt[u]) align.emplace_back(i, j);
      }
    }
    std::sort(align.begin(), align.end());
    inst.gold_align = std::move(align);
    inst.gold_grounding_src = std::move(ground_src);
    inst.gold_grounding_tgt = std::move(ground_tgt);
    inst.visual_mask_src = std::move(mask_src);
    inst.visual_mask_tgt = std::move(mask_tgt);
    validate(inst);
    out.push_back(std::move(inst));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json grounding_to_json(const std::map<int, int>& g) {
  json arr = json::array();
  for (auto [pos, region] : g) arr.push_back({pos, region});
  return arr;
}

json to_json(const Instance& inst) {
  json j;
  j["id"] = inst.id;
  j["regions"] = inst.regions;
  j["src"] = inst.src;
  j["tgt"] = inst.tgt;
  if (inst.gold_align) {
    json arr = json::array();
    for (auto [i, k] : *inst.gold_align) arr.push_back({i, k});
    j["gold_align"] = std::move(arr);
  }
  if (inst.gold_grounding_src) j["gold_grounding_src"] = grounding_to_json(*inst.gold_grounding_src);
  if (inst.gold_grounding_tgt) j["gold_grounding_tgt"] = grounding_to_json(*inst.gold_grounding_tgt);
  if (inst.visual_mask_src) j["visual_mask_src"] = *inst.visual_mask_src;
  if (inst.visual_mask_tgt) j["visual_mask_tgt"] = *inst.visual_mask_tgt;
  return j;
}

const json& required(const json& j, const char* field, int line) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) {
    throw ParseError(std::string("missing field '") + field + "'", line);
  }
  return *it;
}

const json* optional_field(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return nullptr;
  return &*it;
}

std::map<int, int> grounding_from_json(const json& arr) {
  std::map<int, int> g;
  for (const auto& pair : arr) g[pair.at(0).get<int>()] = pair.at(1).get<int>();
  return g;
}

Instance from_json(const json& j, int line) {
  static const std::set<std::string> known{
      "id",  "regions",           "src",           "tgt",           "gold_align", "gold_grounding_src",
      "gold_grounding_tgt", "visual_mask_src", "visual_mask_tgt"};
  if (!j.is_object()) throw ParseError("record is not an object", line);
  for (const auto& [key, value] : j.items()) {
    if (known.count(key) == 0) throw ParseError("unknown field '" + key + "'", line);
  }
  Instance inst;
  const char* field = "id";
  try {
    inst.id = required(j, "id", line).get<std::string>();
    field = "regions";
    inst.regions = required(j, "regions", line).get<std::vector<std::vector<double>>>();
    field = "src";
    inst.src = required(j, "src", line).get<std::vector<std::string>>();
    field = "tgt";
    inst.tgt = required(j, "tgt", line).get<std::vector<std::string>>();
    field = "gold_align";
    if (const json* a = optional_field(j, "gold_align")) {
      std::vector<std::pair<int, int>> align;
      for (const auto& p : *a) align.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
      inst.gold_align = std::move(align);
    }
    field = "gold_grounding_src";
    if (const json* g = optional_field(j, "gold_grounding_src")) {
      inst.gold_grounding_src = grounding_from_json(*g);
    }
    field = "gold_grounding_tgt";
    if (const json* g = optional_field(j, "gold_grounding_tgt")) {
      inst.gold_grounding_tgt = grounding_from_json(*g);
    }
    field = "visual_mask_src";
    if (const json* v = optional_field(j, "visual_mask_src")) {
      inst.visual_mask_src = v->get<std::vector<bool>>();
    }
    field = "visual_mask_tgt";
    if (const json* v = optional_field(j, "visual_mask_tgt")) {
      inst.visual_mask_tgt = v->get<std::vector<bool>>();
    }
  } catch (const ParseError&) {
    throw;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad value in field '") + field + "': " + e.what(), line);
  }
  try {
    validate(inst);
  } catch (const ContractError& e) {
    throw ParseError(e.what(), line);
  }
  return inst;
}

}  // namespace

void save(const std::vector<Instance>& instances, std::ostream& out) {
  for (const auto& inst : instances) out << to_json(inst).dump() << '\n';
}

std::vector<Instance> load(std::istream& in) {
  std::vector<Instance> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), lineno);
    }
    out.push_back(from_json(j, lineno));
  }
  return out;
}

void save_file(const std::vector<Instance>& instances, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  save(instances, out);
}

std::vector<Instance> load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  try {
    return load(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<s>", "</s>", "<unk>"}) add(t);
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw ContractError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

void Vocab::save(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(std::istream& in) {
  Vocab v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno <= 4) {
      if (line != v.tokens_[static_cast<std::size_t>(lineno - 1)]) {
        throw ParseError("reserved token expected, got '" + line + "'", lineno);
      }
      continue;
    }
    if (line.empty()) throw ParseError("empty token", lineno);
    if (v.contains(line)) throw ParseError("duplicate token '" + line + "'", lineno);
    v.add(line);
  }
  if (lineno < 4) throw ParseError("vocabulary is missing reserved tokens", lineno);
  return v;
}

void Vocab::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  save(out);
}

Vocab Vocab::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return load(in);
}

Vocab build_vocab(const std::vector<Instance>& instances, Side side, int cap) {
  if (instances.empty()) throw ContractError("build_vocab: empty corpus");
  if (cap <= 4) throw ContractError("build_vocab: cap must exceed the 4 reserved ids");
  std::unordered_map<std::string, long> counts;
  for (const auto& inst : instances) {
    for (const auto& t : inst.tokens(side)) ++counts[t];
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, c] : ranked) {
    if (v.size() >= cap) break;
    v.add(tok);
  }
  return v;
}

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocab& vocab) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

std::vector<std::string> decode(const std::vector<int>& ids, const Vocab& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(vocab.token(id));
  return out;
}

std::vector<Batch> batch(const std::vector<Instance>& instances, int size, const Vocab& src_vocab,
                         const Vocab& tgt_vocab) {
  std::vector<int> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  return batch(instances, order, size, src_vocab, tgt_vocab);
}

std::vector<Batch> batch(const std::vector<Instance>& instances, const std::vector<int>& order,
                         int size, const Vocab& src_vocab, const Vocab& tgt_vocab) {
  if (instances.empty()) throw ContractError("batch: empty corpus");
  if (size < 1) throw ContractError("batch: size must be at least 1");
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(size)) {
    Batch b;
    const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(size));
    std::size_t src_w = 0;
    std::size_t tgt_w = 0;
    for (std::size_t k = start; k < stop; ++k) {
      const Instance& inst = instances.at(static_cast<std::size_t>(order[k]));
      b.instances.push_back(&inst);
      b.src_ids.push_back(encode(inst.src, src_vocab));
      b.tgt_ids.push_back(encode(inst.tgt, tgt_vocab));
      b.src_lengths.push_back(static_cast<int>(inst.src.size()));
      b.tgt_lengths.push_back(static_cast<int>(inst.tgt.size()));
      src_w = std::max(src_w, inst.src.size());
      tgt_w = std::max(tgt_w, inst.tgt.size());
    }
    for (auto& ids : b.src_ids) ids.resize(src_w, kPad);
    for (auto& ids : b.tgt_ids) ids.resize(tgt_w, kPad);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace vamt::corpus

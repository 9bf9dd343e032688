// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0

#include "vamt/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "vamt/errors.hpp"

namespace vamt::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string where(const std::string& section, const std::string& key) {
  return section + "." + key;
}

double parse_double(const std::string& v, const std::string& name) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(name + ": expected a number, got '" + v + "'");
  return out;
}

long long parse_int(const std::string& v, const std::string& name) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(name + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& v, const std::string& name) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(name + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

int parse_int32(const std::string& v, const std::string& name) {
  const long long x = parse_int(v, name);
  if (x < -2147483647LL || x > 2147483647LL) throw ConfigError(name + ": out of range");
  return static_cast<int>(x);
}

bool parse_bool(const std::string& v, const std::string& name) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(name + ": expected true or false, got '" + v + "'");
}

std::string fmt(double x) {
  std::ostringstream o;
  o << std::setprecision(17) << x;
  return o.str();
}

std::string fmt(bool b) { return b ? "true" : "false"; }

// One row per key: getter for writing, setter for reading.
struct Key {
  const char* section;
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> put;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"model", "d", [](const RunConfig& c) { return std::to_string(c.model.d); },
       [](RunConfig& c, const std::string& v, const std::string& n) { c.model.d = parse_int32(v, n); }},
      {"model", "heads", [](const RunConfig& c) { return std::to_string(c.model.heads); },
       [](RunConfig& c, const std::string& v, const std::string& n) { c.model.heads = parse_int32(v, n); }},
      {"model", "depth", [](const RunConfig& c) { return std::to_string(c.model.depth); },
       [](RunConfig& c, const std::string& v, const std::string& n) { c.model.depth = parse_int32(v, n); }},
      {"model", "region_dim", [](const RunConfig& c) { return std::to_string(c.model.region_dim); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.model.region_dim = parse_int32(v, n);
       }},
      {"model", "init_range", [](const RunConfig& c) { return fmt(c.model.init_range); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.model.init_range = parse_double(v, n);
       }},
      {"model", "use_visual", [](const RunConfig& c) { return fmt(c.model.use_visual); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.model.use_visual = parse_bool(v, n);
       }},
      {"model", "use_coattention", [](const RunConfig& c) { return fmt(c.model.use_coattention); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.model.use_coattention = parse_bool(v, n);
       }},
      {"train", "lambda_fwd", [](const RunConfig& c) { return fmt(c.train.lambda_fwd); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.train.lambda_fwd = parse_double(v, n);
       }},
      {"train", "lambda_bwd", [](const RunConfig& c) { return fmt(c.train.lambda_bwd); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.train.lambda_bwd = parse_double(v, n);
       }},
      {"train", "mode", [](const RunConfig& c) { return std::string(train::to_string(c.train.mode)); },
       [](RunConfig& c, const std::string& v, const std::string&) {
         c.train.mode = train::reg_mode_from_string(v);
       }},
      {"train", "weighting",
       [](const RunConfig& c) { return std::string(model::to_string(c.train.weighting)); },
       [](RunConfig& c, const std::string& v, const std::string&) {
         c.train.weighting = model::weighting_from_string(v);
       }},
      {"train", "lr", [](const RunConfig& c) { return fmt(c.train.lr); },
       [](RunConfig& c, const std::string& v, const std::string& n) { c.train.lr = parse_double(v, n); }},
      {"train", "beta1", [](const RunConfig& c) { return fmt(c.train.beta1); },
       [](RunConfig& c, const std::string& v, const std::string& n) { c.train.beta1 = parse_double(v, n); }},
      {"train", "beta2", [](const RunConfig& c) { return fmt(c.train.beta2); },
       [](RunConfig& c, const std::string& v, const std::string& n) { c.train.beta2 = parse_double(v, n); }},
      {"train", "epsilon", [](const RunConfig& c) { return fmt(c.train.epsilon); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.train.epsilon = parse_double(v, n);
       }},
      {"train", "lr_decay_start",
       [](const RunConfig& c) { return std::to_string(c.train.lr_decay_start); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.train.lr_decay_start = parse_int32(v, n);
       }},
      {"train", "epochs", [](const RunConfig& c) { return std::to_string(c.train.epochs); },
       [](RunConfig& c, const std::string& v, const std::string& n) { c.train.epochs = parse_int32(v, n); }},
      {"train", "batch_size", [](const RunConfig& c) { return std::to_string(c.train.batch_size); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.train.batch_size = parse_int32(v, n);
       }},
      {"train", "seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
       [](RunConfig& c, const std::string& v, const std::string& n) { c.train.seed = parse_u64(v, n); }},
      {"train", "dropout", [](const RunConfig& c) { return fmt(c.train.dropout); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.train.dropout = parse_double(v, n);
       }},
      {"train", "max_decode_len",
       [](const RunConfig& c) { return std::to_string(c.train.max_decode_len); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.train.max_decode_len = parse_int32(v, n);
       }},
      {"data", "dev_fraction", [](const RunConfig& c) { return fmt(c.data.dev_fraction); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.data.dev_fraction = parse_double(v, n);
       }},
      {"data", "test_fraction", [](const RunConfig& c) { return fmt(c.data.test_fraction); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.data.test_fraction = parse_double(v, n);
       }},
      {"data", "vocab_cap", [](const RunConfig& c) { return std::to_string(c.data.vocab_cap); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.data.vocab_cap = parse_int32(v, n);
       }},
      {"data", "align_iterations",
       [](const RunConfig& c) { return std::to_string(c.data.align_iterations); },
       [](RunConfig& c, const std::string& v, const std::string& n) {
         c.data.align_iterations = parse_int32(v, n);
       }},
  };
  return table;
}

}  // namespace

void DataConfig::validate() const {
  if (!(dev_fraction >= 0.0 && test_fraction >= 0.0 && dev_fraction + test_fraction < 1.0)) {
    throw ConfigError("data: dev_fraction and test_fraction must be >= 0 with a sum below 1");
  }
  if (vocab_cap < 5) throw ConfigError("data: vocab_cap must be at least 5");
  if (align_iterations < 1) throw ConfigError("data: align_iterations must be at least 1");
}

void RunConfig::validate() const {
  model::ModelConfig m = model;
  // Vocabulary sizes come from the corpus; validate the rest with stand-ins.
  if (m.src_vocab == 0) m.src_vocab = 5;
  if (m.tgt_vocab == 0) m.tgt_vocab = 5;
  m.weighting = train.weighting;
  m.dropout = train.dropout;
  m.validate();
  train.validate();
  data.validate();
  if (train.mode != train::RegMode::none && !model.use_visual) {
    throw ConfigError("train: agreement regularization needs the visual branch");
  }
}

void set(RunConfig& cfg, const std::string& section, const std::string& key,
         const std::string& value) {
  for (const Key& k : keys()) {
    if (section == k.section && key == k.name) {
      k.put(cfg, value, where(section, key));
      return;
    }
  }
  throw ConfigError("unknown key '" + where(section, key) + "'");
}

void set_assignment(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("expected section.key=value, got '" + assignment + "'");
  }
  set(cfg, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
      trim(assignment.substr(eq + 1)));
}

void read(RunConfig& cfg, std::istream& in) {
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError("unterminated section header", lineno);
      section = trim(t.substr(1, t.size() - 2));
      if (section != "model" && section != "train" && section != "data") {
        throw ParseError("unknown section [" + section + "]", lineno);
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
    if (section.empty()) throw ParseError("key outside a section", lineno);
    try {
      set(cfg, section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
}

void read_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  try {
    read(cfg, in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::vector<std::vector<std::string>> entries(const RunConfig& cfg) {
  std::vector<std::vector<std::string>> out;
  for (const Key& k : keys()) out.push_back({k.section, k.name, k.get(cfg)});
  return out;
}

void write(const RunConfig& cfg, std::ostream& out) {
  std::string section;
  for (const auto& e : entries(cfg)) {
    if (e[0] != section) {
      if (!section.empty()) out << '\n';
      section = e[0];
      out << '[' << section << "]\n";
    }
    out << e[1] << " = " << e[2] << '\n';
  }
}

void write_file(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write(cfg, out);
  if (!out) throw IoError("write failed: " + path);
}

Split split_from_string(const std::string& s) {
  if (s == "all") return Split::all;
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw ConfigError("split must be all, train, dev or test, got '" + s + "'");
}

const char* to_string(Split s) {
  switch (s) {
    case Split::all: return "all";
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

std::pair<int, int> split_range(const DataConfig& data, int n, Split split) {
  data.validate();
  if (n < 1) throw ContractError("split_range: empty corpus");
  const int n_dev = static_cast<int>(std::lround(n * data.dev_fraction));
  const int n_test = static_cast<int>(std::lround(n * data.test_fraction));
  const int n_train = n - n_dev - n_test;
  if (n_train < 1) throw ContractError("split_range: no training instances left");
  switch (split) {
    case Split::all: return {0, n};
    case Split::train: return {0, n_train};
    case Split::dev: return {n_train, n_train + n_dev};
    case Split::test: return {n_train + n_dev, n};
  }
  return {0, n};
}

}  // namespace vamt::config

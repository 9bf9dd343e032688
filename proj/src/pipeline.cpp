// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0

#include "vamt/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vamt/errors.hpp"

namespace vamt::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const fs::path& dir, const char* name) { return (dir / name).string(); }

// Writes through a temporary file so a crash never leaves a torn file.
void write_atomically(const std::string& path, const std::function<void(std::ostream&)>& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    body(out);
    out.flush();
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + ": " + ec.message());
}

model::ModelConfig direction_config(const config::RunConfig& cfg, const corpus::Vocab& src,
                                    const corpus::Vocab& tgt) {
  model::ModelConfig m = cfg.model;
  m.src_vocab = src.size();
  m.tgt_vocab = tgt.size();
  return m;
}

json epoch_record(const train::EpochLog& l, bool improved) {
  return json{{"type", "epoch"},
              {"epoch", l.epoch},
              {"lr", l.lr},
              {"nll_fwd", l.nll_fwd},
              {"penalty_fwd", l.penalty_fwd},
              {"nll_bwd", l.nll_bwd},
              {"penalty_bwd", l.penalty_bwd},
              {"dev_bleu_fwd", l.dev_bleu_fwd},
              {"dev_bleu_bwd", l.dev_bleu_bwd},
              {"vad_visual", l.vad_visual},
              {"vad_nonvisual", l.vad_nonvisual},
              {"improved", improved}};
}

}  // namespace

corpus::WorldSpec world_preset(const std::string& name, std::uint64_t seed) {
  if (name == "default") return corpus::default_world(seed);
  throw ConfigError("unknown world preset '" + name + "' (known: default)");
}

void generate_corpus(std::uint64_t seed, int count, int m, const std::string& preset,
                     const std::string& out_path) {
  const auto instances = corpus::generate(world_preset(preset, seed), count, m);
  write_atomically(out_path, [&](std::ostream& out) { corpus::save(instances, out); });
}

align::TrainResult align_corpus(const std::string& corpus_path, int iterations, Direction dir,
                                const std::string& out_path) {
  const auto instances = corpus::load_file(corpus_path);
  auto result = align::train_ibm1(align::sentence_pairs(instances), iterations, dir);
  write_atomically(out_path, [&](std::ostream& out) { result.table.save(out); });
  return result;
}

std::vector<corpus::Instance> load_split(const std::string& corpus_path,
                                         const config::DataConfig& data, config::Split split) {
  auto all = corpus::load_file(corpus_path);
  const auto [b, e] = config::split_range(data, static_cast<int>(all.size()), split);
  return std::vector<corpus::Instance>(all.begin() + b, all.begin() + e);
}

TrainSummary train_run(const std::string& corpus_path, const config::RunConfig& cfg,
                       const std::string& out_dir, const LogSink& sink) {
  cfg.validate();
  const auto all = corpus::load_file(corpus_path);
  const int n = static_cast<int>(all.size());
  const auto [tb, te] = config::split_range(cfg.data, n, config::Split::train);
  const auto [db, de] = config::split_range(cfg.data, n, config::Split::dev);
  const std::vector<corpus::Instance> train_set(all.begin() + tb, all.begin() + te);
  const std::vector<corpus::Instance> dev_set(all.begin() + db, all.begin() + de);

  const auto src_vocab = corpus::build_vocab(train_set, corpus::Side::src, cfg.data.vocab_cap);
  const auto tgt_vocab = corpus::build_vocab(train_set, corpus::Side::tgt, cfg.data.vocab_cap);
  const auto pairs = align::sentence_pairs(train_set);
  const auto fwd_align = align::train_ibm1(pairs, cfg.data.align_iterations, Direction::fwd);
  const auto bwd_align = align::train_ibm1(pairs, cfg.data.align_iterations, Direction::bwd);
  const auto train_ex =
      train::prepare(train_set, src_vocab, tgt_vocab, &fwd_align.table, &bwd_align.table);
  const auto dev_ex = train::prepare(dev_set, src_vocab, tgt_vocab, &fwd_align.table, &bwd_align.table);

  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  config::write_file(cfg, join(dir, "config.ini"));
  src_vocab.save_file(join(dir, "src.vocab"));
  tgt_vocab.save_file(join(dir, "tgt.vocab"));
  write_atomically(join(dir, "align.fwd"), [&](std::ostream& o) { fwd_align.table.save(o); });
  write_atomically(join(dir, "align.bwd"), [&](std::ostream& o) { bwd_align.table.save(o); });

  std::ofstream log(join(dir, "log.jsonl"), std::ios::binary);
  if (!log) throw IoError("cannot write " + join(dir, "log.jsonl"));
  auto emit = [&](const json& record) {
    const std::string line = record.dump();
    log << line << '\n';
    log.flush();
    if (sink) sink(line);
  };

  json echo = json::object();
  for (const auto& e : config::entries(cfg)) echo[e[0] + "." + e[1]] = e[2];
  emit(json{{"type", "config"},
            {"config", echo},
            {"corpus_digest", file_digest(corpus_path)},
            {"corpus_size", n},
            {"train_size", static_cast<int>(train_set.size())},
            {"dev_size", static_cast<int>(dev_set.size())},
            {"src_vocab", src_vocab.size()},
            {"tgt_vocab", tgt_vocab.size()},
            {"align_loglik_fwd", fwd_align.log_likelihood.back()},
            {"align_loglik_bwd", bwd_align.log_likelihood.back()}});

  train::JointState state =
      train::make_joint_state(direction_config(cfg, src_vocab, tgt_vocab), cfg.train);
  const auto on_epoch = [&](const train::EpochLog& l, const train::JointState& st, bool improved) {
    if (improved) {
      write_atomically(join(dir, "fwd.params"), [&](std::ostream& o) { st.fwd.params.save(o); });
      write_atomically(join(dir, "bwd.params"), [&](std::ostream& o) { st.bwd.params.save(o); });
    }
    emit(epoch_record(l, improved));
  };
  const train::FitResult fit =
      train::fit(train_ex, dev_ex, state, cfg.train, src_vocab, tgt_vocab, on_epoch);

  TrainSummary s;
  s.epochs_run = static_cast<int>(fit.log.size());
  s.best_epoch = fit.best_epoch;
  s.best_dev_bleu = fit.best_dev_bleu;
  s.train_size = static_cast<int>(train_set.size());
  s.dev_size = static_cast<int>(dev_set.size());
  emit(json{{"type", "summary"},
            {"epochs_run", s.epochs_run},
            {"best_epoch", s.best_epoch},
            {"best_dev_bleu", s.best_dev_bleu}});
  return s;
}

Checkpoint load_checkpoint(const std::string& dir_path) {
  const fs::path dir(dir_path);
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir_path);
  Checkpoint c;
  config::read_file(c.config, join(dir, "config.ini"));
  c.config.validate();
  c.src_vocab = corpus::Vocab::load_file(join(dir, "src.vocab"));
  c.tgt_vocab = corpus::Vocab::load_file(join(dir, "tgt.vocab"));
  c.fwd_table = align::AlignmentTable::load_file(join(dir, "align.fwd"));
  c.bwd_table = align::AlignmentTable::load_file(join(dir, "align.bwd"));
  c.state = train::make_joint_state(direction_config(c.config, c.src_vocab, c.tgt_vocab),
                                    c.config.train);
  for (auto [name, store] : {std::pair{"fwd.params", &c.state.fwd.params},
                             std::pair{"bwd.params", &c.state.bwd.params}}) {
    const std::string path = join(dir, name);
    const ad::ParamStore loaded = ad::ParamStore::load_file(path);
    if (loaded.names() != store->names()) {
      throw ParseError(path + ": parameter names do not match the configuration");
    }
    store->assign_values(loaded);
  }
  return c;
}

std::vector<eval::Sentence> translate(const Checkpoint& ckpt,
                                      const std::vector<corpus::Instance>& instances,
                                      Direction dir, int beam, int max_len) {
  if (beam < 1) throw ConfigError("beam must be at least 1");
  const auto examples = train::prepare(instances, ckpt.src_vocab, ckpt.tgt_vocab, nullptr, nullptr);
  const train::DirectionState& st = dir == Direction::fwd ? ckpt.state.fwd : ckpt.state.bwd;
  const corpus::Vocab& out_vocab = dir == Direction::fwd ? ckpt.tgt_vocab : ckpt.src_vocab;
  const auto ids = train::decode_all(st, examples, dir, max_len, beam);
  std::vector<eval::Sentence> out;
  out.reserve(ids.size());
  for (const auto& s : ids) out.push_back(corpus::decode(s, out_vocab));
  return out;
}

void write_sentences(const std::vector<eval::Sentence>& sentences, const std::string& path) {
  write_atomically(path, [&](std::ostream& out) {
    for (const auto& s : sentences) {
      for (std::size_t k = 0; k < s.size(); ++k) out << (k ? " " : "") << s[k];
      out << '\n';
    }
  });
}

std::vector<eval::Sentence> read_sentences(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<eval::Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    eval::Sentence s;
    for (std::string w; words >> w;) s.push_back(w);
    out.push_back(std::move(s));
  }
  return out;
}

void translate_file(const std::string& checkpoint_dir, const std::string& corpus_path,
                    config::Split split, Direction dir, int beam, const std::string& out_path) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  const auto instances = load_split(corpus_path, ckpt.config.data, split);
  write_sentences(translate(ckpt, instances, dir, beam, ckpt.config.train.max_decode_len),
                  out_path);
}

EvalReport evaluate(const std::vector<eval::Sentence>& hyps,
                    const std::vector<corpus::Instance>& instances, Direction dir,
                    const Checkpoint* ckpt) {
  if (hyps.size() != instances.size()) {
    throw ContractError("evaluate: " + std::to_string(hyps.size()) + " hypotheses for " +
                        std::to_string(instances.size()) + " references");
  }
  EvalReport r;
  r.direction = dir;
  r.sentences = static_cast<int>(hyps.size());
  std::vector<eval::Sentence> refs;
  refs.reserve(instances.size());
  for (const auto& inst : instances) refs.push_back(dir == Direction::fwd ? inst.tgt : inst.src);
  r.bleu = eval::bleu_report(hyps, refs);
  const double nan = std::nan("");
  r.vad.vad_visual = r.vad.vad_nonvisual = nan;
  r.beta_visual = r.beta_nonvisual = nan;
  if (ckpt == nullptr) return r;

  r.has_checkpoint = true;
  if (!ckpt->config.model.use_visual) return r;
  const auto examples =
      train::prepare(instances, ckpt->src_vocab, ckpt->tgt_vocab, &ckpt->fwd_table, &ckpt->bwd_table);
  const auto fwd_traces = train::compute_traces(ckpt->state.fwd, examples, Direction::fwd);
  const auto bwd_traces = train::compute_traces(ckpt->state.bwd, examples, Direction::bwd);
  std::vector<eval::PairSet> pairs;
  for (const auto& ex : examples) pairs.push_back(ex.vad_pairs);
  r.vad = eval::vad(fwd_traces, bwd_traces, pairs);

  std::vector<std::vector<bool>> masks;
  for (const auto& inst : instances) {
    const auto& mask = dir == Direction::fwd ? inst.visual_mask_tgt : inst.visual_mask_src;
    if (!mask) return r;
    masks.push_back(*mask);
  }
  const auto [bv, bn] =
      eval::beta_separation(dir == Direction::fwd ? fwd_traces : bwd_traces, masks);
  r.beta_visual = bv;
  r.beta_nonvisual = bn;
  return r;
}

std::string report_json(const EvalReport& r) {
  json j{{"type", "eval"},
         {"direction", align::to_string(r.direction)},
         {"sentences", r.sentences},
         {"bleu", r.bleu.score},
         {"bleu_precisions", r.bleu.precisions},
         {"brevity_penalty", r.bleu.brevity_penalty},
         {"hyp_length", r.bleu.hyp_length},
         {"ref_length", r.bleu.ref_length}};
  if (r.has_checkpoint) {
    j["vad_visual"] = r.vad.vad_visual;
    j["vad_nonvisual"] = r.vad.vad_nonvisual;
    j["vad_pairs_visual"] = r.vad.count_visual;
    j["vad_pairs_nonvisual"] = r.vad.count_nonvisual;
    j["beta_visual"] = r.beta_visual;
    j["beta_nonvisual"] = r.beta_nonvisual;
  }
  return j.dump();
}

std::string report_text(const EvalReport& r) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(4);
  o << "direction: " << align::to_string(r.direction) << '\n';
  o << "sentences: " << r.sentences << '\n';
  o << "bleu: " << r.bleu.score << '\n';
  o << "brevity_penalty: " << r.bleu.brevity_penalty << '\n';
  if (r.has_checkpoint) {
    o << "vad_visual: " << r.vad.vad_visual << " (" << r.vad.count_visual << " pairs)\n";
    o << "vad_nonvisual: " << r.vad.vad_nonvisual << " (" << r.vad.count_nonvisual << " pairs)\n";
    o << "beta_visual: " << r.beta_visual << '\n';
    o << "beta_nonvisual: " << r.beta_nonvisual << '\n';
  }
  return o.str();
}

EvalReport evaluate_files(const std::string& hyps_path, const std::string& corpus_path,
                          config::Split split, Direction dir, const std::string& checkpoint_dir,
                          const config::DataConfig& data, const std::string& out_path) {
  std::optional<Checkpoint> ckpt;
  if (!checkpoint_dir.empty()) ckpt = load_checkpoint(checkpoint_dir);
  const auto instances = load_split(corpus_path, ckpt ? ckpt->config.data : data, split);
  const EvalReport r =
      evaluate(read_sentences(hyps_path), instances, dir, ckpt ? &*ckpt : nullptr);
  write_atomically(out_path, [&](std::ostream& out) { out << report_json(r) << '\n'; });
  return r;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::uint64_t h = 14695981039346656037ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize k = 0; k < in.gcount(); ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 1099511628211ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace vamt::pipeline

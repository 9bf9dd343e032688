// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0
//
// File-level pipeline: corpus generation, aligner training, joint model
// training into a checkpoint directory, translation and evaluation. Every
// output depends only on the inputs and seeds; nothing records paths or
// wall-clock time.
//
// Checkpoint directory layout:
//   config.ini            resolved run configuration
//   src.vocab tgt.vocab   vocabularies
//   align.fwd align.bwd   IBM1 tables trained on the train split
//   fwd.params bwd.params best-dev parameters (rewritten on improvement)
//   log.jsonl             config echo, then one record per epoch

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vamt/aligner.hpp"
#include "vamt/config.hpp"
#include "vamt/corpus.hpp"
#include "vamt/eval.hpp"
#include "vamt/train.hpp"

namespace vamt::pipeline {

using align::Direction;

// Presets: "default" (the 12-concept world).
corpus::WorldSpec world_preset(const std::string& name, std::uint64_t seed);

void generate_corpus(std::uint64_t seed, int count, int m, const std::string& preset,
                     const std::string& out_path);

align::TrainResult align_corpus(const std::string& corpus_path, int iterations, Direction dir,
                                const std::string& out_path);

struct TrainSummary {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_dev_bleu = 0.0;
  int train_size = 0;
  int dev_size = 0;
};

// Called with each log line as written (without the newline).
using LogSink = std::function<void(const std::string&)>;

// Trains both directions on the train split, selecting on the dev split.
// The directory is created if needed. On a non-finite loss the error
// propagates and the last best checkpoint stays on disk.
TrainSummary train_run(const std::string& corpus_path, const config::RunConfig& cfg,
                       const std::string& out_dir, const LogSink& sink = {});

struct Checkpoint {
  config::RunConfig config;
  corpus::Vocab src_vocab;
  corpus::Vocab tgt_vocab;
  align::AlignmentTable fwd_table{Direction::fwd};
  align::AlignmentTable bwd_table{Direction::bwd};
  train::JointState state;
};

Checkpoint load_checkpoint(const std::string& dir);

// Corpus instances of one split, using the checkpoint's data fractions.
std::vector<corpus::Instance> load_split(const std::string& corpus_path,
                                         const config::DataConfig& data, config::Split split);

// Decoded sentences; max_len 0 means 2 * source length + 5.
std::vector<eval::Sentence> translate(const Checkpoint& ckpt,
                                      const std::vector<corpus::Instance>& instances,
                                      Direction dir, int beam, int max_len);

// One hypothesis per line, tokens separated by single spaces.
void write_sentences(const std::vector<eval::Sentence>& sentences, const std::string& path);
std::vector<eval::Sentence> read_sentences(const std::string& path);

void translate_file(const std::string& checkpoint_dir, const std::string& corpus_path,
                    config::Split split, Direction dir, int beam, const std::string& out_path);

struct EvalReport {
  Direction direction = Direction::fwd;
  int sentences = 0;
  eval::BleuReport bleu;
  bool has_checkpoint = false;
  eval::VadReport vad;  // both models' teacher-forced traces on the references
  double beta_visual = 0.0;
  double beta_nonvisual = 0.0;
};

// refs are the reference side of `instances` for the direction. With a
// checkpoint the report adds VAD and beta separation.
EvalReport evaluate(const std::vector<eval::Sentence>& hyps,
                    const std::vector<corpus::Instance>& instances, Direction dir,
                    const Checkpoint* ckpt);

// Single-line JSON summary record.
std::string report_json(const EvalReport& r);
// Human-readable "key: value" lines.
std::string report_text(const EvalReport& r);

// evaluate() over files; writes the JSON record to out_path and returns it.
EvalReport evaluate_files(const std::string& hyps_path, const std::string& corpus_path,
                          config::Split split, Direction dir, const std::string& checkpoint_dir,
                          const config::DataConfig& data, const std::string& out_path);

// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_digest(const std::string& path);

}  // namespace vamt::pipeline

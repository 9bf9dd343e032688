// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: model and training settings plus data handling, read
// from a sectioned key = value file.
//
//   [model]  d heads depth region_dim init_range use_visual use_coattention
//   [train]  lambda_fwd lambda_bwd mode weighting lr beta1 beta2 epsilon
//            lr_decay_start epochs batch_size seed dropout max_decode_len
//   [data]   dev_fraction test_fraction vocab_cap align_iterations
//
// Lines starting with '#' or ';' are comments. Unknown sections and keys
// are errors.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "vamt/model.hpp"
#include "vamt/train.hpp"

namespace vamt::config {

struct DataConfig {
  // The corpus is split in order: train, then dev, then test.
  double dev_fraction = 0.1;
  double test_fraction = 0.1;
  int vocab_cap = 10000;
  int align_iterations = 10;

  void validate() const;
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  DataConfig data;

  // Checks every section; vocabulary sizes are filled in later from data.
  void validate() const;
};

// Sets one value; `section.key` addressing as in the file. Throws
// ConfigError for unknown keys or unparsable values.
void set(RunConfig& cfg, const std::string& section, const std::string& key,
         const std::string& value);
// "section.key=value".
void set_assignment(RunConfig& cfg, const std::string& assignment);

// Applies a file on top of cfg. Errors carry the 1-based line number.
void read(RunConfig& cfg, std::istream& in);
void read_file(RunConfig& cfg, const std::string& path);

// Every key in canonical order, doubles with 17 significant digits, so
// writing and reading back reproduces cfg exactly.
void write(const RunConfig& cfg, std::ostream& out);
void write_file(const RunConfig& cfg, const std::string& path);

// (section, key, value) triples in the order write() uses.
std::vector<std::vector<std::string>> entries(const RunConfig& cfg);

enum class Split { all, train, dev, test };
Split split_from_string(const std::string& s);
const char* to_string(Split s);

// Index range [begin, end) of a split for a corpus of n instances. The
// train part is never empty.
std::pair<int, int> split_range(const DataConfig& data, int n, Split split);

}  // namespace vamt::config

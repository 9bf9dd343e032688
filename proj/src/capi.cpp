// Copyright 2026 The vamt Authors
// SPDX-License-Identifier: Apache-2.0

#include "vamt/vamt.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "vamt/errors.hpp"
#include "vamt/pipeline.hpp"

struct vamt_config {
  vamt::config::RunConfig cfg;
};

struct vamt_model {
  vamt::pipeline::Checkpoint ckpt;
};

struct vamt_corpus {
  std::vector<vamt::corpus::Instance> instances;
};

namespace {

thread_local std::string g_last_error;

vamt_status fail(vamt_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Maps exceptions from the core onto status codes.
template <typename F>
vamt_status guarded(F&& body) {
  try {
    body();
    return VAMT_OK;
  } catch (const vamt::ParseError& e) {
    return fail(VAMT_ERR_PARSE, e.what());
  } catch (const vamt::ConfigError& e) {
    return fail(VAMT_ERR_CONFIG, e.what());
  } catch (const vamt::IoError& e) {
    return fail(VAMT_ERR_IO, e.what());
  } catch (const vamt::DimensionError& e) {
    return fail(VAMT_ERR_DIMENSION, e.what());
  } catch (const vamt::NumericError& e) {
    return fail(VAMT_ERR_NUMERIC, e.what());
  } catch (const vamt::ContractError& e) {
    return fail(VAMT_ERR_CONTRACT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(VAMT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(VAMT_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(VAMT_ERR_INTERNAL, "unknown error");
  }
}

vamt_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed != nullptr) *needed = s.size() + 1;
  if (buf == nullptr || cap < s.size() + 1) {
    return fail(VAMT_ERR_BUFFER, "buffer of " + std::to_string(cap) + " bytes, need " +
                                     std::to_string(s.size() + 1));
  }
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return VAMT_OK;
}

vamt::align::Direction to_dir(vamt_direction d) {
  if (d == VAMT_FWD) return vamt::align::Direction::fwd;
  if (d == VAMT_BWD) return vamt::align::Direction::bwd;
  throw vamt::ConfigError("direction must be VAMT_FWD or VAMT_BWD");
}

#define VAMT_REQUIRE(ptr)                                                   \
  do {                                                                      \
    if ((ptr) == nullptr) return fail(VAMT_ERR_ARGUMENT, #ptr " is NULL");  \
  } while (0)

}  // namespace

extern "C" {

const char* vamt_status_name(vamt_status status) {
  switch (status) {
    case VAMT_OK: return "ok";
    case VAMT_ERR_ARGUMENT: return "argument";
    case VAMT_ERR_CONFIG: return "config";
    case VAMT_ERR_IO: return "io";
    case VAMT_ERR_PARSE: return "parse";
    case VAMT_ERR_DIMENSION: return "dimension";
    case VAMT_ERR_NUMERIC: return "numeric";
    case VAMT_ERR_CONTRACT: return "contract";
    case VAMT_ERR_BUFFER: return "buffer";
    case VAMT_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* vamt_last_error(void) { return g_last_error.c_str(); }

const char* vamt_version(void) { return "1.0.0"; }

vamt_status vamt_config_new(vamt_config** out) {
  VAMT_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new vamt_config(); });
}

void vamt_config_free(vamt_config* cfg) { delete cfg; }

vamt_status vamt_config_read(vamt_config* cfg, const char* path) {
  VAMT_REQUIRE(cfg);
  VAMT_REQUIRE(path);
  // Applied to a copy so a failing file leaves the handle unchanged.
  return guarded([&] {
    vamt::config::RunConfig next = cfg->cfg;
    vamt::config::read_file(next, path);
    cfg->cfg = next;
  });
}

vamt_status vamt_config_set(vamt_config* cfg, const char* section, const char* key,
                            const char* value) {
  VAMT_REQUIRE(cfg);
  VAMT_REQUIRE(section);
  VAMT_REQUIRE(key);
  VAMT_REQUIRE(value);
  return guarded([&] { vamt::config::set(cfg->cfg, section, key, value); });
}

vamt_status vamt_config_get(const vamt_config* cfg, const char* section, const char* key,
                            char* buf, size_t cap, size_t* needed) {
  VAMT_REQUIRE(cfg);
  VAMT_REQUIRE(section);
  VAMT_REQUIRE(key);
  for (const auto& e : vamt::config::entries(cfg->cfg)) {
    if (e[0] == section && e[1] == key) return copy_out(e[2], buf, cap, needed);
  }
  return fail(VAMT_ERR_CONFIG, std::string("unknown key '") + section + "." + key + "'");
}

vamt_status vamt_config_write(const vamt_config* cfg, const char* path) {
  VAMT_REQUIRE(cfg);
  VAMT_REQUIRE(path);
  return guarded([&] { vamt::config::write_file(cfg->cfg, path); });
}

vamt_status vamt_generate(uint64_t seed, int count, int regions, const char* preset,
                          const char* out_path) {
  VAMT_REQUIRE(preset);
  VAMT_REQUIRE(out_path);
  return guarded([&] { vamt::pipeline::generate_corpus(seed, count, regions, preset, out_path); });
}

vamt_status vamt_align(const char* corpus_path, int iterations, vamt_direction dir,
                       const char* out_path, double* final_loglik) {
  VAMT_REQUIRE(corpus_path);
  VAMT_REQUIRE(out_path);
  return guarded([&] {
    const auto r = vamt::pipeline::align_corpus(corpus_path, iterations, to_dir(dir), out_path);
    if (final_loglik != nullptr) *final_loglik = r.log_likelihood.back();
  });
}

vamt_status vamt_train(const vamt_config* cfg, const char* corpus_path, const char* out_dir,
                       vamt_log_fn on_log, void* user) {
  VAMT_REQUIRE(cfg);
  VAMT_REQUIRE(corpus_path);
  VAMT_REQUIRE(out_dir);
  return guarded([&] {
    vamt::pipeline::LogSink sink;
    if (on_log != nullptr) sink = [&](const std::string& line) { on_log(line.c_str(), user); };
    vamt::pipeline::train_run(corpus_path, cfg->cfg, out_dir, sink);
  });
}

vamt_status vamt_model_load(const char* checkpoint_dir, vamt_model** out) {
  VAMT_REQUIRE(checkpoint_dir);
  VAMT_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    auto m = std::make_unique<vamt_model>();
    m->ckpt = vamt::pipeline::load_checkpoint(checkpoint_dir);
    *out = m.release();
  });
}

void vamt_model_free(vamt_model* model) { delete model; }

vamt_status vamt_corpus_load(const char* path, const char* split, const vamt_model* model,
                             vamt_corpus** out) {
  VAMT_REQUIRE(path);
  VAMT_REQUIRE(split);
  VAMT_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    const vamt::config::DataConfig data =
        model != nullptr ? model->ckpt.config.data : vamt::config::DataConfig{};
    auto c = std::make_unique<vamt_corpus>();
    c->instances =
        vamt::pipeline::load_split(path, data, vamt::config::split_from_string(split));
    *out = c.release();
  });
}

void vamt_corpus_free(vamt_corpus* corpus) { delete corpus; }

vamt_status vamt_corpus_size(const vamt_corpus* corpus, size_t* out) {
  VAMT_REQUIRE(corpus);
  VAMT_REQUIRE(out);
  *out = corpus->instances.size();
  return VAMT_OK;
}

vamt_status vamt_translate(const vamt_model* model, const vamt_corpus* corpus, size_t index,
                           vamt_direction dir, int beam, char* buf, size_t cap, size_t* needed) {
  VAMT_REQUIRE(model);
  VAMT_REQUIRE(corpus);
  if (index >= corpus->instances.size()) {
    return fail(VAMT_ERR_ARGUMENT, "index " + std::to_string(index) + " out of range (size " +
                                       std::to_string(corpus->instances.size()) + ")");
  }
  std::string text;
  const vamt_status s = guarded([&] {
    const std::vector<vamt::corpus::Instance> one{corpus->instances[index]};
    const auto hyp = vamt::pipeline::translate(model->ckpt, one, to_dir(dir), beam,
                                               model->ckpt.config.train.max_decode_len);
    for (std::size_t k = 0; k < hyp[0].size(); ++k) text += (k ? " " : "") + hyp[0][k];
  });
  if (s != VAMT_OK) return s;
  return copy_out(text, buf, cap, needed);
}

vamt_status vamt_translate_file(const char* checkpoint_dir, const char* corpus_path,
                                const char* split, vamt_direction dir, int beam,
                                const char* out_path) {
  VAMT_REQUIRE(checkpoint_dir);
  VAMT_REQUIRE(corpus_path);
  VAMT_REQUIRE(split);
  VAMT_REQUIRE(out_path);
  return guarded([&] {
    vamt::pipeline::translate_file(checkpoint_dir, corpus_path,
                                   vamt::config::split_from_string(split), to_dir(dir), beam,
                                   out_path);
  });
}

vamt_status vamt_evaluate(const char* hyps_path, const char* corpus_path, const char* split,
                          vamt_direction dir, const char* checkpoint_dir, const vamt_config* cfg,
                          const char* out_path,
                          vamt_report* report, char* text_buf, size_t cap, size_t* needed) {
  VAMT_REQUIRE(hyps_path);
  VAMT_REQUIRE(corpus_path);
  VAMT_REQUIRE(split);
  VAMT_REQUIRE(out_path);
  std::string text;
  const vamt_status s = guarded([&] {
    const auto r = vamt::pipeline::evaluate_files(
        hyps_path, corpus_path, vamt::config::split_from_string(split), to_dir(dir),
        checkpoint_dir != nullptr ? checkpoint_dir : "",
        cfg != nullptr ? cfg->cfg.data : vamt::config::DataConfig{}, out_path);
    if (report != nullptr) {
      report->bleu = r.bleu.score;
      report->vad_visual = r.vad.vad_visual;
      report->vad_nonvisual = r.vad.vad_nonvisual;
      report->beta_visual = r.beta_visual;
      report->beta_nonvisual = r.beta_nonvisual;
      report->sentences = r.sentences;
    }
    text = vamt::pipeline::report_text(r);
  });
  if (s != VAMT_OK) return s;
  if (text_buf == nullptr) {
    if (needed != nullptr) *needed = text.size() + 1;
    return VAMT_OK;
  }
  return copy_out(text, text_buf, cap, needed);
}

}  // extern "C"

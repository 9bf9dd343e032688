/* Copyright 2026 The vamt Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the vamt library: visual-agreement regularized
 * bidirectional multimodal translation on a synthetic grounded corpus.
 *
 * Every function returns a vamt_status. On failure the message of the
 * last error on the calling thread is available from vamt_last_error()
 * until the next failing call on that thread. Handles are opaque and must
 * be released with the matching _free function; passing NULL to a _free
 * function is a no-op. Strings returned through a buffer are
 * NUL-terminated; if the buffer is too small the call fails with
 * VAMT_ERR_BUFFER and *needed holds the required size including the NUL.
 */

#ifndef VAMT_VAMT_H
#define VAMT_VAMT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define VAMT_API __declspec(dllexport)
#else
#define VAMT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vamt_status {
  VAMT_OK = 0,
  VAMT_ERR_ARGUMENT = 1,  /* NULL handle or invalid argument */
  VAMT_ERR_CONFIG = 2,    /* invalid configuration value or unknown key */
  VAMT_ERR_IO = 3,        /* file could not be read or written */
  VAMT_ERR_PARSE = 4,     /* malformed input file */
  VAMT_ERR_DIMENSION = 5, /* shape mismatch */
  VAMT_ERR_NUMERIC = 6,   /* NaN or Inf, e.g. a diverged loss */
  VAMT_ERR_CONTRACT = 7,  /* violated precondition */
  VAMT_ERR_BUFFER = 8,    /* output buffer too small */
  VAMT_ERR_INTERNAL = 9
} vamt_status;

typedef enum vamt_direction { VAMT_FWD = 0, VAMT_BWD = 1 } vamt_direction;

/* Stable lower-case name of a status ("ok", "config", ...). */
VAMT_API const char* vamt_status_name(vamt_status status);
VAMT_API const char* vamt_last_error(void);
VAMT_API const char* vamt_version(void);

/* ---- run configuration -------------------------------------------------- */

typedef struct vamt_config vamt_config;

/* Library defaults. */
VAMT_API vamt_status vamt_config_new(vamt_config** out);
VAMT_API void vamt_config_free(vamt_config* cfg);
/* Applies a sectioned key = value file on top of the current values. */
VAMT_API vamt_status vamt_config_read(vamt_config* cfg, const char* path);
VAMT_API vamt_status vamt_config_set(vamt_config* cfg, const char* section, const char* key,
                                     const char* value);
VAMT_API vamt_status vamt_config_get(const vamt_config* cfg, const char* section, const char* key,
                                     char* buf, size_t cap, size_t* needed);
VAMT_API vamt_status vamt_config_write(const vamt_config* cfg, const char* path);

/* ---- pipeline ----------------------------------------------------------- */

VAMT_API vamt_status vamt_generate(uint64_t seed, int count, int regions, const char* preset,
                                   const char* out_path);

/* Trains IBM Model 1 on a corpus file; *final_loglik (may be NULL)
 * receives the corpus log-likelihood after the last iteration. */
VAMT_API vamt_status vamt_align(const char* corpus_path, int iterations, vamt_direction dir,
                                const char* out_path, double* final_loglik);

/* Called with each training log record (one JSON object, no newline). */
typedef void (*vamt_log_fn)(const char* line, void* user);

VAMT_API vamt_status vamt_train(const vamt_config* cfg, const char* corpus_path,
                                const char* out_dir, vamt_log_fn on_log, void* user);

/* ---- trained models ----------------------------------------------------- */

typedef struct vamt_model vamt_model;
typedef struct vamt_corpus vamt_corpus;

VAMT_API vamt_status vamt_model_load(const char* checkpoint_dir, vamt_model** out);
VAMT_API void vamt_model_free(vamt_model* model);

/* split: "all", "train", "dev" or "test"; the split fractions come from the
 * model's configuration when model is not NULL, else from the defaults. */
VAMT_API vamt_status vamt_corpus_load(const char* path, const char* split, const vamt_model* model,
                                      vamt_corpus** out);
VAMT_API void vamt_corpus_free(vamt_corpus* corpus);
VAMT_API vamt_status vamt_corpus_size(const vamt_corpus* corpus, size_t* out);

/* Translation of one instance, tokens separated by single spaces. */
VAMT_API vamt_status vamt_translate(const vamt_model* model, const vamt_corpus* corpus,
                                    size_t index, vamt_direction dir, int beam, char* buf,
                                    size_t cap, size_t* needed);

/* Whole split to a hypotheses file, one sentence per line. */
VAMT_API vamt_status vamt_translate_file(const char* checkpoint_dir, const char* corpus_path,
                                         const char* split, vamt_direction dir, int beam,
                                         const char* out_path);

typedef struct vamt_report {
  double bleu;
  double vad_visual;    /* NaN without a checkpoint or visual branch */
  double vad_nonvisual;
  double beta_visual;
  double beta_nonvisual;
  int sentences;
} vamt_report;

/* Scores a hypotheses file against the split's references and writes a
 * one-line JSON report. checkpoint_dir may be NULL (BLEU only); the split
 * fractions then come from cfg, or the defaults when cfg is NULL too. The
 * text form of the report is written to text_buf when it is not NULL. */
VAMT_API vamt_status vamt_evaluate(const char* hyps_path, const char* corpus_path,
                                   const char* split, vamt_direction dir,
                                   const char* checkpoint_dir, const vamt_config* cfg,
                                   const char* out_path,
                                   vamt_report* report, char* text_buf, size_t cap,
                                   size_t* needed);

#ifdef __cplusplus
}
#endif

#endif /* VAMT_VAMT_H */

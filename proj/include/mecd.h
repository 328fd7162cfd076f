/* mecd.h
 * ------
 * C interface to the MECD multi-event causal discovery library: synthetic
 * benchmark generation, VGCM training, relation prediction, causal-diagram
 * evaluation and dataset perturbations.
 *
 * All functions return a mecd_status (MECD_OK on success); the message for
 * the most recent failure on the calling thread is available through
 * mecd_last_error(). Handles are opaque and must be released with the
 * matching *_free function.
 */
#ifndef MECD_H
#define MECD_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined _WIN32
#define MECD_API __declspec(dllexport)
#else
#define MECD_API __attribute__((visibility("default")))
#endif

typedef enum mecd_status {
  MECD_OK = 0,
  MECD_E_SCHEMA = 1,
  MECD_E_LENGTH = 2,
  MECD_E_RANGE = 3,
  MECD_E_MAGIC = 4,
  MECD_E_TRUNCATED = 5,
  MECD_E_INDEX = 6,
  MECD_E_CONFIG = 7,
  MECD_E_DIM = 8,
  MECD_E_SHAPE = 9,
  MECD_E_SIZE = 10,
  MECD_E_PARAM = 11,
  MECD_E_EMPTY = 12,
  MECD_E_IO = 13,
  MECD_E_USAGE = 14,
  MECD_E_INTERNAL = 15
} mecd_status;

MECD_API const char* mecd_status_name(mecd_status status);

/* Message of the most recent error on this thread; empty string if none. */
MECD_API const char* mecd_last_error(void);

/* ---- run configuration ---------------------------------------------------
 * Flat "key = value" settings with section prefixes (model., train., loss.,
 * causal., synth., eval., baseline., perturb., gradcheck.). Unknown keys are
 * rejected with MECD_E_USAGE. */
typedef struct mecd_config mecd_config;

MECD_API mecd_status mecd_config_create(mecd_config** out);
MECD_API mecd_status mecd_config_load_file(mecd_config* cfg, const char* path);
MECD_API mecd_status mecd_config_set(mecd_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL terminated); fails with MECD_E_SIZE when the
 * buffer is too small. */
MECD_API mecd_status mecd_config_get(const mecd_config* cfg, const char* key, char* buf,
                                     size_t buf_len);
MECD_API mecd_status mecd_config_write_file(const mecd_config* cfg, const char* path);
MECD_API void mecd_config_free(mecd_config* cfg);

/* ---- pipeline runs ---------------------------------------------------------
 * Each run writes its outputs plus a config.effective echo under out_dir. */

/* Generate a synthetic dataset directory (annotations, features, ground-truth
 * diagrams, vocabulary). */
MECD_API mecd_status mecd_synth(const mecd_config* cfg, const char* out_dir);

/* Train on data_dir; writes checkpoint.vgcm and metrics.tsv. */
MECD_API mecd_status mecd_train(const mecd_config* cfg, const char* data_dir,
                                const char* out_dir);

/* Evaluate a checkpoint; writes report.json with accuracy and ave_shd. */
MECD_API mecd_status mecd_eval(const mecd_config* cfg, const char* data_dir,
                               const char* checkpoint, const char* out_dir);

/* Complete causal diagrams by truncation; writes diagrams.json and DOT files. */
MECD_API mecd_status mecd_diagram(const mecd_config* cfg, const char* data_dir,
                                  const char* checkpoint, const char* out_dir);

/* Guess-all / random baselines; writes report.json. */
MECD_API mecd_status mecd_baseline(const mecd_config* cfg, const char* data_dir,
                                   const char* out_dir);

/* Perturbed copy of a dataset (flip_labels / mask_words / mask_frames). */
MECD_API mecd_status mecd_perturb(const mecd_config* cfg, const char* data_dir,
                                  const char* out_dir);

/* Finite-difference gradient verification; writes the max relative error to
 * *max_rel_error. */
MECD_API mecd_status mecd_gradcheck(const mecd_config* cfg, double* max_rel_error);

/* ---- datasets --------------------------------------------------------------- */
typedef struct mecd_dataset mecd_dataset;

MECD_API mecd_status mecd_dataset_open(const char* dir, const char* split, mecd_dataset** out);
MECD_API mecd_status mecd_dataset_num_videos(const mecd_dataset* ds, int* out);
MECD_API mecd_status mecd_dataset_video_id(const mecd_dataset* ds, int index, char* buf,
                                           size_t buf_len);
/* Ground-truth relation vector (length N-1) for one video. n_out receives the
 * length; fails with MECD_E_SIZE when cap is too small. */
MECD_API mecd_status mecd_dataset_relation(const mecd_dataset* ds, int index, int* buf, int cap,
                                           int* n_out);
MECD_API void mecd_dataset_free(mecd_dataset* ds);

/* ---- trained models ---------------------------------------------------------- */
typedef struct mecd_model mecd_model;

MECD_API mecd_status mecd_model_load(const char* checkpoint, mecd_model** out);
/* Predicted relation vector (length N-1) for one video of an open dataset. */
MECD_API mecd_status mecd_model_predict(const mecd_model* model, const mecd_dataset* ds,
                                        int video_index, int* buf, int cap, int* n_out);
MECD_API void mecd_model_free(mecd_model* model);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MECD_H */

/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the flexmt multimodal classifier. All objects are opaque
 * handles; every fallible call returns a flexmt_status, and
 * flexmt_last_error() describes the most recent failure on the calling
 * thread.
 */
#ifndef FLEXMT_H
#define FLEXMT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum flexmt_status {
  FLEXMT_OK = 0,
  FLEXMT_ERR_INVALID_ARGUMENT = 1,
  FLEXMT_ERR_DIMENSION = 2,
  FLEXMT_ERR_VALIDATION = 3,
  FLEXMT_ERR_PARSE = 4,
  FLEXMT_ERR_FORMAT = 5,
  FLEXMT_ERR_INCOMPATIBLE = 6,
  FLEXMT_ERR_IO = 7,
  FLEXMT_ERR_CONTRACT = 8,
  FLEXMT_ERR_UNDEFINED_METRIC = 9,
  FLEXMT_ERR_INTERNAL = 10
} flexmt_status;

typedef enum flexmt_drop {
  FLEXMT_DROP_NONE = 0,
  FLEXMT_DROP_IMAGE = 1,
  FLEXMT_DROP_TEXT = 2
} flexmt_drop;

typedef enum flexmt_task {
  FLEXMT_TASK_JOINT = 0,
  FLEXMT_TASK_IMAGE_ONLY = 1,
  FLEXMT_TASK_TEXT_ONLY = 2
} flexmt_task;

typedef struct flexmt_dataset flexmt_dataset;
typedef struct flexmt_model flexmt_model;

typedef struct flexmt_model_config {
  int d_model;
  int n_heads;
  int n_layers;
  int d_ff; /* 0 selects 4 * d_model */
  int vocab;
  int max_len;
  int num_classes;
  int n_experts;
  int conv_channels;
  int fusion_hidden1;
  int fusion_hidden2;
  int fused_dim;
} flexmt_model_config;

typedef struct flexmt_gen_config {
  int n;
  uint64_t seed;
  double noise;
  double missing_rate;
  int vocab;
  int text_len;
  int num_classes;
} flexmt_gen_config;

typedef struct flexmt_train_config {
  int epochs;
  int batch_size;
  double lr;
  double p_drop;
  uint64_t seed;
  double aux_loss_weight;
} flexmt_train_config;

typedef struct flexmt_metrics {
  long long tp, tn, fp, fn;
  long long n_eval;
  double accuracy;
  double recall;
  double precision;
  double f1;
} flexmt_metrics;

typedef void (*flexmt_epoch_callback)(int epoch, double mean_loss, void* user);

/* Message for the last failing call on this thread; empty string if none. */
const char* flexmt_last_error(void);

/* Fill the structs with library defaults. */
void flexmt_model_config_init(flexmt_model_config* config);
void flexmt_gen_config_init(flexmt_gen_config* config);
void flexmt_train_config_init(flexmt_train_config* config);

/* ---- datasets ---- */
flexmt_status flexmt_dataset_generate(const flexmt_gen_config* config,
                                      flexmt_dataset** out);
flexmt_status flexmt_dataset_load(const char* path, flexmt_dataset** out);
flexmt_status flexmt_dataset_save(const flexmt_dataset* dataset, const char* path);
int flexmt_dataset_size(const flexmt_dataset* dataset);
/* counts must hold num_classes entries. */
flexmt_status flexmt_dataset_class_counts(const flexmt_dataset* dataset, int* counts,
                                          int num_classes);
flexmt_status flexmt_dataset_split(const flexmt_dataset* dataset, double train_fraction,
                                   uint64_t seed, flexmt_dataset** train_out,
                                   flexmt_dataset** test_out);
void flexmt_dataset_free(flexmt_dataset* dataset);

/* ---- models ---- */
flexmt_status flexmt_model_create(const flexmt_model_config* config, uint64_t seed,
                                  flexmt_model** out);
flexmt_status flexmt_model_save(flexmt_model* model, const char* path);
flexmt_status flexmt_model_load(const char* path, flexmt_model** out);
void flexmt_model_free(flexmt_model* model);

flexmt_status flexmt_train(flexmt_model* model, const flexmt_dataset* dataset,
                           const flexmt_train_config* config,
                           flexmt_epoch_callback on_epoch, void* user);

flexmt_status flexmt_evaluate(const flexmt_model* model, const flexmt_dataset* dataset,
                              flexmt_drop forced_drop, flexmt_metrics* out);

/* Evaluate and append one row to a fresh report CSV at report_path. */
flexmt_status flexmt_eval_report(const flexmt_model* model, const flexmt_dataset* dataset,
                                 flexmt_drop forced_drop, const char* model_name,
                                 const char* report_path, flexmt_metrics* out);

/* Train the ablation variants on a shared split and write the CSV,
 * reference rows included. */
flexmt_status flexmt_ablate(const flexmt_dataset* dataset,
                            const flexmt_model_config* model_config,
                            const flexmt_train_config* train_config, uint64_t seed,
                            const char* out_csv_path);

/* ---- mask inspection ---- */
/* Render the modality mask for a sequence with n_img image and n_txt text
 * tokens as a tag legend plus an ASCII grid ('.' allowed, 'X' prohibited).
 * Writes at most cap bytes including the terminator; *needed receives the
 * full size regardless. Call with buf == NULL to size the buffer. */
flexmt_status flexmt_mask_render(int n_img, int n_txt, flexmt_task task,
                                 flexmt_drop dropped, char* buf, size_t cap,
                                 size_t* needed);

#ifdef __cplusplus
}
#endif

#endif /* FLEXMT_H */

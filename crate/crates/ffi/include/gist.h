#ifndef GIST_H
#define GIST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum GistStatus {
  GIST_STATUS_OK = 0,
  GIST_STATUS_NULL_POINTER = 1,
  // Invalid or contradictory configuration.
  GIST_STATUS_CONFIG = 2,
  GIST_STATUS_IO = 3,
  // Malformed input data.
  GIST_STATUS_DATA = 4,
  // Training or numerical failure.
  GIST_STATUS_RUNTIME = 5,
  // The output buffer is too small; the required length is reported.
  GIST_STATUS_BUFFER_TOO_SMALL = 6,
  // A Rust panic was caught at the boundary.
  GIST_STATUS_PANIC = 7,
} GistStatus;

// A loaded or generated dataset.
typedef struct GistDataset GistDataset;

// A trained model together with the settings needed to run it.
typedef struct GistModel GistModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *gist_last_error(void);

// Library version as a static NUL-terminated string.
const char *gist_version(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void gist_string_free(char *s);

// Opens a dataset directory, or generates one from `sbm:key=value,...` or
// `regular:key=value,...`.
//
// # Safety
// `spec` must be a NUL-terminated string; `out` must be writable.
enum GistStatus gist_dataset_open(const char *spec, struct GistDataset **out);

// # Safety
// `ds` must be NULL or a live handle from [`gist_dataset_open`].
void gist_dataset_free(struct GistDataset *ds);

// Nodes in the dataset; 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live handle.
size_t gist_dataset_num_nodes(const struct GistDataset *ds);

// Feature columns; 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live handle.
size_t gist_dataset_num_features(const struct GistDataset *ds);

// Classes declared by the dataset; 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live handle.
size_t gist_dataset_num_classes(const struct GistDataset *ds);

// Trains a model. `config_json` holds any subset of the training config
// fields (NULL or `{}` for defaults).
//
// # Safety
// `ds` must be a live handle, `config_json` NULL or NUL-terminated, `out`
// writable.
enum GistStatus gist_train(const struct GistDataset *ds,
                           const char *config_json,
                           struct GistModel **out);

// # Safety
// `model` must be NULL or a live handle from [`gist_train`].
void gist_model_free(struct GistModel *model);

// Metrics recorded during training as a JSON array. Release with
// [`gist_string_free`].
//
// # Safety
// `model` must be a live handle; `out` writable.
enum GistStatus gist_model_metrics_json(const struct GistModel *model, char **out);

// Writes row-major class probabilities (`nodes × classes`) into `probs`.
// On `BUFFER_TOO_SMALL`, `*needed` holds the required length.
//
// # Safety
// `model` and `ds` must be live handles; `probs` must hold `len` floats;
// `needed` may be NULL.
enum GistStatus gist_model_predict(const struct GistModel *model,
                                   const struct GistDataset *ds,
                                   float *probs,
                                   size_t len,
                                   size_t *needed);

// Saves a single (non-ensemble) model as a binary checkpoint.
//
// # Safety
// `model` must be a live handle; `path` NUL-terminated.
enum GistStatus gist_model_save(const struct GistModel *model, const char *path);

// Per-sync scalars sent to each worker (`per_worker`, `m` entries) and
// their sum. `mode` is `gist`, `local_sgd`, `ensemble` or `single`; `arch`
// is `gcn` or `sage`.
//
// # Safety
// `dims` must hold `num_dims` values, `per_worker` `m` values; strings
// NUL-terminated; `total` writable.
enum GistStatus gist_comm_cost(const char *mode,
                               const char *arch,
                               const size_t *dims,
                               size_t num_dims,
                               size_t m,
                               bool partition_input,
                               uint64_t *per_worker,
                               uint64_t *total);

// Kernel report for the dataset as JSON, kernel matrices included only
// when `include_matrices` is set. Release with [`gist_string_free`].
//
// # Safety
// `ds` must be a live handle; `out` writable.
enum GistStatus gist_kernel_report_json(const struct GistDataset *ds,
                                        size_t m,
                                        size_t d1,
                                        bool include_matrices,
                                        char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GIST_H */

#ifndef TTNS_SKETCH_H
#define TTNS_SKETCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TtnsStatus {
  TTNS_STATUS_OK = 0,
  TTNS_STATUS_NULL_POINTER = 1,
  TTNS_STATUS_INVALID_ARGUMENT = 2,
  TTNS_STATUS_IO = 3,
  TTNS_STATUS_FORMAT = 4,
  TTNS_STATUS_SHAPE = 5,
  TTNS_STATUS_NUMERICAL = 6,
  TTNS_STATUS_CONFIG = 7,
  TTNS_STATUS_PANIC = 8,
} TtnsStatus;

// A tree tensor network state.
typedef struct TtnsModel TtnsModel;

// A set of discrete samples.
typedef struct TtnsSamples TtnsSamples;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into this library from the same thread.
const char *ttns_last_error(void);

// Draws `rows` samples from the named benchmark model.
//
// # Safety
// `preset` must be a nul-terminated string and `out` a valid pointer.
enum TtnsStatus ttns_samples_from_preset(const char *preset,
                                         size_t rows,
                                         uint64_t seed,
                                         struct TtnsSamples **out);

// Builds samples from a row-major `rows x d` matrix of 0-based states.
//
// # Safety
// `states` must point to `d` counts and `values` to `rows * d` entries.
enum TtnsStatus ttns_samples_new(size_t d,
                                 const size_t *states,
                                 size_t rows,
                                 const uint16_t *values,
                                 struct TtnsSamples **out);

// Loads a text or binary sample file.
//
// # Safety
// `path` must be a nul-terminated string and `out` a valid pointer.
enum TtnsStatus ttns_samples_load(const char *path, struct TtnsSamples **out);

// # Safety
// `samples` must come from this library; `path` must be nul-terminated.
enum TtnsStatus ttns_samples_save(const struct TtnsSamples *samples, const char *path, bool binary);

// Number of rows; 0 for null.
//
// # Safety
// `samples` must be null or come from this library.
size_t ttns_samples_len(const struct TtnsSamples *samples);

// Number of variables; 0 for null.
//
// # Safety
// `samples` must be null or come from this library.
size_t ttns_samples_dim(const struct TtnsSamples *samples);

// # Safety
// `samples` must be null or come from this library and not be used again.
void ttns_samples_free(struct TtnsSamples *samples);

// Fits a TTNS with TTNS-Sketch.
//
// `edges` holds `d - 1` pairs of 1-based node ids; when null the Chow-Liu
// tree of the samples is used. `sketch_json` is a sketch config block
// (`{"kind": "markov"}` when null). `rank` caps every edge rank.
//
// # Safety
// Pointers must be valid for the sizes implied by the samples.
enum TtnsStatus ttns_fit(const struct TtnsSamples *samples,
                         const size_t *edges,
                         size_t root,
                         const char *sketch_json,
                         size_t rank,
                         struct TtnsModel **out);

// Maximum-likelihood tree graphical model, as a TTNS. Null `edges` selects
// the Chow-Liu tree.
//
// # Safety
// As for [`ttns_fit`].
enum TtnsStatus ttns_fit_tree_model(const struct TtnsSamples *samples,
                                    const size_t *edges,
                                    size_t root,
                                    struct TtnsModel **out);

// Exact TTNS of a tree-structured benchmark model.
//
// # Safety
// `preset` must be nul-terminated and `out` valid.
enum TtnsStatus ttns_model_from_preset(const char *preset, struct TtnsModel **out);

// # Safety
// `path` must be nul-terminated and `out` valid.
enum TtnsStatus ttns_model_load(const char *path, struct TtnsModel **out);

// Writes the JSON manifest to `path` and the cores next to it (`.bin`).
//
// # Safety
// `model` must come from this library; `path` must be nul-terminated.
enum TtnsStatus ttns_model_save(const struct TtnsModel *model, const char *path);

// Number of variables; 0 for null.
//
// # Safety
// `model` must be null or come from this library.
size_t ttns_model_dim(const struct TtnsModel *model);

// Value at the 0-based configuration `x` of length `d`.
//
// # Safety
// `x` must point to `d` entries, `out` must be valid.
enum TtnsStatus ttns_model_evaluate(const struct TtnsModel *model,
                                    const size_t *x,
                                    size_t d,
                                    double *out);

// Mean negative log-likelihood of `samples`, in nats.
//
// # Safety
// Handles must come from this library; `out` must be valid.
enum TtnsStatus ttns_model_nll(const struct TtnsModel *model,
                               const struct TtnsSamples *samples,
                               double *out);

// `‖model − reference‖ / ‖model‖`.
//
// # Safety
// Handles must come from this library; `out` must be valid.
enum TtnsStatus ttns_model_rel_error(const struct TtnsModel *model,
                                     const struct TtnsModel *reference,
                                     double *out);

// Mutual information of variables `i` and `j` (1-based), in nats.
//
// # Safety
// `model` must come from this library; `out` must be valid.
enum TtnsStatus ttns_model_mutual_information(const struct TtnsModel *model,
                                              size_t i,
                                              size_t j,
                                              double *out);

// Draws `rows` samples from a model.
//
// # Safety
// `model` must come from this library; `out` must be valid.
enum TtnsStatus ttns_model_sample(const struct TtnsModel *model,
                                  size_t rows,
                                  uint64_t seed,
                                  struct TtnsSamples **out);

// # Safety
// `model` must be null or come from this library and not be used again.
void ttns_model_free(struct TtnsModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TTNS_SKETCH_H */

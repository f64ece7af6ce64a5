#ifndef QRESGAN_H
#define QRESGAN_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QrgFamily {
  QRG_FAMILY_WERNER_LIKE = 0,
  QRG_FAMILY_BELL_DIAGONAL = 1,
} QrgFamily;

typedef enum QrgFidelity {
  QRG_FIDELITY_SQUARED = 0,
  QRG_FIDELITY_ROOT = 1,
} QrgFidelity;

typedef enum QrgGeneratorKind {
  QRG_GENERATOR_KIND_CHOLESKY = 0,
  QRG_GENERATOR_KIND_LDL = 1,
  QRG_GENERATOR_KIND_DIRECT = 2,
} QrgGeneratorKind;

// Call outcome.
typedef enum QrgStatus {
  QRG_STATUS_OK = 0,
  QRG_STATUS_NULL_POINTER = 1,
  QRG_STATUS_INVALID_ARGUMENT = 2,
  QRG_STATUS_CONFIG = 3,
  QRG_STATUS_DATA = 4,
  QRG_STATUS_NUMERIC = 5,
  QRG_STATUS_IO = 6,
  QRG_STATUS_BUFFER_TOO_SMALL = 7,
  QRG_STATUS_PANIC = 8,
} QrgStatus;

typedef enum QrgTask {
  QRG_TASK_TELEPORTATION = 0,
  QRG_TASK_LOCAL_BROADCAST = 1,
  QRG_TASK_NONLOCAL_BROADCAST = 2,
} QrgTask;

// Opaque generator network.
typedef struct QrgGenerator QrgGenerator;

// Opaque two-qubit Hermitian matrix.
typedef struct QrgState QrgState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *qrg_version(void);

// Copies the calling thread's last error message (NUL-terminated, possibly
// truncated) into `buf` and returns the full message length in bytes.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t qrg_last_error_message(char *buf, size_t len);

// Builds a state from 16 real and 16 imaginary parts, row-major; the
// matrix is Hermitized.
//
// # Safety
// `re` and `im` must point to 16 values each; `out` must be writable.
enum QrgStatus qrg_state_new(const double *re, const double *im, struct QrgState **out);

// Werner-like state `p|ψ><ψ| + (1−p)/4 I`, `|ψ> = α|00> + √(1−α²)|11>`.
//
// # Safety
// `out` must be writable.
enum QrgStatus qrg_state_werner_like(double p, double alpha, struct QrgState **out);

// Bell-diagonal state with correlation coefficients `c[0..3]`.
//
// # Safety
// `c` must point to 3 values; `out` must be writable.
enum QrgStatus qrg_state_bell_diagonal(const double *c, struct QrgState **out);

// Releases a state; null is ignored.
//
// # Safety
// `state` must be null or a handle not yet freed.
void qrg_state_free(struct QrgState *state);

// Writes 16 real then 16 imaginary parts, row-major.
//
// # Safety
// `state` must be live; `out` must be valid for 32 writes.
enum QrgStatus qrg_state_flatten(const struct QrgState *state, double *out);

// Ascending eigenvalues into `out[0..4]`.
//
// # Safety
// `state` must be live; `out` must be valid for 4 writes.
enum QrgStatus qrg_state_eigenvalues(const struct QrgState *state, double *out);

// Best teleportation fidelity `½(1 + N/3)`.
//
// # Safety
// `state` must be live; `out` must be writable.
enum QrgStatus qrg_state_teleportation_fmax(const struct QrgState *state, double *out);

// Smallest eigenvalue of the partial transpose.
//
// # Safety
// `state` must be live; `out` must be writable.
enum QrgStatus qrg_state_min_eig_pt(const struct QrgState *state, double *out);

// Whether the state is useful for `task` under the `family` criterion.
//
// # Safety
// `state` must be live; `out` must be writable.
enum QrgStatus qrg_state_criterion(const struct QrgState *state,
                                   enum QrgFamily family,
                                   enum QrgTask task,
                                   bool *out);

// Uhlmann fidelity between two states.
//
// # Safety
// Both states must be live; `out` must be writable.
enum QrgStatus qrg_state_fidelity(const struct QrgState *a,
                                  const struct QrgState *b,
                                  enum QrgFidelity convention,
                                  double *out);

// Untrained generator with weights drawn from `seed`.
//
// # Safety
// `out` must be writable.
enum QrgStatus qrg_generator_new(enum QrgGeneratorKind kind,
                                 uint64_t seed,
                                 struct QrgGenerator **out);

// Generator restored from a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
enum QrgStatus qrg_generator_load(const char *path, struct QrgGenerator **out);

// Releases a generator; null is ignored.
//
// # Safety
// `gen` must be null or a handle not yet freed.
void qrg_generator_free(struct QrgGenerator *gen);

// Samples `n` states into `out` as `n × 32` values (16 real then 16
// imaginary parts per state). `out_len` is the capacity in values.
//
// # Safety
// `gen` must be live; `out` must be valid for `out_len` writes.
enum QrgStatus qrg_generator_sample(const struct QrgGenerator *gen,
                                    size_t n,
                                    uint64_t seed,
                                    double *out,
                                    size_t out_len);

// Family and task recorded in the generator's checkpoint; `InvalidArgument`
// for generators built with [`qrg_generator_new`].
//
// # Safety
// `gen` must be live; `family` and `task` must be writable.
enum QrgStatus qrg_generator_target(const struct QrgGenerator *gen,
                                    enum QrgFamily *family,
                                    enum QrgTask *task);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QRESGAN_H */

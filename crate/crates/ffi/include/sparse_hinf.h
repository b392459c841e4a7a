#ifndef SPARSE_HINF_H
#define SPARSE_HINF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum ShStatus {
  SH_STATUS_OK = 0,
  SH_STATUS_NULL_POINTER = 1,
  SH_STATUS_INVALID_ARGUMENT = 2,
  SH_STATUS_PARSE = 3,
  SH_STATUS_DIMENSION = 4,
  SH_STATUS_DOMAIN = 5,
  SH_STATUS_INFEASIBLE = 6,
  SH_STATUS_NO_CONVERGENCE = 7,
  SH_STATUS_NUMERIC = 8,
  SH_STATUS_IO = 9,
  // The handle carries no such data, e.g. a controller without a certificate.
  SH_STATUS_UNAVAILABLE = 10,
  SH_STATUS_PANIC = 11,
} ShStatus;

// Bounded-real LMI alternation semantics.
typedef enum ShInnerMode {
  SH_INNER_MODE_CENTERED = 0,
  SH_INNER_MODE_SOLVER_CAP = 1,
  SH_INNER_MODE_STAGED_MARGIN = 2,
} ShInnerMode;

// FIR controller, optionally with the certificate it was synthesized with.
typedef struct ShController ShController;

// Generalized plant, continuous or discrete.
typedef struct ShPlant ShPlant;

typedef struct ShSynthOptions {
  // Bound on the squared closed-loop norm.
  double mu;
  // Number of FIR taps, 1 for a static gain.
  size_t n_taps;
  uint32_t k0;
  uint32_t k1;
  uint32_t k2;
  size_t max_outer;
  enum ShInnerMode inner;
  // Nonzero adds a small norm penalty to the relaxed first step.
  int32_t regularize_p0;
} ShSynthOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *sh_last_error(void);

// Library version as a static string.
const char *sh_version(void);

// Release a string returned by this library.
//
// # Safety
// `s` must come from this library and not be freed twice.
void sh_string_free(char *s);

// Parse a plant document.
//
// # Safety
// `json` must be a nul-terminated string and `out` a valid pointer.
enum ShStatus sh_plant_from_json(const char *json, struct ShPlant **out);

// Serialize a plant; free the result with `sh_string_free`.
//
// # Safety
// `plant` must be a live handle and `out` a valid pointer.
enum ShStatus sh_plant_to_json(const struct ShPlant *plant, char **out);

// # Safety
// `plant` must be null or a handle not yet freed.
void sh_plant_free(struct ShPlant *plant);

// State, disturbance, control, performance and measurement dimensions.
//
// # Safety
// `plant` must be a live handle; each output pointer may be null.
enum ShStatus sh_plant_dims(const struct ShPlant *plant,
                            size_t *nx,
                            size_t *nw,
                            size_t *nu,
                            size_t *nz,
                            size_t *ny);

// Sample time of a discrete plant, 0 for a continuous one.
//
// # Safety
// `plant` must be a live handle and `ts` a valid pointer.
enum ShStatus sh_plant_sample_time(const struct ShPlant *plant, double *ts);

// Zero-order-hold discretization into a new handle.
//
// # Safety
// `plant` must be a live handle and `out` a valid pointer.
enum ShStatus sh_plant_discretize(const struct ShPlant *plant, double ts, struct ShPlant **out);

// H-infinity norm from disturbance to performance output, open loop.
//
// # Safety
// `plant` must be a live handle and `norm` a valid pointer.
enum ShStatus sh_plant_hinf_norm(const struct ShPlant *plant, double *norm);

// Closed-loop H-infinity norm with a controller. The plant must be discrete
// with the controller's sample time.
//
// # Safety
// Both handles must be live and `norm` a valid pointer.
enum ShStatus sh_closed_loop_norm(const struct ShPlant *plant,
                                  const struct ShController *controller,
                                  double *norm);

// Defaults: static gain, full pattern, `k = (10, 5, 2)`, 200 outer iterations.
struct ShSynthOptions sh_synth_options_default(double mu);

// Synthesize a controller for a discrete plant.
//
// `pattern` is a row-major `nu x ny` array of 0/1 bytes, or null for a full
// pattern. The semidefinite backend follows `SPARSE_HINF_BACKEND`.
//
// # Safety
// `plant` must be a live handle, `opts` and `out` valid pointers, and
// `pattern` null or readable for `nu * ny` bytes.
enum ShStatus sh_synthesize(const struct ShPlant *plant,
                            const struct ShSynthOptions *opts,
                            const uint8_t *pattern,
                            struct ShController **out);

// Parse a controller document.
//
// # Safety
// `json` must be a nul-terminated string and `out` a valid pointer.
enum ShStatus sh_controller_from_json(const char *json, struct ShController **out);

// Serialize a controller; free the result with `sh_string_free`.
//
// # Safety
// `controller` must be a live handle and `out` a valid pointer.
enum ShStatus sh_controller_to_json(const struct ShController *controller, char **out);

// # Safety
// `controller` must be null or a handle not yet freed.
void sh_controller_free(struct ShController *controller);

// Tap count and the `nu x ny` shape of each tap.
//
// # Safety
// `controller` must be a live handle; each output pointer may be null.
enum ShStatus sh_controller_shape(const struct ShController *controller,
                                  size_t *n_taps,
                                  size_t *nu,
                                  size_t *ny);

// Copy tap `index` into `buf` in row-major order. `len` must be at least
// `nu * ny`.
//
// # Safety
// `controller` must be a live handle and `buf` writable for `len` doubles.
enum ShStatus sh_controller_tap(const struct ShController *controller,
                                size_t index,
                                double *buf,
                                size_t len);

// Certificate recorded at synthesis: `mu`, smallest eigenvalue of the
// bounded-real matrix and the closed-loop norm.
//
// # Safety
// `controller` must be a live handle; each output pointer may be null.
enum ShStatus sh_controller_certificate(const struct ShController *controller,
                                        double *mu,
                                        double *min_eig,
                                        double *norm);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSE_HINF_H */

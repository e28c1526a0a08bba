#ifndef ELS_H
#define ELS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Nodal field selector for [`els_simulation_copy_field`].
 */
typedef enum {
  ELS_FIELD_R = 0,
  ELS_FIELD_PHI = 1,
  ELS_FIELD_PHI_T = 2,
  ELS_FIELD_V = 3,
  ELS_FIELD_H = 4,
} ElsField;

/**
 * Result codes shared by every function in this library.
 */
typedef enum {
  ELS_STATUS_OK = 0,
  ELS_STATUS_NULL_POINTER = 1,
  ELS_STATUS_INVALID_UTF8 = 2,
  ELS_STATUS_CONFIG = 3,
  ELS_STATUS_CONTRACT = 4,
  ELS_STATUS_RANGE = 5,
  ELS_STATUS_DIVERGED = 6,
  ELS_STATUS_COMPARISON = 7,
  ELS_STATUS_RESOLUTION = 8,
  ELS_STATUS_FIT_DEGENERATE = 9,
  ELS_STATUS_IO = 10,
  ELS_STATUS_BUFFER_TOO_SMALL = 11,
  ELS_STATUS_PANIC = 12,
} ElsStatus;

/**
 * Opaque simulation handle.
 */
typedef struct ElsSimulation ElsSimulation;

/**
 * Energies of the current state.
 */
typedef struct {
  /**
   * Energy of the `h` formulation.
   */
  double welss;
  /**
   * Energy of the `v` formulation.
   */
  double wels;
  /**
   * `∫ (φ_r² + sin²φ / r²) r dr`.
   */
  double directional;
} ElsEnergy;

/**
 * Result of a least-squares fit against `2 arctan(r / C)`.
 */
typedef struct {
  double c_fit;
  double residual_l2;
  double harmonic_residual;
} ElsProfileFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *els_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t els_last_error_message(char *buf, uintptr_t len);

/**
 * Builds a simulation from a JSON configuration document and stores the
 * handle in `*out`.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be null
 * or writable.
 */
ElsStatus els_simulation_new(const char *config_json, ElsSimulation **out);

/**
 * Releases a handle from [`els_simulation_new`]. Null is ignored.
 *
 * # Safety
 * `sim` must be null or a live handle not freed before.
 */
void els_simulation_free(ElsSimulation *sim);

/**
 * Advances the simulation by `n_steps` time steps. On divergence the handle
 * keeps the last finite state.
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
ElsStatus els_simulation_step(ElsSimulation *sim, uint64_t n_steps);

/**
 * Writes the current time into `*t`.
 *
 * # Safety
 * `sim` must be null or a live handle; `t` must be null or writable.
 */
ElsStatus els_simulation_time(const ElsSimulation *sim, double *t);

/**
 * Writes the number of grid nodes (`n_cells + 1`) into `*n`.
 *
 * # Safety
 * `sim` must be null or a live handle; `n` must be null or writable.
 */
ElsStatus els_simulation_node_count(const ElsSimulation *sim, uintptr_t *n);

/**
 * Copies one nodal field into `buf`, which must hold at least the node count.
 *
 * # Safety
 * `sim` must be null or a live handle; `buf` must be null or point to `len`
 * writable doubles.
 */
ElsStatus els_simulation_copy_field(const ElsSimulation *sim,
                                    ElsField field,
                                    double *buf,
                                    uintptr_t len);

/**
 * Writes the energies of the current state into `*energy`.
 *
 * # Safety
 * `sim` must be null or a live handle; `energy` must be null or writable.
 */
ElsStatus els_simulation_energy(const ElsSimulation *sim, ElsEnergy *energy);

/**
 * Fits `2 arctan(r / C)` to `values` sampled on the uniform grid of
 * `n_cells` cells over `[0, r_max]`, restricted to `[window_lo, window_hi]`.
 *
 * # Safety
 * `values` must be null or point to `len` readable doubles; `out` must be
 * null or writable.
 */
ElsStatus els_fit_harmonic_profile(double r_max,
                                   uintptr_t n_cells,
                                   const double *values,
                                   uintptr_t len,
                                   double window_lo,
                                   double window_hi,
                                   ElsProfileFit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ELS_H */

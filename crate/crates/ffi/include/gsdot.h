#ifndef GSDOT_H
#define GSDOT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum GsdotStatus {
  GSDOT_STATUS_OK = 0,
  GSDOT_STATUS_NULL_POINTER = 1,
  GSDOT_STATUS_INVALID_ARGUMENT = 2,
  GSDOT_STATUS_DIMENSION_MISMATCH = 3,
  GSDOT_STATUS_CONFIG = 4,
  GSDOT_STATUS_CACHE = 5,
  GSDOT_STATUS_DIVERGENCE = 6,
  GSDOT_STATUS_IO = 7,
  /*
   The problem has no sensitivity matrix yet.
   */
  GSDOT_STATUS_NO_JACOBIAN = 8,
  GSDOT_STATUS_PANIC = 9,
} GsdotStatus;

/*
 Geometry, physics, solver settings and (once built or loaded) the sensitivity matrix.
 */
typedef struct GsdotProblem GsdotProblem;

/*
 Outcome of one reconstruction.
 */
typedef struct GsdotResult GsdotResult;

/*
 Image-quality figures of a reconstruction against a reference map.
 */
typedef struct GsdotMetrics {
  double rmse;
  double ssim;
  double com_error;
} GsdotMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *gsdot_version(void);

/*
 Message of the last failed call on this thread, or NULL if none. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *gsdot_last_error_message(void);

/*
 Fluence of the infinite-medium 2D diffusion Green's function at distance
 `rho_cm` and time `t_ns`.

 # Safety
 `out` must be valid for one `double` write.
 */
enum GsdotStatus gsdot_green2d(double rho_cm,
                               double t_ns,
                               double mu_a,
                               double mu_s_prime,
                               double refractive_index,
                               double *out);

/*
 Problem with default geometry, physics and solver settings for a built-in
 phantom (`one-inclusion`, `three-circles`, `crescent` or `donut`).

 # Safety
 `case_name` must be a NUL-terminated string; `out` must be valid for one write.
 The handle written to `out` must be released with [`gsdot_problem_free`].
 */
enum GsdotStatus gsdot_problem_new(const char *case_name, struct GsdotProblem **out);

/*
 Problem described by a TOML run configuration.

 # Safety
 `toml` must be a NUL-terminated string; `out` must be valid for one write.
 The handle written to `out` must be released with [`gsdot_problem_free`].
 */
enum GsdotStatus gsdot_problem_from_toml(const char *toml, struct GsdotProblem **out);

/*
 # Safety
 `problem` must be NULL or a handle from this library not yet freed.
 */
void gsdot_problem_free(struct GsdotProblem *problem);

/*
 Number of active pixels, the length of every map. Zero for NULL.

 # Safety
 `problem` must be NULL or a live handle.
 */
size_t gsdot_problem_n_pixels(const struct GsdotProblem *problem);

/*
 Number of measurements (pairs × time bins), the length of every data vector. Zero for NULL.

 # Safety
 `problem` must be NULL or a live handle.
 */
size_t gsdot_problem_n_measurements(const struct GsdotProblem *problem);

/*
 Splat count the solver will use. Zero for NULL.

 # Safety
 `problem` must be NULL or a live handle.
 */
size_t gsdot_problem_n_splats(const struct GsdotProblem *problem);

/*
 Assembles the sensitivity matrix, replacing any held one.

 # Safety
 `problem` must be a live handle.
 */
enum GsdotStatus gsdot_problem_build_jacobian(struct GsdotProblem *problem);

/*
 Writes the held sensitivity matrix to a cache file.

 # Safety
 `problem` must be a live handle and `path` a NUL-terminated string.
 */
enum GsdotStatus gsdot_problem_save_jacobian(const struct GsdotProblem *problem, const char *path);

/*
 Loads a cache file, rejecting one whose header disagrees with the problem.

 # Safety
 `problem` must be a live handle and `path` a NUL-terminated string.
 */
enum GsdotStatus gsdot_problem_load_jacobian(struct GsdotProblem *problem, const char *path);

/*
 Ground-truth `Δμa` of the configured phantom on the active pixels.

 # Safety
 `problem` must be a live handle; `out` must hold `len` doubles.
 */
enum GsdotStatus gsdot_problem_phantom(const struct GsdotProblem *problem, double *out, size_t len);

/*
 Measurements for the perturbation `dmu` (length `n_pixels`), written to `out`
 (length `n_measurements`, pair-major). A positive `noise_level` adds seeded
 photon-counting noise at that relative level; zero or less gives clean data.

 # Safety
 `problem` must be a live handle; the buffers must hold the stated lengths.
 */
enum GsdotStatus gsdot_problem_simulate(const struct GsdotProblem *problem,
                                        const double *dmu,
                                        size_t n_pixels,
                                        double noise_level,
                                        uint64_t seed,
                                        double *out,
                                        size_t n_measurements_out);

/*
 Reconstructs from `measured` (length `n_measurements`, pair-major).

 # Safety
 `problem` must be a live handle, `measured` must hold `len` doubles and `out`
 must be valid for one write. Release the result with [`gsdot_result_free`].
 */
enum GsdotStatus gsdot_problem_reconstruct(const struct GsdotProblem *problem,
                                           const double *measured,
                                           size_t len,
                                           struct GsdotResult **out);

/*
 # Safety
 `result` must be NULL or a handle from this library not yet freed.
 */
void gsdot_result_free(struct GsdotResult *result);

/*
 Reconstructed `Δμa` on the active pixels.

 # Safety
 `result` must be a live handle; `out` must hold `len` doubles.
 */
enum GsdotStatus gsdot_result_map(const struct GsdotResult *result, double *out, size_t len);

/*
 Number of splats in the result. Zero for NULL.

 # Safety
 `result` must be NULL or a live handle.
 */
size_t gsdot_result_n_splats(const struct GsdotResult *result);

/*
 Splats as rows of `alpha, x_cm, y_cm, sx_cm, sy_cm, theta_rad`; `len` must be
 six times the splat count.

 # Safety
 `result` must be a live handle; `out` must hold `len` doubles.
 */
enum GsdotStatus gsdot_result_splats(const struct GsdotResult *result, double *out, size_t len);

/*
 Loss of the returned iterate, NaN for NULL.

 # Safety
 `result` must be NULL or a live handle.
 */
double gsdot_result_best_loss(const struct GsdotResult *result);

/*
 Iteration at which the returned iterate was reached. Zero for NULL.

 # Safety
 `result` must be NULL or a live handle.
 */
size_t gsdot_result_best_iteration(const struct GsdotResult *result);

/*
 RMSE, SSIM and center-of-mass error of `recon` against `reference`, both of
 length `n_pixels`.

 # Safety
 `problem` must be a live handle, the arrays must hold `n_pixels` doubles and
 `out` must be valid for one write.
 */
enum GsdotStatus gsdot_metrics(const struct GsdotProblem *problem,
                               const double *recon,
                               const double *reference,
                               size_t n_pixels,
                               struct GsdotMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GSDOT_H */

#ifndef FRACSPLIT_H
#define FRACSPLIT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.
 */
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  /**
   * A pointer argument was null or a string was not UTF-8.
   */
  FS_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Argument outside the mathematical domain of the operation.
   */
  FS_STATUS_DOMAIN = 2,
  /**
   * Invalid or inconsistent configuration.
   */
  FS_STATUS_CONFIG = 3,
  /**
   * File system failure or malformed input file.
   */
  FS_STATUS_IO = 4,
  /**
   * Mesh construction or refinement failed.
   */
  FS_STATUS_MESH = 5,
  /**
   * A linear solve or quadrature failed.
   */
  FS_STATUS_NUMERICAL = 6,
  /**
   * Index past the end of a collection.
   */
  FS_STATUS_OUT_OF_RANGE = 7,
  /**
   * Internal error; the library state is unchanged.
   */
  FS_STATUS_PANIC = 8,
} FsStatus;

/**
 * Parsed study configuration.
 */
typedef struct FsConfig FsConfig;

/**
 * Triangulation of the unit square.
 */
typedef struct FsMesh FsMesh;

/**
 * Result of a convergence study.
 */
typedef struct FsReport FsReport;

/**
 * Final state of a single solve.
 */
typedef struct FsSolution FsSolution;

/**
 * One Cauchy difference of a study. Missing values are NaN.
 */
typedef struct FsReportRow {
  size_t level;
  double size;
  double total;
  double total_order;
  double regular;
  double regular_order;
  double singular;
  double singular_order;
  /**
   * Nonzero when the difference is below the linear-solver floor.
   */
  int32_t unreliable;
} FsReportRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. The pointer
 * stays valid until the next failing call on this thread.
 */
const char *fs_last_error(void);

/**
 * Library version as a static string.
 */
const char *fs_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void fs_string_free(char *s);

/**
 * Gamma function at a real non-pole argument.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum FsStatus fs_gamma(double x, double *out);

/**
 * Two-parameter Mittag-Leffler function E_{alpha,beta}(x) for x <= 0.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum FsStatus fs_mittag_leffler(double alpha, double beta, double x, double *out);

/**
 * Convolution weights omega_0..=omega_n of delta_k(zeta)^beta. `out` must
 * hold n + 1 values.
 *
 * # Safety
 * `out` must be valid for `n + 1` writes.
 */
enum FsStatus fs_cq_weights(size_t k, double beta, size_t n, double *out);

/**
 * Uniform n x n square grid, each cell split by its main diagonal.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum FsStatus fs_mesh_square(size_t n, struct FsMesh **out);

/**
 * Red refinement: every triangle split into four congruent children.
 *
 * # Safety
 * `mesh` must be a live handle; `out` must be valid for writes.
 */
enum FsStatus fs_mesh_refine(const struct FsMesh *mesh, struct FsMesh **out);

/**
 * Number of vertices; 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t fs_mesh_vertices(const struct FsMesh *mesh);

/**
 * Number of triangles; 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t fs_mesh_triangles(const struct FsMesh *mesh);

/**
 * Writes the mesh as Gmsh MSH 2.2 ASCII.
 *
 * # Safety
 * `mesh` must be a live handle; `path` a NUL-terminated string.
 */
enum FsStatus fs_mesh_write_msh(const struct FsMesh *mesh, const char *path);

/**
 * # Safety
 * `mesh` must be null or a live handle, which is invalid afterwards.
 */
void fs_mesh_free(struct FsMesh *mesh);

/**
 * Parses a TOML study configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` valid for writes.
 */
enum FsStatus fs_config_parse(const char *toml, struct FsConfig **out);

/**
 * Reads a TOML study configuration from a file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` valid for writes.
 */
enum FsStatus fs_config_load(const char *path, struct FsConfig **out);

/**
 * # Safety
 * `cfg` must be null or a live handle, which is invalid afterwards.
 */
void fs_config_free(struct FsConfig *cfg);

/**
 * Solves on the base mesh with step `discretization.tau`. Relative paths
 * in the configuration resolve against `base_dir`, which may be null for
 * the working directory.
 *
 * # Safety
 * `cfg` must be a live handle; `base_dir` null or a NUL-terminated string;
 * `out` valid for writes.
 */
enum FsStatus fs_solve(const struct FsConfig *cfg, const char *base_dir, struct FsSolution **out);

/**
 * Number of time steps of the solve.
 *
 * # Safety
 * `sol` must be null or a live handle.
 */
size_t fs_solution_steps(const struct FsSolution *sol);

/**
 * Number of free degrees of freedom of the finite element space.
 *
 * # Safety
 * `sol` must be null or a live handle.
 */
size_t fs_solution_dofs(const struct FsSolution *sol);

/**
 * Recombined solution at the final time, evaluated at (x, y).
 *
 * # Safety
 * `sol` must be a live handle; `out` valid for writes.
 */
enum FsStatus fs_solution_value(const struct FsSolution *sol, double x, double y, double *out);

/**
 * # Safety
 * `sol` must be null or a live handle, which is invalid afterwards.
 */
void fs_solution_free(struct FsSolution *sol);

/**
 * Runs the space or time study described by the configuration.
 *
 * # Safety
 * `cfg` must be a live handle; `base_dir` null or a NUL-terminated string;
 * `out` valid for writes.
 */
enum FsStatus fs_study_run(const struct FsConfig *cfg, const char *base_dir, struct FsReport **out);

/**
 * Number of rows; 0 for a null handle.
 *
 * # Safety
 * `rep` must be null or a live handle.
 */
size_t fs_report_rows(const struct FsReport *rep);

/**
 * Copies row `i` into `out`.
 *
 * # Safety
 * `rep` must be a live handle; `out` valid for writes.
 */
enum FsStatus fs_report_row(const struct FsReport *rep, size_t i, struct FsReportRow *out);

/**
 * The report as deterministic CSV; release with `fs_string_free`.
 *
 * # Safety
 * `rep` must be a live handle; `out` valid for writes.
 */
enum FsStatus fs_report_csv(const struct FsReport *rep, char **out);

/**
 * # Safety
 * `rep` must be null or a live handle, which is invalid afterwards.
 */
void fs_report_free(struct FsReport *rep);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRACSPLIT_H */

#ifndef NDSCAUSAL_H
#define NDSCAUSAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NdsStatus {
  NDS_STATUS_OK = 0,
  NDS_STATUS_NULL_POINTER = 1,
  NDS_STATUS_PARAMETER = 2,
  NDS_STATUS_DEGENERATE = 3,
  NDS_STATUS_FORMAT = 4,
  NDS_STATUS_CONSTRUCTION = 5,
  NDS_STATUS_ASSUMPTION = 6,
  NDS_STATUS_STABILITY = 7,
  NDS_STATUS_CONDITIONING = 8,
  NDS_STATUS_LENGTH = 9,
  NDS_STATUS_DIVERGENCE = 10,
  NDS_STATUS_CONFIG = 11,
  NDS_STATUS_IO = 12,
  NDS_STATUS_PANIC = 13,
} NdsStatus;

typedef enum NdsMethod {
  NDS_METHOD_GRANGER = 0,
  NDS_METHOD_ONE_LAG = 1,
  NDS_METHOD_NIG = 2,
  NDS_METHOD_PRECISION = 3,
} NdsMethod;

/**
 * Noise covariance with its gap/offset/residual decomposition.
 */
typedef struct NdsCovariance NdsCovariance;

/**
 * Interaction matrix `A` with spectral radius below one.
 */
typedef struct NdsInteraction NdsInteraction;

/**
 * Dense real matrix.
 */
typedef struct NdsMatrix NdsMatrix;

/**
 * Structural-consistency check of an interaction matrix and a covariance.
 */
typedef struct NdsReport {
  /**
   * 1 when the sufficient condition holds.
   */
  int32_t certified;
  double lhs;
  double rhs;
  double margin;
  double min_intervention;
  double a_plus_min;
  double rho;
  /**
   * 1 when a separating threshold exists on the limit estimate.
   */
  int32_t has_threshold;
  double threshold;
  double threshold_gap;
} NdsReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *nds_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nds_version(void);

/**
 * Copies `rows * cols` row-major values into a new matrix.
 */
enum NdsStatus nds_matrix_new(uintptr_t rows,
                              uintptr_t cols,
                              const double *data,
                              struct NdsMatrix **out);

/**
 * Reads a matrix stored in the text format (`rows cols` header, then rows).
 */
enum NdsStatus nds_matrix_load(const char *path, struct NdsMatrix **out);

enum NdsStatus nds_matrix_save(const struct NdsMatrix *m, const char *path);

/**
 * Row count, or 0 for a null handle.
 */
uintptr_t nds_matrix_rows(const struct NdsMatrix *m);

/**
 * Column count, or 0 for a null handle.
 */
uintptr_t nds_matrix_cols(const struct NdsMatrix *m);

/**
 * Writes the entries row-major into `buf`, which must hold `len >= rows * cols` values.
 */
enum NdsStatus nds_matrix_copy(const struct NdsMatrix *m, double *buf, uintptr_t len);

void nds_matrix_free(struct NdsMatrix *m);

/**
 * Erdős–Rényi graph with Laplacian weights: off-diagonal `alpha / d_max`
 * on edges, diagonal completing each row sum to `rho`.
 */
enum NdsStatus nds_interaction_random(uintptr_t n,
                                      double p,
                                      bool directed,
                                      double alpha,
                                      double rho,
                                      uint64_t seed,
                                      struct NdsInteraction **out);

/**
 * Validates an arbitrary square matrix as an interaction matrix.
 */
enum NdsStatus nds_interaction_from_matrix(const struct NdsMatrix *m, struct NdsInteraction **out);

enum NdsStatus nds_interaction_matrix(const struct NdsInteraction *a, struct NdsMatrix **out);

/**
 * Spectral radius (the common row sum for Laplacian weights); NaN for null.
 */
double nds_interaction_rho(const struct NdsInteraction *a);

/**
 * Smallest positive off-diagonal entry; NaN for null or an empty graph.
 */
double nds_interaction_a_plus_min(const struct NdsInteraction *a);

void nds_interaction_free(struct NdsInteraction *a);

/**
 * Random covariance: diagonal `sigma2`, off-diagonal mean `beta`,
 * off-diagonal spread at most `osc`.
 */
enum NdsStatus nds_covariance_random(uintptr_t n,
                                     double sigma2,
                                     double beta,
                                     double osc,
                                     uint64_t seed,
                                     struct NdsCovariance **out);

enum NdsStatus nds_covariance_from_matrix(const struct NdsMatrix *m, struct NdsCovariance **out);

enum NdsStatus nds_covariance_matrix(const struct NdsCovariance *c, struct NdsMatrix **out);

/**
 * Diagonal minus the largest off-diagonal entry; NaN for null.
 */
double nds_covariance_gap(const struct NdsCovariance *c);

/**
 * Mean off-diagonal entry; NaN for null.
 */
double nds_covariance_beta(const struct NdsCovariance *c);

void nds_covariance_free(struct NdsCovariance *c);

/**
 * Simulates `length` samples (rows) after `burn_in` discarded steps, with
 * an optional isotropic intervention of variance `intervention`.
 */
enum NdsStatus nds_simulate(const struct NdsInteraction *a,
                            const struct NdsCovariance *sigma,
                            double intervention,
                            uintptr_t length,
                            uintptr_t burn_in,
                            uint64_t seed,
                            struct NdsMatrix **out);

/**
 * Estimates the interaction matrix over the observed nodes from the first
 * `n` rows of `series` (samples × nodes). A null `observed` means all nodes.
 */
enum NdsStatus nds_estimate(const struct NdsMatrix *series,
                            const uintptr_t *observed,
                            uintptr_t n_observed,
                            enum NdsMethod method,
                            uintptr_t n,
                            struct NdsMatrix **out);

/**
 * Fills `out` with the sufficient-condition check for `(a, sigma)`.
 */
enum NdsStatus nds_check(const struct NdsInteraction *a,
                         const struct NdsCovariance *sigma,
                         struct NdsReport *out);

/**
 * Smallest intervention variance after which the sufficient condition holds.
 */
enum NdsStatus nds_min_intervention(const struct NdsInteraction *a,
                                    const struct NdsCovariance *sigma,
                                    double *out);

/**
 * Covariance of `x + xi` for an isotropic intervention of the given variance.
 */
enum NdsStatus nds_covariance_intervene(const struct NdsCovariance *c,
                                        double variance,
                                        struct NdsCovariance **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NDSCAUSAL_H */

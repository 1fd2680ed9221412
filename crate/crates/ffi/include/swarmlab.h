#ifndef SWARMLAB_H
#define SWARMLAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  SWARMLAB_OK = 0,
  SWARMLAB_NULL_POINTER = 1,
  SWARMLAB_INVALID_ARGUMENT = 2,
  SWARMLAB_NO_COMPARISONS = 3,
  SWARMLAB_NON_IDENTIFIABLE = 4,
  SWARMLAB_DIMENSION_MISMATCH = 5,
  SWARMLAB_BUFFER_TOO_SMALL = 6,
  SWARMLAB_EMPTY_ASSIGNMENT = 7,
  SWARMLAB_CONFIG = 8,
  SWARMLAB_INTERNAL = 9,
} SwarmlabStatus;

/**
 * Bradley-Terry solver selector for [`swarmlab_tally_fit`].
 */
typedef enum {
  SWARMLAB_SOLVER_GRADIENT = 0,
  SWARMLAB_SOLVER_NEWTON = 1,
} SwarmlabSolver;

/**
 * Semantic partition tree.
 */
typedef struct SwarmlabMesh SwarmlabMesh;

/**
 * A simulated swarm advancing one round per call.
 */
typedef struct SwarmlabSwarm SwarmlabSwarm;

/**
 * Pairwise comparison counts over a fixed item set.
 */
typedef struct SwarmlabTally SwarmlabTally;

typedef struct {
  SwarmlabSolver solver;
  double l2_lambda;
  double tol;
  size_t max_iters;
  /**
   * Non-zero fits the weighted tally instead of raw counts.
   */
  int32_t use_weights;
} SwarmlabFitOptions;

typedef struct {
  size_t iterations;
  double gradient_norm;
  double objective;
  int32_t converged;
} SwarmlabFitDiagnostics;

typedef struct {
  double exact;
  double approximation;
  uint64_t total_draws;
} SwarmlabPairMiss;

typedef struct {
  /**
   * Internal regions visited, equal to the leaf depth.
   */
  size_t steps;
  /**
   * Arena index of the leaf region.
   */
  size_t region;
  size_t n_members;
} SwarmlabRoute;

typedef struct {
  /**
   * Zero when the round had too few responses to judge.
   */
  int32_t played;
  size_t n_responses;
  size_t winner_author;
  int32_t correct;
  int32_t majority_correct;
  double round_weight;
  size_t n_slashed;
} SwarmlabRound;

typedef struct {
  double ranking;
  double generation;
  double combined;
  /**
   * Non-zero while the node is slashed and waiting to requalify.
   */
  int32_t excluded;
} SwarmlabReputation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next swarmlab call on the same thread.
 */
const char *swarmlab_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *swarmlab_version(void);

SwarmlabStatus swarmlab_tally_new(size_t n_items, SwarmlabTally **out);

/**
 * # Safety
 * `tally` must come from [`swarmlab_tally_new`] and not be used afterwards.
 */
void swarmlab_tally_free(SwarmlabTally *tally);

SwarmlabStatus swarmlab_tally_record(SwarmlabTally *tally,
                                     size_t winner,
                                     size_t loser,
                                     double weight);

SwarmlabStatus swarmlab_tally_n_items(const SwarmlabTally *tally, size_t *out);

/**
 * Default options: gradient solver, `l2_lambda` 0.01, `tol` 1e-8,
 * 10000 iterations, raw counts.
 */
SwarmlabFitOptions swarmlab_fit_options_default(void);

/**
 * Fits log-scores (gauge: they sum to zero) into `theta`, which must hold
 * `n_items` values. `options` may be null for the defaults; `diagnostics`
 * may be null.
 */
SwarmlabStatus swarmlab_tally_fit(const SwarmlabTally *tally,
                                  const SwarmlabFitOptions *options,
                                  double *theta,
                                  size_t capacity,
                                  SwarmlabFitDiagnostics *diagnostics);

/**
 * `P(i beats j) = pi_i / (pi_i + pi_j)`.
 */
SwarmlabStatus swarmlab_bt_probability(double pi_i, double pi_j, double *out);

/**
 * `SHA-256(state_hash || node_id)` into the 32 bytes at `out`.
 */
SwarmlabStatus swarmlab_derive_seed(const uint8_t *state_hash,
                                    const uint8_t *node_id,
                                    size_t node_id_len,
                                    uint8_t *out);

/**
 * Draws the judge's `count` ordered pairs, written as `first, second`
 * alternately: `pairs` needs room for `2 * count` values.
 */
SwarmlabStatus swarmlab_sample_assignment(const uint8_t *state_hash,
                                          const uint8_t *node_id,
                                          size_t node_id_len,
                                          size_t n_responses,
                                          const size_t *own,
                                          size_t n_own,
                                          size_t count,
                                          size_t *pairs,
                                          size_t capacity);

SwarmlabStatus swarmlab_pair_miss_probability(size_t n_responses,
                                              size_t n_judges,
                                              size_t comparisons_per_judge,
                                              SwarmlabPairMiss *out);

/**
 * `base * exp(-lambda * max(0, c - tau))`.
 */
double swarmlab_collusion_adjusted_weight(double base_weight, double c, double lambda, double tau);

/**
 * `exp(-gamma * |ln(n_actual / n_bar)|)`.
 */
double swarmlab_round_weight(size_t n_actual, double n_bar, double gamma);

/**
 * Builds a partition over `n_points` vectors of length `dim` stored row
 * after row in `coords`; `owners[i]` is the node behind row `i`.
 * `lambda_split` below zero disables the load cap; `loads` (one rate per
 * point owner, indexed like `owners`) may be null.
 */
SwarmlabStatus swarmlab_mesh_build(const size_t *owners,
                                   const double *coords,
                                   size_t n_points,
                                   size_t dim,
                                   size_t beta_cap,
                                   double lambda_split,
                                   const double *loads,
                                   SwarmlabMesh **out);

/**
 * # Safety
 * `mesh` must come from [`swarmlab_mesh_build`] and not be used afterwards.
 */
void swarmlab_mesh_free(SwarmlabMesh *mesh);

SwarmlabStatus swarmlab_mesh_leaf_count(const SwarmlabMesh *mesh, size_t *out);

SwarmlabStatus swarmlab_mesh_depth(const SwarmlabMesh *mesh, size_t *out);

/**
 * Routes `query` (length `dim`) to its leaf. Member node ids go to
 * `members` (may be null with zero capacity when only `route` is wanted);
 * `id` receives the NUL-terminated sub-mesh id, empty for the root.
 */
SwarmlabStatus swarmlab_mesh_route(const SwarmlabMesh *mesh,
                                   const double *query,
                                   size_t dim,
                                   SwarmlabRoute *route,
                                   size_t *members,
                                   size_t members_capacity,
                                   char *id,
                                   size_t id_capacity);

/**
 * Creates a swarm from a NUL-terminated JSON experiment config (the same
 * format the CLI reads; the declared experiment is ignored).
 */
SwarmlabStatus swarmlab_swarm_new(const char *config_json, SwarmlabSwarm **out);

/**
 * # Safety
 * `swarm` must come from [`swarmlab_swarm_new`] and not be used afterwards.
 */
void swarmlab_swarm_free(SwarmlabSwarm *swarm);

SwarmlabStatus swarmlab_swarm_n_nodes(const SwarmlabSwarm *swarm, size_t *out);

/**
 * Plays the next round.
 */
SwarmlabStatus swarmlab_swarm_step(SwarmlabSwarm *swarm, SwarmlabRound *out);

SwarmlabStatus swarmlab_swarm_reputation(const SwarmlabSwarm *swarm,
                                         size_t node,
                                         SwarmlabReputation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWARMLAB_H */

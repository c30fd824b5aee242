#ifndef ENSX_H
#define ENSX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EnsxStatus {
  ENSX_STATUS_OK = 0,
  ENSX_STATUS_NULL_POINTER = 1,
  ENSX_STATUS_INVALID_ARGUMENT = 2,
  ENSX_STATUS_FIT_FAILED = 3,
  ENSX_STATUS_INVALID_DATA = 4,
  ENSX_STATUS_PANIC = 5,
} EnsxStatus;

/**
 * Opaque posterior sample set.
 */
typedef struct EnsxPosterior EnsxPosterior;

typedef struct EnsxGevParams {
  double location;
  double scale;
  double shape;
} EnsxGevParams;

typedef struct EnsxMcmcConfig {
  size_t chains;
  size_t iterations;
  size_t burn_in;
  size_t thinning;
  size_t adaptation_window;
  double target_acceptance;
  uint64_t seed;
} EnsxMcmcConfig;

/**
 * 5 %, 50 % and 95 % posterior quantiles.
 */
typedef struct EnsxInterval {
  double q05;
  double median;
  double q95;
} EnsxInterval;

typedef struct EnsxPosteriorSummary {
  struct EnsxInterval location;
  struct EnsxInterval scale;
  struct EnsxInterval shape;
  struct EnsxInterval threshold;
  double rhat[3];
  double mean_acceptance;
} EnsxPosteriorSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL after a success.
 * The pointer stays valid until the next call into the library on the same thread.
 */
const char *ensx_last_error(void);

enum EnsxStatus ensx_gev_cdf(double x, const struct EnsxGevParams *p, double *out_cdf);

enum EnsxStatus ensx_gev_quantile(double prob, const struct EnsxGevParams *p, double *out_x);

/**
 * Log-likelihood of `n` values; `-inf` when any value lies outside the support.
 */
enum EnsxStatus ensx_gev_log_likelihood(const double *data,
                                        size_t n,
                                        const struct EnsxGevParams *p,
                                        double *out_ll);

enum EnsxStatus ensx_lmoments_estimate(const double *data,
                                       size_t n,
                                       struct EnsxGevParams *out_params);

/**
 * Maximum-likelihood fit; a NULL `init` starts from the L-moment estimate.
 */
enum EnsxStatus ensx_mle_fit(const double *data,
                             size_t n,
                             const struct EnsxGevParams *init,
                             struct EnsxGevParams *out_params);

enum EnsxStatus ensx_mcmc_config_default(struct EnsxMcmcConfig *out_config);

/**
 * Bayesian GEV fit. On success `*out_posterior` owns a new handle.
 */
enum EnsxStatus ensx_bayes_fit(const double *data,
                               size_t n,
                               const struct EnsxMcmcConfig *config,
                               struct EnsxPosterior **out_posterior);

void ensx_posterior_free(struct EnsxPosterior *posterior);

/**
 * Number of retained draws over all chains; 0 for NULL.
 */
size_t ensx_posterior_len(const struct EnsxPosterior *posterior);

size_t ensx_posterior_n_chains(const struct EnsxPosterior *posterior);

/**
 * Copies up to `capacity` draws, chain-major; `*out_written` gets the count.
 */
enum EnsxStatus ensx_posterior_draws(const struct EnsxPosterior *posterior,
                                     struct EnsxGevParams *out_draws,
                                     size_t capacity,
                                     size_t *out_written);

enum EnsxStatus ensx_posterior_summary(const struct EnsxPosterior *posterior,
                                       double prob,
                                       struct EnsxPosteriorSummary *out_summary);

/**
 * Fraction of draws whose `prob`-quantile reaches `target`.
 */
enum EnsxStatus ensx_containment_probability(const struct EnsxPosterior *posterior,
                                             double prob,
                                             double target,
                                             double *out_probability);

/**
 * Likelihood category index: 0 = virtually certain … 7 = exceptionally unlikely.
 */
enum EnsxStatus ensx_confidence_category(double probability, uint32_t *out_category);

enum EnsxStatus ensx_dewpoint_to_rh(double t2m, double dewpoint, double *out_rh);

/**
 * Heat index (°C) from temperature (°C) and relative humidity (%).
 */
enum EnsxStatus ensx_heat_index(double t2m, double rh, double *out_hi);

/**
 * Risk category index: 0 = below caution … 4 = extreme danger.
 */
enum EnsxStatus ensx_risk_category(double heat_index, uint32_t *out_category);

/**
 * Type-7 sample quantile of `n` values.
 */
enum EnsxStatus ensx_empirical_quantile(const double *data, size_t n, double prob, double *out_q);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENSX_H */

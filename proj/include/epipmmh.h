#ifndef EPIPMMH_H
#define EPIPMMH_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define EPI_API __declspec(dllexport)
#else
#define EPI_API __attribute__((visibility("default")))
#endif

typedef enum epi_status {
  EPI_OK = 0,
  EPI_ERR_INVALID_ARGUMENT = 1,
  EPI_ERR_DOMAIN = 2,
  EPI_ERR_PARSE = 3,
  EPI_ERR_UNSUPPORTED_TOPOLOGY = 4,
  EPI_ERR_IO = 5,
  EPI_ERR_INFEASIBLE = 6,
  EPI_ERR_DEGENERATE = 7,
  EPI_ERR_TUNING_FAILED = 8,
  EPI_ERR_INTERNAL = 9
} epi_status;

/* Library version, e.g. "0.3.0". */
EPI_API const char* epi_version(void);

/* Message of the last failed call on this thread; "" if none. */
EPI_API const char* epi_last_error(void);

/* Character offset of the last parse error on this thread, or -1. */
EPI_API int64_t epi_last_error_offset(void);

/* Frees strings returned through char** out-parameters. */
EPI_API void epi_string_free(char* s);

/* ---- densities ---- */

EPI_API epi_status epi_skellam_log_pmf(int64_t k, double mu1, double mu2, double* out);
EPI_API epi_status epi_coal_slice_log_pmf(int64_t a, int64_t c, double beta, int64_t x,
                                          double* out);

/* ---- trees ---- */

typedef struct epi_tree epi_tree;
typedef struct epi_slices epi_slices;

EPI_API epi_status epi_tree_parse_newick(const char* text, double most_recent_tip_time,
                                         epi_tree** out);
/* Re-dates `tree` from a label,time CSV; returns a new tree. */
EPI_API epi_status epi_tree_apply_tip_dates(const epi_tree* tree, const char* csv_text,
                                            epi_tree** out);
EPI_API epi_status epi_tree_to_newick(const epi_tree* tree, char** out);
EPI_API size_t epi_tree_leaf_count(const epi_tree* tree);
EPI_API double epi_tree_latest_time(const epi_tree* tree);
EPI_API void epi_tree_free(epi_tree* tree);

EPI_API epi_status epi_tree_discretize(const epi_tree* tree, double day_length, double present,
                                       epi_slices** out);
EPI_API epi_status epi_slices_parse_csv(const char* csv_text, epi_slices** out);
EPI_API epi_status epi_slices_to_csv(const epi_slices* slices, char** out);
EPI_API size_t epi_slices_count(const epi_slices* slices);
/* Slice i counted in days from the present. */
EPI_API epi_status epi_slices_get(const epi_slices* slices, size_t i, int64_t* a, int64_t* c);
EPI_API void epi_slices_free(epi_slices* slices);

/* ---- problems ---- */

typedef struct epi_problem epi_problem;

/* Either source may be NULL. n_days = 0 takes the longest source. The
   number of slices older than day 1 is written to *truncated if non-NULL. */
EPI_API epi_status epi_problem_create(double gamma, const char* prevalence_csv_text,
                                      const epi_slices* slices, size_t n_days,
                                      epi_problem** out, size_t* truncated);
/* Test mode: birth rates fixed to beta[0..n_days-1]. */
EPI_API epi_status epi_problem_set_fixed_beta(epi_problem* problem, const double* beta,
                                              size_t n);
/* Test mode: prevalence above x_max has probability zero. */
EPI_API epi_status epi_problem_set_x_max(epi_problem* problem, int64_t x_max);
EPI_API size_t epi_problem_n_days(const epi_problem* problem);
EPI_API void epi_problem_free(epi_problem* problem);

/* ---- particle filter ---- */

typedef struct epi_theta {
  double sigma;
  double rho;
  int64_t x0;
} epi_theta;

typedef struct epi_smc_options {
  size_t particles;
  double ess_threshold;
  int multinomial; /* 0: systematic resampling */
  size_t threads;
} epi_smc_options;

EPI_API epi_smc_options epi_smc_options_default(void);

/* If path_csv is non-NULL it receives one backward-simulated trajectory as
   `day,beta,x`, or NULL when the run degenerated. */
EPI_API epi_status epi_smc_run(const epi_problem* problem, epi_theta theta,
                               const epi_smc_options* options, uint64_t seed, double* log_lik,
                               int* degenerate, char** path_csv);

/* ---- PMMH ---- */

typedef struct epi_prior {
  double sigma_rate;
  double x0_r;
  double x0_p;
} epi_prior;

typedef struct epi_chain_config {
  size_t iterations;
  epi_theta init;
  double target_acceptance;
  double adaptation_decay;
  double initial_scale;
  uint64_t seed;
  int store_paths;
} epi_chain_config;

EPI_API epi_prior epi_prior_default(void);
EPI_API epi_chain_config epi_chain_config_default(void);

typedef struct epi_chain epi_chain;

/* Called after each iteration; a nonzero return stops the chain early. */
typedef int (*epi_progress_fn)(size_t iteration, size_t total, double acceptance, void* user);

EPI_API epi_status epi_pmmh_run(const epi_problem* problem, const epi_chain_config* config,
                                const epi_smc_options* options, const epi_prior* prior,
                                epi_progress_fn progress, void* user, epi_chain** out);
EPI_API size_t epi_chain_size(const epi_chain* chain);
EPI_API double epi_chain_acceptance_rate(const epi_chain* chain, size_t from);
EPI_API size_t epi_chain_estimator_calls(const epi_chain* chain);
/* Writes theta_trace.csv, beta_trace.csv and x_trace.csv into dir. */
EPI_API epi_status epi_chain_write_traces(const epi_chain* chain, const char* dir);
/* Reads the same files back; beta/x traces may be absent. */
EPI_API epi_status epi_chain_read_traces(const char* dir, epi_chain** out);
EPI_API void epi_chain_free(epi_chain* chain);
/* Drops the first floor(burn_in_fraction * size) iterations of each chain and
   concatenates the rest. All chains must cover the same number of days. */
EPI_API epi_status epi_chain_pool(const epi_chain* const* chains, size_t n,
                                  double burn_in_fraction, epi_chain** out);

/* Posterior summary as JSON, R_t table as `day,mean,lo,hi`. If true_beta is
   non-NULL the JSON gains a "score" object. Either output may be NULL. */
EPI_API epi_status epi_summarize(const epi_chain* chain, double gamma, double burn_in_fraction,
                                 const double* true_beta, size_t n_true, char** summary_json,
                                 char** rt_csv);

/* ---- particle-count tuning ---- */

typedef struct epi_tune_spec {
  size_t pilot_iterations;
  size_t k_large;
  size_t k_s;
  size_t replicates;
  size_t floor;
  size_t cap;
  size_t repeats;
  uint64_t seed;
} epi_tune_spec;

EPI_API epi_tune_spec epi_tune_spec_default(void);

/* Full procedure. report_json may be NULL. */
EPI_API epi_status epi_tune_run(const epi_problem* problem, const epi_tune_spec* spec,
                                const epi_chain_config* pilot, const epi_smc_options* options,
                                const epi_prior* prior, size_t* k_opt, char** report_json);

/* Arithmetic only: variances[i] is the log-likelihood variance of repeat i,
   NaN marks a discarded repeat. */
EPI_API epi_status epi_tune_from_variances(const epi_tune_spec* spec, const double* variances,
                                           size_t n, size_t* k_opt, double* k_raw_max);

/* ---- simulation ---- */

typedef struct epi_sim epi_sim;

/* Scenario as JSON, e.g. {"n_days":40,"beta":{"kind":"peaked","low":0.1,
   "high":0.3},"gamma":0.1,"x0":5,"rho":0.05,"genetic_sampling_fraction":0.05}.
   Missing keys take defaults. */
EPI_API epi_status epi_simulate(const char* scenario_json, uint64_t seed, epi_sim** out);
/* `day,true_x,observed_y` */
EPI_API epi_status epi_sim_prevalence_csv(const epi_sim* sim, char** out);
/* `day,observed` ready for epi_problem_create */
EPI_API epi_status epi_sim_observed_csv(const epi_sim* sim, char** out);
/* Empty string when no leaves were sampled. */
EPI_API epi_status epi_sim_newick(const epi_sim* sim, char** out);
EPI_API epi_status epi_sim_slices(const epi_sim* sim, epi_slices** out);
/* Resolved spec, seed, attempts, extinction and forced-root flags, true birth rates. */
EPI_API epi_status epi_sim_manifest_json(const epi_sim* sim, char** out);
EPI_API size_t epi_sim_n_days(const epi_sim* sim);
EPI_API double epi_sim_most_recent_tip_time(const epi_sim* sim);
EPI_API epi_status epi_sim_true_beta(const epi_sim* sim, double* out, size_t n);
EPI_API void epi_sim_free(epi_sim* sim);

#ifdef __cplusplus
}
#endif

#endif

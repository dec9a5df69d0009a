/*
 * privit — switched vision transformers with an MPC latency cost model.
 *
 * C API over the C++ core. All functions returning privit_status set a
 * thread-local error message retrievable via privit_last_error(). Handles
 * are opaque; free them with the matching *_free call.
 */

#ifndef PRIVIT_H
#define PRIVIT_H

#include <stddef.h>
#include <stdint.h>

#ifdef _WIN32
#    ifdef PRIVIT_BUILD
#        define PRIVIT_API __declspec(dllexport)
#    else
#        define PRIVIT_API __declspec(dllimport)
#    endif
#else
#    define PRIVIT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum privit_status {
    PRIVIT_OK                 = 0,
    PRIVIT_ERR_INTERNAL       = 1,
    PRIVIT_ERR_CONFIG         = 2,
    PRIVIT_ERR_NONCONVERGENCE = 3,
    PRIVIT_ERR_IO             = 4,
} privit_status;

typedef struct privit_run_config privit_run_config;
typedef struct privit_model      privit_model;
typedef struct privit_cost_table privit_cost_table;

PRIVIT_API const char * privit_status_str(privit_status status);

/* Thread-local message describing the most recent failure. */
PRIVIT_API const char * privit_last_error(void);

/* --- run configuration -------------------------------------------------- */

/* Desk-scale defaults; never fails. */
PRIVIT_API privit_run_config * privit_config_default(void);

/* Parses a `key = value` config file; NULL on failure. */
PRIVIT_API privit_run_config * privit_config_load(const char * path);

/* Sets one key (same key space as the config file). */
PRIVIT_API privit_status privit_config_set(privit_run_config * cfg, const char * key,
                                           const char * value);

PRIVIT_API void privit_config_free(privit_run_config * cfg);

/* --- pipelines ----------------------------------------------------------
 * Outputs land under the config's run.out_dir. Summary values that were
 * produced are written to the out pointers when non-NULL.
 */

typedef struct privit_run_summary {
    int    converged;
    int    search_epochs;
    int    gelu_count;
    int    softmax_count;
    double latency_reluops;
    double train_accuracy;
    double test_accuracy;
    double teacher_test_accuracy; /* -1 when no teacher was used */
} privit_run_summary;

PRIVIT_API privit_status privit_run_pretrain(privit_run_config * cfg, privit_run_summary * out);
PRIVIT_API privit_status privit_run_search(privit_run_config * cfg, privit_run_summary * out);
PRIVIT_API privit_status privit_run_sweep(privit_run_config * cfg, int * out_cells_ok,
                                          int * out_cells_failed);
PRIVIT_API privit_status privit_run_ablate_attention(privit_run_config * cfg);

/* GELUs of the last k layers replaced by identity, then finetuned. */
PRIVIT_API privit_status privit_run_layerwise_baseline(privit_run_config * cfg, int k,
                                                       privit_run_summary * out);

/* --- checkpoints ---------------------------------------------------------- */

PRIVIT_API privit_model * privit_model_load(const char * path);
PRIVIT_API privit_status  privit_model_save(const privit_model * model, const char * path);
PRIVIT_API void           privit_model_free(privit_model * model);

/* Active (over-threshold) switch counts per mask. */
PRIVIT_API privit_status privit_model_active_counts(const privit_model * model, int * out_gelu,
                                                    int * out_softmax);

/* --- latency cost model ---------------------------------------------------- */

PRIVIT_API privit_cost_table * privit_cost_table_builtin(void);
/* Adds `tag,n,reluops` override rows from a CSV file. */
PRIVIT_API privit_status privit_cost_table_load_overrides(privit_cost_table * table,
                                                          const char * csv_path);
PRIVIT_API privit_status privit_cost_of(const privit_cost_table * table, const char * tag, int n,
                                        double * out_reluops);
PRIVIT_API void privit_cost_table_free(privit_cost_table * table);

/* Census of a binarized checkpoint weighted by the cost table; writes the
 * per-category breakdown to out_csv when non-NULL. */
PRIVIT_API privit_status privit_latency_estimate(const privit_model * model,
                                                 const privit_cost_table * table,
                                                 const char * out_csv, double * out_reluops);

/* --- reports ---------------------------------------------------------------- */

/* Per-layer active vs base nonlinearity counts of a binarized checkpoint. */
PRIVIT_API privit_status privit_report_distribution(const privit_model * model,
                                                    const char * out_csv);

/* (max, mean, population variance) of a-b over classes. */
PRIVIT_API privit_status privit_degradation_stats(const double * acc_a, const double * acc_b,
                                                  size_t n, double * out_max, double * out_mean,
                                                  double * out_variance);

/* Reads label,latency_reluops,accuracy rows and writes the same rows plus
 * an on_frontier column. */
PRIVIT_API privit_status privit_pareto_csv(const char * in_csv, const char * out_csv);

#ifdef __cplusplus
}
#endif

#endif /* PRIVIT_H */

/* SPDX-License-Identifier: Apache-2.0 */
#ifndef ALPHAFORGE_ALPHAFORGE_H
#define ALPHAFORGE_ALPHAFORGE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define AF_API __declspec(dllexport)
#else
#define AF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum af_status {
  AF_OK = 0,
  AF_ERR_INVALID_ARGUMENT = 1,
  AF_ERR_IO = 2,
  AF_ERR_PARSE = 3,
  AF_ERR_UNIT = 4,
  AF_ERR_SEMANTIC = 5,
  AF_ERR_CONFIG = 6,
  AF_ERR_NETWORK = 7,
  AF_ERR_RUNTIME = 8
} af_status;

typedef struct af_config af_config;
typedef struct af_panel af_panel;
typedef struct af_alpha af_alpha;
typedef struct af_pool af_pool;

/* Message of the last failed call on this thread ("" after a success). */
AF_API const char* af_last_error(void);
AF_API const char* af_status_name(af_status status);
AF_API const char* af_version(void);
/* Releases any char* handed out by this library. NULL is ignored. */
AF_API void af_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */

AF_API af_status af_config_new(af_config** out);
/* TOML file; relative paths inside resolve against the file's directory. */
AF_API af_status af_config_load(const char* path, af_config** out);
/* Dotted key ("gp.population_size", "seed", "data.path", ...). */
AF_API af_status af_config_set(af_config* cfg, const char* key, const char* value);
AF_API af_status af_config_to_json(const af_config* cfg, char** out_json);
/* Effective seed; *is_set is 0 when no seed was configured. */
AF_API af_status af_config_seed(const af_config* cfg, uint64_t* seed, int* is_set);
AF_API void af_config_free(af_config* cfg);

/* ---- panels ----------------------------------------------------------- */

AF_API af_status af_panel_load_csv(const char* path, int strict, af_panel** out);
/* Seeded synthetic panel from the config's synth section (requires a seed).
 * With a planted expression the panel carries its planted labels. */
AF_API af_status af_panel_synthetic(const af_config* cfg, af_panel** out);
/* data.path when set, otherwise the synthetic panel. */
AF_API af_status af_panel_from_config(const af_config* cfg, af_panel** out);
AF_API af_status af_panel_write_csv(const af_panel* panel, const char* path);
AF_API af_status af_panel_shape(const af_panel* panel, size_t* n_dates, size_t* n_instruments);
AF_API af_status af_panel_fingerprint(const af_panel* panel, char** out_hex);
AF_API void af_panel_free(af_panel* panel);

/* ---- expressions ------------------------------------------------------ */

/* Runs the full validation pipeline. Returns AF_OK whenever a verdict was
 * reached; *valid is 1 for a valid expression. Either output may be NULL. */
AF_API af_status af_validate(const char* expr, int* valid, char** report_line, char** report_json);

AF_API af_status af_eval(const char* expr, const af_panel* panel, int streaming, int threads, af_alpha** out);
AF_API af_status af_alpha_shape(const af_alpha* alpha, size_t* rows, size_t* cols);
/* Row-major rows x cols view, valid for the alpha's lifetime; NaN = missing. */
AF_API af_status af_alpha_values(const af_alpha* alpha, const double** data);
AF_API af_status af_alpha_to_csv(const af_alpha* alpha, const af_panel* panel, char** out_csv);
AF_API af_status af_alpha_write_csv(const af_alpha* alpha, const af_panel* panel, const char* path);
AF_API void af_alpha_free(af_alpha* alpha);

/* Quantile long-short backtest using the config's label and backtest
 * sections (NULL config = defaults). Outputs key=value text and JSON. */
AF_API af_status af_backtest(const char* expr, const af_panel* panel, const af_config* cfg, char** out_text,
                             char** out_json);

/* ---- search ----------------------------------------------------------- */

/* Genetic search over `panel` with the config's gp section. `seeds` holds
 * one expression per line, or JSON lines with an "expression" field (NULL
 * or "" = none). Labels are the panel's planted labels when present,
 * otherwise forward returns. When pool.dir names an existing store its
 * members feed the diversity penalty. */
AF_API af_status af_search(const af_config* cfg, const af_panel* panel, const char* seeds, char** out_result_json,
                           char** out_hall_of_fame_jsonl);

/* ---- pool ------------------------------------------------------------- */

/* Opens the store at `dir`; with create != 0 a missing store is created on
 * `reference` using corr_cap / n_planes. The reference panel must match. */
AF_API af_status af_pool_open(const char* dir, const af_panel* reference, const af_config* cfg, int create,
                              af_pool** out);
AF_API af_status af_pool_size(const af_pool* pool, size_t* size);
/* Scores and inserts; *accepted tells whether the record was appended. */
AF_API af_status af_pool_add(af_pool* pool, const af_panel* reference, const af_config* cfg, const char* expr,
                             const char* name, const char* description, int* accepted, char** out_json);
/* Nearest member by |corr| and whether an insert would pass the cap. */
AF_API af_status af_pool_check(const af_pool* pool, const af_panel* reference, const af_config* cfg, const char* expr,
                               char** out_json);
/* Marginal mean-IC contribution against `member_ids` (newline separated;
 * NULL or "" = every member). */
AF_API af_status af_pool_score(const af_pool* pool, const af_panel* reference, const af_config* cfg,
                               const char* expr, const char* member_ids, double* score, char** out_json);
AF_API void af_pool_free(af_pool* pool);

/* ---- mining ----------------------------------------------------------- */

/* Idea-to-alpha loop. A transcript path replays scripted replies; without
 * one the config's llm endpoint is called. On a client failure the partial
 * result is still written to *out_json and AF_ERR_NETWORK is returned. */
AF_API af_status af_mine(const char* idea, const af_config* cfg, const char* transcript, char** out_json);

/* ---- synthetic data and benchmarks ------------------------------------ */

/* Writes the synthetic panel CSV plus "<path>.meta.json" (seed and options). */
AF_API af_status af_synth_write(const af_config* cfg, const char* path, char** out_meta_json);

AF_API af_status af_bench(const char* expr, int n_dates, int n_instruments, const int* threads, size_t n_threads,
                          uint64_t seed, int repeats, int include_streaming, char** out_markdown, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* ALPHAFORGE_ALPHAFORGE_H */

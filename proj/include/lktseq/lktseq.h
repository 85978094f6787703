#ifndef LKTSEQ_LKTSEQ_H_
#define LKTSEQ_LKTSEQ_H_

/* C interface to the lktseq library. Every function returning lkt_status
 * leaves a message for lkt_last_error() on failure. Strings handed out
 * through char** are owned by the caller and released with lkt_string_free. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(LKTSEQ_BUILDING)
#define LKT_API __attribute__((visibility("default")))
#else
#define LKT_API
#endif

typedef enum lkt_status {
  LKT_OK = 0,
  LKT_INVALID_ARGUMENT = 1,
  LKT_IO = 2,
  LKT_SCHEMA = 3,
  LKT_ROW = 4,
  LKT_VALIDATION = 5,
  LKT_PARSE = 6,
  LKT_SINGULAR = 7,
  LKT_FIT = 8,
  LKT_INTERNAL = 9
} lkt_status;

typedef struct lkt_dataset lkt_dataset;
typedef struct lkt_model lkt_model;
typedef struct lkt_fit lkt_fit;
typedef struct lkt_cv lkt_cv;

LKT_API const char* lkt_version(void);
/* Message of the last failure on this thread, "" if none. */
LKT_API const char* lkt_last_error(void);
LKT_API void lkt_string_free(char* s);

/* Header names of the logical columns. NULL fields keep their defaults. */
typedef struct lkt_schema {
  const char* student;
  const char* item;
  const char* kc;
  const char* outcome;
  const char* time;
  const char* phase;
  const char* category;
  const char* block_size;
  int sort_by_time;
} lkt_schema;

LKT_API void lkt_schema_init(lkt_schema* schema);

/* ---- datasets ---- */

LKT_API lkt_status lkt_dataset_load(const char* path, const lkt_schema* schema,
                                    lkt_dataset** out);
LKT_API size_t lkt_dataset_num_students(const lkt_dataset* d);
LKT_API size_t lkt_dataset_num_trials(const lkt_dataset* d);
LKT_API size_t lkt_dataset_num_dropped(const lkt_dataset* d);
/* Row number and reason of dropped row i. */
LKT_API lkt_status lkt_dataset_dropped(const lkt_dataset* d, size_t i, size_t* row,
                                       const char** reason);
LKT_API lkt_status lkt_dataset_write_csv(const lkt_dataset* d, const char* path);
LKT_API void lkt_dataset_free(lkt_dataset* d);

/* ---- models ---- */

LKT_API lkt_status lkt_model_parse(const char* formula, const lkt_schema* schema,
                                   lkt_model** out);
/* Offset of the last parse failure on this thread, or -1. */
LKT_API long lkt_last_parse_offset(void);
LKT_API lkt_status lkt_model_render(const lkt_model* m, char** out);
LKT_API size_t lkt_model_num_terms(const lkt_model* m);
LKT_API void lkt_model_free(lkt_model* m);

/* ---- fitting ---- */

typedef struct lkt_fit_options {
  double ridge;
  uint64_t seed;
  int restarts;
  int max_evals;
} lkt_fit_options;

LKT_API void lkt_fit_options_init(lkt_fit_options* options);
LKT_API lkt_status lkt_fit_run(const lkt_model* m, const lkt_dataset* d,
                               const lkt_fit_options* options, lkt_fit** out);
LKT_API int lkt_fit_converged(const lkt_fit* f);
LKT_API double lkt_fit_log_likelihood(const lkt_fit* f);
LKT_API int lkt_fit_outer_evals(const lkt_fit* f);
LKT_API size_t lkt_fit_num_coefficients(const lkt_fit* f);
LKT_API lkt_status lkt_fit_coefficient(const lkt_fit* f, size_t i, const char** name,
                                       double* value);
LKT_API lkt_status lkt_fit_to_json(const lkt_fit* f, char** out);
LKT_API void lkt_fit_free(lkt_fit* f);

/* Feature values of every trial as tab-separated text. Nonlinear parameters
 * come from fit_json (a lkt_fit_to_json document) when given, otherwise from
 * pinned values and search starting points. */
LKT_API lkt_status lkt_features_write(const lkt_model* m, const lkt_dataset* d,
                                      const char* fit_json, const char* path);

/* ---- cross-validation ---- */

typedef struct lkt_cv_options {
  int folds;
  int repeats;
  uint64_t seed;
  double ridge;
  int restarts;
  int max_evals;
  int jobs;
  /* Column flagging novel posttest items for r2; NULL uses "Novel". */
  const char* novel_column;
  /* Filter "Col=value,..." restricting r2 to form r3; NULL omits r3. */
  const char* r3_filter;
  /* Extra grouping: keys "ColA,ColB" and optional filter. NULL omits it. */
  const char* group_by;
  const char* filter;
} lkt_cv_options;

LKT_API void lkt_cv_options_init(lkt_cv_options* options);
LKT_API lkt_status lkt_cv_run(const lkt_model* m, const lkt_dataset* d,
                              const lkt_cv_options* options, lkt_cv** out);
LKT_API size_t lkt_cv_failed_folds(const lkt_cv* cv);
LKT_API size_t lkt_cv_num_groupings(const lkt_cv* cv);
LKT_API const char* lkt_cv_grouping_name(const lkt_cv* cv, size_t i);
/* Mean of a metric ("r2_mcfadden", "auc", "rmse" or a grouping name);
 * LKT_VALIDATION when undefined. */
LKT_API lkt_status lkt_cv_metric(const lkt_cv* cv, const char* metric, double* value);
LKT_API lkt_status lkt_cv_to_json(const lkt_cv* cv, char** out);
LKT_API lkt_status lkt_cv_group_table(const lkt_cv* cv, size_t grouping, char** out);
LKT_API void lkt_cv_free(lkt_cv* cv);

/* ---- simulation ---- */

/* design: "bird", "blob" or "custom"; config_json may hold "design" and
 * "truth" objects and may be NULL. The resolved truth is written to
 * *truth_json and any warnings, newline separated, to *warnings (both
 * optional). */
LKT_API lkt_status lkt_simulate(const char* design, const char* config_json,
                                uint64_t seed, lkt_dataset** out, char** truth_json,
                                char** warnings);

/* ---- reports ---- */

typedef enum lkt_report_format { LKT_REPORT_TABLE = 0, LKT_REPORT_DELIMITED = 1 } lkt_report_format;

LKT_API lkt_status lkt_report_render(const char* const* documents, const char* const* names,
                                     size_t n, lkt_report_format format, char** out);

#ifdef __cplusplus
}
#endif

#endif /* LKTSEQ_LKTSEQ_H_ */

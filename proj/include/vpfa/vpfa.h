/*
 * vpfa: feature-space alignment of low-resolution embeddings.
 *
 * C interface over the toolkit core. Every object is an opaque handle owned
 * by the caller and released with its *_free function. Functions return a
 * vpfa_status; on failure vpfa_last_error() holds a thread-local message
 * describing the most recent error on the calling thread.
 */
#ifndef VPFA_H_
#define VPFA_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(VPFA_BUILDING_LIB)
#define VPFA_API __declspec(dllexport)
#else
#define VPFA_API __declspec(dllimport)
#endif
#else
#define VPFA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vpfa_status {
  VPFA_OK = 0,
  VPFA_ERR_INVALID_ARGUMENT = 1,
  VPFA_ERR_IO = 2,
  VPFA_ERR_FORMAT = 3,
  VPFA_ERR_DIMENSION = 4,
  VPFA_ERR_NUMERIC = 5,
  VPFA_ERR_INSUFFICIENT_DATA = 6,
  VPFA_ERR_INTERNAL = 99
} vpfa_status;

typedef enum vpfa_format {
  VPFA_FORMAT_AUTO = 0, /* loading only: sniff the magic bytes */
  VPFA_FORMAT_CSV = 1,
  VPFA_FORMAT_BINARY = 2
} vpfa_format;

typedef enum vpfa_metric { VPFA_METRIC_COSINE = 0, VPFA_METRIC_EUCLIDEAN = 1 } vpfa_metric;

typedef enum vpfa_pan_target { VPFA_PAN_LR = 0, VPFA_PAN_ALL = 1 } vpfa_pan_target;

typedef enum vpfa_cca_rows { VPFA_CCA_ROWS_SAMPLE = 0, VPFA_CCA_ROWS_IDENTITY = 1 } vpfa_cca_rows;

/* Resolution selectors for vpfa_set_select. */
#define VPFA_SELECT_HR 0
#define VPFA_SELECT_ANY_LR (-1)

typedef struct vpfa_set vpfa_set;
typedef struct vpfa_params vpfa_params;
typedef struct vpfa_eval vpfa_eval;
typedef struct vpfa_centroids vpfa_centroids;
typedef struct vpfa_projection vpfa_projection;

VPFA_API const char* vpfa_version(void);
VPFA_API const char* vpfa_last_error(void);

/* ---- embedding sets ---------------------------------------------------- */

typedef struct vpfa_record_info {
  uint32_t identity;
  uint16_t camera;
  uint8_t resolution; /* 0 = HR, else the LR rate */
} vpfa_record_info;

VPFA_API vpfa_status vpfa_set_load(const char* path, vpfa_format format, vpfa_set** out);
VPFA_API vpfa_status vpfa_set_save(const vpfa_set* set, const char* path, vpfa_format format);
VPFA_API void vpfa_set_free(vpfa_set* set);
VPFA_API size_t vpfa_set_size(const vpfa_set* set);
VPFA_API size_t vpfa_set_dim(const vpfa_set* set);
/* `vector` (nullable) receives a pointer valid for the lifetime of `set`. */
VPFA_API vpfa_status vpfa_set_record(const vpfa_set* set, size_t index, vpfa_record_info* info,
                                     const double** vector);
/* Rates present in the set, ascending. Writes up to `cap` entries. */
VPFA_API size_t vpfa_set_lr_rates(const vpfa_set* set, int* rates, size_t cap);
/* Records with the given resolution: VPFA_SELECT_HR, VPFA_SELECT_ANY_LR or a rate. */
VPFA_API vpfa_status vpfa_set_select(const vpfa_set* set, int resolution, vpfa_set** out);
/* Records whose identity is (first_half != 0) / is not (first_half == 0) in
 * the first ceil(K/2) sorted identities. */
VPFA_API vpfa_status vpfa_set_half(const vpfa_set* set, int first_half, vpfa_set** out);
/* 1 when dims and all records (including vector bits) match. */
VPFA_API int vpfa_set_equal(const vpfa_set* a, const vpfa_set* b);

/* ---- synthetic generator ----------------------------------------------- */

typedef struct vpfa_synth_config {
  size_t dim;
  size_t num_identities;
  size_t samples_per_res;
  size_t cameras;
  double sigma_proto;
  double sigma_id;
  double sigma_res;
  const int* rates;     /* num_rates entries */
  const double* shifts; /* shift magnitude per entry of rates */
  size_t num_rates;
  uint64_t seed;
  int has_direction_seed;
  uint64_t direction_seed;
} vpfa_synth_config;

/* Defaults: dim 64, 200 identities, 10 samples, 6 cameras, sigmas 1/0.3/0.1,
 * no rates, seed 7. */
VPFA_API vpfa_synth_config vpfa_synth_config_default(void);
VPFA_API vpfa_status vpfa_synth_generate(const vpfa_synth_config* config, vpfa_set** out);
VPFA_API vpfa_status vpfa_synth_planted_direction(const vpfa_synth_config* config, double* out, size_t len);

/* ---- statistics -------------------------------------------------------- */

typedef struct vpfa_stats_options {
  double cca_epsilon;
  int cca_reduce_to_rank;
  vpfa_cca_rows cca_rows;
  size_t pearson_identities;
  size_t group_size;
  uint64_t seed;
} vpfa_stats_options;

typedef struct vpfa_split_cosine_result {
  double cosine;
  size_t first_half;
  size_t second_half;
} vpfa_split_cosine_result;

typedef struct vpfa_cca_result {
  double cross_res[3];
  double random_baseline[3];
  double epsilon;
  size_t num_rows;
  size_t reduced_dim;
} vpfa_cca_result;

typedef struct vpfa_pearson_result {
  double mean_r;
  double std_r;
  double proportion_above;
  size_t group_count;
} vpfa_pearson_result;

VPFA_API vpfa_stats_options vpfa_stats_options_default(void);
VPFA_API vpfa_status vpfa_stats_split_cosine(const vpfa_set* set, int rate, vpfa_split_cosine_result* out);
VPFA_API vpfa_status vpfa_stats_cca(const vpfa_set* set, int rate, const vpfa_stats_options* options,
                                    vpfa_cca_result* out);
VPFA_API vpfa_status vpfa_stats_grouped_pearson(const vpfa_set* set, int rate, const vpfa_stats_options* options,
                                                vpfa_pearson_result* out);
/* Full key: value report (and CSV tables) over the given rates. The returned
 * strings are malloc'd; release with vpfa_string_free. Any CSV out-pointer may
 * be NULL. */
VPFA_API vpfa_status vpfa_stats_report(const vpfa_set* set, const int* rates, size_t num_rates,
                                       const vpfa_stats_options* options, char** report, char** split_csv,
                                       char** cca_csv, char** pearson_csv);
VPFA_API void vpfa_string_free(char* s);

/* ---- panning network --------------------------------------------------- */

VPFA_API vpfa_status vpfa_params_init(size_t dim, size_t hidden, double sigma, uint64_t seed, vpfa_params** out);
VPFA_API vpfa_status vpfa_params_load(const char* path, vpfa_params** out);
VPFA_API vpfa_status vpfa_params_save(const vpfa_params* params, const char* path);
VPFA_API void vpfa_params_free(vpfa_params* params);
VPFA_API size_t vpfa_params_dim(const vpfa_params* params);
VPFA_API size_t vpfa_params_hidden(const vpfa_params* params);
VPFA_API size_t vpfa_params_count(const vpfa_params* params);
VPFA_API size_t vpfa_parameter_count(size_t dim, size_t hidden);
/* Panned feature for one vector (out has `len` == dim entries). */
VPFA_API vpfa_status vpfa_params_forward(const vpfa_params* params, const double* z, double* out, size_t len);

/* ---- training ---------------------------------------------------------- */

typedef struct vpfa_train_config {
  size_t hidden;
  double init_sigma;
  uint64_t init_seed;
  size_t epochs;
  double learning_rate;
  double weight_decay;
  size_t batch_size;
  size_t num_pairs;
  uint64_t seed;
  double bootstrap_fraction;
  const int* rates; /* LR rates pooled for pairing; NULL/0 = all */
  size_t num_rates;
} vpfa_train_config;

typedef struct vpfa_train_summary {
  size_t identities_used;
  size_t identities_skipped;
  size_t steps;
  double wall_seconds;
} vpfa_train_summary;

VPFA_API vpfa_train_config vpfa_train_config_default(void);
/* `epoch_loss` (nullable) must hold config->epochs entries. */
VPFA_API vpfa_status vpfa_train(const vpfa_set* set, const vpfa_train_config* config, vpfa_params** out,
                                double* epoch_loss, vpfa_train_summary* summary);

/* ---- retrieval --------------------------------------------------------- */

VPFA_API vpfa_status vpfa_apply(const vpfa_params* params, const vpfa_set* set, vpfa_pan_target target,
                                vpfa_set** out);

typedef struct vpfa_eval_summary {
  double rank1;
  double rank5;
  double rank10;
  double mean_ap;
  size_t num_queries;
  size_t skipped;
} vpfa_eval_summary;

typedef struct vpfa_query_row {
  size_t query_index;
  uint32_t identity;
  size_t relevant;
  size_t first_hit_rank;
  double average_precision;
} vpfa_query_row;

VPFA_API vpfa_status vpfa_evaluate(const vpfa_set* query, const vpfa_set* gallery, vpfa_metric metric,
                                   int cross_camera_filter, vpfa_eval** out);
VPFA_API void vpfa_eval_free(vpfa_eval* eval);
VPFA_API void vpfa_eval_summary_get(const vpfa_eval* eval, vpfa_eval_summary* out);
VPFA_API size_t vpfa_eval_query_count(const vpfa_eval* eval);
VPFA_API vpfa_status vpfa_eval_query(const vpfa_eval* eval, size_t index, vpfa_query_row* out);

typedef struct vpfa_centroid_row {
  uint32_t identity;
  double before;
  double after;
  double reduction;
} vpfa_centroid_row;

/* Per-identity HR-to-LR centroid distance before and after panning. */
VPFA_API vpfa_status vpfa_centroids_compute(const vpfa_set* hr, const vpfa_set* lr_before, const vpfa_set* lr_after,
                                            vpfa_centroids** out);
VPFA_API void vpfa_centroids_free(vpfa_centroids* c);
VPFA_API double vpfa_centroids_mean_reduction(const vpfa_centroids* c);
VPFA_API size_t vpfa_centroids_count(const vpfa_centroids* c);
VPFA_API vpfa_status vpfa_centroids_row(const vpfa_centroids* c, size_t index, vpfa_centroid_row* out);

typedef struct vpfa_point {
  size_t set_index;
  uint32_t identity;
  uint8_t resolution;
  double x;
  double y;
} vpfa_point;

VPFA_API vpfa_status vpfa_project(const vpfa_set* const* sets, size_t num_sets, size_t num_identities,
                                  vpfa_projection** out);
VPFA_API void vpfa_projection_free(vpfa_projection* p);
VPFA_API size_t vpfa_projection_count(const vpfa_projection* p);
VPFA_API vpfa_status vpfa_projection_point(const vpfa_projection* p, size_t index, vpfa_point* out);

/* Text renderings used by the command-line tool. malloc'd; vpfa_string_free. */
VPFA_API char* vpfa_eval_report_text(const vpfa_eval* eval);
VPFA_API char* vpfa_eval_csv(const vpfa_eval* eval);
VPFA_API char* vpfa_centroids_report_text(const vpfa_centroids* c);
VPFA_API char* vpfa_centroids_csv(const vpfa_centroids* c);
VPFA_API char* vpfa_projection_csv(const vpfa_projection* p);

#ifdef __cplusplus
}
#endif

#endif  // VPFA_H_

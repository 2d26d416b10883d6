/* DiffSketch C API.
 *
 * Every function returns a ds_status. On failure the message is available from
 * ds_last_error() on the calling thread until the next API call on that thread.
 * Handles are opaque and must be released with their matching destroy call.
 */
#ifndef DIFFSKETCH_DIFFSKETCH_H
#define DIFFSKETCH_DIFFSKETCH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DS_API __declspec(dllexport)
#else
#define DS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ds_status {
  DS_OK = 0,
  DS_ERR_USAGE = 1,   /* bad arguments or configuration */
  DS_ERR_INPUT = 2,   /* missing, malformed or mismatched input data */
  DS_ERR_NUMERIC = 3  /* non-finite values or degenerate numerics */
} ds_status;

typedef struct ds_backend ds_backend;
typedef struct ds_student ds_student;

typedef void (*ds_log_fn)(const char* message, void* user);

DS_API const char* ds_version(void);
DS_API const char* ds_last_error(void);
/* Receives progress messages from the command functions; NULL disables logging. */
DS_API void ds_set_log_callback(ds_log_fn fn, void* user);

/* spec: "toy", "toy:<size>" or "production"; NULL reads DIFFSKETCH_BACKEND (default "toy"). */
DS_API ds_status ds_backend_create(const char* spec, ds_backend** out);
DS_API void ds_backend_destroy(ds_backend* backend);
DS_API int ds_backend_image_size(const ds_backend* backend);

/* Pipeline commands. Each writes its outputs plus a run manifest. */
DS_API ds_status ds_make_triplet(const ds_backend* backend, const char* out_dir, uint64_t seed);
DS_API ds_status ds_analyze(const ds_backend* backend, const char* const* archives, size_t n_archives, int pca_dim,
                            uint64_t seed, const char* out_report);
/* config may be NULL for defaults; checkpoint_every < 0 keeps the config value. */
DS_API ds_status ds_train(const ds_backend* backend, const char* triplet_dir, const char* selection_report,
                          const char* config, const char* out_dir, uint64_t seed, int checkpoint_every, int resume);
DS_API ds_status ds_sample_pairs(const ds_backend* backend, const char* ckpt_dir, int n, int S, const char* out_dir,
                                 uint64_t seed);
DS_API ds_status ds_distill(const char* pairs_dir, const char* gt_dir, const char* out_dir, uint64_t seed, int epochs,
                            int reg_every, double learning_rate);
DS_API ds_status ds_extract(const char* student_dir, const char* image_png, const char* out_png);
DS_API ds_status ds_eval(const char* pred_dir, const char* gt_dir, const char* out_csv, const char* style);
DS_API ds_status ds_ablate(const ds_backend* backend, const char* triplet_dir, const char* selection_report,
                           const char* config, const char* out_csv, uint64_t seed, int eval_pairs);

/* Distilled student for in-process extraction. Pixels are H x W x 3 floats in [0,1]. */
DS_API ds_status ds_student_load(const char* student_dir, ds_student** out);
DS_API void ds_student_destroy(ds_student* student);
/* out_sketch receives H x W floats. */
DS_API ds_status ds_student_extract(const ds_student* student, const float* rgb, int height, int width,
                                    float* out_sketch);

/* Numerical utilities. */
DS_API ds_status ds_schedule(int iter, int horizon, double* w_condition, double* w_distribution);
/* Row-major point sets a (n x d) and b (m x d). */
DS_API ds_status ds_emd(const double* a, size_t n, const double* b, size_t m, size_t d, double* out);
/* H x W x C row-major images in [0,1]. */
DS_API ds_status ds_ssim(const float* a, const float* b, int height, int width, int channels, double* out);
DS_API ds_status ds_shapiro_wilk(const double* x, size_t n, double* w, double* p);

#ifdef __cplusplus
}
#endif

#endif /* DIFFSKETCH_DIFFSKETCH_H */

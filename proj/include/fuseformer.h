/*
 * fuseformer C API
 *
 * Visible/infrared grayscale image fusion: a multi-scale autoencoder with a
 * CNN + axial-attention fusion block, two-stage training, and the usual
 * fusion-quality metrics (entropy, SCD, MI, SSIM).
 *
 * Every fallible call returns ff_status; FF_OK is 0. On failure,
 * ff_last_error() returns a thread-local message describing what went wrong.
 * Objects returned through out-parameters are owned by the caller and must
 * be released with the matching *_free function.
 */
#ifndef FUSEFORMER_H
#define FUSEFORMER_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define FF_API __declspec(dllexport)
#else
#define FF_API __attribute__((visibility("default")))
#endif

typedef enum ff_status {
    FF_OK = 0,
    FF_ERR_PROPERTY = 1, /* failed self-check or diverged training */
    FF_ERR_IO = 2,       /* file missing, unreadable, or malformed */
    FF_ERR_SHAPE = 3,    /* dimension/config mismatch or invalid config */
    FF_ERR_PARTIAL = 4   /* evaluation ran but some inputs were missing */
} ff_status;

FF_API const char* ff_version(void);
FF_API const char* ff_last_error(void);

/* ---- images (grayscale, doubles in [0,1], row-major) ---- */

typedef struct ff_image ff_image;

FF_API ff_status ff_image_create(int width, int height, const double* pixels, ff_image** out);
FF_API ff_status ff_image_load_pgm(const char* path, ff_image** out);
/* maxval must be 255 or 65535; writes binary P5, atomically */
FF_API ff_status ff_image_save_pgm(const ff_image* img, const char* path, int maxval);
FF_API int ff_image_width(const ff_image* img);
FF_API int ff_image_height(const ff_image* img);
FF_API const double* ff_image_pixels(const ff_image* img);
FF_API void ff_image_free(ff_image* img);

/* ---- fusion-quality metrics ---- */

FF_API ff_status ff_entropy(const ff_image* img, double* out);
FF_API ff_status ff_ssim(const ff_image* a, const ff_image* b, double* out);
FF_API ff_status ff_mutual_information(const ff_image* a, const ff_image* b, int bins, double* out);
FF_API ff_status ff_scd(const ff_image* fused, const ff_image* vis, const ff_image* ir, double* out);

/* ---- trained models ---- */

typedef struct ff_model ff_model;

FF_API ff_status ff_model_load(const char* weights_path, ff_model** out);
FF_API void ff_model_free(ff_model* model);
FF_API int ff_model_input_width(const ff_model* model);
FF_API int ff_model_input_height(const ff_model* model);
FF_API ff_status ff_model_fuse(const ff_model* model, const ff_image* visible,
                               const ff_image* infrared, ff_image** fused_out);

/* ---- config-driven pipeline ----
 *
 * Training/evaluation entry points take a key=value config file (see the
 * README for the key list). seed >= 0 overrides the config seed.
 * max_threads <= 0 means "use all cores"; the FUSEFORMER_THREADS environment
 * variable caps both cases. progress may be NULL.
 */

typedef void (*ff_progress)(int epoch, int total_epochs, double loss, void* user);

FF_API ff_status ff_train_stage1(const char* config_path, long long seed, const char* weights_out,
                                 const char* log_csv_out, ff_progress progress, void* user);
FF_API ff_status ff_train_stage2(const char* config_path, long long seed, const char* stage1_weights,
                                 const char* weights_out, const char* log_csv_out,
                                 ff_progress progress, void* user);

/* Metric report for pre-fused images: fused_dir/<id>.pgm per manifest pair.
 * Missing fused images are listed in ff_last_error() and yield
 * FF_ERR_PARTIAL, with the CSV still written for the pairs found. */
FF_API ff_status ff_evaluate(const char* manifest_path, const char* fused_dir,
                             const char* report_csv_out, int max_threads);

/* Trains the dual-input-loss and single-input-loss arms from identical
 * initialization and reports MI/SSIM against the infrared band. */
FF_API ff_status ff_bias_experiment(const char* config_path, long long seed,
                                    const char* stage1_weights, const char* report_csv_out,
                                    int max_threads);

/* axis is "layers", "batch", or "lr"; one stage-2 run per value. */
FF_API ff_status ff_sweep(const char* config_path, long long seed, const char* stage1_weights,
                          const char* axis, const double* values, int count,
                          const char* table_csv_out, int max_threads);

/* ---- self-verification ---- */

/* Finite-difference checks of every differentiable op and loss.
 * *max_rel_error receives the worst relative error seen. */
FF_API ff_status ff_gradient_check(unsigned long long seed, double* max_rel_error);

/* Gradient checks, metric oracles, and the axial-attention oracle.
 * verbose != 0 prints one line per property to stdout. On failure,
 * ff_last_error() names the first failing property. */
FF_API ff_status ff_selftest(unsigned long long seed, int verbose);

#ifdef __cplusplus
}
#endif

#endif /* FUSEFORMER_H */

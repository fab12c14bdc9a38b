#ifndef RECON_C_H
#define RECON_C_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RECON_API __declspec(dllexport)
#else
#define RECON_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every function returning int returns RECON_OK or one of these codes. The message of the
   most recent failure on the calling thread is available from recon_last_error(). */
enum recon_status {
  RECON_OK = 0,
  RECON_E_INVALID_ARGUMENT = 1,
  RECON_E_SHAPE = 2,
  RECON_E_IO = 3,
  RECON_E_FORMAT = 4,
  RECON_E_VERSION = 5,
  RECON_E_TRUNCATED = 6,
  RECON_E_CHECKSUM = 7,
  RECON_E_DIVERGED = 8,
  RECON_E_CONFIG = 9,
  RECON_E_CONTRACT = 10,
  RECON_E_CALIBRATION = 11,
  RECON_E_DEGENERATE = 12,
  RECON_E_INTERNAL = 99
};

typedef struct recon_mask recon_mask;
typedef struct recon_phantom recon_phantom;
typedef struct recon_record recon_record;
typedef struct recon_model recon_model;
typedef struct recon_image recon_image;

RECON_API const char *recon_version(void);
/* Upper-case name of a status code, e.g. "CHECKSUM". */
RECON_API const char *recon_status_name(int status);
RECON_API const char *recon_last_error(void);
/* Strings handed out by the library are released with this. */
RECON_API void recon_string_free(char *s);

/* ---- masks ---- */

/* kind: gaussian2d | equidistant1d | poisson2d | full (acceleration 1).
   params_json may be NULL or an object with fwhm, acs_frac, center_frac, offset ("fixed"|"random"),
   growth, tolerance. */
RECON_API int recon_mask_generate(const char *kind, size_t height, size_t width, double acceleration,
                                  uint64_t seed, const char *params_json, recon_mask **out);
RECON_API int recon_mask_load(const char *path, recon_mask **out);
RECON_API int recon_mask_save(const recon_mask *m, const char *path);
RECON_API int recon_mask_write_pbm(const recon_mask *m, const char *path);
RECON_API int recon_mask_info(const recon_mask *m, size_t *height, size_t *width, size_t *kept, double *achieved);
/* Header line plus one row: kind, size, requested/achieved acceleration, ACS extent, densities. */
RECON_API int recon_mask_report_csv(const recon_mask *m, char **csv);
RECON_API void recon_mask_free(recon_mask *m);

/* ---- phantoms ---- */

/* Default brain spec at the given size, as JSON. */
RECON_API int recon_phantom_default_spec(size_t height, size_t width, char **json);
/* spec_json NULL selects the default brain. With randomize != 0 the spec is jittered by seed. */
RECON_API int recon_phantom_generate(const char *spec_json, uint64_t seed, int randomize, recon_phantom **out);
/* Writes count randomized phantoms phantom_0000.cks ... into dir using up to jobs threads. */
RECON_API int recon_phantom_generate_set(const char *spec_json, const char *dir, size_t count, uint64_t seed,
                                         size_t jobs);
RECON_API int recon_phantom_load(const char *path, recon_phantom **out);
RECON_API int recon_phantom_save(const recon_phantom *p, const char *path);
RECON_API void recon_phantom_free(recon_phantom *p);

/* ---- records ---- */

RECON_API int recon_record_simulate(const recon_phantom *p, const recon_mask *m, size_t coils, double sigma,
                                    uint64_t seed, const char *id, recon_record **out);
RECON_API int recon_record_load(const char *path, recon_record **out);
RECON_API int recon_record_save(const recon_record *r, const char *path);
RECON_API int recon_record_info(const recon_record *r, size_t *coils, size_t *height, size_t *width,
                                double *acceleration);
/* Ground-truth image the record was simulated from. */
RECON_API int recon_record_reference(const recon_record *r, recon_image **out);
RECON_API void recon_record_free(recon_record *r);

/* ---- models ---- */

/* kind: cirim | rim | irim | varnet */
RECON_API int recon_model_default_config(const char *kind, char **json);
RECON_API int recon_model_create(const char *config_json, uint64_t seed, recon_model **out);
RECON_API int recon_model_load(const char *path, recon_model **out);
RECON_API int recon_model_save(const recon_model *m, const char *path);
RECON_API int recon_model_config(const recon_model *m, char **json);
RECON_API size_t recon_model_parameter_count(const recon_model *m);
RECON_API void recon_model_free(recon_model *m);

/* Receives one CSV line (no line terminator) per epoch and split. */
typedef void (*recon_log_fn)(const char *line, void *user);

/* Trains on every .cks record in data_dir. options_json keys: epochs, seed, loss (l1|ssim|auto), lr,
   val_fraction, printed_weights. The best checkpoint so far is kept at checkpoint_path (may be NULL)
   so a divergence leaves the last good one in place; log_path (may be NULL) receives the training log
   CSV. On success the model holds the best weights. */
RECON_API int recon_train(recon_model *m, const char *data_dir, const char *options_json,
                          const char *checkpoint_path, const char *log_path, recon_log_fn log, void *user);

/* ---- reconstruction ---- */

/* method: zerofill | cs | path to a checkpoint. cs_json may be NULL or hold alpha, max_iter,
   tolerance, levels. */
RECON_API int recon_reconstruct(const char *method, const recon_record *r, const char *cs_json,
                                recon_image **out);
RECON_API int recon_model_reconstruct(recon_model *m, const recon_record *r, recon_image **out);
RECON_API int recon_image_size(const recon_image *img, size_t *height, size_t *width);
/* Copies height*width interleaved (re, im) pairs. */
RECON_API int recon_image_copy(const recon_image *img, double *interleaved, size_t count);
RECON_API int recon_image_export_pgm(const recon_image *img, const char *path);
/* SSIM and PSNR of the image magnitude against the record reference. */
RECON_API int recon_image_quality(const recon_image *img, const recon_record *r, double *ssim, double *psnr_db);
RECON_API void recon_image_free(recon_image *img);

/* ---- evaluation ---- */

/* methods: comma-separated list of zerofill, cs and checkpoint paths. options_json keys: jobs,
   timing, dataset, alpha, max_iter. Writes the metrics CSV to out_csv. */
RECON_API int recon_evaluate(const char *methods, const char *data_dir, const char *options_json,
                             const char *out_csv);

#ifdef __cplusplus
}
#endif

#endif

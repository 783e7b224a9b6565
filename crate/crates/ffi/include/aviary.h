#ifndef AVIARY_H
#define AVIARY_H

/* C declarations for crates/ffi/src/lib.rs. Regenerate with `cbindgen --config cbindgen.toml`. */

#include <stddef.h>
#include <stdint.h>

typedef enum AviaryStatus {
  AVIARY_STATUS_OK = 0,
  AVIARY_STATUS_INVALID_ARGUMENT = 1,
  AVIARY_STATUS_VALIDATION = 2,
  AVIARY_STATUS_CANVAS_TOO_SMALL = 3,
  AVIARY_STATUS_TRAINING_FAILURE = 4,
  AVIARY_STATUS_CONFIGURATION = 5,
  AVIARY_STATUS_MISSING_INPUT = 6,
  AVIARY_STATUS_UNDEFINED_AUC = 7,
  AVIARY_STATUS_IO = 8,
  AVIARY_STATUS_MALFORMED_PNG = 9,
  AVIARY_STATUS_PARSE = 10,
  AVIARY_STATUS_NULL_POINTER = 11,
  AVIARY_STATUS_BUFFER_TOO_SMALL = 12,
  AVIARY_STATUS_PANIC = 13,
} AviaryStatus;

// Opaque image handle.
typedef struct AviaryImage AviaryImage;

// Opaque trained-model handle.
typedef struct AviaryModel AviaryModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *aviary_last_error(void);

// Library version as a static NUL-terminated string.
const char *aviary_version(void);

// Copies `height * width * channels` interleaved values in [0, 1] into a new image.
AviaryStatus aviary_image_new(size_t height,
                              size_t width,
                              size_t channels,
                              const double *data,
                              AviaryImage **out);

AviaryStatus aviary_image_load_png(const char *path, AviaryImage **out);

AviaryStatus aviary_image_save_png(const AviaryImage *image, const char *path);

// Releases an image; null is ignored.
void aviary_image_free(AviaryImage *image);

AviaryStatus aviary_image_shape(const AviaryImage *image,
                                size_t *height,
                                size_t *width,
                                size_t *channels);

// Copies the interleaved pixel values into `buf`, which must hold `len >= h*w*c` doubles.
AviaryStatus aviary_image_data(const AviaryImage *image, double *buf, size_t len);

// Applies a distortion ("rain", "snow", "noise" or "darkness") to a copy of `image`.
AviaryStatus aviary_distort(const AviaryImage *image,
                            const char *kind,
                            double level,
                            uint64_t seed,
                            AviaryImage **out);

// Loads a model file written by `aviary train`.
AviaryStatus aviary_model_load(const char *path, AviaryModel **out);

// Releases a model; null is ignored.
void aviary_model_free(AviaryModel *model);

AviaryStatus aviary_model_num_classes(const AviaryModel *model, size_t *out);

// Name of class `index`; the string lives as long as the model.
AviaryStatus aviary_model_class_name(const AviaryModel *model, size_t index, const char **out);

// Writes per-class scores into `scores` (length `len >= num_classes`) and
// the predicted class index into `label`. Either output may be null.
AviaryStatus aviary_model_predict(const AviaryModel *model,
                                  const AviaryImage *image,
                                  double *scores,
                                  size_t len,
                                  size_t *label);

// Cascade accuracy from stage ratios. Arrays are ordered Small, Medium,
// Large; `priors` null means uniform.
AviaryStatus aviary_analytic_cca_accuracy(double r1_bird,
                                          const double *r2,
                                          const double *a3,
                                          const double *priors,
                                          double *out);

// Size class (0 Small, 1 Medium, 2 Large) of a weight range in grams under the default thresholds.
AviaryStatus aviary_size_class_of(double weight_min, double weight_max, uint32_t *out);

// Flock-size bin index (0 for 5-20 up to 4 for 81-100).
AviaryStatus aviary_bin_flock_size(size_t count, uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AVIARY_H */

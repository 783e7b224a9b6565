#include <math.h>
#include <stdio.h>
#include <string.h>

#include "aviary.h"

#define CHECK(cond)                                                        \
  do {                                                                     \
    if (!(cond)) {                                                         \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond, aviary_last_error()); \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(int argc, char **argv) {
  if (argc < 2) {
    fprintf(stderr, "usage: smoke MODEL.json\n");
    return 2;
  }
  double pixels[4 * 5 * 3];
  for (size_t i = 0; i < sizeof pixels / sizeof pixels[0]; i++) pixels[i] = 0.5;

  AviaryImage *img = NULL;
  CHECK(aviary_image_new(4, 5, 3, pixels, &img) == AVIARY_STATUS_OK);
  size_t h, w, c;
  CHECK(aviary_image_shape(img, &h, &w, &c) == AVIARY_STATUS_OK && h == 4 && w == 5 && c == 3);

  AviaryImage *dark = NULL;
  CHECK(aviary_distort(img, "darkness", 0.5, 1, &dark) == AVIARY_STATUS_OK);
  double out[60];
  CHECK(aviary_image_data(dark, out, 60) == AVIARY_STATUS_OK && fabs(out[7] - 0.25) < 1e-12);
  CHECK(aviary_image_data(dark, out, 10) == AVIARY_STATUS_BUFFER_TOO_SMALL);
  CHECK(strlen(aviary_last_error()) > 0);
  CHECK(aviary_distort(img, "fog", 0.5, 1, &dark) == AVIARY_STATUS_PARSE);

  double r2[3] = {0.97, 0.94, 0.94}, a3[3] = {0.9286, 0.9625, 0.9762}, acc = 0.0;
  CHECK(aviary_analytic_cca_accuracy(1.0, r2, a3, NULL, &acc) == AVIARY_STATUS_OK);
  CHECK(fabs(acc - 0.9077) < 1e-4);

  uint32_t cls = 9;
  CHECK(aviary_size_class_of(530, 1600, &cls) == AVIARY_STATUS_OK && cls == 2);
  CHECK(aviary_bin_flock_size(37, &cls) == AVIARY_STATUS_OK && cls == 1);
  CHECK(aviary_bin_flock_size(3, &cls) == AVIARY_STATUS_INVALID_ARGUMENT);

  AviaryModel *model = NULL;
  CHECK(aviary_model_load(argv[1], &model) == AVIARY_STATUS_OK);
  size_t n = 0, label = 99;
  CHECK(aviary_model_num_classes(model, &n) == AVIARY_STATUS_OK && n == 2);
  double scores[2];
  CHECK(aviary_model_predict(model, img, scores, 2, &label) == AVIARY_STATUS_OK);
  const char *name = NULL;
  CHECK(aviary_model_class_name(model, label, &name) == AVIARY_STATUS_OK);
  printf("%s %s\n", aviary_version(), name);

  aviary_model_free(model);
  aviary_image_free(dark);
  aviary_image_free(img);
  aviary_image_free(NULL);
  return 0;
}

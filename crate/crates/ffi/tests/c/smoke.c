#include <math.h>
#include <stdio.h>
#include "slatkit.h"

#define CHECK(call)                                                            \
  do {                                                                         \
    SlatStatus st_ = (call);                                                   \
    if (st_ != SLAT_STATUS_OK) {                                               \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)st_, slat_last_error());   \
      return 1;                                                                \
    }                                                                          \
  } while (0)

int main(void) {
  SlatScenario *s = NULL;
  SlatRanges *r = NULL;
  SlatEstimateHandle *e = NULL;
  CHECK(slat_scenario_generate(4, 3, 3, 0.0, 2.0, 5, &s));
  CHECK(slat_ranges_exact(s, &r));
  CHECK(slat_batch_run(s, r, "edm-r+mm", &e));
  double fin = -1.0;
  CHECK(slat_estimate_costs(e, NULL, &fin));
  if (slat_estimate_num_points(e) != 6 || !(fin <= 1e-10)) {
    fprintf(stderr, "unexpected estimate: %zu points, cost %g\n", slat_estimate_num_points(e), fin);
    return 1;
  }
  double xy[2];
  double sx[3] = {0.0, 4.0, 0.0}, sy[3] = {0.0, 0.0, 4.0}, sd[3] = {sqrt(2.0), sqrt(10.0), sqrt(10.0)};
  CHECK(slat_locate(sx, sy, sd, 3, SLAT_LOCATE_METHOD_SLCP, 1e6, xy, NULL));
  if (fabs(xy[0] - 1.0) > 1e-5 || fabs(xy[1] - 1.0) > 1e-5) {
    fprintf(stderr, "locate returned %g %g\n", xy[0], xy[1]);
    return 1;
  }
  if (slat_locate(sx, sy, sd, 2, SLAT_LOCATE_METHOD_SLCP, 1e6, xy, NULL) != SLAT_STATUS_INVALID_ARGUMENT ||
      slat_last_error() == NULL) {
    return 1;
  }
  slat_estimate_free(e);
  slat_ranges_free(r);
  slat_scenario_free(s);
  puts("ok");
  return 0;
}

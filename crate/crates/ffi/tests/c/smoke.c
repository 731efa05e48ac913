#include <math.h>
#include <stdio.h>
#include <string.h>

#include "ccf.h"

#define CHECK(cond)                                                  \
  do {                                                               \
    if (!(cond)) {                                                   \
      fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond);     \
      return 1;                                                      \
    }                                                                \
  } while (0)

int main(void) {
  CcfBase *base = NULL;
  CHECK(ccf_base_circle(0.6180339887498949, &base) == CCF_STATUS_OK);

  CcfCocycle *a = NULL;
  const char *v = "{\"kind\": \"trig\", \"terms\": [{\"amp\": 0.3, \"kx\": 1}]}";
  CHECK(ccf_cocycle_schrodinger(base, v, 3.0, &a) == CCF_STATUS_OK);
  double m[4];
  CHECK(ccf_cocycle_eval(a, 0.0, 0.0, m) == CCF_STATUS_OK);
  CHECK(fabs(m[0] - 2.7) < 1e-15 && m[1] == -1.0 && m[2] == 1.0 && m[3] == 0.0);

  CcfVerdict verdict;
  size_t n = 0;
  CHECK(ccf_uh_test(a, &verdict, &n) == CCF_STATUS_OK);
  CHECK(verdict == CCF_VERDICT_UH && n > 0);
  ccf_cocycle_free(a);

  CcfScan *scan = NULL;
  CHECK(ccf_spectrum_scan(base, "{\"kind\": \"constant\", \"value\": 0.0}", -3.0, 3.0, 0.01, &scan) ==
        CCF_STATUS_OK);
  CHECK(ccf_scan_point_count(scan) == 601);
  CHECK(ccf_scan_gap_count(scan) == 2);
  double lo, hi;
  CHECK(ccf_scan_gap(scan, 1, &lo, &hi) == CCF_STATUS_OK);
  CHECK(fabs(lo - 2.0) < 0.01 && isnan(hi));
  CHECK(ccf_scan_gap(scan, 2, &lo, &hi) == CCF_STATUS_INVALID_INPUT);
  CHECK(strstr(ccf_last_error(), "out of range") != NULL);
  ccf_scan_free(scan);

  CHECK(ccf_cocycle_schrodinger(base, "{\"kind\": 1}", 0.0, &a) == CCF_STATUS_JSON);
  CHECK(ccf_uh_test(NULL, &verdict, &n) == CCF_STATUS_NULL_POINTER);
  ccf_base_free(base);

  CHECK(ccf_base_circle(0.5, &base) == CCF_STATUS_RATIONAL);
  printf("ok %s\n", ccf_version());
  return 0;
}

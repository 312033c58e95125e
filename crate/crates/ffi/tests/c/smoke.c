#include <stdio.h>
#include <string.h>
#include "revrank.h"

#define CHECK(call)                                                    \
  do {                                                                 \
    RrStatus st_ = (call);                                             \
    if (st_ != RR_STATUS_OK) {                                         \
      fprintf(stderr, "%s -> %d: %s\n", #call, st_, rr_last_error()); \
      return 1;                                                        \
    }                                                                  \
  } while (0)

static const char *DATA =
    "candidate_id,program_id,score,test_year,attempt_index,major_code,citizen\n"
    "a,LOW,400,2010,1,,\n"
    "a,MID,400,2010,1,,\n"
    "b,LOW,500,2010,1,,\n"
    "b,MID,500,2010,1,,\n"
    "c,HIGH,700,2010,1,,\n"
    "c,MID,700,2010,1,,\n"
    "d,HIGH,750,2010,1,,\n"
    "d,MID,750,2010,1,,\n";

int main(void) {
  RrLoadOptions opts = rr_load_options_default();
  opts.min_reports = 1;
  RrDataset *d = NULL;
  CHECK(rr_dataset_from_csv(DATA, &opts, &d));

  RrRanking *r = NULL;
  CHECK(rr_rank_tournament(d, true, &r));
  size_t n = 0;
  CHECK(rr_ranking_len(r, &n));
  char *top = NULL;
  CHECK(rr_ranking_program_id(r, 0, &top));
  printf("%zu %s\n", n, top);
  int ok = n == 3 && strcmp(top, "HIGH") == 0;
  rr_string_free(top);

  if (rr_ranking_program_id(r, 9, &top) != RR_STATUS_INDEX_OUT_OF_RANGE) return 1;

  double p[] = {0.9, 0.5, 0.1}, v[] = {1.0, 3.0, 10.0}, value = 0.0;
  size_t idx[2], len = 0;
  CHECK(rr_optimal_portfolio(p, v, 3, 2, false, idx, &len, &value));
  printf("portfolio %zu %.6f\n", len, value);

  rr_ranking_free(r);
  rr_dataset_free(d);
  return ok && len > 0 ? 0 : 1;
}

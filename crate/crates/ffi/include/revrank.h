/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef REVRANK_H
#define REVRANK_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum RrStatus {
  RR_STATUS_OK = 0,
  // A required pointer argument was null.
  RR_STATUS_NULL_POINTER = 1,
  RR_STATUS_INVALID_ARGUMENT = 2,
  RR_STATUS_IO = 3,
  // Malformed CSV or JSON input.
  RR_STATUS_PARSE = 4,
  // Input parsed but failed dataset validation.
  RR_STATUS_INVALID_DATA = 5,
  // A statistic is undefined for the input (e.g. too few common programs).
  RR_STATUS_UNDEFINED = 6,
  RR_STATUS_INDEX_OUT_OF_RANGE = 7,
  RR_STATUS_PANIC = 99,
} RrStatus;

// How selection shares are normalized within a score.
typedef enum RrNormalization {
  RR_NORMALIZATION_CANDIDATE_SHARE = 0,
  RR_NORMALIZATION_REPORT_SHARE = 1,
} RrNormalization;

// A cleaned score-report dataset.
typedef struct RrDataset RrDataset;

// An ordered list of programs.
typedef struct RrRanking RrRanking;

// Cleaning options for loading a dataset. Start from
// [`rr_load_options_default`].
typedef struct RrLoadOptions {
  // Programs with fewer reports are dropped.
  size_t min_reports;
  // Keep only each candidate's best-scoring attempt.
  bool best_attempt_only;
  // Treat more than five selections per attempt as an error.
  bool strict_cap;
} RrLoadOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *rr_version(void);

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *rr_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void rr_string_free(char *s);

// Default cleaning: 122-report floor, all attempts, cap violations warn.
struct RrLoadOptions rr_load_options_default(void);

// Reads and cleans a score-report CSV file. `opts` may be null for defaults.
//
// # Safety
// `path` must be a NUL-terminated string; `opts` null or valid; `out` valid.
enum RrStatus rr_dataset_load(const char *path,
                              const struct RrLoadOptions *opts,
                              struct RrDataset **out);

// Like [`rr_dataset_load`], reading CSV text from memory.
//
// # Safety
// `csv` must be a NUL-terminated string; `opts` null or valid; `out` valid.
enum RrStatus rr_dataset_from_csv(const char *csv,
                                  const struct RrLoadOptions *opts,
                                  struct RrDataset **out);

// # Safety
// `d` must be null or a dataset from this library, not yet freed.
void rr_dataset_free(struct RrDataset *d);

// # Safety
// `d` and `out` must be valid.
enum RrStatus rr_dataset_num_reports(const struct RrDataset *d, size_t *out);

// # Safety
// `d` and `out` must be valid.
enum RrStatus rr_dataset_num_programs(const struct RrDataset *d, size_t *out);

// Ranks programs by the m measure.
//
// # Safety
// `d` and `out` must be valid.
enum RrStatus rr_rank_m(const struct RrDataset *d,
                        enum RrNormalization norm,
                        struct RrRanking **out);

// Ranks programs by the recursive m+ count.
//
// # Safety
// `d` and `out` must be valid.
enum RrStatus rr_rank_m_plus(const struct RrDataset *d,
                             enum RrNormalization norm,
                             struct RrRanking **out);

// Ranks programs by tournament wins. With `per_year`, applicants are only
// compared within their test year.
//
// # Safety
// `d` and `out` must be valid.
enum RrStatus rr_rank_tournament(const struct RrDataset *d, bool per_year, struct RrRanking **out);

// Reads a `rank,program_id,metric` ranking CSV.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid.
enum RrStatus rr_ranking_read_csv(const char *path, struct RrRanking **out);

// # Safety
// `r` must be null or a ranking from this library, not yet freed.
void rr_ranking_free(struct RrRanking *r);

// # Safety
// `r` and `out` must be valid.
enum RrStatus rr_ranking_len(const struct RrRanking *r, size_t *out);

// Program id at 0-based position `index`. Free the result with
// [`rr_string_free`].
//
// # Safety
// `r` and `out` must be valid.
enum RrStatus rr_ranking_program_id(const struct RrRanking *r, size_t index, char **out);

// Metric at 0-based position `index`.
//
// # Safety
// `r` and `out` must be valid.
enum RrStatus rr_ranking_metric(const struct RrRanking *r, size_t index, double *out);

// JSON document with entries, tie groups and method. Free the result with
// [`rr_string_free`].
//
// # Safety
// `r` and `out` must be valid.
enum RrStatus rr_ranking_to_json(const struct RrRanking *r, char **out);

// `rank,program_id,metric` CSV text. Free the result with
// [`rr_string_free`].
//
// # Safety
// `r` and `out` must be valid.
enum RrStatus rr_ranking_to_csv(const struct RrRanking *r, char **out);

// Spearman correlation over the programs both rankings contain.
//
// # Safety
// `a`, `b` and `out` must be valid.
enum RrStatus rr_spearman(const struct RrRanking *a, const struct RrRanking *b, double *out);

// Expected utility of applying to `n` programs given as parallel arrays.
//
// # Safety
// Both arrays must hold `n` values (they may be null when `n` is 0).
enum RrStatus rr_expected_utility(const double *admit_probs,
                                  const double *utilities,
                                  size_t n,
                                  double *out);

// Optimal portfolio of at most `budget` applications. Writes the chosen
// program indices in pick order to `out_indices`, which must have room for
// `budget` entries, their count to `out_len` and the value to `out_value`.
//
// # Safety
// Input arrays must hold `n` values; `out_indices` must hold `budget`.
enum RrStatus rr_optimal_portfolio(const double *admit_probs,
                                   const double *utilities,
                                   size_t n,
                                   size_t budget,
                                   bool allow_duplicates,
                                   size_t *out_indices,
                                   size_t *out_len,
                                   double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REVRANK_H */

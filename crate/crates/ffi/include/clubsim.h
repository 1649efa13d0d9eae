#ifndef CLUBSIM_H
#define CLUBSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ClubsimStatus {
  CLUBSIM_STATUS_OK = 0,
  CLUBSIM_STATUS_NULL_POINTER = 1,
  CLUBSIM_STATUS_INVALID_INPUT = 2,
  CLUBSIM_STATUS_NUMERIC_FAILURE = 3,
  CLUBSIM_STATUS_IO = 4,
  CLUBSIM_STATUS_PANIC = 5,
} ClubsimStatus;

typedef enum ClubsimMode {
  CLUBSIM_MODE_DETERMINISTIC = 0,
  CLUBSIM_MODE_STOCHASTIC = 1,
} ClubsimMode;

// A validated scenario.
typedef struct ClubsimScenario ClubsimScenario;

// An equilibrium found by the solver.
typedef struct ClubsimSolution ClubsimSolution;

// Per-round membership counts from a simulation run.
typedef struct ClubsimTrace ClubsimTrace;

// Viability diagnostics for the empty club.
typedef struct ClubsimViability {
  uint64_t contributing_population;
  double sufficient_lhs;
  double sufficient_rhs;
  bool sufficient_holds;
  double necessary_value;
  bool necessary_holds;
  double empty_club_growth_rate;
} ClubsimViability;

// Settings shared by the two sweep entry points. `rounds`, `warmup` and
// `seed` are read only in stochastic mode.
typedef struct ClubsimSweepOptions {
  double q_max;
  size_t steps;
  double kappa;
  enum ClubsimMode mode;
  uint64_t seed;
  size_t rounds;
  size_t warmup;
} ClubsimSweepOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, empty after a success.
// The pointer stays valid until the next library call on the same thread.
const char *clubsim_last_error(void);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void clubsim_string_free(char *s);

// Parses a scenario from its JSON document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer.
enum ClubsimStatus clubsim_scenario_from_json(const char *json, struct ClubsimScenario **out);

// Two peer types over two goods with overlap `q`, constant incentive `kappa`.
//
// # Safety
// `out` must be a writable pointer.
enum ClubsimStatus clubsim_scenario_two_type(double q,
                                             uint64_t n1,
                                             uint64_t n2,
                                             double kappa,
                                             double phi0,
                                             struct ClubsimScenario **out);

// # Safety
// `scenario` must be null or a handle from this library, not yet freed.
void clubsim_scenario_free(struct ClubsimScenario *scenario);

// Number of peer classes, 0 for a null handle.
//
// # Safety
// `scenario` must be null or a live handle.
size_t clubsim_scenario_class_count(const struct ClubsimScenario *scenario);

// Solves for the equilibrium membership. Zero `tolerance` or
// `max_iterations` select the defaults.
//
// # Safety
// `scenario` must be a live handle and `out` a writable pointer.
enum ClubsimStatus clubsim_solve(const struct ClubsimScenario *scenario,
                                 double tolerance,
                                 size_t max_iterations,
                                 struct ClubsimSolution **out);

// # Safety
// `solution` must be null or a handle from this library, not yet freed.
void clubsim_solution_free(struct ClubsimSolution *solution);

// Total equilibrium membership, NaN for a null handle.
//
// # Safety
// `solution` must be null or a live handle.
double clubsim_solution_total(const struct ClubsimSolution *solution);

// Equilibrium membership of class `class`, NaN when out of range.
//
// # Safety
// `solution` must be null or a live handle.
double clubsim_solution_count(const struct ClubsimSolution *solution, size_t class_);

// # Safety
// `solution` must be null or a live handle.
double clubsim_solution_residual(const struct ClubsimSolution *solution);

// # Safety
// `solution` must be null or a live handle.
size_t clubsim_solution_iterations(const struct ClubsimSolution *solution);

// # Safety
// `solution` must be null or a live handle.
bool clubsim_solution_stable(const struct ClubsimSolution *solution);

// Fills `out` with the viability diagnostics of `scenario`.
//
// # Safety
// `scenario` must be a live handle and `out` a writable pointer.
enum ClubsimStatus clubsim_viability(const struct ClubsimScenario *scenario,
                                     struct ClubsimViability *out);

// Simulates `rounds` rounds starting from full membership.
//
// # Safety
// `scenario` must be a live handle and `out` a writable pointer.
enum ClubsimStatus clubsim_simulate(const struct ClubsimScenario *scenario,
                                    size_t rounds,
                                    uint64_t seed,
                                    struct ClubsimTrace **out);

// # Safety
// `trace` must be null or a handle from this library, not yet freed.
void clubsim_trace_free(struct ClubsimTrace *trace);

// Number of recorded rows, the initial state included.
//
// # Safety
// `trace` must be null or a live handle.
size_t clubsim_trace_len(const struct ClubsimTrace *trace);

// Members of `class` after round `round`.
//
// # Safety
// `trace` must be a live handle and `out` a writable pointer.
enum ClubsimStatus clubsim_trace_count(const struct ClubsimTrace *trace,
                                       size_t round,
                                       size_t class_,
                                       uint64_t *out);

// Batch-means estimate of the total membership after `warmup` rounds.
//
// # Safety
// `trace` must be a live handle; `mean` and `stderr` writable pointers.
enum ClubsimStatus clubsim_trace_estimate(const struct ClubsimTrace *trace,
                                          size_t warmup,
                                          double *mean,
                                          double *stderr);

// The trace as CSV text, one row per round.
//
// # Safety
// `trace` must be a live handle and `out` a writable pointer.
enum ClubsimStatus clubsim_trace_csv(const struct ClubsimTrace *trace, char **out);

// Mixing-gain sweep of two populations of sizes `n1` and `n2`, as CSV.
//
// # Safety
// `options` must point to valid settings and `out` be writable.
enum ClubsimStatus clubsim_mixing_gain_csv(const struct ClubsimSweepOptions *options,
                                           uint64_t n1,
                                           uint64_t n2,
                                           char **out);

// Participation of a small second population merged into a club of
// `total` peers, for each of the `n2_len` sizes in `n2_values`, as CSV.
//
// # Safety
// `options` must point to valid settings, `n2_values` to `n2_len` values,
// and `out` be writable.
enum ClubsimStatus clubsim_rescue_csv(const struct ClubsimSweepOptions *options,
                                      const uint64_t *n2_values,
                                      size_t n2_len,
                                      uint64_t total,
                                      char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLUBSIM_H */

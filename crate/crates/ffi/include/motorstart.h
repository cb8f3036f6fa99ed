#ifndef MOTORSTART_H
#define MOTORSTART_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum MsStatus {
  MS_STATUS_OK = 0,
  // A required pointer was null or a string was not UTF-8.
  MS_STATUS_INVALID_ARGUMENT = 1,
  // Input JSON failed to parse or validate.
  MS_STATUS_INPUT_ERROR = 2,
  // No plan satisfies the start constraints.
  MS_STATUS_INFEASIBLE = 3,
  // The search stopped at a limit; a plan may still be returned.
  MS_STATUS_INCOMPLETE = 4,
  // Simulation of the plan did not match the optimizer's predictions.
  MS_STATUS_VALIDATION_FAILED = 5,
  // Model construction, solve or simulation error.
  MS_STATUS_SOLVE_ERROR = 6,
  // A panic was caught at the boundary.
  MS_STATUS_INTERNAL = 7,
} MsStatus;

// Parsed network.
typedef struct MsNetwork MsNetwork;

// Solved restoration plan together with the network it was built on and
// the configuration used to produce it.
typedef struct MsPlan MsPlan;

// Parsed scenario with defaults applied.
typedef struct MsScenario MsScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ms_version(void);

// Message of the most recent failure on this thread, or null. The pointer
// stays valid until the next `ms_*` call on the same thread.
const char *ms_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a pointer obtained from this library that has not
// been freed.
void ms_string_free(char *s);

// Parses and validates a network document.
//
// # Safety
// `json` must be null or NUL-terminated; `out` must be null or writable.
enum MsStatus ms_network_from_json(const char *json, struct MsNetwork **out);

// # Safety
// `net` must be null or a handle from [`ms_network_from_json`] not yet freed.
void ms_network_free(struct MsNetwork *net);

// Parses a scenario document. `config_json` may be null for the default
// configuration; its scenario defaults fill fields the scenario omits.
//
// # Safety
// String arguments must be null or NUL-terminated; `out` must be null or
// writable.
enum MsStatus ms_scenario_from_json(const char *json,
                                    const char *config_json,
                                    struct MsScenario **out);

// # Safety
// `sc` must be null or a handle from [`ms_scenario_from_json`] not yet freed.
void ms_scenario_free(struct MsScenario *sc);

// Builds the restoration model and runs branch and bound.
//
// Returns `MS_STATUS_OK` with a plan when optimality is proven,
// `MS_STATUS_INCOMPLETE` when a limit stopped the search (with a plan if an
// incumbent exists, otherwise `*out` is null) and `MS_STATUS_INFEASIBLE`
// with a null plan when no plan exists.
//
// # Safety
// Handles must be valid; `config_json` must be null or NUL-terminated;
// `out` must be null or writable.
enum MsStatus ms_solve(const struct MsNetwork *net,
                       const struct MsScenario *sc,
                       const char *config_json,
                       struct MsPlan **out);

// # Safety
// `plan` must be null or a handle from [`ms_solve`] not yet freed.
void ms_plan_free(struct MsPlan *plan);

// Writes the weighted objective total of the plan to `*out`.
//
// # Safety
// `plan` must be a valid handle; `out` must be null or writable.
enum MsStatus ms_plan_objective(const struct MsPlan *plan, double *out);

// Writes 1 to `*out` if the search proved optimality, 0 otherwise.
//
// # Safety
// `plan` must be a valid handle; `out` must be null or writable.
enum MsStatus ms_plan_is_optimal(const struct MsPlan *plan, int *out);

// Number of motor starts in the plan.
//
// # Safety
// `plan` must be a valid handle; `out` must be null or writable.
enum MsStatus ms_plan_start_count(const struct MsPlan *plan, uintptr_t *out);

// Serializes the plan as JSON into a new string owned by the caller.
//
// # Safety
// `plan` must be a valid handle; `out` must be null or writable.
enum MsStatus ms_plan_to_json(const struct MsPlan *plan, char **out);

// Exactness report of the relaxation at the returned solution, as JSON.
//
// # Safety
// `plan` must be a valid handle; `out` must be null or writable.
enum MsStatus ms_plan_exactness_json(const struct MsPlan *plan, char **out);

// Simulates every start of the plan and compares it with the optimizer's
// predictions using the configuration the plan was solved with. The
// comparison report is written to `*report_json` (may be null to skip).
// Returns `MS_STATUS_VALIDATION_FAILED` when any start fails.
//
// # Safety
// `plan` must be a valid handle; `report_json` must be null or writable.
enum MsStatus ms_plan_validate(const struct MsPlan *plan, char **report_json);

// Runs the command-line front end with `argc` arguments (the first is the
// program name) and returns its exit code.
//
// # Safety
// `argv` must point to `argc` NUL-terminated strings.
int ms_run_cli(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOTORSTART_H */

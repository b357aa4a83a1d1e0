#ifndef ARCHDISCO_H
#define ARCHDISCO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of instruction codes.
 */
#define ARCHDISCO_INSTRUCTION_COUNT 15

typedef enum ArchdiscoStatus {
  ARCHDISCO_STATUS_OK = 0,
  ARCHDISCO_STATUS_NULL_POINTER = 1,
  ARCHDISCO_STATUS_INVALID_UTF8 = 2,
  ARCHDISCO_STATUS_INVALID_ARGUMENT = 3,
  /**
   * Malformed document or schema violation.
   */
  ARCHDISCO_STATUS_ARCH_MALFORMED = 4,
  /**
   * Well-formed document whose shapes or references do not check out.
   */
  ARCHDISCO_STATUS_ARCH_INVALID = 5,
  ARCHDISCO_STATUS_IO = 6,
  ARCHDISCO_STATUS_SCHEMA_MISMATCH = 7,
  ARCHDISCO_STATUS_DIVERGENCE = 8,
  ARCHDISCO_STATUS_PANIC = 99,
} ArchdiscoStatus;

/**
 * Opaque validated architecture.
 */
typedef struct ArchdiscoArch ArchdiscoArch;

typedef struct ArchdiscoCriteria {
  double pa1;
  double pa2;
  double pe1;
  double pe2;
  double pf;
  double ta1;
  double ta2;
  double te1;
  double te2;
  double tf;
  double ot;
  double ut;
} ArchdiscoCriteria;

typedef struct ArchdiscoMetrics {
  double a1;
  double a2;
  /**
   * kWh-PUE
   */
  double e1;
  /**
   * kWh-PUE
   */
  double e2;
  double fps;
  uint64_t params;
} ArchdiscoMetrics;

typedef struct ArchdiscoWeights {
  double aw;
  double fw;
  double ew;
} ArchdiscoWeights;

typedef struct ArchdiscoScore {
  double cm;
  double ta;
  double va;
  double nf;
  double t_ne;
  double v_ne;
} ArchdiscoScore;

typedef struct ArchdiscoPower {
  double cpu_watts;
  double ram_watts;
  double gpu_watts;
  uint32_t gpu_count;
} ArchdiscoPower;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Free with
 * `archdisco_string_free`.
 */
char *archdisco_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void archdisco_string_free(char *s);

/**
 * Static code (e.g. "ACL") of instruction `index` in canonical order, or
 * NULL when out of range. Do not free.
 */
const char *archdisco_instruction_code(size_t index);

/**
 * Parse and validate a JSON architecture document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum ArchdiscoStatus archdisco_arch_parse(const char *json, struct ArchdiscoArch **out_arch);

/**
 * # Safety
 * `arch` must be NULL or a handle from `archdisco_arch_parse`, not yet freed.
 */
void archdisco_arch_free(struct ArchdiscoArch *arch);

/**
 * # Safety
 * `arch` must be a live handle; `out_params` a valid pointer.
 */
enum ArchdiscoStatus archdisco_arch_params(const struct ArchdiscoArch *arch, uint64_t *out_params);

/**
 * Multiply-accumulate count of the convolution and dense layers.
 *
 * # Safety
 * `arch` must be a live handle; `out_flops` a valid pointer.
 */
enum ArchdiscoStatus archdisco_arch_flops(const struct ArchdiscoArch *arch, uint64_t *out_flops);

/**
 * Canonical JSON of the architecture. Free with `archdisco_string_free`.
 *
 * # Safety
 * `arch` must be a live handle; `out_json` a valid pointer.
 */
enum ArchdiscoStatus archdisco_arch_to_json(const struct ArchdiscoArch *arch, char **out_json);

/**
 * Priorities and thresholds of experiment setting `n` (1-5).
 *
 * # Safety
 * `out_criteria` must be a valid pointer.
 */
enum ArchdiscoStatus archdisco_preset(uint32_t n, struct ArchdiscoCriteria *out_criteria);

/**
 * Instruction weights for `metrics`, written to 15 doubles in canonical order.
 *
 * # Safety
 * `metrics`, `criteria` valid pointers; `out_weights` points to 15 doubles.
 */
enum ArchdiscoStatus archdisco_generate_instructions(const struct ArchdiscoMetrics *metrics,
                                                     const struct ArchdiscoCriteria *criteria,
                                                     double *out_weights);

/**
 * Conflict-free instructions, heaviest first. `out_indices` and
 * `out_weights` must each hold 15 entries; `out_len` receives the count.
 *
 * # Safety
 * `weights` points to 15 doubles; the out pointers are valid as described.
 */
enum ArchdiscoStatus archdisco_resolve_conflicts(const double *weights,
                                                 uint32_t *out_indices,
                                                 double *out_weights,
                                                 size_t *out_len);

/**
 * Combined effectiveness of `metrics`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ArchdiscoStatus archdisco_score(const struct ArchdiscoMetrics *metrics,
                                     const struct ArchdiscoCriteria *criteria,
                                     const struct ArchdiscoWeights *weights,
                                     struct ArchdiscoScore *out_score);

/**
 * Energy in kWh-PUE for `hours` under `power`; NULL uses the default profile.
 *
 * # Safety
 * `power` NULL or valid; `out_kwh` valid.
 */
enum ArchdiscoStatus archdisco_energy_kwh_pue(double hours,
                                              const struct ArchdiscoPower *power,
                                              double *out_kwh);

/**
 * Pounds of CO2 for `kwh` kWh-PUE.
 */
double archdisco_co2_lbs(double kwh);

/**
 * Replay a trajectory file. On success `out_best_index` is the best
 * iteration or -1. Divergent iterations are listed in the error message.
 *
 * # Safety
 * `path` a NUL-terminated string; `out_best_index` valid.
 */
enum ArchdiscoStatus archdisco_replay(const char *path, int64_t *out_best_index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARCHDISCO_H */

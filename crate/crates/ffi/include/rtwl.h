#ifndef RTWL_H
#define RTWL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RtwlStatus {
  RTWL_STATUS_OK = 0,
  RTWL_STATUS_NULL_POINTER = 1,
  RTWL_STATUS_INVALID_UTF8 = 2,
  RTWL_STATUS_INVALID_INPUT = 3,
  RTWL_STATUS_PRECONDITION = 4,
  RTWL_STATUS_BUDGET = 5,
  RTWL_STATUS_NOT_FOUND = 6,
  RTWL_STATUS_BUFFER_TOO_SMALL = 7,
  RTWL_STATUS_PANIC = 8,
} RtwlStatus;

/**
 * Opaque handle to a coloring table. Free with [`rtwl_psi_free`].
 */
typedef struct RtwlPsiTable RtwlPsiTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *rtwl_last_error(void);

/**
 * Parses a whitespace grid (rows = first coordinate, `.` = undefined).
 * `n_colors == 0` takes the largest entry plus one.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a writable pointer.
 */
enum RtwlStatus rtwl_psi_from_grid(const char *text, uint32_t n_colors, struct RtwlPsiTable **out);

/**
 * # Safety
 * `psi` must come from [`rtwl_psi_from_grid`] and not be freed twice.
 */
void rtwl_psi_free(struct RtwlPsiTable *psi);

/**
 * Number of colors, or 0 for NULL.
 *
 * # Safety
 * `psi` must be NULL or a live handle.
 */
uint32_t rtwl_psi_n_colors(const struct RtwlPsiTable *psi);

/**
 * Number of cells, or 0 for NULL.
 *
 * # Safety
 * `psi` must be NULL or a live handle.
 */
size_t rtwl_psi_cells(const struct RtwlPsiTable *psi);

/**
 * Whether the color set satisfies (∗) for the table.
 *
 * # Safety
 * `colors` must point to `len` values, `psi` must be live and `out` writable.
 */
enum RtwlStatus rtwl_star_holds_for(const struct RtwlPsiTable *psi,
                                    const uint32_t *colors,
                                    size_t len,
                                    bool strict,
                                    bool *out);

/**
 * Searches color sets up to `max_size` for a (∗)-witness. On success the
 * colors go to `out_colors` (capacity `cap`) and their count to `out_len`.
 * Returns `NotFound` when no witness exists up to that size and `Budget`
 * when `budget` search nodes run out.
 *
 * # Safety
 * `psi` must be live, `out_colors` must have room for `cap` values and
 * `out_len` must be writable.
 */
enum RtwlStatus rtwl_find_star_witness(const struct RtwlPsiTable *psi,
                                       size_t max_size,
                                       bool strict,
                                       uint64_t budget,
                                       uint32_t *out_colors,
                                       size_t cap,
                                       size_t *out_len);

/**
 * Runs the non-reducibility case split and writes the JSON report to
 * `out`. Release the string with [`rtwl_string_free`].
 *
 * # Safety
 * `ks` must point to `arity` values and `out` must be writable.
 */
enum RtwlStatus rtwl_verify_json(const uint32_t *ks,
                                 size_t arity,
                                 uint32_t n_colors,
                                 size_t workers,
                                 char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void rtwl_string_free(char *s);

/**
 * Maps a tuple of solutions of the factors back to a cascade solution.
 *
 * # Safety
 * `a` and `ks` must each point to `n` values and `out` must be writable.
 */
enum RtwlStatus rtwl_cascade_backward(const uint32_t *a,
                                      const uint32_t *ks,
                                      size_t n,
                                      uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RTWL_H */

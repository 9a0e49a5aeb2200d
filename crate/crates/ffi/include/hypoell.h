#ifndef HYPOELL_H
#define HYPOELL_H

#include <stddef.h>
#include <stdint.h>

typedef enum HypoellStatus {
  HYPOELL_STATUS_OK = 0,
  HYPOELL_STATUS_NULL_POINTER = 1,
  HYPOELL_STATUS_INVALID_ARGUMENT = 2,
  HYPOELL_STATUS_NOT_HYPOELLIPTIC = 3,
  HYPOELL_STATUS_NUMERICAL = 4,
  HYPOELL_STATUS_BUFFER_TOO_SMALL = 5,
  HYPOELL_STATUS_PANIC = 6,
} HypoellStatus;

/**
 * Constant-coefficient operator `Tr(Q D^2) + <Bx, D>`.
 */
typedef struct HypoellOperator HypoellOperator;

/**
 * Result of the hypoellipticity analysis.
 */
typedef struct HypoellReport HypoellReport;

/**
 * `f(y, n, user)`; must be safe to call from several threads.
 */
typedef double (*HypoellDatumFn)(const double *y, size_t n, void *user);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *hypoell_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hypoell_version(void);

/**
 * Creates an operator from row-major `Q` (symmetric PSD) and `B`.
 *
 * # Safety
 * `q` and `b` must point to `n * n` doubles; `out` must be writable.
 */
enum HypoellStatus hypoell_operator_new(size_t n,
                                        const double *q,
                                        const double *b,
                                        struct HypoellOperator **out);

/**
 * # Safety
 * `op` must come from [`hypoell_operator_new`] and not be used afterwards.
 */
void hypoell_operator_free(struct HypoellOperator *op);

/**
 * Dimension `N` of the operator.
 *
 * # Safety
 * `op` must be a live handle and `out` writable.
 */
enum HypoellStatus hypoell_operator_dim(const struct HypoellOperator *op, size_t *out);

/**
 * Block sizes `(p_0, ..., p_r)` of the adapted basis. Writes at most `cap`
 * entries and always sets `len`; returns `BufferTooSmall` when `cap < len`.
 *
 * # Safety
 * `sizes` must have room for `cap` entries; `len` must be writable.
 */
enum HypoellStatus hypoell_operator_block_sizes(const struct HypoellOperator *op,
                                                size_t *sizes,
                                                size_t cap,
                                                size_t *len);

/**
 * Controllability Gramian `Q_t`, written row-major into `out` (`n * n`).
 *
 * # Safety
 * `op` must be a live handle; `out` must have room for `n * n` doubles.
 */
enum HypoellStatus hypoell_gramian(const struct HypoellOperator *op, double t, double *out);

/**
 * Runs the five hypoellipticity characterizations.
 *
 * # Safety
 * `op` must be a live handle, `probe_times` must hold `n_times` doubles and
 * `out` must be writable.
 */
enum HypoellStatus hypoell_analyze(const struct HypoellOperator *op,
                                   const double *probe_times,
                                   size_t n_times,
                                   struct HypoellReport **out);

/**
 * # Safety
 * `r` must come from [`hypoell_analyze`] and not be used afterwards.
 */
void hypoell_report_free(struct HypoellReport *r);

/**
 * `hypoelliptic` is set to 1 when the characterizations agree and hold.
 *
 * # Safety
 * `r` must be a live report; the out-pointers must be writable.
 */
enum HypoellStatus hypoell_report_summary(const struct HypoellReport *r,
                                          int32_t *hypoelliptic,
                                          int32_t *consistent,
                                          size_t *kalman_rank);

/**
 * `2 q_h(beta)`, an integer since `q_h` takes half-integer values.
 *
 * # Safety
 * `beta` must hold `len` entries; `twice_out` must be writable.
 */
enum HypoellStatus hypoell_qh_twice(const uint32_t *beta,
                                    size_t len,
                                    uint32_t h,
                                    int64_t *twice_out);

/**
 * `T(t) f (x)` with the exact Gaussian kernel; `f` is evaluated through the
 * callback.
 *
 * # Safety
 * `op` must be a live handle, `x` must hold `N` doubles, `out` must be
 * writable, and `f` must be callable with `user` from any thread.
 */
enum HypoellStatus hypoell_ou_apply(const struct HypoellOperator *op,
                                    double t,
                                    const double *x,
                                    HypoellDatumFn f,
                                    void *user,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPOELL_H */

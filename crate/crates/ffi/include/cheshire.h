#ifndef CHESHIRE_H
#define CHESHIRE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define CHS_ARM_I 0

#define CHS_ARM_II 1

#define CHS_OBSERVABLE_PROJECTOR 0

#define CHS_OBSERVABLE_SIGMA_X 1

// Result of every fallible call.
typedef enum ChsStatus {
  CHS_STATUS_OK = 0,
  CHS_STATUS_NULL_POINTER = 1,
  CHS_STATUS_INVALID_ARGUMENT = 2,
  CHS_STATUS_VALIDATION = 3,
  CHS_STATUS_CAPACITY = 4,
  CHS_STATUS_NUMERICAL = 5,
  CHS_STATUS_PANIC = 6,
} ChsStatus;

// Monte Carlo trial batch.
typedef struct ChsBatch ChsBatch;

// Pre/postselection context.
typedef struct ChsContext ChsContext;

// Hermitian observable on a context's subsystems.
typedef struct ChsObservable ChsObservable;

// Gaussian-superposition pointer state.
typedef struct ChsPointer ChsPointer;

typedef struct ChsWeakMeasurement {
  // Zero when the postselection is orthogonal and the weak value undefined.
  uint8_t has_weak_value;
  double weak_value_re;
  double weak_value_im;
  double transition_element_re;
  double transition_element_im;
  double postselect_prob_unperturbed;
  double postselect_prob;
  double g;
} ChsWeakMeasurement;

typedef struct ChsLinearResponse {
  double weak_value_re;
  double weak_value_im;
  double exact_shift;
  double predicted_shift;
  double abs_error;
} ChsLinearResponse;

typedef struct ChsQccConfig {
  uint32_t observable_i;
  uint32_t observable_ii;
  double g_i;
  double g_ii;
  double pointer_width;
  uint32_t flipped_arm;
} ChsQccConfig;

typedef struct ChsQccReport {
  double wv_pi_i_re;
  double wv_pi_i_im;
  double wv_sigma_i_re;
  double wv_sigma_i_im;
  double wv_pi_ii_re;
  double wv_pi_ii_im;
  double wv_sigma_ii_re;
  double wv_sigma_ii_im;
  double shift_i;
  double shift_ii;
  double postselect_prob;
  double margin_i;
  double margin_ii;
  uint8_t warning;
} ChsQccReport;

typedef struct ChsIntensityReport {
  double i0;
  double i_perturbed;
  double ratio;
  double first_order_prediction;
  double second_order_prediction;
  uint8_t has_inferred_weak_value;
  double inferred_weak_value;
  double expansion_error;
} ChsIntensityReport;

typedef struct ChsEstimatorReport {
  double mean_shift;
  double std_error;
  double estimated_wv_re;
  double postselect_rate;
  uint64_t n_total;
  uint64_t n_postselected;
} ChsEstimatorReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version string of the library; static, never freed.
const char *chs_version(void);

// Message for the last failed call on this thread; empty after a success.
// Valid until the next `chs_*` call on the same thread.
const char *chs_last_error_message(void);

// Copies the last error message into `buf` (NUL-terminated, truncated to
// `cap`). Returns the full message length excluding the terminator.
uintptr_t chs_last_error_copy(char *buf, uintptr_t cap);

// The QCC pre/postselection with spin flipped on arm II.
enum ChsStatus chs_context_qcc(struct ChsContext **out);

// The QCC context with the postselected spin flipped on `flipped_arm`.
enum ChsStatus chs_context_qcc_flipped(uint32_t flipped_arm, struct ChsContext **out);

// Spin preselected along +z, postselected at angle `atan(tan_theta)`.
enum ChsStatus chs_context_tilted_spin(double tan_theta, struct ChsContext **out);

// Context on one subsystem of dimension `dim` from pre and post
// amplitudes. Imaginary parts may be null.
enum ChsStatus chs_context_new(uintptr_t dim,
                               const double *pre_re,
                               const double *pre_im,
                               const double *post_re,
                               const double *post_im,
                               struct ChsContext **out);

void chs_context_free(struct ChsContext *ctx);

// `|<χ|ψ>|²` without coupling.
enum ChsStatus chs_context_postselect_prob(const struct ChsContext *ctx, double *out);

enum ChsStatus chs_observable_qcc(uint32_t arm_code, uint32_t kind, struct ChsObservable **out);

// σx on the spin of a tilted-spin context.
enum ChsStatus chs_observable_spin_sigma_x(struct ChsObservable **out);

// Hermitian observable for contexts made with [`chs_context_new`];
// `re`/`im` hold the `dim × dim` matrix in row-major order, `im` may be null.
enum ChsStatus chs_observable_new(uintptr_t dim,
                                  const double *re,
                                  const double *im,
                                  struct ChsObservable **out);

void chs_observable_free(struct ChsObservable *obs);

// `A^w = <χ|A|ψ> / <χ|ψ>`.
enum ChsStatus chs_weak_value(const struct ChsContext *ctx,
                              const struct ChsObservable *obs,
                              double *out_re,
                              double *out_im);

enum ChsStatus chs_pointer_gaussian(double center, double width, struct ChsPointer **out);

void chs_pointer_free(struct ChsPointer *p);

enum ChsStatus chs_pointer_mean_position(const struct ChsPointer *p, double *out);

enum ChsStatus chs_pointer_norm_sqr(const struct ChsPointer *p, double *out);

// `|φ(x)|²`.
enum ChsStatus chs_pointer_density(const struct ChsPointer *p, double x, double *out);

// Exact coupling of strength `g` followed by postselection. When
// `out_pointer` is non-null it receives the unnormalized final pointer.
enum ChsStatus chs_couple_and_postselect(const struct ChsContext *ctx,
                                         const struct ChsObservable *obs,
                                         const struct ChsPointer *pointer,
                                         double g,
                                         struct ChsWeakMeasurement *out,
                                         struct ChsPointer **out_pointer);

enum ChsStatus chs_linear_response(const struct ChsContext *ctx,
                                   const struct ChsObservable *obs,
                                   const struct ChsPointer *pointer,
                                   double g,
                                   struct ChsLinearResponse *out);

enum ChsStatus chs_qcc_config_default(struct ChsQccConfig *out);

enum ChsStatus chs_run_ideal_qcc(const struct ChsQccConfig *cfg, struct ChsQccReport *out);

// Absorber `e^{-m}` on `arm_code` in the QCC interferometer.
enum ChsStatus chs_intensity_absorber(uint32_t arm_code, double m, struct ChsIntensityReport *out);

// Spin rotation by `alpha` about x on `arm_code`.
enum ChsStatus chs_intensity_magnetic(uint32_t arm_code,
                                      double alpha,
                                      struct ChsIntensityReport *out);

// Samples `n` seeded trials; the result does not depend on thread count.
enum ChsStatus chs_sample_trials(const struct ChsContext *ctx,
                                 const struct ChsObservable *obs,
                                 const struct ChsPointer *pointer,
                                 double g,
                                 uint64_t n,
                                 uint64_t seed,
                                 struct ChsBatch **out);

void chs_batch_free(struct ChsBatch *b);

enum ChsStatus chs_batch_counts(const struct ChsBatch *b,
                                uint64_t *n_total,
                                uint64_t *n_postselected);

// Copies up to `cap` postselected readouts into `buf`; `written` receives
// the number copied. Pass `cap = 0` to query the count only.
enum ChsStatus chs_batch_positions(const struct ChsBatch *b,
                                   double *buf,
                                   uintptr_t cap,
                                   uintptr_t *written);

enum ChsStatus chs_estimate_weak_value(const struct ChsBatch *b,
                                       const struct ChsPointer *pointer,
                                       double g,
                                       struct ChsEstimatorReport *out);

// Reads a NUL-terminated arm name (`I`, `II`, `1`, `2`) into an arm code.
enum ChsStatus chs_parse_arm(const char *name, uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHESHIRE_H */

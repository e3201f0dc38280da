#ifndef SSV_H
#define SSV_H

/* Regenerate with: cbindgen --config cbindgen.toml --crate ssv-ffi -o include/ssv.h */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SsvStatus {
  SSV_STATUS_OK = 0,
  SSV_STATUS_NULL_POINTER = 1,
  SSV_STATUS_INVALID_ARGUMENT = 2,
  SSV_STATUS_RESONANCE = 3,
  SSV_STATUS_OVERFLOW = 4,
  SSV_STATUS_DATA_ERROR = 5,
  SSV_STATUS_BUFFER_TOO_SMALL = 6,
  SSV_STATUS_PANIC = 7,
  SSV_STATUS_FAILURE = 8,
} SsvStatus;

/**
 * Trained sentence classifier (opaque).
 */
typedef struct SsvClassifier SsvClassifier;

/**
 * Estimation result (opaque).
 */
typedef struct SsvFit SsvFit;

/**
 * Observation series (opaque).
 */
typedef struct SsvSeries SsvSeries;

typedef struct SsvParamsC {
  double lambda_s;
  double mu_s;
  double sigma_s;
  double mu_p;
  double mu_v;
  double gamma_v;
  double beta_v;
  double sigma_v;
  double rho_pv;
  double rho_sv;
} SsvParamsC;

typedef struct SsvMomentsC {
  double t;
  double e_s;
  double var_s;
  double e_v;
  double var_v;
  double cov_sv;
  /**
   * NaN when either variance vanishes.
   */
  double rho_sv;
  /**
   * 0: closed form, 1: numerical integration.
   */
  int32_t source;
} SsvMomentsC;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

const char *ssv_last_error_message(void);

SsvStatus ssv_params_default(SsvParamsC *out);

SsvStatus ssv_moments(const SsvParamsC *params, double s0, double v0, double t, SsvMomentsC *out);

SsvStatus ssv_simulate(const SsvParamsC *params,
                       double s0,
                       double p0,
                       double v0,
                       double dt,
                       size_t n_bars,
                       size_t m_substeps,
                       uint64_t seed,
                       SsvSeries **out);

SsvStatus ssv_series_new(const double *values,
                         size_t n_rows,
                         size_t channels,
                         double dt,
                         SsvSeries **out);

size_t ssv_series_rows(const SsvSeries *series);

SsvStatus ssv_series_channel(const SsvSeries *series, size_t channel, double *buf, size_t buf_len);

void ssv_series_free(SsvSeries *series);

SsvStatus ssv_fit(const SsvSeries *series, const char *config_json, SsvFit **out);

int32_t ssv_fit_converged(const SsvFit *fit);

double ssv_fit_loglik(const SsvFit *fit);

SsvStatus ssv_fit_params(const SsvFit *fit, double *buf, size_t buf_len, size_t *n_out);

SsvStatus ssv_fit_to_json(const SsvFit *fit, char **out);

void ssv_fit_free(SsvFit *fit);

void ssv_string_free(char *s);

SsvStatus ssv_document_score(size_t n_sentences, size_t n_pos, size_t n_neg, double *out);

SsvStatus ssv_vix_to_logvar(double quote, int32_t convention, double *out);

SsvStatus ssv_classifier_load(const char *path, SsvClassifier **out);

SsvStatus ssv_classifier_predict(const SsvClassifier *clf, const char *text, int32_t *label);

SsvStatus ssv_classifier_score_document(const SsvClassifier *clf, const char *text, double *score);

void ssv_classifier_free(SsvClassifier *clf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSV_H */

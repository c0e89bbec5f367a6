/* C interface to the dp4d library. All functions return a status code; on
 * failure dp4d_last_error() describes the problem (thread-local, valid until
 * the next call on the same thread). Strings returned through char** are
 * owned by the caller and released with dp4d_string_free. */
#ifndef DP4D_H
#define DP4D_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DP4D_API __declspec(dllexport)
#else
#define DP4D_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dp4d_status {
    DP4D_OK = 0,
    DP4D_INVALID_ARGUMENT = 1,
    DP4D_CONFIG = 2,
    DP4D_NUMERICAL = 3,
    DP4D_IO = 4,
    DP4D_PARSE = 5,
    DP4D_INTERNAL = 6
} dp4d_status;

typedef struct dp4d_constellation dp4d_constellation;
typedef struct dp4d_trace dp4d_trace;
typedef struct dp4d_cloud dp4d_cloud;
typedef struct dp4d_sweep dp4d_sweep;

typedef struct dp4d_link {
    double alpha_db_per_km;
    double dispersion_ps_nm_km;
    double gamma_per_w_km;
    double span_length_km;
    double edfa_noise_figure_db;
    double center_wavelength_nm;
} dp4d_link;

typedef struct dp4d_tx {
    double symbol_rate_gbaud;
    double rrc_rolloff;
    int num_channels;
} dp4d_tx;

typedef struct dp4d_moments {
    double mu2_x, mu2_y;
    double phi_x, phi_y;
    double psi_x, psi_y;
    double xpol4;
} dp4d_moments;

/* Coefficients in 1/W^2 per polarization; rel_error is the integration
 * error estimate. */
typedef struct dp4d_nli {
    double chi0[2], chi_phi[2], chi_psi[2], chi_xpol[2];
    double gamma_eff_per_w_m;
    double rel_error;
    int n_spans;
} dp4d_nli;

typedef struct dp4d_noise {
    double var_x, var_y;
    double p_ase;
    double p_nli_x, p_nli_y;
    double launch_power_w;
} dp4d_noise;

typedef struct dp4d_air {
    double rate_bit_per_4d;
    double std_error; /* NaN for quadrature estimates */
    uint64_t nodes_or_samples;
    dp4d_noise noise;
} dp4d_air;

typedef struct dp4d_optimizer_options {
    int max_iterations;
    double gradient_tolerance;
    int points_per_dim;
    uint64_t seed;
    int fixed_covariance_gradient; /* 0: total gradient */
} dp4d_optimizer_options;

typedef struct dp4d_trace_record {
    int iteration;
    double objective;
    double grad_norm;
    double p_opt_dbm;
    double snr_db;
    double step;
} dp4d_trace_record;

typedef struct dp4d_sim_options {
    int symbols_per_run;
    int samples_per_symbol;
    int steps_per_span;
    uint64_t seed;
    int ase_off;
} dp4d_sim_options;

typedef struct dp4d_sweep_row {
    int n_spans;
    double distance_km;
    double p_opt_dbm;
    double snr_4d_db;
    double air_bit_per_4d;
} dp4d_sweep_row;

DP4D_API const char* dp4d_version(void);
DP4D_API const char* dp4d_last_error(void);
DP4D_API void dp4d_string_free(char* s);

DP4D_API void dp4d_link_default(dp4d_link* out);
DP4D_API void dp4d_tx_default(dp4d_tx* out);
DP4D_API void dp4d_optimizer_default(dp4d_optimizer_options* out);
DP4D_API void dp4d_sim_default(dp4d_sim_options* out);
DP4D_API dp4d_status dp4d_set_cache_dir(const char* dir);

/* Newline-separated catalog names. */
DP4D_API dp4d_status dp4d_catalog_names(char** out);

/* Catalog name, "pm:<2D file>" or a 4D file path; normalized to unit energy. */
DP4D_API dp4d_status dp4d_constellation_from_format(const char* spec, dp4d_constellation** out);
/* m points given as 4m doubles, point-major. Not normalized. */
DP4D_API dp4d_status dp4d_constellation_from_points(const char* name, const double* coords, size_t m,
                                                     dp4d_constellation** out);
DP4D_API void dp4d_constellation_free(dp4d_constellation* c);
DP4D_API size_t dp4d_constellation_size(const dp4d_constellation* c);
DP4D_API const char* dp4d_constellation_name(const dp4d_constellation* c);
DP4D_API dp4d_status dp4d_constellation_points(const dp4d_constellation* c, double* coords);
DP4D_API dp4d_status dp4d_constellation_save(const dp4d_constellation* c, const char* path);
DP4D_API dp4d_status dp4d_moments_of(const dp4d_constellation* c, dp4d_moments* out);
DP4D_API dp4d_status dp4d_energy_level_count(const dp4d_constellation* c, double tol, size_t* out);

DP4D_API dp4d_status dp4d_ase_power(const dp4d_link* link, const dp4d_tx* tx, int n_spans, double* out_w);
DP4D_API dp4d_status dp4d_nli_coefficients(const dp4d_link* link, const dp4d_tx* tx, int n_spans, dp4d_nli* out);
DP4D_API dp4d_status dp4d_optimal_launch(const dp4d_constellation* c, const dp4d_link* link, const dp4d_tx* tx,
                                         int n_spans, double* p_opt_dbm, double* snr_4d_db);

/* Gauss-Hermite AIR under isotropic Gaussian noise of the given 4D SNR. */
DP4D_API dp4d_status dp4d_air_awgn(const dp4d_constellation* c, double snr_4d_db, int points_per_dim,
                                   dp4d_air* out);
/* Model AIR after n_spans; a NaN launch power selects the optimum. */
DP4D_API dp4d_status dp4d_air_link(const dp4d_constellation* c, const dp4d_link* link, const dp4d_tx* tx,
                                   int n_spans, double launch_power_dbm, int points_per_dim, dp4d_air* out);

DP4D_API dp4d_status dp4d_optimize(const dp4d_constellation* seed, const dp4d_link* link, const dp4d_tx* tx,
                                   int n_spans, const dp4d_optimizer_options* opt, dp4d_constellation** best,
                                   dp4d_trace** trace);
DP4D_API void dp4d_trace_free(dp4d_trace* t);
DP4D_API size_t dp4d_trace_length(const dp4d_trace* t);
DP4D_API dp4d_status dp4d_trace_record_at(const dp4d_trace* t, size_t i, dp4d_trace_record* out);
DP4D_API const char* dp4d_trace_status(const dp4d_trace* t);

DP4D_API dp4d_status dp4d_simulate(const dp4d_constellation* c, const dp4d_link* link, const dp4d_tx* tx, int n_spans,
                                   double launch_power_dbm, const dp4d_sim_options* opt, dp4d_cloud** out);
DP4D_API void dp4d_cloud_free(dp4d_cloud* cl);
DP4D_API size_t dp4d_cloud_size(const dp4d_cloud* cl);
DP4D_API dp4d_status dp4d_cloud_snr(const dp4d_cloud* cl, double* snr_x_db, double* snr_y_db, double* snr_4d_db);
DP4D_API dp4d_status dp4d_cloud_air(const dp4d_cloud* cl, const dp4d_constellation* c, dp4d_air* out);

DP4D_API dp4d_status dp4d_sweep_model(const dp4d_constellation* c, const dp4d_link* link, const dp4d_tx* tx,
                                      const int* spans, size_t count, int points_per_dim, dp4d_sweep** out);
DP4D_API void dp4d_sweep_free(dp4d_sweep* s);
DP4D_API size_t dp4d_sweep_length(const dp4d_sweep* s);
DP4D_API dp4d_status dp4d_sweep_row_at(const dp4d_sweep* s, size_t i, dp4d_sweep_row* out);
DP4D_API dp4d_status dp4d_sweep_reach(const dp4d_sweep* s, double rate_threshold, double* reach_km);

/* Declarative runs. run_dir may be NULL (no artifacts). The summary table is
 * returned through summary when it is not NULL. */
DP4D_API dp4d_status dp4d_run_config_json(const char* json, const char* run_dir, char** summary);
DP4D_API dp4d_status dp4d_run_config_file(const char* path, const char* run_dir, char** summary);

#ifdef __cplusplus
}
#endif

#endif

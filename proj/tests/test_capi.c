/* Exercises the shared library through its C header only. */

#include "dp4d/dp4d.h"

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static int failures = 0;

#define EXPECT(cond)                                                         \
    do {                                                                     \
        if (!(cond)) {                                                       \
            fprintf(stderr, "%s:%d: failed: %s\n", __FILE__, __LINE__, #cond); \
            ++failures;                                                      \
        }                                                                    \
    } while (0)

static void test_constellations(void)
{
    dp4d_constellation* c = NULL;
    EXPECT(dp4d_constellation_from_format("pm-16qam", &c) == DP4D_OK);
    EXPECT(dp4d_constellation_size(c) == 256);
    EXPECT(strcmp(dp4d_constellation_name(c), "pm-16qam") == 0);

    double* pts = malloc(4 * 256 * sizeof(double));
    EXPECT(dp4d_constellation_points(c, pts) == DP4D_OK);
    double e = 0.0;
    for (int i = 0; i < 4 * 256; ++i) e += pts[i] * pts[i];
    EXPECT(fabs(e / 256.0 - 1.0) < 1e-12);
    free(pts);

    dp4d_moments m;
    EXPECT(dp4d_moments_of(c, &m) == DP4D_OK);
    EXPECT(fabs(m.mu2_x - 0.5) < 1e-12);
    size_t levels = 0;
    EXPECT(dp4d_energy_level_count(c, 0.01, &levels) == DP4D_OK);
    EXPECT(levels == 5);
    dp4d_constellation_free(c);

    /* Raw points are kept as given. */
    const double pair[8] = {3, 0, 0, 0, -3, 0, 0, 0};
    EXPECT(dp4d_constellation_from_points("pair", pair, 2, &c) == DP4D_OK);
    double back[8];
    dp4d_constellation_points(c, back);
    EXPECT(back[0] == 3.0);
    dp4d_constellation_free(c);

    c = (dp4d_constellation*)0x1;
    EXPECT(dp4d_constellation_from_format("no-such-format", &c) != DP4D_OK);
    EXPECT(c == NULL);
    EXPECT(strstr(dp4d_last_error(), "no-such-format") != NULL);
    EXPECT(dp4d_constellation_from_format(NULL, &c) == DP4D_INVALID_ARGUMENT);

    char* names = NULL;
    EXPECT(dp4d_catalog_names(&names) == DP4D_OK);
    EXPECT(strstr(names, "4d-64prs") != NULL);
    dp4d_string_free(names);
}

static void test_model(void)
{
    dp4d_link link;
    dp4d_tx tx;
    dp4d_link_default(&link);
    dp4d_tx_default(&tx);
    EXPECT(link.alpha_db_per_km == 0.2 && link.span_length_km == 100.0 && link.edfa_noise_figure_db == 5.0);
    EXPECT(tx.symbol_rate_gbaud == 50.0 && tx.num_channels == 1);

    double p_ase = 0.0;
    EXPECT(dp4d_ase_power(&link, &tx, 10, &p_ase) == DP4D_OK);
    EXPECT(p_ase > 0.0);
    EXPECT(dp4d_ase_power(&link, &tx, 0, &p_ase) == DP4D_INVALID_ARGUMENT);
    EXPECT(strlen(dp4d_last_error()) > 0);

    dp4d_constellation* c = NULL;
    dp4d_constellation_from_format("pm-qpsk", &c);
    double p_opt = 0.0, snr = 0.0;
    EXPECT(dp4d_optimal_launch(c, &link, &tx, 10, &p_opt, &snr) == DP4D_OK);
    EXPECT(p_opt > -10.0 && p_opt < 10.0);

    dp4d_air a;
    EXPECT(dp4d_air_awgn(c, 40.0, 8, &a) == DP4D_OK);
    EXPECT(fabs(a.rate_bit_per_4d - 4.0) < 1e-6);
    EXPECT(isnan(a.std_error));
    EXPECT(dp4d_air_awgn(c, 10.0, 0, &a) != DP4D_OK);

    dp4d_air at_opt, off;
    EXPECT(dp4d_air_link(c, &link, &tx, 60, NAN, 8, &at_opt) == DP4D_OK);
    EXPECT(dp4d_air_link(c, &link, &tx, 60, p_opt + 6.0, 8, &off) == DP4D_OK);
    EXPECT(at_opt.rate_bit_per_4d >= off.rate_bit_per_4d);

    dp4d_link bad = link;
    bad.gamma_per_w_km = 0.0;
    EXPECT(dp4d_optimal_launch(c, &bad, &tx, 10, &p_opt, &snr) == DP4D_NUMERICAL);
    bad = link;
    bad.span_length_km = -1.0;
    EXPECT(dp4d_optimal_launch(c, &bad, &tx, 10, &p_opt, &snr) != DP4D_OK);

    const int spans[3] = {10, 20, 30};
    dp4d_sweep* s = NULL;
    EXPECT(dp4d_sweep_model(c, &link, &tx, spans, 3, 8, &s) == DP4D_OK);
    EXPECT(dp4d_sweep_length(s) == 3);
    dp4d_sweep_row r0, r2;
    dp4d_sweep_row_at(s, 0, &r0);
    dp4d_sweep_row_at(s, 2, &r2);
    EXPECT(r0.distance_km == 1000.0 && r2.air_bit_per_4d <= r0.air_bit_per_4d);
    EXPECT(dp4d_sweep_row_at(s, 3, &r0) == DP4D_INVALID_ARGUMENT);
    double km = 0.0;
    EXPECT(dp4d_sweep_reach(s, 10.0, &km) == DP4D_INVALID_ARGUMENT);
    dp4d_sweep_free(s);
    dp4d_constellation_free(c);
}

static void test_optimize_and_simulate(void)
{
    dp4d_link link;
    dp4d_tx tx;
    dp4d_link_default(&link);
    dp4d_tx_default(&tx);
    dp4d_constellation* c = NULL;
    dp4d_constellation_from_format("pm-qpsk", &c);

    dp4d_optimizer_options o;
    dp4d_optimizer_default(&o);
    o.max_iterations = 3;
    dp4d_constellation* best = NULL;
    dp4d_trace* t = NULL;
    EXPECT(dp4d_optimize(c, &link, &tx, 30, &o, &best, &t) == DP4D_OK);
    EXPECT(dp4d_constellation_size(best) == 16);
    EXPECT(dp4d_trace_length(t) >= 1);
    dp4d_trace_record first, last;
    dp4d_trace_record_at(t, 0, &first);
    dp4d_trace_record_at(t, dp4d_trace_length(t) - 1, &last);
    EXPECT(last.objective >= first.objective);
    EXPECT(strlen(dp4d_trace_status(t)) > 0);
    dp4d_trace_free(t);
    dp4d_constellation_free(best);

    dp4d_sim_options so;
    dp4d_sim_default(&so);
    so.symbols_per_run = 2048;
    so.steps_per_span = 100;
    dp4d_cloud* cl = NULL;
    EXPECT(dp4d_simulate(c, &link, &tx, 2, 0.0, &so, &cl) == DP4D_OK);
    EXPECT(dp4d_cloud_size(cl) > 0);
    double sx, sy, s4;
    EXPECT(dp4d_cloud_snr(cl, &sx, &sy, &s4) == DP4D_OK);
    EXPECT(s4 > 10.0);
    dp4d_air a;
    EXPECT(dp4d_cloud_air(cl, c, &a) == DP4D_OK);
    EXPECT(a.rate_bit_per_4d > 3.9);
    dp4d_cloud_free(cl);

    so.samples_per_symbol = 3;
    EXPECT(dp4d_simulate(c, &link, &tx, 2, 0.0, &so, &cl) == DP4D_CONFIG);
    dp4d_constellation_free(c);
}

static void test_config(void)
{
    char* summary = NULL;
    EXPECT(dp4d_run_config_json("{\"schema_version\": 1, \"workflow\": \"catalog\"}", NULL, &summary) == DP4D_OK);
    EXPECT(summary && strstr(summary, "pm-qpsk") != NULL);
    dp4d_string_free(summary);

    EXPECT(dp4d_run_config_json("{\"schema_version\": 1, \"workflow\": \"air\", \"bogus\": 1}", NULL, NULL) ==
           DP4D_CONFIG);
    EXPECT(strstr(dp4d_last_error(), "bogus") != NULL);
    EXPECT(dp4d_run_config_json("{oops", NULL, NULL) == DP4D_CONFIG);
    EXPECT(dp4d_run_config_file("/nonexistent/config.json", NULL, NULL) == DP4D_IO);
}

int main(void)
{
    EXPECT(dp4d_version() != NULL && strlen(dp4d_version()) > 0);
    test_constellations();
    test_model();
    test_optimize_and_simulate();
    test_config();
    if (failures) {
        fprintf(stderr, "%d check(s) failed\n", failures);
        return 1;
    }
    printf("all C API checks passed\n");
    return 0;
}

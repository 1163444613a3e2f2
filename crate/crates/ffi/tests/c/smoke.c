#include <math.h>
#include <stdio.h>
#include "cheshire.h"

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "check failed: %s (%s)\n", #cond, chs_last_error_message()); return 1; } } while (0)

int main(void) {
    ChsContext *ctx = NULL;
    ChsObservable *obs = NULL;
    ChsPointer *ptr = NULL;
    double re = 0, im = 0;

    CHECK(chs_context_qcc(&ctx) == CHS_STATUS_OK);
    CHECK(chs_observable_qcc(CHS_ARM_II, CHS_OBSERVABLE_SIGMA_X, &obs) == CHS_STATUS_OK);
    CHECK(chs_weak_value(ctx, obs, &re, &im) == CHS_STATUS_OK);
    CHECK(fabs(re - 1.0) < 1e-12 && fabs(im) < 1e-12);

    CHECK(chs_pointer_gaussian(0.0, 1.0, &ptr) == CHS_STATUS_OK);
    ChsLinearResponse lr;
    CHECK(chs_linear_response(ctx, obs, ptr, 0.02, &lr) == CHS_STATUS_OK);
    CHECK(fabs(lr.exact_shift / 0.02 - 1.0) < 1e-3);

    ChsQccConfig cfg;
    ChsQccReport rep;
    CHECK(chs_qcc_config_default(&cfg) == CHS_STATUS_OK);
    CHECK(chs_run_ideal_qcc(&cfg, &rep) == CHS_STATUS_OK);
    CHECK(fabs(rep.wv_pi_i_re - 1.0) < 1e-12);

    ChsIntensityReport ir;
    CHECK(chs_intensity_absorber(CHS_ARM_I, 0.1, &ir) == CHS_STATUS_OK);
    CHECK(fabs(ir.ratio - exp(-0.2)) < 1e-12);
    CHECK(chs_intensity_magnetic(CHS_ARM_I, 4.0, &ir) == CHS_STATUS_VALIDATION);

    ChsBatch *batch = NULL;
    uint64_t total = 0, post = 0;
    CHECK(chs_sample_trials(ctx, obs, ptr, 0.1, 1000, 1, &batch) == CHS_STATUS_OK);
    CHECK(chs_batch_counts(batch, &total, &post) == CHS_STATUS_OK);
    CHECK(total == 1000 && post > 0);

    chs_batch_free(batch);
    chs_pointer_free(ptr);
    chs_observable_free(obs);
    chs_context_free(ctx);
    printf("ok %s\n", chs_version());
    return 0;
}

/* Build: cargo build --release -p equiwave-ffi
 *        cc demo.c -I../include -L../../../target/release -l:libequiwave_ffi.a -lm -lpthread -ldl -o demo */
#include <stdio.h>
#include <stdlib.h>

#include "equiwave.h"

int main(void) {
    EqwModel *model = NULL;
    if (eqw_model_new(1, 1, 20.0, 304, &model) != EQW_STATUS_OK) {
        char msg[256];
        eqw_last_error(msg, sizeof msg);
        fprintf(stderr, "model: %s\n", msg);
        return 1;
    }
    size_t n = eqw_model_nodes(model);
    EqwEnsemble *ens = NULL;
    eqw_sample_gaussian(model, 42, 4, &ens);
    double *psi = malloc(n * sizeof *psi);
    for (size_t j = 0; j < eqw_ensemble_len(ens); j++) {
        double v = 0.0;
        eqw_ensemble_sample(ens, j, psi, n);
        eqw_potential(model, psi, n, 20.0, &v);
        printf("sample %zu: V = %.6f\n", j, v);
    }
    free(psi);
    eqw_ensemble_free(ens);
    eqw_model_free(model);
    printf("equiwave %s\n", eqw_version());
    return 0;
}

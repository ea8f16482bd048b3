/* Minimal consumer of the droopgrid C API: calibrate the bundled case,
 * solve its operating point, and run the stability certificates.
 *
 * Build (from the repository root, after `cargo build -p droopgrid-ffi`):
 *   cc crates/droopgrid-ffi/examples/smoke.c \
 *      -Icrates/droopgrid-ffi/include \
 *      -Ltarget/debug -ldroopgrid_ffi -Wl,-rpath,target/debug -o smoke
 */
#include <droopgrid.h>
#include <stdio.h>

static int check(DgStatus status, const char *what) {
    if (status != DG_OK) {
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)status, dg_last_error());
        return 1;
    }
    return 0;
}

int main(void) {
    printf("droopgrid %s\n", dg_version());

    dg_case *raw = NULL;
    if (check(dg_case_builtin("ieee9", &raw), "load builtin")) return 1;

    dg_equilibrium *reference = NULL;
    if (check(dg_equilibrium_builtin_reference(&reference), "load reference")) return 1;

    dg_case *grid = NULL;
    if (check(dg_case_calibrate(raw, reference, &grid), "calibrate")) return 1;
    dg_case_free(raw);
    dg_equilibrium_free(reference);

    dg_equilibrium *eq = NULL;
    if (check(dg_equilibrium_solve(grid, NULL, &eq), "solve")) return 1;

    char *report = NULL;
    DgStatus status = dg_stability_report(grid, eq, NULL, &report);
    if (status == DG_OK) {
        printf("stability: certified\n");
    } else if (status == DG_WITHHELD) {
        printf("stability: withheld\n");
    } else {
        return check(status, "stability");
    }
    dg_string_free(report);

    char *csv = NULL;
    if (check(dg_simulate_csv(grid, eq, NULL, 0.2, 5e-4, NULL, 50, &csv), "simulate"))
        return 1;
    /* Print the first line of the trajectory metadata. */
    for (const char *p = csv; *p && *p != '\n'; ++p) putchar(*p);
    putchar('\n');
    dg_string_free(csv);

    dg_equilibrium_free(eq);
    dg_case_free(grid);
    return 0;
}

//! Minimal library pipeline: calibrate the bundled case, solve, linearize.
//! Mirrors the example in the top-level README.

use droopgrid::case_io::{builtin_case, builtin_reference};
use droopgrid::dynamics::{build_model, resolve_alpha};
use droopgrid::equilibrium::{calibrate_references, solve_equilibrium};
use droopgrid::netgraph::{build_ybus, incidence};
use droopgrid::smallsignal::analyze;

fn main() -> droopgrid::Result<()> {
    let case = calibrate_references(&builtin_case(), &builtin_reference())?;
    let ybus = build_ybus(case.n(), &case.lines)?;
    let alpha = resolve_alpha(&case, &ybus, None)?;
    let eq = solve_equilibrium(&case, &alpha, None)?;
    let inc = incidence(&case.lines, case.n())?;
    let model = build_model(&case, &ybus, &inc, &alpha)?;
    let ss = analyze(&model, &eq)?;
    println!("off-block coupling ratio {:.3}", ss.coupling.offblock_ratio);
    Ok(())
}

//! Equilibrium computation: Newton solve of the steady droop equations,
//! reference calibration against a known operating point, and operating-point
//! pinning for studies that need an exact zero-drift equilibrium.
//!
//! The steady problem fixes the angle of the lowest-numbered inverter bus
//! (angles only enter through differences) and solves for the remaining
//! angles, all voltages, and the synchronized frequency drift omega_s.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::case_io::Case;
use crate::dynamics::{build_model, power_injections, ModelMatrices};
use crate::error::{Error, Result};
use crate::netgraph::{build_ybus, incidence, Line};
use crate::smallsignal::{edge_weights_at, hat_injections, laplacians};

/// Infinity-norm residual below which Newton is considered converged.
pub const NEWTON_TOL: f64 = 1e-8;

/// Newton iteration cap; the problem is small and well-scaled, so anything
/// beyond this indicates an infeasible or degenerate case.
pub const MAX_NEWTON_ITERS: usize = 50;

/// Default tolerance for cross-checking specified droop references against a
/// calibration target. Published operating points are rounded to about four
/// decimals, which alone produces residuals up to about 1.5e-3 p.u.
pub const CALIBRATION_TOL: f64 = 2e-3;

/// A steady operating point. Angles are radians internally; serialization
/// converts to degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub theta: DVector<f64>,
    pub v: DVector<f64>,
    /// Synchronized frequency drift (rad/s): every angle advances at this
    /// common rate in steady state.
    pub omega_s: f64,
    /// Infinity norm of the steady residual at this point.
    pub residual_norm: f64,
    /// Newton iterations spent producing it (0 for published references).
    pub iterations: usize,
}

impl Equilibrium {
    pub fn from_degrees(theta_deg: &[f64], v: &[f64], omega_s: f64) -> Self {
        Equilibrium {
            theta: DVector::from_iterator(
                theta_deg.len(),
                theta_deg.iter().map(|t| t.to_radians()),
            ),
            v: DVector::from_row_slice(v),
            omega_s,
            residual_norm: 0.0,
            iterations: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    /// Full dynamic state at this point: angles, uniform drift, voltages.
    pub fn state(&self) -> DVector<f64> {
        let n = self.n();
        let mut x = DVector::zeros(3 * n);
        for i in 0..n {
            x[i] = self.theta[i];
            x[n + i] = self.omega_s;
            x[2 * n + i] = self.v[i];
        }
        x
    }
}

/// On-disk form: angles in degrees, voltages in p.u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumFile {
    pub theta_deg: Vec<f64>,
    pub v: Vec<f64>,
    pub omega_s: f64,
    pub residual_norm: f64,
}

impl From<&Equilibrium> for EquilibriumFile {
    fn from(eq: &Equilibrium) -> Self {
        EquilibriumFile {
            theta_deg: eq.theta.iter().map(|t| t.to_degrees()).collect(),
            v: eq.v.iter().copied().collect(),
            omega_s: eq.omega_s,
            residual_norm: eq.residual_norm,
        }
    }
}

/// Parses an equilibrium file and checks it is structurally sound.
pub fn parse_equilibrium(json: &str) -> Result<Equilibrium> {
    let file: EquilibriumFile = serde_json::from_str(json)?;
    if file.theta_deg.len() != file.v.len() {
        return Err(Error::Case(format!(
            "equilibrium: theta_deg has {} entries but v has {}",
            file.theta_deg.len(),
            file.v.len()
        )));
    }
    if file.theta_deg.is_empty() {
        return Err(Error::Case("equilibrium: empty state".into()));
    }
    for (i, t) in file.theta_deg.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::Case(format!(
                "equilibrium: theta_deg[{i}] not finite"
            )));
        }
    }
    for (i, v) in file.v.iter().enumerate() {
        if !v.is_finite() || *v <= 0.0 {
            return Err(Error::Case(format!(
                "equilibrium: v[{i}] must be positive, got {v}"
            )));
        }
    }
    if !file.omega_s.is_finite() || !file.residual_norm.is_finite() {
        return Err(Error::Case(
            "equilibrium: omega_s and residual_norm must be finite".into(),
        ));
    }
    let mut eq = Equilibrium::from_degrees(&file.theta_deg, &file.v, file.omega_s);
    eq.residual_norm = file.residual_norm;
    Ok(eq)
}

/// Serializes an equilibrium to pretty JSON with a trailing newline.
pub fn serialize_equilibrium(eq: &Equilibrium) -> String {
    let mut s = serde_json::to_string_pretty(&EquilibriumFile::from(eq))
        .expect("equilibrium serialization cannot fail");
    s.push('\n');
    s
}

/// Steady residual of the model at the given point; first n entries are the
/// angle equations, last n the voltage equations.
pub fn equilibrium_residual(
    model: &ModelMatrices,
    theta: &DVector<f64>,
    v: &DVector<f64>,
    omega_s: f64,
) -> DVector<f64> {
    model.steady_residual(theta, v, omega_s)
}

/// Analytic Jacobian of the steady residual with respect to
/// `[theta_(k != ref); v; omega_s]`, evaluated at the current iterate.
fn newton_matrix(
    model: &ModelMatrices,
    theta: &DVector<f64>,
    v: &DVector<f64>,
    free_thetas: &[usize],
) -> DMatrix<f64> {
    let n = model.n;
    let w = edge_weights_at(model, theta, v);
    let (l1, l2) = laplacians(model, &w);
    let (phat, qhat) = hat_injections(model, v, &w);
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for (c, &k) in free_thetas.iter().enumerate() {
        for i in 0..n {
            j[(i, c)] = -l1[(i, k)];
            j[(n + i, c)] = -l2[(i, k)];
        }
    }
    let vcol0 = free_thetas.len();
    for k in 0..n {
        for i in 0..n {
            let dp = l2[(i, k)] - if i == k { 2.0 * phat[i] } else { 0.0 };
            let dq = l1[(i, k)]
                + if i == k {
                    2.0 * qhat[i] + model.d_q[i] * v[i]
                } else {
                    0.0
                };
            j[(i, vcol0 + k)] = dp / v[k];
            j[(n + i, vcol0 + k)] = -dq / v[k];
        }
    }
    let wcol = 2 * n - 1;
    for i in 0..n {
        j[(i, wcol)] = -model.d_p[i];
    }
    j
}

/// Central-difference Jacobian of the steady residual; cross-check for the
/// analytic blocks, an order of magnitude slower.
fn newton_matrix_fd(
    model: &ModelMatrices,
    theta: &DVector<f64>,
    v: &DVector<f64>,
    omega_s: f64,
    free_thetas: &[usize],
) -> DMatrix<f64> {
    let n = model.n;
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    let mut z: Vec<f64> = free_thetas
        .iter()
        .map(|&k| theta[k])
        .chain(v.iter().copied())
        .chain(std::iter::once(omega_s))
        .collect();
    let eval = |z: &[f64]| -> DVector<f64> {
        let mut th = theta.clone();
        for (c, &k) in free_thetas.iter().enumerate() {
            th[k] = z[c];
        }
        let vv = DVector::from_row_slice(&z[free_thetas.len()..free_thetas.len() + n]);
        model.steady_residual(&th, &vv, z[2 * n - 1])
    };
    for c in 0..2 * n {
        let h = 1e-6 * (1.0 + z[c].abs());
        let saved = z[c];
        z[c] = saved + h;
        let plus = eval(&z);
        z[c] = saved - h;
        let minus = eval(&z);
        z[c] = saved;
        let col = (plus - minus) / (2.0 * h);
        j.set_column(c, &col);
    }
    j
}

fn newton_solve(
    case: &Case,
    alpha: &[f64],
    guess: Option<&Equilibrium>,
    use_fd: bool,
) -> Result<Equilibrium> {
    let n = case.n();
    let ybus = build_ybus(n, &case.lines)?;
    let inc = incidence(&case.lines, n)?;
    let model = build_model(case, &ybus, &inc, alpha)?;

    // Angle reference: the lowest-numbered inverter bus keeps its angle.
    let reference = case.inverters()[0];
    let free_thetas: Vec<usize> = (0..n).filter(|&i| i != reference).collect();

    let (mut theta, mut v, mut omega_s) = match guess {
        Some(g) => {
            if g.n() != n {
                return Err(Error::Case(format!(
                    "guess has {} buses, case has {n}",
                    g.n()
                )));
            }
            (g.theta.clone(), g.v.clone(), g.omega_s)
        }
        None => (
            DVector::zeros(n),
            DVector::from_iterator(n, case.buses.iter().map(|b| b.v0)),
            0.0,
        ),
    };

    let mut trace = Vec::with_capacity(MAX_NEWTON_ITERS + 1);
    let non_convergence = |trace: &[f64], theta: &DVector<f64>, v: &DVector<f64>, omega_s: f64| {
        Error::NonConvergence {
            iterations: trace.len().saturating_sub(1),
            residual: *trace.last().unwrap_or(&f64::NAN),
            trace: trace.to_vec(),
            theta: theta.iter().copied().collect(),
            v: v.iter().copied().collect(),
            omega_s,
        }
    };

    for iter in 0..=MAX_NEWTON_ITERS {
        let r = model.steady_residual(&theta, &v, omega_s);
        let norm = r.amax();
        trace.push(norm);
        if !norm.is_finite() {
            return Err(non_convergence(&trace, &theta, &v, omega_s));
        }
        if norm <= NEWTON_TOL {
            if v.iter().any(|&vi| vi <= 0.0) {
                return Err(Error::Numerical(
                    "newton converged to a nonphysical point with non-positive voltage".into(),
                ));
            }
            return Ok(Equilibrium {
                theta,
                v,
                omega_s,
                residual_norm: norm,
                iterations: iter,
            });
        }
        if iter == MAX_NEWTON_ITERS {
            break;
        }
        let j = if use_fd {
            newton_matrix_fd(&model, &theta, &v, omega_s, &free_thetas)
        } else {
            newton_matrix(&model, &theta, &v, &free_thetas)
        };
        let delta = j
            .full_piv_lu()
            .solve(&(-&r))
            .ok_or(Error::SingularNewton(iter))?;
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::SingularNewton(iter));
        }
        for (c, &k) in free_thetas.iter().enumerate() {
            theta[k] += delta[c];
        }
        for k in 0..n {
            v[k] += delta[free_thetas.len() + k];
        }
        omega_s += delta[2 * n - 1];
    }
    Err(non_convergence(&trace, &theta, &v, omega_s))
}

/// Solves the steady droop equations by Newton iteration with analytic
/// Jacobian blocks. Starts from a flat profile (zero angles, reference
/// voltages, zero drift) unless a guess is supplied. The returned point is
/// re-verified against the residual before it is handed back.
pub fn solve_equilibrium(
    case: &Case,
    alpha: &[f64],
    guess: Option<&Equilibrium>,
) -> Result<Equilibrium> {
    newton_solve(case, alpha, guess, false)
}

/// Newton with finite-difference Jacobians; slower cross-check path.
pub fn solve_equilibrium_fd(
    case: &Case,
    alpha: &[f64],
    guess: Option<&Equilibrium>,
) -> Result<Equilibrium> {
    newton_solve(case, alpha, guess, true)
}

/// Fills null droop references from the power flows implied by `target` and
/// cross-checks the references that are already specified, using the default
/// tolerance.
pub fn calibrate_references(case: &Case, target: &Equilibrium) -> Result<Case> {
    calibrate_references_with(case, target, CALIBRATION_TOL)
}

/// As [`calibrate_references`] with an explicit tolerance in p.u.
///
/// The target must be a zero-drift point: with omega_s != 0 the damping
/// terms shift every angle equation and the injections no longer equal the
/// references. Inverter voltage references must match the target voltages,
/// otherwise the filled references would encode a rotation-angle-dependent
/// offset instead of a clean operating point.
pub fn calibrate_references_with(case: &Case, target: &Equilibrium, tol: f64) -> Result<Case> {
    let n = case.n();
    if target.n() != n {
        return Err(Error::Case(format!(
            "calibration target has {} buses, case has {n}",
            target.n()
        )));
    }
    if target.omega_s.abs() > 1e-9 {
        return Err(Error::Case(format!(
            "calibration target must have zero frequency drift, got omega_s = {:e}",
            target.omega_s
        )));
    }
    let ybus = build_ybus(n, &case.lines)?;
    let (p, q) = power_injections(&ybus, &target.theta, &target.v);
    let mut out = case.clone();
    for i in 0..n {
        let bus = &mut out.buses[i];
        match bus.p0_net {
            None => bus.p0_net = Some(p[i]),
            Some(p0) => {
                if (p0 - p[i]).abs() > tol {
                    return Err(Error::Case(format!(
                        "buses[{i}].p0_net: specified {p0} but the target operating point \
                         implies {:.6} (difference {:.3e} exceeds tolerance {tol:.1e})",
                        p[i],
                        (p0 - p[i]).abs()
                    )));
                }
            }
        }
        match bus.q0_net {
            None => bus.q0_net = Some(q[i]),
            Some(q0) => {
                if (q0 - q[i]).abs() > tol {
                    return Err(Error::Case(format!(
                        "buses[{i}].q0_net: specified {q0} but the target operating point \
                         implies {:.6} (difference {:.3e} exceeds tolerance {tol:.1e})",
                        q[i],
                        (q0 - q[i]).abs()
                    )));
                }
            }
        }
        if case.is_inverter(i) && (bus.v0 - target.v[i]).abs() > tol {
            return Err(Error::Case(format!(
                "buses[{i}].v0: voltage reference {} does not match the target voltage {}",
                bus.v0, target.v[i]
            )));
        }
    }
    Ok(out)
}

/// Solves the equilibrium for `case`, then rewrites the case so that the
/// solved point is an exact zero-drift equilibrium: references become the
/// measured flows and inverter voltage references snap to the solved
/// voltages. With references equal to flows every rotated residual vanishes
/// identically, for any rotation angle, so the returned pair is consistent
/// to machine precision.
pub fn pin_operating_point(case: &Case, alpha: &[f64]) -> Result<(Case, Equilibrium)> {
    let eq = solve_equilibrium(case, alpha, None)?;
    let n = case.n();
    let ybus = build_ybus(n, &case.lines)?;
    let (p, q) = power_injections(&ybus, &eq.theta, &eq.v);
    let mut pinned = case.clone();
    for i in 0..n {
        pinned.buses[i].p0_net = Some(p[i]);
        pinned.buses[i].q0_net = Some(q[i]);
        if pinned.buses[i].kind == crate::case_io::BusKind::Inverter {
            pinned.buses[i].v0 = eq.v[i];
        }
    }
    let inc = incidence(&pinned.lines, n)?;
    let model = build_model(&pinned, &ybus, &inc, alpha)?;
    let residual_norm = model.steady_residual(&eq.theta, &eq.v, 0.0).amax();
    Ok((
        pinned,
        Equilibrium {
            theta: eq.theta,
            v: eq.v,
            omega_s: 0.0,
            residual_norm,
            iterations: eq.iterations,
        },
    ))
}

/// Largest angle difference across a line at the given point, in degrees,
/// together with the line that attains it.
pub fn max_line_angle_diff(case: &Case, eq: &Equilibrium) -> Result<(f64, Line)> {
    if eq.n() != case.n() {
        return Err(Error::Case(format!(
            "equilibrium has {} buses, case has {}",
            eq.n(),
            case.n()
        )));
    }
    let canon = crate::netgraph::canonical_lines(case.n(), &case.lines)?;
    let mut best: Option<(f64, Line)> = None;
    for line in canon {
        let diff = (eq.theta[line.from - 1] - eq.theta[line.to - 1])
            .abs()
            .to_degrees();
        if best.as_ref().is_none_or(|(d, _)| diff > *d) {
            best = Some((diff, line));
        }
    }
    best.ok_or_else(|| Error::Graph("case has no lines".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::{builtin_case, builtin_reference};
    use crate::dynamics::{dae_residual, resolve_alpha, select_alpha, AlphaPolicy};
    use approx::assert_relative_eq;

    fn auto_alpha(case: &Case) -> Vec<f64> {
        let ybus = build_ybus(case.n(), &case.lines).unwrap();
        resolve_alpha(case, &ybus, Some(AlphaPolicy::Auto)).unwrap()
    }

    #[test]
    fn reference_point_max_angle_diff() {
        let case = builtin_case();
        let (deg, line) = max_line_angle_diff(&case, &builtin_reference()).unwrap();
        assert_relative_eq!(deg, 3.2265, epsilon = 1e-9);
        assert_eq!((line.from, line.to), (8, 9));
    }

    #[test]
    fn calibrate_fills_nulls_and_keeps_specified() {
        let case = builtin_case();
        let calibrated = calibrate_references(&case, &builtin_reference()).unwrap();
        assert!(calibrated.is_calibrated());
        // Specified references survive untouched.
        assert_eq!(calibrated.buses[1].p0_net, Some(0.3260));
        // Filled references mirror the implied injections.
        let ybus = build_ybus(9, &case.lines).unwrap();
        let eq = builtin_reference();
        let (p, _) = power_injections(&ybus, &eq.theta, &eq.v);
        assert_eq!(calibrated.buses[0].p0_net, Some(p[0]));
    }

    #[test]
    fn calibrate_rejects_inconsistent_reference() {
        let mut case = builtin_case();
        case.buses[4].p0_net = Some(-0.5);
        let err = calibrate_references(&case, &builtin_reference()).unwrap_err();
        assert!(err.to_string().contains("buses[4].p0_net"), "{err}");
    }

    #[test]
    fn calibrate_rejects_drifting_target() {
        let case = builtin_case();
        let mut target = builtin_reference();
        target.omega_s = 1e-3;
        assert!(calibrate_references(&case, &target).is_err());
    }

    #[test]
    fn solve_matches_published_point() {
        let case = builtin_case();
        let calibrated = calibrate_references(&case, &builtin_reference()).unwrap();
        let eq = solve_equilibrium(&calibrated, &auto_alpha(&calibrated), None).unwrap();
        assert_eq!(eq.theta[0], 0.0);
        assert!(eq.iterations <= 10, "took {} iterations", eq.iterations);
        assert!(eq.residual_norm <= NEWTON_TOL);
        let reference = builtin_reference();
        for i in 0..9 {
            assert!(
                (eq.theta[i] - reference.theta[i]).abs().to_degrees() < 0.01,
                "bus {} angle off by {} deg",
                i + 1,
                (eq.theta[i] - reference.theta[i]).abs().to_degrees()
            );
            assert!((eq.v[i] - reference.v[i]).abs() < 5e-4);
        }
    }

    #[test]
    fn analytic_and_fd_newton_agree() {
        let case = builtin_case();
        let calibrated = calibrate_references(&case, &builtin_reference()).unwrap();
        let alpha = auto_alpha(&calibrated);
        let a = solve_equilibrium(&calibrated, &alpha, None).unwrap();
        let b = solve_equilibrium_fd(&calibrated, &alpha, None).unwrap();
        assert!((&a.theta - &b.theta).amax() < 1e-8);
        assert!((&a.v - &b.v).amax() < 1e-8);
        assert!((a.omega_s - b.omega_s).abs() < 1e-8);
    }

    #[test]
    fn solver_result_passes_recheck_for_any_alpha() {
        let case = builtin_case();
        let calibrated = calibrate_references(&case, &builtin_reference()).unwrap();
        for alpha_value in [0.4, 0.9620865114406864, std::f64::consts::FRAC_PI_2] {
            let alpha = vec![alpha_value; 9];
            let eq = solve_equilibrium(&calibrated, &alpha, None).unwrap();
            let ybus = build_ybus(9, &calibrated.lines).unwrap();
            let inc = incidence(&calibrated.lines, 9).unwrap();
            let model = build_model(&calibrated, &ybus, &inc, &alpha).unwrap();
            let r = equilibrium_residual(&model, &eq.theta, &eq.v, eq.omega_s);
            assert!(r.amax() <= NEWTON_TOL);
        }
    }

    #[test]
    fn pinning_produces_exact_zero_drift_equilibrium() {
        let case = builtin_case();
        let calibrated = calibrate_references(&case, &builtin_reference()).unwrap();
        let alpha = auto_alpha(&calibrated);
        let (pinned, eq) = pin_operating_point(&calibrated, &alpha).unwrap();
        assert_eq!(eq.omega_s, 0.0);
        assert!(eq.residual_norm < 1e-12, "residual {}", eq.residual_norm);
        // The untransformed load power balance closes as well.
        let ybus = build_ybus(9, &pinned.lines).unwrap();
        let r = dae_residual(&pinned, &ybus, &eq.state()).unwrap();
        assert!(r.amax() < 1e-8, "dae residual {}", r.amax());
    }

    #[test]
    fn infeasible_case_reports_non_convergence_with_trace() {
        let mut case = builtin_case();
        let calibrated = calibrate_references(&case, &builtin_reference()).unwrap();
        case = calibrated;
        // A 100 p.u. draw on a 14 p.u. line cannot be served.
        case.buses[4].p0_net = Some(-100.0);
        let err = solve_equilibrium(&case, &auto_alpha(&case), None).unwrap_err();
        match err {
            Error::NonConvergence {
                trace, theta, v, ..
            } => {
                assert!(trace.len() > 1);
                assert_eq!(theta.len(), 9);
                assert_eq!(v.len(), 9);
            }
            Error::SingularNewton(_) | Error::Numerical(_) => {}
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn equilibrium_file_round_trip() {
        let case = builtin_case();
        let calibrated = calibrate_references(&case, &builtin_reference()).unwrap();
        let eq = solve_equilibrium(&calibrated, &auto_alpha(&calibrated), None).unwrap();
        let json = serialize_equilibrium(&eq);
        assert!(json.contains("theta_deg"));
        let back = parse_equilibrium(&json).unwrap();
        assert!((&back.theta - &eq.theta).amax() < 1e-15);
        assert!((&back.v - &eq.v).amax() < 1e-15);
        assert_eq!(back.omega_s, eq.omega_s);
    }

    #[test]
    fn equilibrium_file_rejects_malformed_input() {
        assert!(parse_equilibrium(
            "{\"theta_deg\": [0.0], \"v\": [1.0, 1.0], \"omega_s\": 0.0, \"residual_norm\": 0.0}"
        )
        .is_err());
        assert!(parse_equilibrium(
            "{\"theta_deg\": [0.0], \"v\": [-1.0], \"omega_s\": 0.0, \"residual_norm\": 0.0}"
        )
        .is_err());
        assert!(parse_equilibrium("{\"theta_deg\": [0.0], \"v\": [1.0], \"omega_s\": 0.0, \"residual_norm\": 0.0, \"extra\": 1}").is_err());
    }

    #[test]
    fn guess_near_solution_converges_quickly() {
        let case = builtin_case();
        let calibrated = calibrate_references(&case, &builtin_reference()).unwrap();
        let alpha = auto_alpha(&calibrated);
        let eq = solve_equilibrium(&calibrated, &alpha, None).unwrap();
        let again = solve_equilibrium(&calibrated, &alpha, Some(&eq)).unwrap();
        assert!(again.iterations <= 1);
    }

    #[test]
    fn select_alpha_is_consistent_with_resolve() {
        let case = builtin_case();
        let ybus = build_ybus(case.n(), &case.lines).unwrap();
        let a = select_alpha(&ybus, AlphaPolicy::Auto).unwrap();
        let resolved = resolve_alpha(&case, &ybus, None).unwrap();
        assert!(resolved.iter().all(|&x| x == a));
    }
}

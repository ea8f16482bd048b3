//! Spectral analysis and stability certification.
//!
//! Two certificate paths are checked, mirroring how the decoupled design is
//! justified: the angle subsystem is marginally stable (one zero mode from
//! translation invariance, everything else in the left half plane) whenever
//! all effective edge weights are positive on a connected graph, and the
//! voltage subsystem is Hurwitz whenever the damped voltage Laplacian is
//! positive definite. Verdicts come from the certificate conditions alone;
//! the spectra are computed and reported alongside so a certificate can be
//! audited against what the eigenvalues actually do.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex;
use serde::Serialize;

use crate::case_io::{Case, Epsilons};
use crate::dynamics::ModelMatrices;
use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::netgraph::YBus;
use crate::smallsignal::{Coupling, SmallSignal};

/// Eigenpair acceptance threshold, relative to the Frobenius norm of the
/// matrix: every reported eigenvalue must be backed by a vector with
/// ||Mv - lambda v|| within this factor.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// Zero-mode detection threshold factor, relative to the matrix norm.
pub const ZERO_MODE_TOL: f64 = 1e-8;

/// Rate separating epsilon-fast modes from the droop-scale dynamics:
/// half the fastest load relaxation rate.
pub fn fast_mode_cutoff(eps: &Epsilons) -> f64 {
    1.0 / (2.0 * (eps.e1 / eps.e2).min(eps.e3))
}

/// All eigenvalues of a real square matrix, sorted by descending real part
/// (descending imaginary part within ties). Every value is verified by
/// inverse iteration: if no unit vector achieves a small enough residual the
/// whole computation is rejected rather than silently trusted.
pub fn spectrum(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Eigen(format!(
            "matrix is {}x{}, spectrum needs square",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let norm = m.norm();
    if norm == 0.0 {
        return Ok(vec![Complex::new(0.0, 0.0); n]);
    }
    let schur = Schur::try_new(m.clone(), 1e-12, 0)
        .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    let mut eigs: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    let mc = m.map(|x| Complex::new(x, 0.0));
    for &lambda in &eigs {
        let r = best_eigen_residual(&mc, lambda, norm);
        if !(r.is_finite() && r <= EIGEN_RESIDUAL_TOL * norm) {
            return Err(Error::Eigen(format!(
                "eigenvalue {lambda} failed verification: residual {r:.3e} exceeds {:.3e}",
                EIGEN_RESIDUAL_TOL * norm
            )));
        }
    }
    eigs.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    Ok(eigs)
}

/// Smallest achieved ||Mv - lambda v|| over a few shifted inverse
/// iterations. The shift is nudged off lambda so the factorization stays
/// regular; convergence onto the eigenvector is what drives the residual
/// down, not the shift being exact.
fn best_eigen_residual(mc: &DMatrix<Complex<f64>>, lambda: Complex<f64>, norm: f64) -> f64 {
    let n = mc.nrows();
    let tol = EIGEN_RESIDUAL_TOL * norm;
    let mut best = f64::INFINITY;
    for attempt in 1..=4 {
        let eps = norm * 1e-10 * attempt as f64;
        let shift = lambda + Complex::new(eps, 0.3 * eps);
        let mut shifted = mc.clone();
        for i in 0..n {
            shifted[(i, i)] -= shift;
        }
        let lu = shifted.lu();
        let mut v = DVector::from_fn(n, |i, _| Complex::new(1.0, 0.2 + 0.1 * i as f64));
        let vn = v.norm();
        v.unscale_mut(vn);
        for _ in 0..10 {
            let Some(w) = lu.solve(&v) else { break };
            let wn = w.norm();
            if !wn.is_finite() || wn == 0.0 {
                break;
            }
            v = w.unscale(wn);
            let mut diff = mc * &v;
            for i in 0..n {
                diff[i] -= lambda * v[i];
            }
            best = best.min(diff.norm());
            if best <= tol {
                return best;
            }
        }
    }
    best
}

/// Ascending eigenvalues of the symmetric part (A + A^T)/2.
///
/// Definiteness claims about a nonsymmetric matrix are made through its
/// symmetric part: x^T A x = x^T sym(A) x.
pub fn sym_part_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Number of eigenvalues within `tol` of zero, and whether everything else
/// sits strictly in the left half plane.
pub fn marginal_stability(spec: &[Complex<f64>], zero_tol: f64) -> (usize, bool) {
    let zeros = spec.iter().filter(|l| l.norm() <= zero_tol).count();
    let rest_negative = spec
        .iter()
        .filter(|l| l.norm() > zero_tol)
        .all(|l| l.re < 0.0);
    (zeros, rest_negative)
}

/// True when every eigenvalue has a strictly negative real part.
pub fn hurwitz(spec: &[Complex<f64>]) -> bool {
    spec.iter().all(|l| l.re < 0.0)
}

/// Operating-regime thresholds; these are configuration, not physics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AssumptionThresholds {
    /// Largest tolerated angle difference across a line, degrees.
    pub max_angle_diff_deg: f64,
    /// Largest tolerated admittance-angle spread, radians.
    pub phi_spread_rad: f64,
    /// Largest tolerated deviation of any bus rotation from the aligned
    /// choice pi - phi0, radians.
    pub alpha_conformity: f64,
}

impl Default for AssumptionThresholds {
    fn default() -> Self {
        AssumptionThresholds {
            max_angle_diff_deg: 15.0,
            phi_spread_rad: 0.05,
            alpha_conformity: 1e-6,
        }
    }
}

/// Measured operating-regime quantities and their pass flags.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub max_angle_diff_deg: f64,
    /// Line attaining the largest angle difference, 1-based bus pair.
    pub max_angle_line: (usize, usize),
    pub phi_spread_rad: f64,
    pub phi0: f64,
    /// Max |alpha_i - (pi - phi0)| over buses.
    pub alpha_conformity: f64,
    pub angle_ok: bool,
    pub spread_ok: bool,
    pub alpha_ok: bool,
    pub thresholds: AssumptionThresholds,
}

impl AssumptionReport {
    pub fn all_ok(&self) -> bool {
        self.angle_ok && self.spread_ok && self.alpha_ok
    }
}

/// Certificate outcome. Withheld is not a stability verdict; it only means
/// this certificate's sufficient conditions did not hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Certified,
    Withheld,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Certified => "certified",
            Verdict::Withheld => "withheld",
        })
    }
}

/// Angle-subsystem certificate: positive weights on a connected graph.
#[derive(Debug, Clone, Serialize)]
pub struct AngleBlockReport {
    pub edge_weights_positive: bool,
    /// Smallest directed edge weight W1; 0.0 when there are no lines.
    pub min_edge_weight: f64,
    pub connected: bool,
    /// Spectral audit: symmetric part of L1 is PSD with a simple zero.
    pub l1_psd_simple_zero: bool,
    /// Eigenvalues of the angle block, [re, im], sorted.
    pub j_a_spectrum: Vec<[f64; 2]>,
    pub verdict: Verdict,
}

/// Voltage-subsystem certificate: damped voltage Laplacian positive definite.
#[derive(Debug, Clone, Serialize)]
pub struct VoltageBlockReport {
    /// Smallest eigenvalue of sym(L_lp).
    pub l_lp_min_eig: f64,
    /// Eigenvalues of the voltage block, [re, im], sorted.
    pub j_v_spectrum: Vec<[f64; 2]>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub assumptions: AssumptionReport,
    pub theorem1: AngleBlockReport,
    pub theorem2: VoltageBlockReport,
    /// Eigenvalues of the full Jacobian, [re, im], sorted by real part.
    pub full_spectrum: Vec<[f64; 2]>,
    /// Modes at least as fast as the cutoff; these belong to the singular
    /// perturbation layer, not the droop-scale dynamics.
    pub fast_modes: Vec<[f64; 2]>,
    pub fast_cutoff: f64,
    pub coupling: Coupling,
}

impl StabilityReport {
    pub fn both_certified(&self) -> bool {
        self.theorem1.verdict == Verdict::Certified && self.theorem2.verdict == Verdict::Certified
    }
}

fn to_pairs(spec: &[Complex<f64>]) -> Vec<[f64; 2]> {
    spec.iter().map(|l| [l.re, l.im]).collect()
}

/// Measures the operating-regime assumptions at an equilibrium.
pub fn check_assumptions(
    case: &Case,
    ybus: &YBus,
    model: &ModelMatrices,
    eq: &Equilibrium,
    thresholds: AssumptionThresholds,
) -> Result<AssumptionReport> {
    let (max_deg, line) = crate::equilibrium::max_line_angle_diff(case, eq)?;
    let stats = crate::netgraph::phi_stats(ybus)?;
    let aligned = std::f64::consts::PI - stats.phi0;
    let alpha_conformity = model
        .alpha
        .iter()
        .map(|a| (a - aligned).abs())
        .fold(0.0, f64::max);
    Ok(AssumptionReport {
        max_angle_diff_deg: max_deg,
        max_angle_line: (line.from, line.to),
        phi_spread_rad: stats.spread,
        phi0: stats.phi0,
        alpha_conformity,
        angle_ok: max_deg <= thresholds.max_angle_diff_deg,
        spread_ok: stats.spread <= thresholds.phi_spread_rad,
        alpha_ok: alpha_conformity <= thresholds.alpha_conformity,
        thresholds,
    })
}

/// Runs both certificates plus the full-spectrum audit at an equilibrium.
pub fn certify(
    case: &Case,
    ybus: &YBus,
    model: &ModelMatrices,
    eq: &Equilibrium,
    ss: &SmallSignal,
    thresholds: AssumptionThresholds,
    fast_cutoff: f64,
) -> Result<StabilityReport> {
    let assumptions = check_assumptions(case, ybus, model, eq, thresholds)?;

    let min_edge_weight = ss.weights.w1.iter().copied().fold(f64::INFINITY, f64::min);
    let (edge_weights_positive, min_edge_weight) = if ss.weights.w1.is_empty() {
        (true, 0.0)
    } else {
        (min_edge_weight > 0.0, min_edge_weight)
    };
    let connected = crate::netgraph::is_connected(case.n(), &case.lines);

    let l1_eigs = sym_part_eigenvalues(&ss.l1);
    let l1_norm = ((&ss.l1 + ss.l1.transpose()) * 0.5).norm();
    let ztol = if l1_norm > 0.0 {
        ZERO_MODE_TOL * l1_norm
    } else {
        ZERO_MODE_TOL
    };
    let zeros = l1_eigs.iter().filter(|e| e.abs() <= ztol).count();
    let l1_psd_simple_zero = zeros == 1 && l1_eigs.iter().all(|&e| e >= -ztol);

    let j_a_spectrum = spectrum(&ss.j_a)?;
    let theorem1 = AngleBlockReport {
        edge_weights_positive,
        min_edge_weight,
        connected,
        l1_psd_simple_zero,
        j_a_spectrum: to_pairs(&j_a_spectrum),
        verdict: if edge_weights_positive && connected {
            Verdict::Certified
        } else {
            Verdict::Withheld
        },
    };

    let llp_eigs = sym_part_eigenvalues(&ss.l_lp);
    let l_lp_min_eig = llp_eigs.first().copied().unwrap_or(0.0);
    let j_v_spectrum = spectrum(&ss.j_v)?;
    let theorem2 = VoltageBlockReport {
        l_lp_min_eig,
        j_v_spectrum: to_pairs(&j_v_spectrum),
        verdict: if l_lp_min_eig > 0.0 {
            Verdict::Certified
        } else {
            Verdict::Withheld
        },
    };

    let full = spectrum(&ss.j)?;
    let fast: Vec<Complex<f64>> = full
        .iter()
        .copied()
        .filter(|l| l.re <= -fast_cutoff)
        .collect();

    Ok(StabilityReport {
        assumptions,
        theorem1,
        theorem2,
        full_spectrum: to_pairs(&full),
        fast_modes: to_pairs(&fast),
        fast_cutoff,
        coupling: ss.coupling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::{builtin_case, builtin_reference, Bus, BusKind, Meta};
    use crate::dynamics::{build_model, power_injections, resolve_alpha, AlphaPolicy};
    use crate::equilibrium::{calibrate_references, pin_operating_point};
    use crate::netgraph::{build_ybus, incidence, Line};
    use crate::smallsignal::analyze;
    use approx::assert_relative_eq;

    fn pinned_report(policy: AlphaPolicy) -> StabilityReport {
        let case = builtin_case();
        let calibrated = calibrate_references(&case, &builtin_reference()).unwrap();
        let ybus = build_ybus(calibrated.n(), &calibrated.lines).unwrap();
        let alpha = resolve_alpha(&calibrated, &ybus, Some(policy)).unwrap();
        let (pinned, eq) = pin_operating_point(&calibrated, &alpha).unwrap();
        let ybus = build_ybus(pinned.n(), &pinned.lines).unwrap();
        let inc = incidence(&pinned.lines, pinned.n()).unwrap();
        let model = build_model(&pinned, &ybus, &inc, &alpha).unwrap();
        let ss = analyze(&model, &eq).unwrap();
        certify(
            &pinned,
            &ybus,
            &model,
            &eq,
            &ss,
            AssumptionThresholds::default(),
            fast_mode_cutoff(&pinned.eps),
        )
        .unwrap()
    }

    #[test]
    fn spectrum_of_diagonal_matrix() {
        let m = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 3.0, -2.0]));
        let s = spectrum(&m).unwrap();
        assert_relative_eq!(s[0].re, 3.0, epsilon = 1e-12);
        assert_relative_eq!(s[1].re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s[2].re, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn spectrum_of_rotation_block() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let s = spectrum(&m).unwrap();
        // Conjugate pair on the imaginary axis, positive branch first.
        assert_relative_eq!(s[0].im, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s[1].im, -1.0, epsilon = 1e-12);
        assert!(s[0].re.abs() < 1e-12);
    }

    #[test]
    fn spectrum_rejects_non_square() {
        assert!(spectrum(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn sym_part_catches_hidden_indefiniteness() {
        // Strongly nonnormal: eigenvalues are both 1, symmetric part is not PD.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -6.0, 0.0, 1.0]);
        let ev = sym_part_eigenvalues(&m);
        assert!(ev[0] < 0.0 && ev[1] > 0.0);
    }

    #[test]
    fn builtin_aligned_case_certifies_on_both_paths() {
        let report = pinned_report(AlphaPolicy::Auto);
        assert!(report.assumptions.all_ok());
        assert_eq!(report.theorem1.verdict, Verdict::Certified);
        assert!(report.theorem1.l1_psd_simple_zero);
        assert_eq!(report.theorem2.verdict, Verdict::Certified);
        assert!(report.theorem2.l_lp_min_eig > 0.0);
        assert!(report.both_certified());

        // Angle block: exactly one zero mode, everything else damped.
        let j_a: Vec<Complex<f64>> = report
            .theorem1
            .j_a_spectrum
            .iter()
            .map(|p| Complex::new(p[0], p[1]))
            .collect();
        let norm = j_a.iter().map(|l| l.norm_sqr()).sum::<f64>().sqrt();
        let (zeros, rest) = marginal_stability(&j_a, ZERO_MODE_TOL * norm.max(1.0));
        assert_eq!(zeros, 1);
        assert!(rest);

        // The load voltage relaxations dominate the fast end of the spectrum.
        let fastest = report.full_spectrum.last().unwrap()[0];
        assert_relative_eq!(fastest, -3955.4, max_relative = 1e-2);
        assert!(report.fast_modes.len() >= 6);
        assert!(report
            .fast_modes
            .iter()
            .all(|p| p[0] <= -report.fast_cutoff));

        // Slowest droop-scale mode sits two decades above the fast layer.
        let slowest_nonzero = report
            .full_spectrum
            .iter()
            .map(|p| Complex::new(p[0], p[1]))
            .filter(|l| l.norm() > 1e-6)
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(slowest_nonzero, -0.0995918, max_relative = 1e-3);
    }

    #[test]
    fn traditional_rotation_fails_conformity_but_still_certifies() {
        let report = pinned_report(AlphaPolicy::Traditional);
        assert!(!report.assumptions.alpha_ok);
        assert!(report.assumptions.angle_ok && report.assumptions.spread_ok);
        assert_eq!(report.theorem1.verdict, Verdict::Certified);
        assert_eq!(report.theorem2.verdict, Verdict::Certified);
        let auto = pinned_report(AlphaPolicy::Auto);
        assert!(auto.coupling.offblock_ratio < report.coupling.offblock_ratio);
    }

    /// Two-bus case pinned at a depressed load voltage where the damped
    /// voltage Laplacian loses definiteness.
    fn indefinite_two_bus() -> (crate::case_io::Case, Equilibrium, Vec<f64>) {
        let mut case = crate::case_io::Case {
            meta: Meta {
                name: "two-bus-depressed".into(),
                base_mva: None,
                warnings: Vec::new(),
            },
            omega0: 0.0,
            eps: Default::default(),
            buses: vec![
                Bus {
                    id: 1,
                    kind: BusKind::Inverter,
                    p0_net: None,
                    q0_net: None,
                    d1: 5.0,
                    d2: 10.0,
                    t1: 0.01,
                    t2: 10.0,
                    v0: 1.0,
                    alpha_override: None,
                },
                Bus {
                    id: 2,
                    kind: BusKind::Load,
                    p0_net: None,
                    q0_net: None,
                    d1: 0.0,
                    d2: 0.0,
                    t1: 0.0,
                    t2: 0.0,
                    v0: 1.0,
                    alpha_override: None,
                },
            ],
            lines: vec![Line {
                from: 1,
                to: 2,
                r: 0.35,
                x: 0.5,
            }],
        };
        let theta = DVector::from_row_slice(&[0.0, -10.0f64.to_radians()]);
        let v = DVector::from_row_slice(&[1.0, 0.7]);
        let ybus = build_ybus(2, &case.lines).unwrap();
        let (p, q) = power_injections(&ybus, &theta, &v);
        for i in 0..2 {
            case.buses[i].p0_net = Some(p[i]);
            case.buses[i].q0_net = Some(q[i]);
        }
        case.buses[0].v0 = v[0];
        let alpha = resolve_alpha(&case, &ybus, Some(AlphaPolicy::Auto)).unwrap();
        let eq = Equilibrium {
            theta,
            v,
            omega_s: 0.0,
            residual_norm: 0.0,
            iterations: 0,
        };
        (case, eq, alpha)
    }

    #[test]
    fn depressed_voltage_point_withholds_the_voltage_certificate() {
        let (case, eq, alpha) = indefinite_two_bus();
        let ybus = build_ybus(2, &case.lines).unwrap();
        let inc = incidence(&case.lines, 2).unwrap();
        let model = build_model(&case, &ybus, &inc, &alpha).unwrap();
        // The manual pin really is an equilibrium.
        assert!(model.steady_residual(&eq.theta, &eq.v, 0.0).amax() < 1e-12);
        let ss = analyze(&model, &eq).unwrap();
        let report = certify(
            &case,
            &ybus,
            &model,
            &eq,
            &ss,
            AssumptionThresholds::default(),
            fast_mode_cutoff(&case.eps),
        )
        .unwrap();
        assert_eq!(report.theorem2.verdict, Verdict::Withheld);
        assert!(report.theorem2.l_lp_min_eig < -0.05);
        assert_relative_eq!(report.theorem2.l_lp_min_eig, -0.0932, epsilon = 2e-3);
        assert!(!report.both_certified());
        // The certificate is conservative here: the block happens to be
        // Hurwitz anyway, which the reported spectrum shows.
        let j_v: Vec<Complex<f64>> = report
            .theorem2
            .j_v_spectrum
            .iter()
            .map(|p| Complex::new(p[0], p[1]))
            .collect();
        assert!(hurwitz(&j_v));
    }

    #[test]
    fn report_serializes_to_json() {
        let report = pinned_report(AlphaPolicy::Auto);
        let json = serde_json::to_string_pretty(&report).unwrap();
        assert!(json.contains("\"verdict\": \"certified\""));
        assert!(json.contains("full_spectrum"));
        assert!(json.contains("\"alpha_ok\": true"));
    }
}

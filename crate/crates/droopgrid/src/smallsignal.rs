//! Small-signal machinery: edge weights, the two graph Laplacians, the full
//! state Jacobian, its decoupled angle and voltage blocks, and coupling
//! diagnostics.
//!
//! The Jacobian expressions hold at any state, not just equilibria; the
//! derivation never divides out a residual. Evaluating them at a solved
//! operating point is the intended use, so the entry points take an
//! equilibrium, with `*_at` variants for arbitrary states.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::ModelMatrices;
use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};

/// Per-directed-edge quantities at a state: flow magnitude U and the two
/// weight families that assemble the Laplacians.
#[derive(Debug, Clone)]
pub struct EdgeWeights {
    /// U_m = V_src * V_dst * |Y_m|.
    pub u: Vec<f64>,
    /// W1_m = -U_m sin(psi_m); angle-to-angle sensitivity weight.
    pub w1: Vec<f64>,
    /// W2_m = U_m cos(psi_m); cross-channel coupling weight.
    pub w2: Vec<f64>,
}

/// Coupling diagnostics between the angle and voltage subsystems.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Coupling {
    /// Largest |W2| over directed edges.
    pub w2_max: f64,
    /// Frobenius norm of the two cross blocks of J relative to all of J.
    pub offblock_ratio: f64,
}

/// Everything the stability layer consumes, assembled in one pass.
#[derive(Debug, Clone)]
pub struct SmallSignal {
    pub weights: EdgeWeights,
    pub l1: DMatrix<f64>,
    pub l2: DMatrix<f64>,
    /// L1 + 2 diag(Qhat): the voltage-block Laplacian before damping.
    pub l_lp: DMatrix<f64>,
    /// Full 3n x 3n Jacobian over [theta; omega; v].
    pub j: DMatrix<f64>,
    /// Angle subsystem [theta; omega], 2n x 2n.
    pub j_a: DMatrix<f64>,
    /// Voltage subsystem, n x n.
    pub j_v: DMatrix<f64>,
    pub coupling: Coupling,
}

/// Edge weights at an arbitrary state.
pub fn edge_weights_at(
    model: &ModelMatrices,
    theta: &DVector<f64>,
    v: &DVector<f64>,
) -> EdgeWeights {
    let m = model.esrc.len();
    let mut u = Vec::with_capacity(m);
    let mut w1 = Vec::with_capacity(m);
    let mut w2 = Vec::with_capacity(m);
    for e in 0..m {
        let (s, t) = (model.esrc[e], model.edst[e]);
        let ue = v[s] * v[t] * model.edge_y[e];
        let (sin_psi, cos_psi) = (theta[s] - theta[t] + model.psi0[e]).sin_cos();
        u.push(ue);
        w1.push(-ue * sin_psi);
        w2.push(ue * cos_psi);
    }
    EdgeWeights { u, w1, w2 }
}

/// Edge weights at an operating point.
pub fn edge_weights(model: &ModelMatrices, eq: &Equilibrium) -> EdgeWeights {
    edge_weights_at(model, &eq.theta, &eq.v)
}

/// Directed-graph Laplacians over the two weight families: row `src` gains
/// the weight on the diagonal and loses it at the target column.
pub fn laplacians(model: &ModelMatrices, w: &EdgeWeights) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = model.n;
    let mut l1 = DMatrix::zeros(n, n);
    let mut l2 = DMatrix::zeros(n, n);
    for m in 0..model.esrc.len() {
        let (s, t) = (model.esrc[m], model.edst[m]);
        l1[(s, s)] += w.w1[m];
        l1[(s, t)] -= w.w1[m];
        l2[(s, s)] += w.w2[m];
        l2[(s, t)] -= w.w2[m];
    }
    (l1, l2)
}

/// Rotated self-injections: Phat_i = Ghat_i V_i^2 + sum of outgoing W2,
/// Qhat_i = -Bhat_i V_i^2 - sum of outgoing W1.
pub fn hat_injections(
    model: &ModelMatrices,
    v: &DVector<f64>,
    w: &EdgeWeights,
) -> (DVector<f64>, DVector<f64>) {
    let n = model.n;
    let mut phat = DVector::zeros(n);
    let mut qhat = DVector::zeros(n);
    for i in 0..n {
        phat[i] = model.ghat[i] * v[i] * v[i];
        qhat[i] = -model.bhat[i] * v[i] * v[i];
    }
    for m in 0..model.esrc.len() {
        let s = model.esrc[m];
        phat[s] += w.w2[m];
        qhat[s] -= w.w1[m];
    }
    (phat, qhat)
}

fn check_state(model: &ModelMatrices, theta: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
    if theta.len() != model.n || v.len() != model.n {
        return Err(Error::Model(format!(
            "state dimension mismatch: model has {} buses, got theta {} / v {}",
            model.n,
            theta.len(),
            v.len()
        )));
    }
    if let Some(i) = (0..model.n).find(|&i| !(v[i].is_finite() && v[i] > 0.0)) {
        return Err(Error::Model(format!(
            "voltage non-positive at bus {}; Jacobian undefined",
            i + 1
        )));
    }
    Ok(())
}

/// Full Jacobian at an arbitrary state.
pub fn jacobian_at(
    model: &ModelMatrices,
    theta: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_state(model, theta, v)?;
    let n = model.n;
    let w = edge_weights_at(model, theta, v);
    let (l1, l2) = laplacians(model, &w);
    let (phat, qhat) = hat_injections(model, v, &w);
    let mut j = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, n + i)] = -model.d_p[i] / model.m_p[i];
        for k in 0..n {
            j[(n + i, k)] = -l1[(i, k)] / model.m_p[i];
            j[(2 * n + i, k)] = -l2[(i, k)] / model.m_q[i];
            let dp = l2[(i, k)] - if i == k { 2.0 * phat[i] } else { 0.0 };
            j[(n + i, 2 * n + k)] = dp / (model.m_p[i] * v[k]);
            let dq = l1[(i, k)]
                + if i == k {
                    2.0 * qhat[i] + model.d_q[i] * v[i]
                } else {
                    0.0
                };
            j[(2 * n + i, 2 * n + k)] = -dq / (model.m_q[i] * v[k]);
        }
    }
    Ok(j)
}

/// Full Jacobian at an operating point.
pub fn assemble_jacobian(model: &ModelMatrices, eq: &Equilibrium) -> Result<DMatrix<f64>> {
    jacobian_at(model, &eq.theta, &eq.v)
}

/// Angle block [0 I; -M_P^-1 L1, -M_P^-1 D_P] and voltage block
/// -M_Q^-1 (L_lp + D_Q diag V)(diag V)^-1, built unconditionally; whether
/// the decoupling is trustworthy is what the coupling measure reports.
pub fn decoupled_blocks(
    model: &ModelMatrices,
    eq: &Equilibrium,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_state(model, &eq.theta, &eq.v)?;
    let n = model.n;
    let w = edge_weights(model, eq);
    let (l1, _) = laplacians(model, &w);
    let (_, qhat) = hat_injections(model, &eq.v, &w);
    let mut j_a = DMatrix::zeros(2 * n, 2 * n);
    let mut j_v = DMatrix::zeros(n, n);
    for i in 0..n {
        j_a[(i, n + i)] = 1.0;
        j_a[(n + i, n + i)] = -model.d_p[i] / model.m_p[i];
        for k in 0..n {
            j_a[(n + i, k)] = -l1[(i, k)] / model.m_p[i];
            let dq = l1[(i, k)]
                + if i == k {
                    2.0 * qhat[i] + model.d_q[i] * eq.v[i]
                } else {
                    0.0
                };
            j_v[(i, k)] = -dq / (model.m_q[i] * eq.v[k]);
        }
    }
    Ok((j_a, j_v))
}

/// Coupling diagnostics from the assembled Jacobian and weights.
pub fn coupling_measure(model: &ModelMatrices, eq: &Equilibrium) -> Result<Coupling> {
    Ok(analyze(model, eq)?.coupling)
}

/// One-pass assembly of everything downstream layers need.
pub fn analyze(model: &ModelMatrices, eq: &Equilibrium) -> Result<SmallSignal> {
    check_state(model, &eq.theta, &eq.v)?;
    let n = model.n;
    let weights = edge_weights(model, eq);
    let (l1, l2) = laplacians(model, &weights);
    let (_, qhat) = hat_injections(model, &eq.v, &weights);
    let mut l_lp = l1.clone();
    for i in 0..n {
        l_lp[(i, i)] += 2.0 * qhat[i];
    }
    let j = jacobian_at(model, &eq.theta, &eq.v)?;
    let (j_a, j_v) = decoupled_blocks(model, eq)?;

    let w2_max = weights.w2.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cross_ov = j.view((n, 2 * n), (n, n)).norm();
    let cross_vt = j.view((2 * n, 0), (n, n)).norm();
    let offblock_ratio = (cross_ov * cross_ov + cross_vt * cross_vt).sqrt() / j.norm();

    Ok(SmallSignal {
        weights,
        l1,
        l2,
        l_lp,
        j,
        j_a,
        j_v,
        coupling: Coupling {
            w2_max,
            offblock_ratio,
        },
    })
}

/// Central-difference Jacobian of `f` at `x`; per-coordinate step
/// h_j = h (1 + |x_j|).
pub(crate) fn fd_jacobian_of<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let rows = f(x)?.len();
    let mut j = DMatrix::zeros(rows, n);
    let mut probe = x.clone();
    for c in 0..n {
        let step = h * (1.0 + x[c].abs());
        let saved = probe[c];
        probe[c] = saved + step;
        let plus = f(&probe)?;
        probe[c] = saved - step;
        let minus = f(&probe)?;
        probe[c] = saved;
        j.set_column(c, &((plus - minus) / (2.0 * step)));
    }
    Ok(j)
}

/// Central-difference Jacobian of the model right-hand side at state `x`.
pub fn finite_difference_jacobian(
    model: &ModelMatrices,
    x: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    fd_jacobian_of(|x| model.rhs(x), x, h)
}

/// Renders a matrix as CSV with a `# matrix <name> n=<rows>` header and
/// 12 significant digits, enough to reconstruct it bit-for-bit in practice.
pub fn write_matrix_csv(name: &str, m: &DMatrix<f64>) -> String {
    let mut s = format!("# matrix {name} n={}\n", m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|k| format!("{:.11e}", m[(i, k)]))
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::{builtin_case, Bus, BusKind, Case, Epsilons, Meta};
    use crate::dynamics::{build_model, resolve_alpha, AlphaPolicy};
    use crate::equilibrium::{calibrate_references, pin_operating_point};
    use crate::netgraph::{build_ybus, incidence};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn pinned_setup(policy: AlphaPolicy) -> (ModelMatrices, Equilibrium) {
        let case = builtin_case();
        let calibrated = calibrate_references(&case, &crate::case_io::builtin_reference()).unwrap();
        let ybus = build_ybus(calibrated.n(), &calibrated.lines).unwrap();
        let alpha = resolve_alpha(&calibrated, &ybus, Some(policy)).unwrap();
        let (pinned, eq) = pin_operating_point(&calibrated, &alpha).unwrap();
        let ybus = build_ybus(pinned.n(), &pinned.lines).unwrap();
        let inc = incidence(&pinned.lines, pinned.n()).unwrap();
        let model = build_model(&pinned, &ybus, &inc, &alpha).unwrap();
        (model, eq)
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences_at_equilibrium() {
        let (model, eq) = pinned_setup(AlphaPolicy::Auto);
        let j = assemble_jacobian(&model, &eq).unwrap();
        let jfd = finite_difference_jacobian(&model, &eq.state(), 1e-6).unwrap();
        let rel = (&j - &jfd).norm() / j.norm();
        assert!(rel < 1e-6, "relative disagreement {rel}");
    }

    #[test]
    fn analytic_jacobian_valid_away_from_equilibrium() {
        let (model, eq) = pinned_setup(AlphaPolicy::Auto);
        let mut x = eq.state();
        let n = model.n;
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for i in 0..n {
            x[i] += rng.random_range(-0.1..0.1);
            x[n + i] += rng.random_range(-0.05..0.05);
            x[2 * n + i] += rng.random_range(-0.05..0.05);
        }
        let theta = x.rows(0, n).into_owned();
        let v = x.rows(2 * n, n).into_owned();
        let j = jacobian_at(&model, &theta, &v).unwrap();
        let jfd = finite_difference_jacobian(&model, &x, 1e-6).unwrap();
        let rel = (&j - &jfd).norm() / j.norm();
        assert!(rel < 1e-6, "relative disagreement {rel}");
    }

    #[test]
    fn halving_the_step_quarters_the_fd_error() {
        let (model, eq) = pinned_setup(AlphaPolicy::Auto);
        let j = assemble_jacobian(&model, &eq).unwrap();
        let e1 = (&finite_difference_jacobian(&model, &eq.state(), 1e-4).unwrap() - &j).norm();
        let e2 = (&finite_difference_jacobian(&model, &eq.state(), 5e-5).unwrap() - &j).norm();
        let ratio = e1 / e2;
        // Central differences are second order; allow slack for roundoff.
        assert!((2.5..6.0).contains(&ratio), "error ratio {ratio}");
    }

    #[test]
    fn fd_seam_recovers_a_linear_map() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let f = |x: &DVector<f64>| Ok(&a * x);
        let j = fd_jacobian_of(f, &DVector::zeros(6), 1e-6).unwrap();
        assert!((&j - &a).amax() < 1e-10);
    }

    #[test]
    fn uniform_angle_shift_is_in_the_null_space() {
        let (model, eq) = pinned_setup(AlphaPolicy::Auto);
        let j = assemble_jacobian(&model, &eq).unwrap();
        let n = model.n;
        let mut v0 = DVector::zeros(3 * n);
        for i in 0..n {
            v0[i] = 1.0;
        }
        assert!((&j * &v0).norm() <= 1e-10 * j.norm());
    }

    #[test]
    fn decoupled_blocks_embed_in_the_full_jacobian() {
        let (model, eq) = pinned_setup(AlphaPolicy::Auto);
        let ss = analyze(&model, &eq).unwrap();
        let n = model.n;
        assert!((ss.j.view((0, 0), (2 * n, 2 * n)).into_owned() - &ss.j_a).amax() < 1e-14);
        assert!((ss.j.view((2 * n, 2 * n), (n, n)).into_owned() - &ss.j_v).amax() < 1e-14);
        // L_lp is L1 plus twice the rotated self-injection on the diagonal.
        let w = edge_weights(&model, &eq);
        let (l1, _) = laplacians(&model, &w);
        let (_, qhat) = hat_injections(&model, &eq.v, &w);
        for i in 0..n {
            assert_relative_eq!(ss.l_lp[(i, i)], l1[(i, i)] + 2.0 * qhat[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn aligned_rotation_shrinks_coupling() {
        let (model_auto, eq_auto) = pinned_setup(AlphaPolicy::Auto);
        let (model_trad, eq_trad) = pinned_setup(AlphaPolicy::Traditional);
        let auto = coupling_measure(&model_auto, &eq_auto).unwrap();
        let trad = coupling_measure(&model_trad, &eq_trad).unwrap();
        assert!(auto.offblock_ratio < 0.05, "auto {}", auto.offblock_ratio);
        assert!(
            trad.offblock_ratio > 0.3,
            "traditional {}",
            trad.offblock_ratio
        );
        assert!(auto.offblock_ratio < trad.offblock_ratio);
        assert!(auto.w2_max < 0.5, "w2_max {}", auto.w2_max);
    }

    #[test]
    fn single_inverter_without_lines() {
        let case = Case {
            meta: Meta {
                name: "island".into(),
                base_mva: None,
                warnings: Vec::new(),
            },
            omega0: 0.0,
            eps: Epsilons::default(),
            buses: vec![Bus {
                id: 1,
                kind: BusKind::Inverter,
                p0_net: Some(0.0),
                q0_net: Some(0.0),
                d1: 5.0,
                d2: 10.0,
                t1: 0.01,
                t2: 10.0,
                v0: 1.0,
                alpha_override: None,
            }],
            lines: vec![],
        };
        case.validate().unwrap();
        let ybus = build_ybus(1, &case.lines).unwrap();
        let inc = incidence(&case.lines, 1).unwrap();
        let model = build_model(&case, &ybus, &inc, &[0.8]).unwrap();
        let eq = Equilibrium {
            theta: DVector::zeros(1),
            v: DVector::from_element(1, 1.0),
            omega_s: 0.0,
            residual_norm: 0.0,
            iterations: 0,
        };
        assert!(model.steady_residual(&eq.theta, &eq.v, 0.0).amax() < 1e-15);
        let (j_a, j_v) = decoupled_blocks(&model, &eq).unwrap();
        // The isolated angle loop is a pure filter: eigenvalues 0 and -1/T1.
        assert_relative_eq!(j_a[(0, 0)], 0.0);
        assert_relative_eq!(j_a[(0, 1)], 1.0);
        assert_relative_eq!(j_a[(1, 0)], 0.0);
        assert_relative_eq!(j_a[(1, 1)], -1.0 / 0.01, max_relative = 1e-12);
        assert_relative_eq!(j_v[(0, 0)], -1.0 / 10.0, max_relative = 1e-12);
    }

    #[test]
    fn matrix_csv_has_header_and_full_rows() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 1e-12, 3.25e4]);
        let csv = write_matrix_csv("L1", &m);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "# matrix L1 n=2");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 2);
        assert!(first[0].starts_with("1.00000000000e0"));
    }
}

//! Generalized-droop dynamic model assembly and right-hand-side evaluation.
//!
//! Every bus runs the same second-order angle / first-order voltage law; the
//! rotation angle alpha mixes active and reactive channels so that lossy
//! networks see an effectively decoupled system. alpha = pi/2 reduces to the
//! conventional frequency and voltage droop pair.
//!
//! State layout is `[theta; omega; v]`, each block of length n.

use std::str::FromStr;

use nalgebra::DVector;

use crate::case_io::{self, Case, Epsilons};
use crate::error::{Error, Result};
use crate::netgraph::{IncidenceSet, YBus};

use std::f64::consts::{FRAC_PI_2, PI};

/// How the rotation angle is chosen when the case does not pin it per bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPolicy {
    /// pi minus the mean admittance angle: aligns the rotation with the
    /// network's aggregate R/X character.
    Auto,
    /// pi/2: conventional decoupled droop.
    Traditional,
    /// A constant angle in radians.
    Fixed(f64),
}

impl FromStr for AlphaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(AlphaPolicy::Auto),
            "traditional" => Ok(AlphaPolicy::Traditional),
            other => other.parse::<f64>().map(AlphaPolicy::Fixed).map_err(|_| {
                Error::Case(format!(
                    "alpha: expected 'auto', 'traditional', or radians, got '{other}'"
                ))
            }),
        }
    }
}

/// Rotation angle for `policy` on this network, validated to [0, pi/2].
pub fn select_alpha(ybus: &YBus, policy: AlphaPolicy) -> Result<f64> {
    let alpha = match policy {
        AlphaPolicy::Auto => {
            let stats = crate::netgraph::phi_stats(ybus)?;
            PI - stats.phi0
        }
        AlphaPolicy::Traditional => FRAC_PI_2,
        AlphaPolicy::Fixed(a) => a,
    };
    if !alpha.is_finite() || !(0.0..=FRAC_PI_2).contains(&alpha) {
        return Err(Error::Model(format!(
            "alpha {alpha} outside [0, pi/2]; the rotation is only defined there"
        )));
    }
    Ok(alpha)
}

/// Per-bus rotation angles. An explicit policy applies uniformly and takes
/// precedence over per-bus overrides; with no policy the automatic choice
/// fills buses that do not override it.
pub fn resolve_alpha(case: &Case, ybus: &YBus, policy: Option<AlphaPolicy>) -> Result<Vec<f64>> {
    match policy {
        Some(p) => {
            let a = select_alpha(ybus, p)?;
            Ok(vec![a; case.n()])
        }
        None => {
            let base = select_alpha(ybus, AlphaPolicy::Auto)?;
            Ok(case
                .buses
                .iter()
                .map(|b| b.alpha_override.unwrap_or(base))
                .collect())
        }
    }
}

/// Fully assembled dynamic model: diagonal coefficient matrices, rotated
/// references and shunt-like self terms, and the directed edge tables used
/// to evaluate branch flows.
#[derive(Debug, Clone)]
pub struct ModelMatrices {
    pub n: usize,
    /// Rotation angle per bus (radians).
    pub alpha: Vec<f64>,
    /// Angle-equation inertia diagonal: D1*T1 on inverters, e1 on loads.
    pub m_p: DVector<f64>,
    /// Angle-equation damping diagonal: D1 on inverters, e2 on loads.
    pub d_p: DVector<f64>,
    /// Voltage-equation time-constant diagonal: D2*T2 on inverters, e3 on loads.
    pub m_q: DVector<f64>,
    /// Voltage-equation droop diagonal: D2 on inverters, 0 on loads.
    pub d_q: DVector<f64>,
    /// Rotated active reference: p0*sin(a) - q0*cos(a), plus D1*omega0 on inverters.
    pub p_ref: DVector<f64>,
    /// Rotated reactive reference: p0*cos(a) + q0*sin(a), plus D2*v0 on inverters.
    pub q_ref: DVector<f64>,
    /// Rotated self-conductance: G_ii*sin(a) + B_ii*cos(a).
    pub ghat: DVector<f64>,
    /// Rotated self-susceptance: -G_ii*cos(a) + B_ii*sin(a).
    pub bhat: DVector<f64>,
    /// Directed edge sources, canonical order.
    pub esrc: Vec<usize>,
    /// Directed edge targets, canonical order.
    pub edst: Vec<usize>,
    /// |Y_ik| per directed edge.
    pub edge_y: Vec<f64>,
    /// Constant part of the edge phase: -phi_m + pi/2 - alpha_src.
    pub psi0: Vec<f64>,
    pub inverters: Vec<usize>,
    pub loads: Vec<usize>,
    pub eps: Epsilons,
    /// Slowest characteristic time among the fast coefficients:
    /// min(e1/e2, e3, T1, T2). Step sizes should sit well below it.
    pub min_timescale: f64,
    /// Fingerprint of the case this model was built from.
    pub case_hash: String,
}

/// Builds the dynamic model. The case must be calibrated (no null
/// references) and every rotation angle must lie in [0, pi/2].
pub fn build_model(
    case: &Case,
    ybus: &YBus,
    inc: &IncidenceSet,
    alpha: &[f64],
) -> Result<ModelMatrices> {
    case.validate()?;
    let n = case.n();
    if ybus.n != n || inc.n != n {
        return Err(Error::Model(format!(
            "dimension mismatch: case has {n} buses, ybus {} and incidence {}",
            ybus.n, inc.n
        )));
    }
    if inc.edge_order != ybus.edge_order {
        return Err(Error::Model(
            "ybus and incidence disagree on edge order; rebuild both from the same lines".into(),
        ));
    }
    if alpha.len() != n {
        return Err(Error::Model(format!(
            "alpha has {} entries for {n} buses",
            alpha.len()
        )));
    }
    for (i, &a) in alpha.iter().enumerate() {
        if !a.is_finite() || !(0.0..=FRAC_PI_2).contains(&a) {
            return Err(Error::Model(format!("alpha[{i}] = {a} outside [0, pi/2]")));
        }
    }
    if !case.is_calibrated() {
        return Err(Error::Model(
            "case has null droop references; calibrate against an operating point first".into(),
        ));
    }

    let eps = case.eps;
    let mut m_p = DVector::zeros(n);
    let mut d_p = DVector::zeros(n);
    let mut m_q = DVector::zeros(n);
    let mut d_q = DVector::zeros(n);
    let mut p_ref = DVector::zeros(n);
    let mut q_ref = DVector::zeros(n);
    let mut ghat = DVector::zeros(n);
    let mut bhat = DVector::zeros(n);
    let mut min_timescale = eps.e1 / eps.e2;
    min_timescale = min_timescale.min(eps.e3);

    for (i, bus) in case.buses.iter().enumerate() {
        let (sa, ca) = alpha[i].sin_cos();
        let p0 = bus.p0_net.expect("checked calibrated");
        let q0 = bus.q0_net.expect("checked calibrated");
        if case.is_inverter(i) {
            m_p[i] = bus.d1 * bus.t1;
            d_p[i] = bus.d1;
            m_q[i] = bus.d2 * bus.t2;
            d_q[i] = bus.d2;
            p_ref[i] = p0 * sa - q0 * ca + bus.d1 * case.omega0;
            q_ref[i] = p0 * ca + q0 * sa + bus.d2 * bus.v0;
            min_timescale = min_timescale.min(bus.t1).min(bus.t2);
        } else {
            m_p[i] = eps.e1;
            d_p[i] = eps.e2;
            m_q[i] = eps.e3;
            d_q[i] = 0.0;
            p_ref[i] = p0 * sa - q0 * ca;
            q_ref[i] = p0 * ca + q0 * sa;
        }
        ghat[i] = ybus.g[(i, i)] * sa + ybus.b[(i, i)] * ca;
        bhat[i] = -ybus.g[(i, i)] * ca + ybus.b[(i, i)] * sa;
    }

    let mut esrc = Vec::with_capacity(ybus.edge_order.len());
    let mut edst = Vec::with_capacity(ybus.edge_order.len());
    let mut psi0 = Vec::with_capacity(ybus.edge_order.len());
    for (m, &(s, t)) in ybus.edge_order.iter().enumerate() {
        esrc.push(s);
        edst.push(t);
        psi0.push(-ybus.edge_phi[m] + FRAC_PI_2 - alpha[s]);
    }

    Ok(ModelMatrices {
        n,
        alpha: alpha.to_vec(),
        m_p,
        d_p,
        m_q,
        d_q,
        p_ref,
        q_ref,
        ghat,
        bhat,
        esrc,
        edst,
        edge_y: ybus.edge_y.clone(),
        psi0,
        inverters: case.inverters(),
        loads: case.loads(),
        eps,
        min_timescale,
        case_hash: case_io::case_hash(case),
    })
}

impl ModelMatrices {
    /// Accumulates rotated branch flows into the source bus of each edge:
    /// `flow_p[i] += U_m cos(psi_m)`, `flow_q[i] += U_m sin(psi_m)`.
    fn flows_into(
        &self,
        theta: &[f64],
        v: &[f64],
        flow_p: &mut DVector<f64>,
        flow_q: &mut DVector<f64>,
    ) {
        flow_p.fill(0.0);
        flow_q.fill(0.0);
        for m in 0..self.esrc.len() {
            let s = self.esrc[m];
            let t = self.edst[m];
            let u = v[s] * v[t] * self.edge_y[m];
            let (sin_psi, cos_psi) = (theta[s] - theta[t] + self.psi0[m]).sin_cos();
            flow_p[s] += u * cos_psi;
            flow_q[s] += u * sin_psi;
        }
    }

    /// Unchecked right-hand side; `out` must be length 3n.
    pub(crate) fn rhs_into(&self, x: &[f64], out: &mut DVector<f64>, scratch: &mut Scratch) {
        let n = self.n;
        let (theta, rest) = x.split_at(n);
        let (omega, v) = rest.split_at(n);
        self.flows_into(theta, v, &mut scratch.flow_p, &mut scratch.flow_q);
        for i in 0..n {
            out[i] = omega[i];
            out[n + i] = (self.p_ref[i]
                - self.d_p[i] * omega[i]
                - v[i] * v[i] * self.ghat[i]
                - scratch.flow_p[i])
                / self.m_p[i];
            out[2 * n + i] = (self.q_ref[i] - self.d_q[i] * v[i] + v[i] * v[i] * self.bhat[i]
                - scratch.flow_q[i])
                / self.m_q[i];
        }
    }

    /// Full state derivative. Errors on dimension mismatch or a non-positive
    /// voltage, where the model stops being meaningful.
    pub fn rhs(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n;
        if x.len() != 3 * n {
            return Err(Error::Model(format!(
                "state has {} entries, expected {}",
                x.len(),
                3 * n
            )));
        }
        for i in 0..n {
            let v = x[2 * n + i];
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Model(format!(
                    "voltage non-positive at bus {} (v = {v}); model undefined",
                    i + 1
                )));
            }
        }
        let mut out = DVector::zeros(3 * n);
        let mut scratch = Scratch::new(n);
        self.rhs_into(x.as_slice(), &mut out, &mut scratch);
        Ok(out)
    }

    /// Residual of the steady condition with a synchronized drift omega_s:
    /// first n entries are the angle equations evaluated at theta_dot =
    /// omega_s and theta_ddot = 0, last n the voltage equations at v_dot = 0.
    pub fn steady_residual(
        &self,
        theta: &DVector<f64>,
        v: &DVector<f64>,
        omega_s: f64,
    ) -> DVector<f64> {
        let n = self.n;
        let mut scratch = Scratch::new(n);
        self.flows_into(
            theta.as_slice(),
            v.as_slice(),
            &mut scratch.flow_p,
            &mut scratch.flow_q,
        );
        let mut r = DVector::zeros(2 * n);
        for i in 0..n {
            r[i] = self.p_ref[i]
                - self.d_p[i] * omega_s
                - v[i] * v[i] * self.ghat[i]
                - scratch.flow_p[i];
            r[n + i] =
                self.q_ref[i] - self.d_q[i] * v[i] + v[i] * v[i] * self.bhat[i] - scratch.flow_q[i];
        }
        r
    }
}

/// Reusable flow accumulators for the hot integration path.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    flow_p: DVector<f64>,
    flow_q: DVector<f64>,
}

impl Scratch {
    pub(crate) fn new(n: usize) -> Self {
        Scratch {
            flow_p: DVector::zeros(n),
            flow_q: DVector::zeros(n),
        }
    }
}

/// Untransformed load power-balance residuals at state `x`: for each load
/// bus, `p0 - P_i(theta, v)` stacked over loads, then `q0 - Q_i(theta, v)`.
///
/// These are the algebraic constraints of the load model before the alpha
/// rotation; the rotated pair inside the dynamic equations is exactly the
/// rotation matrix applied to this vector.
pub fn dae_residual(case: &Case, ybus: &YBus, x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = case.n();
    if x.len() != 3 * n {
        return Err(Error::Model(format!(
            "state has {} entries, expected {}",
            x.len(),
            3 * n
        )));
    }
    if !case.is_calibrated() {
        return Err(Error::Model(
            "case has null droop references; calibrate first".into(),
        ));
    }
    let theta = x.rows(0, n).into_owned();
    let v = x.rows(2 * n, n).into_owned();
    let (p, q) = power_injections(ybus, &theta, &v);
    let loads = case.loads();
    let mut r = DVector::zeros(2 * loads.len());
    for (row, &i) in loads.iter().enumerate() {
        r[row] = case.buses[i].p0_net.expect("checked calibrated") - p[i];
        r[loads.len() + row] = case.buses[i].q0_net.expect("checked calibrated") - q[i];
    }
    Ok(r)
}

/// Net complex power injected at each bus for the given angles and voltages.
pub fn power_injections(
    ybus: &YBus,
    theta: &DVector<f64>,
    v: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = ybus.n;
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    for i in 0..n {
        let mut pi = v[i] * v[i] * ybus.g[(i, i)];
        let mut qi = -v[i] * v[i] * ybus.b[(i, i)];
        for k in 0..n {
            if k == i {
                continue;
            }
            let (g, b) = (ybus.g[(i, k)], ybus.b[(i, k)]);
            if g == 0.0 && b == 0.0 {
                continue;
            }
            let (st, ct) = (theta[i] - theta[k]).sin_cos();
            pi += v[i] * v[k] * (g * ct + b * st);
            qi += v[i] * v[k] * (g * st - b * ct);
        }
        p[i] = pi;
        q[i] = qi;
    }
    (p, q)
}

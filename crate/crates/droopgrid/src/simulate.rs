//! Time-domain simulation: fixed-step RK4 and adaptive Dormand-Prince 5(4)
//! integration, disturbance construction, settling-time measurement, and
//! droop-parameter sweeps.
//!
//! All output lands on a uniform time grid regardless of method, so
//! trajectories from different runs line up sample for sample and CSV output
//! is reproducible byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::case_io::Case;
use crate::dynamics::{build_model, resolve_alpha, AlphaPolicy, ModelMatrices, Scratch};
use crate::equilibrium::{pin_operating_point, Equilibrium};
use crate::error::{Error, Result};
use crate::netgraph::{build_ybus, incidence};
use crate::smallsignal::{edge_weights, laplacians};

/// States with any component beyond this magnitude are treated as diverged;
/// the trajectory is truncated there and flagged rather than erroring out.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Per-step error tolerance (absolute and relative) for the adaptive method.
pub const RK45_TOL: f64 = 1e-8;

const RK45_SAFETY: f64 = 0.9;
const RK45_FAC_MIN: f64 = 0.2;
const RK45_FAC_MAX: f64 = 5.0;
/// Steps below this fraction of the horizon mean the controller has stalled.
const RK45_MIN_STEP_FACTOR: f64 = 1e-12;

/// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights (the propagated solution).
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// Embedded fourth-order weights (error estimate).
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4,
    Rk45,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rk4 => "rk4",
            Method::Rk45 => "rk45",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "rk45" => Ok(Method::Rk45),
            other => Err(Error::Case(format!(
                "method: expected 'rk4' or 'rk45', got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryMeta {
    pub method: Method,
    pub dt: f64,
    pub case_hash: String,
    /// Set when the state left the divergence bound and the run was cut.
    pub diverged: bool,
    pub warnings: Vec<String>,
}

/// Sampled state history on a uniform grid; matrices are bus x sample.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub theta: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.theta.nrows()
    }

    pub fn theta_series(&self, bus: usize) -> Vec<f64> {
        self.theta.row(bus).iter().copied().collect()
    }

    pub fn omega_series(&self, bus: usize) -> Vec<f64> {
        self.omega.row(bus).iter().copied().collect()
    }

    pub fn v_series(&self, bus: usize) -> Vec<f64> {
        self.v.row(bus).iter().copied().collect()
    }
}

/// Angle series of one bus relative to the instantaneous network mean.
/// Removes the shared drift mode, which never settles in absolute terms.
pub fn mean_frame_series(traj: &Trajectory, bus: usize) -> Vec<f64> {
    let n = traj.n() as f64;
    (0..traj.t.len())
        .map(|k| {
            let mean = traj.theta.column(k).sum() / n;
            traj.theta[(bus, k)] - mean
        })
        .collect()
}

/// Additive state offsets applied at t = 0. Keys are 1-based bus ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    /// Angle offsets in radians.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub theta: BTreeMap<usize, f64>,
    /// Voltage offsets in p.u.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub v: BTreeMap<usize, f64>,
    /// Optional seeded uniform voltage noise on every bus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomDisturbance>,
}

/// Uniform draws in [-magnitude, magnitude) added to each bus voltage,
/// in bus order, from a ChaCha12 stream seeded by `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomDisturbance {
    pub magnitude: f64,
    pub seed: u64,
}

impl DisturbanceSpec {
    /// The default study disturbance: +0.01 p.u. on every inverter voltage.
    pub fn voltage_kick(case: &Case, dv: f64) -> Self {
        DisturbanceSpec {
            theta: BTreeMap::new(),
            v: case.inverters().iter().map(|&i| (i + 1, dv)).collect(),
            random: None,
        }
    }
}

/// Parses and sanity-checks a disturbance specification.
pub fn parse_disturbance(json: &str) -> Result<DisturbanceSpec> {
    let spec: DisturbanceSpec = serde_json::from_str(json)?;
    for (field, map) in [("theta", &spec.theta), ("v", &spec.v)] {
        for (&bus, &offset) in map {
            if bus == 0 {
                return Err(Error::Case(format!(
                    "disturbance.{field}: bus ids are 1-based, got 0"
                )));
            }
            if !offset.is_finite() {
                return Err(Error::Case(format!(
                    "disturbance.{field}[{bus}]: offset must be finite"
                )));
            }
        }
    }
    if let Some(r) = &spec.random {
        if !r.magnitude.is_finite() || r.magnitude < 0.0 {
            return Err(Error::Case(format!(
                "disturbance.random.magnitude: must be non-negative, got {}",
                r.magnitude
            )));
        }
    }
    Ok(spec)
}

/// Initial state for a disturbed run: the equilibrium state plus the
/// specified offsets. Every voltage must stay positive after the kick; a
/// disturbance that swallows the steady voltage is rejected.
pub fn apply_disturbance(eq: &Equilibrium, spec: &DisturbanceSpec) -> Result<DVector<f64>> {
    let n = eq.n();
    let mut x = eq.state();
    for (field, map, base) in [("theta", &spec.theta, 0usize), ("v", &spec.v, 2 * n)] {
        for (&bus, &offset) in map {
            if bus < 1 || bus > n {
                return Err(Error::Case(format!(
                    "disturbance.{field}: bus id {bus} outside 1..={n}"
                )));
            }
            if !offset.is_finite() {
                return Err(Error::Case(format!(
                    "disturbance.{field}[{bus}]: offset must be finite"
                )));
            }
            x[base + bus - 1] += offset;
        }
    }
    if let Some(r) = &spec.random {
        if !r.magnitude.is_finite() || r.magnitude < 0.0 {
            return Err(Error::Case(
                "disturbance.random.magnitude: must be non-negative".into(),
            ));
        }
        if r.magnitude > 0.0 {
            let mut rng = ChaCha12Rng::seed_from_u64(r.seed);
            for i in 0..n {
                x[2 * n + i] += rng.random_range(-r.magnitude..r.magnitude);
            }
        }
    }
    for i in 0..n {
        let v = x[2 * n + i];
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Case(format!(
                "disturbance drives bus {} voltage to {v:.4}; offsets must stay below \
                 the steady voltage",
                i + 1
            )));
        }
    }
    Ok(x)
}

/// Uniform output grid from 0 to t_end with spacing dt; the final point
/// lands exactly on t_end.
fn time_grid(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::Case(format!("t_end must be positive, got {t_end}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Case(format!("dt must be positive, got {dt}")));
    }
    if dt > t_end {
        return Err(Error::Case(format!("dt = {dt} exceeds t_end = {t_end}")));
    }
    let tiny = 1e-9 * dt;
    let mut grid = Vec::with_capacity((t_end / dt) as usize + 2);
    let mut i = 0usize;
    loop {
        let t = i as f64 * dt;
        if t >= t_end - tiny {
            break;
        }
        grid.push(t);
        i += 1;
    }
    grid.push(t_end);
    Ok(grid)
}

/// Cubic Hermite value at fraction `s` of a step of width `h`.
fn hermite(
    x0: &DVector<f64>,
    f0: &DVector<f64>,
    x1: &DVector<f64>,
    f1: &DVector<f64>,
    h: f64,
    s: f64,
) -> DVector<f64> {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let mut out = x0 * h00;
    out.axpy(h10 * h, f0, 1.0);
    out.axpy(h01, x1, 1.0);
    out.axpy(h11 * h, f1, 1.0);
    out
}

fn check_finite(x: &DVector<f64>, t: f64) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "state became non-finite near t = {t:.6}"
        )));
    }
    Ok(())
}

/// Integrates `f` over the grid. Returns the sampled states (possibly
/// truncated) and whether the run diverged.
pub(crate) fn integrate_fn<F>(
    mut f: F,
    x0: &DVector<f64>,
    grid: &[f64],
    method: Method,
) -> Result<(Vec<DVector<f64>>, bool)>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>) -> Result<()>,
{
    let dim = x0.len();
    let mut out = Vec::with_capacity(grid.len());
    out.push(x0.clone());
    match method {
        Method::Rk4 => {
            let mut x = x0.clone();
            let mut k1 = DVector::zeros(dim);
            let mut k2 = DVector::zeros(dim);
            let mut k3 = DVector::zeros(dim);
            let mut k4 = DVector::zeros(dim);
            let mut tmp = DVector::zeros(dim);
            for w in grid.windows(2) {
                let (t0, t1) = (w[0], w[1]);
                let h = t1 - t0;
                f(t0, &x, &mut k1)?;
                tmp.copy_from(&x);
                tmp.axpy(0.5 * h, &k1, 1.0);
                f(t0 + 0.5 * h, &tmp, &mut k2)?;
                tmp.copy_from(&x);
                tmp.axpy(0.5 * h, &k2, 1.0);
                f(t0 + 0.5 * h, &tmp, &mut k3)?;
                tmp.copy_from(&x);
                tmp.axpy(h, &k3, 1.0);
                f(t1, &tmp, &mut k4)?;
                x.axpy(h / 6.0, &k1, 1.0);
                x.axpy(h / 3.0, &k2, 1.0);
                x.axpy(h / 3.0, &k3, 1.0);
                x.axpy(h / 6.0, &k4, 1.0);
                check_finite(&x, t1)?;
                if x.amax() > DIVERGENCE_LIMIT {
                    return Ok((out, true));
                }
                out.push(x.clone());
            }
            Ok((out, false))
        }
        Method::Rk45 => {
            let t_end = *grid.last().expect("grid is never empty");
            let h_min = RK45_MIN_STEP_FACTOR * t_end;
            let mut t = grid[0];
            let mut x = x0.clone();
            let mut k: Vec<DVector<f64>> = (0..7).map(|_| DVector::zeros(dim)).collect();
            f(t, &x, &mut k[0])?;
            let mut h = (grid[1] - grid[0]).min(t_end - t);
            let mut out_idx = 1usize;
            let mut tmp = DVector::zeros(dim);
            let mut x_new = DVector::zeros(dim);
            while out_idx < grid.len() {
                h = h.min(t_end - t);
                if h < h_min {
                    return Err(Error::Numerical(format!(
                        "adaptive step collapsed to {h:.3e} at t = {t:.6}; \
                         the problem is too stiff for the requested tolerance"
                    )));
                }
                for stage in 1..7 {
                    tmp.copy_from(&x);
                    for (j, coeff) in DP_A[stage - 1].iter().enumerate().take(stage) {
                        if *coeff != 0.0 {
                            tmp.axpy(h * coeff, &k[j], 1.0);
                        }
                    }
                    f(t + DP_C[stage] * h, &tmp, &mut k[stage])?;
                }
                // Fifth-order solution; stage 6 evaluated it at t + h already.
                x_new.copy_from(&x);
                for j in 0..7 {
                    if DP_B5[j] != 0.0 {
                        x_new.axpy(h * DP_B5[j], &k[j], 1.0);
                    }
                }
                // Embedded error estimate against the fourth-order weights.
                let mut err = 0.0f64;
                for i in 0..dim {
                    let mut e = 0.0;
                    for j in 0..7 {
                        e += (DP_B5[j] - DP_B4[j]) * k[j][i];
                    }
                    e *= h;
                    let scale = RK45_TOL + RK45_TOL * x[i].abs().max(x_new[i].abs());
                    err = err.max((e / scale).abs());
                }
                if !err.is_finite() {
                    h *= RK45_FAC_MIN;
                    continue;
                }
                if err > 1.0 {
                    h *= (RK45_SAFETY * err.powf(-0.2)).clamp(RK45_FAC_MIN, RK45_FAC_MAX);
                    continue;
                }
                check_finite(&x_new, t + h)?;
                if x_new.amax() > DIVERGENCE_LIMIT {
                    return Ok((out, true));
                }
                // k7 is the derivative at the accepted endpoint (FSAL).
                let tiny = 1e-12 * t_end.max(1.0);
                while out_idx < grid.len() && grid[out_idx] <= t + h + tiny {
                    let s = ((grid[out_idx] - t) / h).clamp(0.0, 1.0);
                    out.push(hermite(&x, &k[0], &x_new, &k[6], h, s));
                    out_idx += 1;
                }
                t += h;
                std::mem::swap(&mut x, &mut x_new);
                let (first, rest) = k.split_at_mut(1);
                first[0].copy_from(&rest[5]);
                let factor = if err == 0.0 {
                    RK45_FAC_MAX
                } else {
                    (RK45_SAFETY * err.powf(-0.2)).clamp(RK45_FAC_MIN, RK45_FAC_MAX)
                };
                h *= factor;
            }
            Ok((out, false))
        }
    }
}

/// Integrates the droop model from `x0` and samples every `dt` up to
/// `t_end`.
///
/// With rk4 the sample spacing is also the integration step, so a warning
/// is attached when dt is within a decade of the fastest model timescale;
/// a fixed step in that range can be silently unstable. The adaptive rk45
/// picks its own internal steps against a per-step tolerance of 1e-8 and
/// resamples onto the grid, so dt is purely an output choice there.
pub fn integrate(
    model: &ModelMatrices,
    x0: &DVector<f64>,
    t_end: f64,
    dt: f64,
    method: Method,
) -> Result<Trajectory> {
    let n = model.n;
    if x0.len() != 3 * n {
        return Err(Error::Model(format!(
            "initial state has {} entries, expected {}",
            x0.len(),
            3 * n
        )));
    }
    let grid = time_grid(t_end, dt)?;
    let mut warnings = Vec::new();
    if method == Method::Rk4 && dt >= model.min_timescale / 10.0 {
        warnings.push(format!(
            "dt = {dt} is within a decade of the fastest model timescale \
             {:.3e}; fixed-step integration may be inaccurate or unstable",
            model.min_timescale
        ));
    }
    let mut scratch = Scratch::new(n);
    let f = |_t: f64, x: &DVector<f64>, out: &mut DVector<f64>| -> Result<()> {
        for i in 0..n {
            let v = x[2 * n + i];
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Numerical(format!(
                    "voltage collapsed at bus {} (v = {v:.4e}) during integration",
                    i + 1
                )));
            }
        }
        model.rhs_into(x.as_slice(), out, &mut scratch);
        Ok(())
    };
    let (states, diverged) = integrate_fn(f, x0, &grid, method)?;
    let steps = states.len();
    let mut theta = DMatrix::zeros(n, steps);
    let mut omega = DMatrix::zeros(n, steps);
    let mut v = DMatrix::zeros(n, steps);
    for (kcol, x) in states.iter().enumerate() {
        for i in 0..n {
            theta[(i, kcol)] = x[i];
            omega[(i, kcol)] = x[n + i];
            v[(i, kcol)] = x[2 * n + i];
        }
    }
    Ok(Trajectory {
        t: grid[..steps].to_vec(),
        theta,
        omega,
        v,
        meta: TrajectoryMeta {
            method,
            dt,
            case_hash: model.case_hash.clone(),
            diverged,
            warnings,
        },
    })
}

/// Renders a trajectory as CSV. Metadata rides in `#` comment lines above
/// the header; every value is printed with 12 significant digits. `stride`
/// thins the rows (1 keeps everything); the final sample is always written.
pub fn trajectory_csv(traj: &Trajectory, stride: usize) -> String {
    let stride = stride.max(1);
    let n = traj.n();
    let mut s = format!(
        "# case {} method {} dt {}\n",
        traj.meta.case_hash, traj.meta.method, traj.meta.dt
    );
    if traj.meta.diverged {
        s.push_str("# diverged: trajectory truncated at the last bounded sample\n");
    }
    for w in &traj.meta.warnings {
        s.push_str("# warning: ");
        s.push_str(w);
        s.push('\n');
    }
    s.push('t');
    for prefix in ["theta", "omega", "v"] {
        for i in 1..=n {
            s.push_str(&format!(",{prefix}_{i}"));
        }
    }
    s.push('\n');
    let last = traj.t.len().saturating_sub(1);
    let mut rows: Vec<usize> = (0..traj.t.len()).step_by(stride).collect();
    if rows.last() != Some(&last) {
        rows.push(last);
    }
    for k in rows {
        s.push_str(&format!("{:.12e}", traj.t[k]));
        for m in [&traj.theta, &traj.omega, &traj.v] {
            for i in 0..n {
                s.push_str(&format!(",{:.12e}", m[(i, k)]));
            }
        }
        s.push('\n');
    }
    s
}

/// Settling verdict for one signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Settling {
    Time(f64),
    /// The signal had not converged by the end of the window.
    Undefined,
}

impl Settling {
    pub fn time(&self) -> Option<f64> {
        match self {
            Settling::Time(t) => Some(*t),
            Settling::Undefined => None,
        }
    }
}

/// Settling time of one sampled signal.
///
/// The settled value is the mean of the final 5% of samples. A signal that
/// never moved (initial deviation under 1e-9) settles at 0. If the final
/// window still spans a tenth of the settling band, the signal has not
/// converged and the time is undefined. Otherwise the settling time is the
/// earliest instant after which the signal stays within `band` times the
/// initial deviation of its settled value.
pub fn settling_time_series(t: &[f64], y: &[f64], band: f64) -> Settling {
    assert_eq!(t.len(), y.len(), "time and signal lengths differ");
    assert!(band > 0.0, "band must be positive");
    if y.len() < 2 {
        return Settling::Undefined;
    }
    let w = ((0.05 * y.len() as f64).ceil() as usize).max(1);
    let tail = &y[y.len() - w..];
    let y_inf = tail.iter().sum::<f64>() / w as f64;
    let den = (y[0] - y_inf).abs();
    if den < 1e-9 {
        return Settling::Time(0.0);
    }
    let (tail_min, tail_max) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if tail_max - tail_min >= (band / 10.0) * den {
        return Settling::Undefined;
    }
    let tol = band * den;
    let mut settle_idx = 0usize;
    for k in (0..y.len()).rev() {
        if (y[k] - y_inf).abs() > tol {
            settle_idx = k + 1;
            break;
        }
    }
    if settle_idx >= t.len() {
        Settling::Undefined
    } else {
        Settling::Time(t[settle_idx])
    }
}

/// Per-bus settling times for each signal family.
#[derive(Debug, Clone)]
pub struct SettlingTimes {
    pub theta: Vec<Settling>,
    pub omega: Vec<Settling>,
    pub v: Vec<Settling>,
}

/// Settling times of every raw bus signal in a trajectory.
pub fn settling_times(traj: &Trajectory, band: f64) -> SettlingTimes {
    let n = traj.n();
    let each = |rowsrc: &dyn Fn(usize) -> Vec<f64>| -> Vec<Settling> {
        (0..n)
            .map(|i| settling_time_series(&traj.t, &rowsrc(i), band))
            .collect()
    };
    SettlingTimes {
        theta: each(&|i| traj.theta_series(i)),
        omega: each(&|i| traj.omega_series(i)),
        v: each(&|i| traj.v_series(i)),
    }
}

/// Least-squares slope of ln|y - y_inf| over t in [t0, t1]: the empirical
/// exponential decay rate of the dominant mode.
pub fn fit_exponential_rate(t: &[f64], y: &[f64], y_inf: f64, t0: f64, t1: f64) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&ti, &yi) in t.iter().zip(y) {
        if ti < t0 || ti > t1 {
            continue;
        }
        let d = (yi - y_inf).abs();
        if d > 1e-300 {
            xs.push(ti);
            ys.push(d.ln());
        }
    }
    if xs.len() < 10 {
        return Err(Error::Numerical(format!(
            "decay fit window [{t0}, {t1}] holds only {} usable samples",
            xs.len()
        )));
    }
    let m = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / m;
    let mean_y = ys.iter().sum::<f64>() / m;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        cov += (x - mean_x) * (y - mean_y);
        var += (x - mean_x) * (x - mean_x);
    }
    if var == 0.0 {
        return Err(Error::Numerical(
            "decay fit window has no time spread".into(),
        ));
    }
    Ok(cov / var)
}

/// Inverter droop constant selected by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    T1,
    T2,
    D1,
    D2,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::T1 => "T1",
            SweepParam::T2 => "T2",
            SweepParam::D1 => "D1",
            SweepParam::D2 => "D2",
        })
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T1" => Ok(SweepParam::T1),
            "T2" => Ok(SweepParam::T2),
            "D1" => Ok(SweepParam::D1),
            "D2" => Ok(SweepParam::D2),
            other => Err(Error::Case(format!(
                "param: expected T1, T2, D1, or D2, got '{other}'"
            ))),
        }
    }
}

fn apply_param(case: &mut Case, param: SweepParam, value: f64) {
    for i in case.inverters() {
        let bus = &mut case.buses[i];
        match param {
            SweepParam::T1 => bus.t1 = value,
            SweepParam::T2 => bus.t2 = value,
            SweepParam::D1 => bus.d1 = value,
            SweepParam::D2 => bus.d2 = value,
        }
    }
}

/// Sweep configuration. Defaults: 60 s horizon at dt = 5e-4 with rk4 and a
/// 2% settling band, automatic disturbance construction, rotation policy
/// from the case.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Constants held at a non-default value while `param` sweeps.
    pub fixed: Vec<(SweepParam, f64)>,
    /// Explicit shared disturbance; when absent, one angle-shaped kick and
    /// one voltage kick are run per value so each signal family is excited
    /// through its own channel.
    pub disturbance: Option<DisturbanceSpec>,
    pub alpha: Option<AlphaPolicy>,
    pub t_end: f64,
    pub dt: f64,
    pub method: Method,
    pub band: f64,
}

impl SweepPlan {
    pub fn new(param: SweepParam, values: Vec<f64>) -> Self {
        SweepPlan {
            param,
            values,
            fixed: Vec::new(),
            disturbance: None,
            alpha: None,
            t_end: 60.0,
            dt: 5e-4,
            method: Method::Rk4,
            band: 0.02,
        }
    }
}

/// Outcome of one sweep value: per-bus settling of the angle (network-mean
/// frame) and voltage signals, plus a stability flag.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub value: f64,
    pub theta: Vec<Settling>,
    pub v: Vec<Settling>,
    pub stable: bool,
    pub note: Option<String>,
}

/// Angle disturbance pattern for sweep studies: the top eigenvector of the
/// load-eliminated (Kron-reduced) symmetric part of L1, restricted to
/// inverter buses, scaled to a 0.01 rad peak. This excites the stiffest
/// inter-inverter angle mode instead of the shared translation, which no
/// relative measurement would ever see. Falls back to a uniform inverter
/// kick if the load block cannot be eliminated.
pub fn angle_kick_pattern(model: &ModelMatrices, eq: &Equilibrium) -> Result<Vec<f64>> {
    let w = edge_weights(model, eq);
    let (l1, _) = laplacians(model, &w);
    let s = (&l1 + l1.transpose()) * 0.5;
    let inv = &model.inverters;
    let loads = &model.loads;
    let k = inv.len();
    let mut direction = DVector::from_element(k, 1.0);
    if k > 1 {
        let pick = |rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |i, j| s[(rows[i], cols[j])])
        };
        let s_ii = pick(inv, inv);
        let reduced = if loads.is_empty() {
            Some(s_ii)
        } else {
            let s_ll = pick(loads, loads);
            let s_li = pick(loads, inv);
            let s_il = pick(inv, loads);
            s_ll.full_piv_lu().solve(&s_li).map(|x| &s_ii - s_il * x)
        };
        if let Some(r) = reduced {
            let sym = (&r + r.transpose()) * 0.5;
            let eig = nalgebra::SymmetricEigen::new(sym);
            let mut top = 0usize;
            for j in 1..k {
                if eig.eigenvalues[j] > eig.eigenvalues[top] {
                    top = j;
                }
            }
            let vcol = eig.eigenvectors.column(top).into_owned();
            let peak = vcol.amax();
            if peak > 0.0 {
                direction = vcol / peak;
                if let Some(first) = direction.iter().find(|e| e.abs() > 1e-12) {
                    if *first < 0.0 {
                        direction = -direction;
                    }
                }
            }
        }
    }
    let mut pattern = vec![0.0; model.n];
    for (j, &i) in inv.iter().enumerate() {
        pattern[i] = 0.01 * direction[j];
    }
    Ok(pattern)
}

/// Runs one simulation per sweep value around a pinned equilibrium and
/// measures settling. Every run shares the same disturbance state(s) and the
/// same operating point; only the swept constant changes, so differences in
/// settling are attributable to it. An unstable run is flagged and the sweep
/// continues. `traj_sink` receives every simulated trajectory as
/// `(value_index, pass_label, value, trajectory)`.
pub fn sweep<F>(case: &Case, plan: &SweepPlan, traj_sink: F) -> Result<Vec<SweepRun>>
where
    F: Fn(usize, &str, f64, &Trajectory) -> Result<()> + Sync,
{
    if plan.values.is_empty() {
        return Err(Error::Case("sweep: values must be non-empty".into()));
    }
    for &v in &plan.values {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Case(format!(
                "sweep: {} values must be positive, got {v}",
                plan.param
            )));
        }
    }
    if !case.is_calibrated() {
        return Err(Error::Model(
            "sweep needs a calibrated case; fill the droop references first".into(),
        ));
    }
    let mut base = case.clone();
    for &(p, v) in &plan.fixed {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Case(format!(
                "sweep: fixed {p} must be positive, got {v}"
            )));
        }
        apply_param(&mut base, p, v);
    }
    base.validate()?;
    let n = base.n();
    let ybus = build_ybus(n, &base.lines)?;
    let inc = incidence(&base.lines, n)?;
    let alpha = resolve_alpha(&base, &ybus, plan.alpha)?;
    // Pin once: the steady point does not depend on the swept constants, so
    // every run starts from the identical equilibrium.
    let (pinned, eq) = pin_operating_point(&base, &alpha)?;
    let base_model = build_model(&pinned, &ybus, &inc, &alpha)?;

    let passes: Vec<(&str, DVector<f64>)> = match &plan.disturbance {
        Some(spec) => vec![("explicit", apply_disturbance(&eq, spec)?)],
        None => {
            let kick = angle_kick_pattern(&base_model, &eq)?;
            let mut xa = eq.state();
            for i in 0..n {
                xa[i] += kick[i];
            }
            let mut xb = eq.state();
            for &i in &base_model.inverters {
                xb[2 * n + i] += 0.01;
            }
            vec![("theta", xa), ("v", xb)]
        }
    };

    let runs: Vec<Result<SweepRun>> = plan
        .values
        .par_iter()
        .enumerate()
        .map(|(vi, &value)| {
            let mut swept = pinned.clone();
            apply_param(&mut swept, plan.param, value);
            swept.validate()?;
            let model = build_model(&swept, &ybus, &inc, &alpha)?;
            let mut theta_settle = vec![Settling::Undefined; n];
            let mut v_settle = vec![Settling::Undefined; n];
            let mut stable = true;
            let mut note = None;
            for (label, x0) in &passes {
                match integrate(&model, x0, plan.t_end, plan.dt, plan.method) {
                    Ok(traj) => {
                        if traj.meta.diverged {
                            stable = false;
                            note = Some(format!("{label} run diverged; settling undefined"));
                        } else {
                            if *label != "v" {
                                for (i, slot) in theta_settle.iter_mut().enumerate() {
                                    *slot = settling_time_series(
                                        &traj.t,
                                        &mean_frame_series(&traj, i),
                                        plan.band,
                                    );
                                }
                            }
                            if *label != "theta" {
                                for (i, slot) in v_settle.iter_mut().enumerate() {
                                    *slot =
                                        settling_time_series(&traj.t, &traj.v_series(i), plan.band);
                                }
                            }
                        }
                        traj_sink(vi, label, value, &traj)?;
                    }
                    Err(e) => {
                        stable = false;
                        note = Some(e.to_string());
                    }
                }
            }
            Ok(SweepRun {
                value,
                theta: theta_settle,
                v: v_settle,
                stable,
                note,
            })
        })
        .collect();
    runs.into_iter().collect()
}

/// Renders sweep results as CSV: one row per bus and signal per value.
/// Unsettled signals leave the time column empty with converged = false.
pub fn sweep_summary_csv(runs: &[SweepRun]) -> String {
    let mut s = String::from("param_value,bus,signal,settling_time_s,converged\n");
    for run in runs {
        let n = run.theta.len();
        for bus in 0..n {
            for (signal, settle) in [("theta", run.theta[bus]), ("v", run.v[bus])] {
                let (time_s, converged) = match settle {
                    Settling::Time(t) if run.stable => (format!("{t:.6}"), "true"),
                    _ => (String::new(), "false"),
                };
                s.push_str(&format!(
                    "{},{},{signal},{time_s},{converged}\n",
                    run.value,
                    bus + 1
                ));
            }
        }
    }
    s
}

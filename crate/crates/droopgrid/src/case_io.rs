//! Case model: bus and line data, JSON (de)serialization, the bundled
//! nine-bus benchmark, and randomized lossy variants of a base case.
//!
//! Angles never appear in case files; injections may be `null`, meaning the
//! droop references are not yet calibrated to a known operating point.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::{self, Line};

/// Ratio of a normal tail bound to its standard deviation: Phi(-z) = 1% at
/// z = 2.3263. A truncated resistance draw with mean below this many sigmas
/// rejects more than 1% of samples, which is worth a warning.
const TRUNCATION_WARN_SIGMAS: f64 = 2.3263478740408408;

/// Rejection-sampling cap per line; hitting it means the requested
/// distribution has essentially no mass on positive resistances.
const MAX_REJECTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Inverter,
    Load,
}

/// One bus row. Injections are net values in p.u. (positive = generation);
/// `None` marks a reference that still needs calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub p0_net: Option<f64>,
    pub q0_net: Option<f64>,
    /// Frequency droop gain (inverters; ignored for loads).
    pub d1: f64,
    /// Voltage droop gain (inverters; ignored for loads).
    pub d2: f64,
    /// Active-power filter time constant in seconds (inverters).
    pub t1: f64,
    /// Reactive-power filter time constant in seconds (inverters).
    pub t2: f64,
    /// Voltage reference (p.u.).
    pub v0: f64,
    /// Per-bus rotation angle in radians; overrides the case-wide policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_override: Option<f64>,
}

/// Singular-perturbation constants for the load buses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Epsilons {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

impl Default for Epsilons {
    fn default() -> Self {
        // e1 = e2^2 keeps the load angle dynamics critically related to the
        // damping, matching the intended fast-timescale structure.
        Epsilons {
            e1: 1e-4,
            e2: 1e-2,
            e3: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_mva: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub meta: Meta,
    /// Nominal frequency offset (rad/s); the droop laws are written around it.
    #[serde(default)]
    pub omega0: f64,
    #[serde(default)]
    pub eps: Epsilons,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
}

impl Case {
    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn is_inverter(&self, i: usize) -> bool {
        self.buses[i].kind == BusKind::Inverter
    }

    /// 0-based indices of inverter buses, ascending.
    pub fn inverters(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.is_inverter(i)).collect()
    }

    /// 0-based indices of load buses, ascending.
    pub fn loads(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.is_inverter(i)).collect()
    }

    /// True once every injection reference is present.
    pub fn is_calibrated(&self) -> bool {
        self.buses
            .iter()
            .all(|b| b.p0_net.is_some() && b.q0_net.is_some())
    }

    /// Structural validation; every violation names the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.meta.name.is_empty() {
            return Err(Error::Case("meta.name: must be non-empty".into()));
        }
        if !self.omega0.is_finite() {
            return Err(Error::Case("omega0: must be finite".into()));
        }
        let n = self.n();
        if n == 0 {
            return Err(Error::Case("buses: case has no buses".into()));
        }
        for (idx, bus) in self.buses.iter().enumerate() {
            if bus.id != idx + 1 {
                return Err(Error::Case(format!(
                    "buses[{idx}].id: expected contiguous id {} (ascending from 1), got {}",
                    idx + 1,
                    bus.id
                )));
            }
            for (field, value) in [
                ("d1", bus.d1),
                ("d2", bus.d2),
                ("t1", bus.t1),
                ("t2", bus.t2),
            ] {
                if !value.is_finite() || value < 0.0 {
                    return Err(Error::Case(format!(
                        "buses[{idx}].{field}: must be finite and non-negative, got {value}"
                    )));
                }
                if bus.kind == BusKind::Inverter && value == 0.0 {
                    return Err(Error::Case(format!(
                        "buses[{idx}].{field}: must be positive on an inverter bus"
                    )));
                }
            }
            if !bus.v0.is_finite() || bus.v0 <= 0.0 {
                return Err(Error::Case(format!(
                    "buses[{idx}].v0: must be positive, got {}",
                    bus.v0
                )));
            }
            for (field, value) in [("p0_net", bus.p0_net), ("q0_net", bus.q0_net)] {
                if let Some(v) = value {
                    if !v.is_finite() {
                        return Err(Error::Case(format!(
                            "buses[{idx}].{field}: must be finite, got {v}"
                        )));
                    }
                }
            }
            if let Some(a) = bus.alpha_override {
                if !a.is_finite() || !(0.0..=std::f64::consts::FRAC_PI_2).contains(&a) {
                    return Err(Error::Case(format!(
                        "buses[{idx}].alpha_override: must lie in [0, pi/2], got {a}"
                    )));
                }
            }
        }
        if self.inverters().is_empty() {
            return Err(Error::Case(
                "buses: at least one inverter bus is required".into(),
            ));
        }
        for (field, value) in [
            ("e1", self.eps.e1),
            ("e2", self.eps.e2),
            ("e3", self.eps.e3),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::Case(format!(
                    "eps.{field}: must be positive, got {value}"
                )));
            }
        }
        let e2sq = self.eps.e2 * self.eps.e2;
        if (self.eps.e1 - e2sq).abs() > 1e-12 + 1e-6 * e2sq {
            return Err(Error::Case(format!(
                "eps.e1: must equal e2^2 = {e2sq:e}, got {:e}",
                self.eps.e1
            )));
        }
        let canon = netgraph::canonical_lines(n, &self.lines)
            .map_err(|e| Error::Case(format!("lines: {e}")))?;
        if !netgraph::is_connected(n, &canon) {
            return Err(Error::Case(
                "lines: network is not connected; every bus must be reachable".into(),
            ));
        }
        Ok(())
    }
}

/// Parses and validates a case from JSON text.
pub fn parse_case(json: &str) -> Result<Case> {
    let case: Case = serde_json::from_str(json)?;
    case.validate()?;
    Ok(case)
}

/// Serializes a case to pretty JSON with a trailing newline. Output is
/// deterministic: field order is fixed and no timestamps are embedded.
pub fn serialize_case(case: &Case) -> String {
    let mut s = serde_json::to_string_pretty(case).expect("case serialization cannot fail");
    s.push('\n');
    s
}

/// FNV-1a 64-bit hash; used to fingerprint cases in trajectory metadata.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Hex fingerprint of the canonical serialized case.
pub fn case_hash(case: &Case) -> String {
    format!("{:016x}", fnv1a64(serialize_case(case).as_bytes()))
}

fn inverter(id: usize, p0: Option<f64>, q0: Option<f64>) -> Bus {
    Bus {
        id,
        kind: BusKind::Inverter,
        p0_net: p0,
        q0_net: q0,
        d1: 5.0,
        d2: 10.0,
        t1: 0.01,
        t2: 10.0,
        v0: 1.0,
        alpha_override: None,
    }
}

fn load(id: usize, p0: Option<f64>, q0: Option<f64>) -> Bus {
    Bus {
        id,
        kind: BusKind::Load,
        p0_net: p0,
        q0_net: q0,
        d1: 0.0,
        d2: 0.0,
        t1: 0.0,
        t2: 0.0,
        v0: 1.0,
        alpha_override: None,
    }
}

/// The bundled nine-bus lossy radial benchmark: three inverters, six loads,
/// eight lines with R/X near 0.7. Several droop references are left `null`
/// because the published injection data is not self-consistent at those
/// buses; calibrate against the companion reference state to fill them.
pub fn builtin_case() -> Case {
    Case {
        meta: Meta {
            name: "ieee9-lossy-radial".into(),
            base_mva: None,
            warnings: Vec::new(),
        },
        omega0: 0.0,
        eps: Epsilons::default(),
        buses: vec![
            inverter(1, None, None),
            inverter(2, Some(0.3260), None),
            inverter(3, Some(0.1700), None),
            load(4, Some(0.0), Some(0.0)),
            load(5, Some(-0.18), Some(-0.12)),
            load(6, Some(0.0), Some(0.0)),
            load(7, Some(-0.2), None),
            load(8, Some(0.0), Some(0.0)),
            load(9, Some(-0.25), None),
        ],
        lines: vec![
            Line {
                from: 1,
                to: 4,
                r: 0.0387,
                x: 0.0576,
            },
            Line {
                from: 4,
                to: 5,
                r: 0.0648,
                x: 0.0920,
            },
            Line {
                from: 3,
                to: 6,
                r: 0.0412,
                x: 0.0586,
            },
            Line {
                from: 6,
                to: 7,
                r: 0.0703,
                x: 0.1008,
            },
            Line {
                from: 7,
                to: 8,
                r: 0.0517,
                x: 0.0720,
            },
            Line {
                from: 8,
                to: 2,
                r: 0.0433,
                x: 0.0625,
            },
            Line {
                from: 8,
                to: 9,
                r: 0.1100,
                x: 0.1610,
            },
            Line {
                from: 9,
                to: 4,
                r: 0.0600,
                x: 0.0850,
            },
        ],
    }
}

/// Companion operating point for the bundled case: angles in degrees and
/// voltages in p.u., bus 1 as the angle reference.
pub fn builtin_reference() -> crate::equilibrium::Equilibrium {
    crate::equilibrium::Equilibrium::from_degrees(
        &[
            0.0, 5.1802, 5.5607, 0.0791, -0.4604, 4.9809, 3.9652, 3.9639, 0.7374,
        ],
        &[
            1.0, 1.0, 1.0, 0.9780, 0.9542, 0.9932, 0.9818, 0.9869, 0.9673,
        ],
        0.0,
    )
}

/// Resolves a case argument that may be a bundled-case name.
pub fn builtin_by_name(name: &str) -> Option<Case> {
    match name {
        "ieee9" | "ieee9-lossy-radial" | "builtin" => Some(builtin_case()),
        _ => None,
    }
}

/// Derives a variant of `base` with resampled line resistances.
///
/// Reactances are kept; each resistance is X times an R/X ratio drawn from
/// N(rx_mean, rx_std^2) truncated to positive values. The draw sequence is
/// fixed by `seed` (ChaCha12 keystream, lines in stored order), so equal
/// inputs give byte-identical output. When more than 1% of the normal mass
/// sits below zero the truncation biases the mean; that is recorded as a
/// warning in the output metadata rather than silently ignored.
pub fn gen_lossy_variant(base: &Case, rx_mean: f64, rx_std: f64, seed: u64) -> Result<Case> {
    if !rx_mean.is_finite() || !rx_std.is_finite() || rx_std < 0.0 {
        return Err(Error::Case(format!(
            "rx distribution: mean {rx_mean} / std {rx_std} invalid"
        )));
    }
    if rx_mean <= 0.0 && rx_std == 0.0 {
        return Err(Error::Case(
            "rx distribution: no mass on positive ratios".into(),
        ));
    }
    let normal =
        Normal::new(rx_mean, rx_std).map_err(|e| Error::Case(format!("rx distribution: {e}")))?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut case = base.clone();
    for (idx, line) in case.lines.iter_mut().enumerate() {
        let mut rejects = 0usize;
        let ratio = loop {
            let draw = normal.sample(&mut rng);
            if draw > 0.0 {
                break draw;
            }
            rejects += 1;
            if rejects >= MAX_REJECTS {
                return Err(Error::Case(format!(
                    "lines[{idx}]: resistance sampling rejected {MAX_REJECTS} draws; \
                     rx distribution has essentially no positive mass"
                )));
            }
        };
        line.r = ratio * line.x;
    }
    case.meta.name = format!("{}-rx{}-seed{}", base.meta.name, rx_mean, seed);
    if rx_std > 0.0 && rx_mean < TRUNCATION_WARN_SIGMAS * rx_std {
        case.meta.warnings.push(format!(
            "rx ratio N({rx_mean}, {rx_std}^2) has more than 1% mass below zero; \
             truncation biases the sampled mean upward"
        ));
    }
    case.validate()?;
    Ok(case)
}

//! Helpers shared by the integration test targets.
#![allow(dead_code)] // each test binary uses its own subset

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use droopgrid::case_io::{builtin_case, builtin_reference, Bus, BusKind, Case, Epsilons, Meta};
use droopgrid::dynamics::{power_injections, resolve_alpha, AlphaPolicy};
use droopgrid::equilibrium::{calibrate_references, Equilibrium};
use droopgrid::netgraph::{build_ybus, Line};

pub fn calibrated_builtin() -> Case {
    calibrate_references(&builtin_case(), &builtin_reference()).expect("builtin calibrates")
}

/// Inverter feeding a heavy reactive load over a resistive line, pinned at
/// a depressed-voltage operating point (V2 = 0.7, theta2 = -10 deg). The
/// voltage certificate is indefinite here, so stability must be withheld.
pub fn depressed_two_bus() -> (Case, Equilibrium, Vec<f64>) {
    let mut case = Case {
        meta: Meta {
            name: "two-bus-depressed".into(),
            base_mva: None,
            warnings: Vec::new(),
        },
        omega0: 0.0,
        eps: Epsilons::default(),
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

/// Random connected 4-10 bus case with direct (already calibrated) droop
/// references, plus a random evaluation state.
pub fn random_case(rng: &mut ChaCha12Rng) -> (Case, DVector<f64>, DVector<f64>) {
    let n = rng.random_range(4..=10usize);
    let mut pairs = std::collections::BTreeSet::new();
    for i in 2..=n {
        let parent = rng.random_range(1..i);
        pairs.insert((parent.min(i), parent.max(i)));
    }
    for _ in 0..n {
        let a = rng.random_range(1..=n);
        let b = rng.random_range(1..=n);
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let mut lines = Vec::new();
    for &(a, b) in &pairs {
        let x = rng.random_range(0.03..0.15);
        let ratio = rng.random_range(0.5..0.9);
        lines.push(Line {
            from: a,
            to: b,
            r: ratio * x,
            x,
        });
    }
    let buses = (1..=n)
        .map(|id| {
            let inverter = id == 1 || rng.random_range(0.0..1.0) < 0.4;
            Bus {
                id,
                kind: if inverter {
                    BusKind::Inverter
                } else {
                    BusKind::Load
                },
                p0_net: Some(rng.random_range(-0.5..0.5)),
                q0_net: Some(rng.random_range(-0.5..0.5)),
                d1: rng.random_range(1.0..20.0),
                d2: rng.random_range(1.0..20.0),
                t1: rng.random_range(0.01..10.0),
                t2: rng.random_range(0.01..10.0),
                v0: rng.random_range(0.95..1.05),
                alpha_override: None,
            }
        })
        .collect();
    let case = Case {
        meta: Meta {
            name: format!("random-{n}"),
            base_mva: None,
            warnings: Vec::new(),
        },
        omega0: 0.0,
        eps: Epsilons::default(),
        buses,
        lines,
    };
    case.validate().expect("generated case is valid");
    let theta = DVector::from_fn(n, |_, _| rng.random_range(-0.3..0.3));
    let v = DVector::from_fn(n, |_, _| rng.random_range(0.9..1.1));
    (case, theta, v)
}

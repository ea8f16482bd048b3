//! Electrical graph construction: bus admittance matrix, incidence and
//! orientation matrices, and admittance-angle statistics.
//!
//! Lines are series R + jX branches with no shunt elements, so every
//! diagonal of the admittance matrix is exactly the negated sum of its row's
//! off-diagonals. Directed edges follow a canonical order (lines sorted by
//! their unordered bus pair, forward orientation before reverse) so that
//! every matrix produced downstream is reproducible byte for byte.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A series branch between two buses. Bus ids are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series resistance (p.u.), non-negative.
    pub r: f64,
    /// Series reactance (p.u.), strictly positive.
    pub x: f64,
}

impl Line {
    /// Unordered pair key used for sorting and duplicate detection.
    fn key(&self) -> (usize, usize) {
        (self.from.min(self.to), self.from.max(self.to))
    }
}

/// Bus admittance matrix together with per-directed-edge magnitude and angle
/// views in canonical edge order.
#[derive(Debug, Clone)]
pub struct YBus {
    pub n: usize,
    /// Conductance matrix (p.u.), symmetric.
    pub g: DMatrix<f64>,
    /// Susceptance matrix (p.u.), symmetric.
    pub b: DMatrix<f64>,
    /// |Y_ik| per directed edge, length 2l.
    pub edge_y: Vec<f64>,
    /// Admittance angle per directed edge, each in [pi/2, pi).
    pub edge_phi: Vec<f64>,
    /// Directed edge endpoints (source, target), 0-based bus indices.
    pub edge_order: Vec<(usize, usize)>,
}

impl YBus {
    /// Complex off-diagonal entry for the directed edge index `m`.
    pub fn edge_admittance(&self, m: usize) -> Complex<f64> {
        Complex::from_polar(self.edge_y[m], self.edge_phi[m])
    }
}

/// Signed incidence matrix E, orientation matrix C, and the undirected
/// incidence matrix, all in canonical edge order.
#[derive(Debug, Clone)]
pub struct IncidenceSet {
    pub n: usize,
    /// Undirected line count l.
    pub l: usize,
    /// n x 2l signed incidence: +1 at the source bus, -1 at the target.
    pub e: DMatrix<f64>,
    /// n x 2l orientation: 1 exactly where E is +1.
    pub c: DMatrix<f64>,
    /// n x l undirected incidence over forward edges.
    pub e_u: DMatrix<f64>,
    /// Directed edge m -> (source, target), 0-based bus indices.
    pub edge_order: Vec<(usize, usize)>,
}

/// Mean and spread of the per-line admittance angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiStats {
    /// Arithmetic mean of the per-line angles (one value per undirected line).
    pub phi0: f64,
    /// max |phi_ik - phi0| over lines.
    pub spread: f64,
}

/// Validates a line list against `n` buses and returns it in canonical
/// order: sorted by unordered pair, each line normalized to from < to.
pub(crate) fn canonical_lines(n: usize, lines: &[Line]) -> Result<Vec<Line>> {
    if n == 0 {
        return Err(Error::Graph("network has no buses".into()));
    }
    let mut out = Vec::with_capacity(lines.len());
    for (idx, line) in lines.iter().enumerate() {
        if line.from == line.to {
            return Err(Error::Graph(format!(
                "lines[{idx}]: self-loop at bus {}",
                line.from
            )));
        }
        for (end, id) in [("from", line.from), ("to", line.to)] {
            if id < 1 || id > n {
                return Err(Error::Graph(format!(
                    "lines[{idx}].{end}: bus id {id} outside 1..={n}"
                )));
            }
        }
        if !(line.x.is_finite() && line.x > 0.0) {
            return Err(Error::Graph(format!(
                "lines[{idx}].x: reactance must be positive and finite, got {}",
                line.x
            )));
        }
        if !(line.r.is_finite() && line.r >= 0.0) {
            return Err(Error::Graph(format!(
                "lines[{idx}].r: resistance must be non-negative and finite, got {}",
                line.r
            )));
        }
        let (a, b) = line.key();
        out.push(Line {
            from: a,
            to: b,
            r: line.r,
            x: line.x,
        });
    }
    out.sort_by_key(Line::key);
    for w in out.windows(2) {
        if w[0].key() == w[1].key() {
            return Err(Error::Graph(format!(
                "duplicate line between buses {} and {}",
                w[0].from, w[0].to
            )));
        }
    }
    Ok(out)
}

/// Directed edge list in canonical order: per sorted line, the forward
/// (min -> max) edge followed by its reverse. Indices are 0-based.
pub(crate) fn canonical_edges(n: usize, lines: &[Line]) -> Result<Vec<(usize, usize)>> {
    let canon = canonical_lines(n, lines)?;
    let mut edges = Vec::with_capacity(2 * canon.len());
    for line in &canon {
        edges.push((line.from - 1, line.to - 1));
        edges.push((line.to - 1, line.from - 1));
    }
    Ok(edges)
}

/// Assembles the bus admittance matrix for `n` buses.
///
/// Off-diagonal entries are -1/(R + jX) per line; diagonals accumulate
/// +1/(R + jX) over incident lines. With R >= 0 and X > 0 every edge angle
/// lands in [pi/2, pi): exactly pi/2 for a lossless line and approaching pi
/// in the resistive limit.
pub fn build_ybus(n: usize, lines: &[Line]) -> Result<YBus> {
    let canon = canonical_lines(n, lines)?;
    let mut g = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    let mut edge_y = Vec::with_capacity(2 * canon.len());
    let mut edge_phi = Vec::with_capacity(2 * canon.len());
    let mut edge_order = Vec::with_capacity(2 * canon.len());

    for line in &canon {
        let (i, k) = (line.from - 1, line.to - 1);
        let series = Complex::new(line.r, line.x);
        let y = series.inv();
        let off = -y;

        g[(i, k)] += off.re;
        g[(k, i)] += off.re;
        b[(i, k)] += off.im;
        b[(k, i)] += off.im;
        g[(i, i)] += y.re;
        g[(k, k)] += y.re;
        b[(i, i)] += y.im;
        b[(k, k)] += y.im;

        // Same magnitude and angle in both directions; the angle comes from
        // atan2 on (-r + jx)/(r^2 + x^2), which is pi/2 for r = 0.
        let mag = off.norm();
        let phi = off.arg();
        for (s, t) in [(i, k), (k, i)] {
            edge_y.push(mag);
            edge_phi.push(phi);
            edge_order.push((s, t));
        }
    }

    Ok(YBus {
        n,
        g,
        b,
        edge_y,
        edge_phi,
        edge_order,
    })
}

/// True when every bus is reachable from bus 1 over the line list.
pub fn is_connected(n: usize, lines: &[Line]) -> bool {
    if n == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); n];
    for line in lines {
        if line.from >= 1 && line.from <= n && line.to >= 1 && line.to <= n {
            adj[line.from - 1].push(line.to - 1);
            adj[line.to - 1].push(line.from - 1);
        }
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for &k in &adj[i] {
            if !seen[k] {
                seen[k] = true;
                count += 1;
                stack.push(k);
            }
        }
    }
    count == n
}

/// Builds the incidence set for a connected network.
///
/// Column sums of E are zero by construction, and C marks the source bus of
/// every directed edge.
pub fn incidence(lines: &[Line], n: usize) -> Result<IncidenceSet> {
    let canon = canonical_lines(n, lines)?;
    if !is_connected(n, &canon) {
        return Err(Error::Graph(
            "network is not connected; every bus must be reachable over the line list".into(),
        ));
    }
    let l = canon.len();
    let edge_order = canonical_edges(n, &canon)?;
    let mut e = DMatrix::zeros(n, 2 * l);
    let mut c = DMatrix::zeros(n, 2 * l);
    let mut e_u = DMatrix::zeros(n, l);
    for (m, &(s, t)) in edge_order.iter().enumerate() {
        e[(s, m)] = 1.0;
        e[(t, m)] = -1.0;
        c[(s, m)] = 1.0;
    }
    for (j, line) in canon.iter().enumerate() {
        e_u[(line.from - 1, j)] = 1.0;
        e_u[(line.to - 1, j)] = -1.0;
    }
    Ok(IncidenceSet {
        n,
        l,
        e,
        c,
        e_u,
        edge_order,
    })
}

/// Mean admittance angle and its spread over undirected lines.
///
/// The mean is unweighted: one angle per line, forward edges only.
pub fn phi_stats(ybus: &YBus) -> Result<PhiStats> {
    if ybus.edge_phi.is_empty() {
        return Err(Error::Graph("phi statistics need at least one line".into()));
    }
    let line_phis: Vec<f64> = ybus.edge_phi.iter().copied().step_by(2).collect();
    let phi0 = line_phis.iter().sum::<f64>() / line_phis.len() as f64;
    let spread = line_phis
        .iter()
        .map(|p| (p - phi0).abs())
        .fold(0.0, f64::max);
    Ok(PhiStats { phi0, spread })
}

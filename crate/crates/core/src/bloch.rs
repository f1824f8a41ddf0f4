//! Momentum-space analysis: Bloch bands, winding numbers, gap scans and
//! strip spectra with edge-mode counting.
//!
//! Bloch convention: a plane wave `<x|k> ~ e^{ikx}` shifted by `S^up` picks
//! up `e^{-ik}` on the up component and by `S^dn` picks up `e^{+ik}` on the
//! down component. A Bloch matrix with unit determinant is written
//! `W(k) = a0 - i a.sigma = exp(-i epsilon n.sigma)`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coin_field::{AnglePair, CoinField};
use crate::error::{Error, Result};
use crate::linalg::{split_degenerate, unitary_eigen, wrap_phase};
use crate::protocol::{AngleSource, AxisAction, ChiralFrame, CoinScale, Primitive, StepOperator, WalkProtocol};

type M2 = [[Complex64; 2]; 2];

fn mul(a: &M2, b: &M2) -> M2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Which quasienergy gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gap {
    Zero,
    Pi,
}

impl Gap {
    pub fn center(self) -> f64 {
        match self {
            Gap::Zero => 0.0,
            Gap::Pi => PI,
        }
    }
}

/// 2x2 Bloch matrix of a homogeneous protocol at quasimomentum `k`.
pub fn bloch_matrix(protocol: &WalkProtocol, angles: AnglePair, k: [f64; 2]) -> M2 {
    let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    let mut w = [[o, z], [z, o]];
    for p in protocol.primitives() {
        let m = match *p {
            Primitive::Coin { angle, scale } => {
                let t = match angle {
                    AngleSource::Fixed(t) => t,
                    AngleSource::Field(crate::coin_field::AngleComponent::Theta1) => angles.theta1,
                    AngleSource::Field(crate::coin_field::AngleComponent::Theta2) => angles.theta2,
                };
                let h = 0.5 * if scale == CoinScale::Half { 0.5 * t } else { t };
                let (c, s) = (Complex64::new(h.cos(), 0.0), Complex64::new(h.sin(), 0.0));
                [[c, -s], [s, c]]
            }
            Primitive::ShiftUp(a) => [[Complex64::from_polar(1.0, -k[a.index()]), z], [z, o]],
            Primitive::ShiftDown(a) => [[o, z], [z, Complex64::from_polar(1.0, k[a.index()])]],
        };
        w = mul(&m, &w);
    }
    w
}

/// `(a0, [ax, ay, az])` with `W = a0 - i a.sigma`; errors unless `det W = 1`.
pub fn su2_components(w: &M2) -> Result<(f64, [f64; 3])> {
    let det = w[0][0] * w[1][1] - w[0][1] * w[1][0];
    if (det - Complex64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(Error::Invariant(format!("Bloch matrix has determinant {det}, expected 1")));
    }
    let i = Complex64::new(0.0, 1.0);
    let a0 = 0.5 * (w[0][0] + w[1][1]);
    // a_j = i tr(W sigma_j) / 2
    let ax = 0.5 * i * (w[0][1] + w[1][0]);
    let ay = 0.5 * i * (i * w[0][1] - i * w[1][0]);
    let az = 0.5 * i * (w[0][0] - w[1][1]);
    Ok((a0.re, [ax.re, ay.re, az.re]))
}

/// Uniform quasimomentum samples over `(-pi, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    points: Vec<f64>,
}

impl KGrid {
    pub fn uniform(n: usize) -> Self {
        Self {
            points: (0..n).map(|j| -PI + 2.0 * PI * (j + 1) as f64 / n as f64).collect(),
        }
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self { points }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn is_descending(&self) -> bool {
        self.points.len() > 1 && self.points[1] < self.points[0]
    }

    fn refined(&self) -> Self {
        let g = Self::uniform(2 * self.len());
        if self.is_descending() {
            g.reversed()
        } else {
            g
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BandPoint {
    pub k: [f64; 2],
    /// Upper-band quasienergy in `[0, pi]`; the lower band is its negative.
    pub epsilon: f64,
    /// Unit eigenspinor of the upper band (Bloch vector).
    pub spinor: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasienergySpectrum {
    pub points: Vec<BandPoint>,
    /// Minimum of `2 |epsilon|` over the grid.
    pub gap0: f64,
    /// Minimum of `2 |pi - epsilon|` over the grid.
    pub gap_pi: f64,
}

impl QuasienergySpectrum {
    /// Bands sorted by quasienergy: `[-epsilon, epsilon]` per point.
    pub fn bands(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| [-p.epsilon, p.epsilon]).collect()
    }

    /// `k[,m],epsilon` rows, one per band and momentum.
    pub fn write_csv<W: Write>(&self, mut w: W, dimension: usize) -> Result<()> {
        writeln!(w, "{}", if dimension == 2 { "kx,ky,band,epsilon" } else { "k,band,epsilon" })?;
        for p in &self.points {
            for (m, e) in [(0, -p.epsilon), (1, p.epsilon)] {
                if dimension == 2 {
                    writeln!(w, "{},{},{m},{e}", p.k[0], p.k[1])?;
                } else {
                    writeln!(w, "{},{m},{e}", p.k[0])?;
                }
            }
        }
        Ok(())
    }
}

fn band_point(protocol: &WalkProtocol, angles: AnglePair, k: [f64; 2]) -> Result<BandPoint> {
    let (a0, a) = su2_components(&bloch_matrix(protocol, angles, k))?;
    let norm = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let epsilon = norm.atan2(a0);
    let spinor = if norm > 0.0 {
        [a[0] / norm, a[1] / norm, a[2] / norm]
    } else {
        [0.0, 0.0, 1.0]
    };
    Ok(BandPoint { k, epsilon, spinor })
}

/// Bands of a homogeneous walk over `grid` (per axis for 2D protocols).
pub fn bloch_bands(protocol: &WalkProtocol, angles: AnglePair, grid: &KGrid) -> Result<QuasienergySpectrum> {
    let ks: Vec<[f64; 2]> = if protocol.dimension() == 2 {
        grid.points()
            .iter()
            .flat_map(|&kx| grid.points().iter().map(move |&ky| [kx, ky]))
            .collect()
    } else {
        grid.points().iter().map(|&k| [k, 0.0]).collect()
    };
    let points = ks
        .into_iter()
        .map(|k| band_point(protocol, angles, k))
        .collect::<Result<Vec<_>>>()?;
    let gap0 = points.iter().map(|p| 2.0 * p.epsilon).fold(f64::INFINITY, f64::min);
    let gap_pi = points.iter().map(|p| 2.0 * (PI - p.epsilon)).fold(f64::INFINITY, f64::min);
    Ok(QuasienergySpectrum { points, gap0, gap_pi })
}

const MAX_WINDING_POINTS: usize = 1 << 20;

/// Signed number of turns of the eigenspinor in the chiral plane over one
/// traversal of `grid`. Positive turns run from the y axis toward the z axis
/// of the spin Bloch sphere (sigma_1 frames) or from x toward y (sigma_3 frame).
pub fn winding_number(frame: ChiralFrame, angles: AnglePair, grid: &KGrid) -> Result<i32> {
    let protocol = frame.protocol();
    let threshold = PI / grid.len().max(1) as f64;
    let mut g = grid.clone();
    loop {
        let mut phis = Vec::with_capacity(g.len());
        for &k in g.points() {
            let p = band_point(&protocol, angles, [k, 0.0])?;
            let gap = (2.0 * p.epsilon).min(2.0 * (PI - p.epsilon));
            if gap < threshold {
                return Err(Error::IllDefinedWinding(format!(
                    "gap {gap:.3e} at k = {k:.4} below {threshold:.3e} for angles ({}, {})",
                    angles.theta1, angles.theta2
                )));
            }
            let (out_of_plane, u, v) = match frame.gamma() {
                crate::protocol::Pauli::Sigma3 => (p.spinor[2], p.spinor[0], p.spinor[1]),
                _ => (p.spinor[0], p.spinor[1], p.spinor[2]),
            };
            if out_of_plane.abs() > 1e-8 {
                return Err(Error::Invariant(format!(
                    "eigenspinor leaves the chiral plane by {out_of_plane:.3e}"
                )));
            }
            phis.push(v.atan2(u));
        }
        let n = phis.len();
        let incs: Vec<f64> = (0..n).map(|i| wrap_phase(phis[(i + 1) % n] - phis[i])).collect();
        if incs.iter().all(|d| d.abs() < PI / 2.0) {
            let total: f64 = incs.iter().sum::<f64>() / (2.0 * PI);
            let rounded = total.round();
            if (total - rounded).abs() > 1e-6 {
                return Err(Error::IllDefinedWinding(format!("non-integral winding {total}")));
            }
            return Ok(rounded as i32);
        }
        if g.len() >= MAX_WINDING_POINTS {
            return Err(Error::IllDefinedWinding("turning angle unresolved at the finest grid".into()));
        }
        g = g.refined();
    }
}

/// `(nu_0, nu_pi)` from the two sigma_1 frame windings.
pub fn invariants_1d(angles: AnglePair) -> Result<(i32, i32)> {
    let grid = KGrid::uniform(512);
    let w1 = winding_number(ChiralFrame::Prime, angles, &grid)?;
    let w2 = winding_number(ChiralFrame::DoublePrime, angles, &grid)?;
    if (w1 + w2).rem_euclid(2) != 1 {
        return Err(Error::Invariant(format!(
            "frame windings ({w1}, {w2}) do not give integral invariants"
        )));
    }
    Ok(((w1 + w2 + 1) / 2, (w1 - w2 + 1) / 2))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapScanPoint {
    pub angles: AnglePair,
    pub gap0: f64,
    pub gap_pi: f64,
}

/// Closed-gap tolerance.
pub const GAP_TOLERANCE: f64 = 1e-3 * PI;

impl GapScanPoint {
    pub fn is_gapped(&self) -> bool {
        self.gap0 >= GAP_TOLERANCE && self.gap_pi >= GAP_TOLERANCE
    }
}

/// Minimum 2D gaps for each angle pair over an `n_k x n_k` Brillouin zone.
pub fn gap_scan_2d(pairs: &[AnglePair], n_k: usize) -> Result<Vec<GapScanPoint>> {
    let protocol = WalkProtocol::walk_2d();
    let grid = KGrid::uniform(n_k.max(64));
    pairs
        .par_iter()
        .map(|&angles| {
            let s = bloch_bands(&protocol, angles, &grid)?;
            Ok(GapScanPoint {
                angles,
                gap0: s.gap0,
                gap_pi: s.gap_pi,
            })
        })
        .collect()
}

/// Row-major grid of angle pairs over `[lo, hi]^2` with `n` points per axis.
pub fn angle_grid(lo: f64, hi: f64, n: usize) -> Vec<AnglePair> {
    let at = |i: usize| if n > 1 { lo + (hi - lo) * i as f64 / (n - 1) as f64 } else { lo };
    (0..n).flat_map(|i| (0..n).map(move |j| AnglePair::new(at(i), at(j)))).collect()
}

pub fn write_gap_scan_csv<W: Write>(mut w: W, scan: &[GapScanPoint]) -> Result<()> {
    writeln!(w, "theta1,theta2,gap0,gappi")?;
    for p in scan {
        writeln!(w, "{},{},{},{}", p.angles.theta1, p.angles.theta2, p.gap0, p.gap_pi)?;
    }
    Ok(())
}

/// One eigenstate of the strip operator at fixed `k_x`.
#[derive(Debug, Clone, Serialize)]
pub struct StripState {
    pub epsilon: f64,
    /// Circular mean of the probability along y (physical coordinates).
    pub centroid: f64,
    /// Index into [`StripSpectrum::walls`] of the nearest wall, for in-gap states.
    pub edge: Option<usize>,
    pub gap: Option<Gap>,
    /// Probability more than 10 sites from the nearest wall.
    pub far_weight: f64,
    pub v_g: Option<f64>,
    #[serde(skip)]
    vector: Option<DVector<Complex64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StripSpectrum {
    pub kx: Vec<f64>,
    pub ny: usize,
    pub walls: Vec<f64>,
    pub bulk_gap0: f64,
    pub bulk_gap_pi: f64,
    pub states: Vec<Vec<StripState>>,
    pub warnings: Vec<String>,
}

fn bulk_pairs(field: &CoinField, walls: &[f64]) -> Vec<AnglePair> {
    let g = field.geometry();
    let n = g.extent(0) as f64;
    let mut sites = Vec::new();
    if walls.is_empty() {
        sites.push(0);
    } else {
        for i in 0..walls.len() {
            let a = walls[i];
            let b = if i + 1 < walls.len() { walls[i + 1] } else { walls[0] + n };
            let mid = (0.5 * (a + b)).round() as i64;
            sites.push(g.site_at(&[mid]).expect("periodic axis"));
        }
    }
    let mut pairs: Vec<AnglePair> = Vec::new();
    for s in sites {
        let p = field.pair(s);
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    pairs
}

/// Spectrum of the 2D protocol on a strip periodic in x (Bloch momentum
/// `k_x`) with the 1D y-profile `field` (a ring of `n_y` sites).
pub fn strip_spectrum(field: &CoinField, n_kx: usize) -> Result<StripSpectrum> {
    let g = field.geometry();
    if g.dimension() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: g.dimension(),
        });
    }
    let ny = g.extent(0);
    let protocol = WalkProtocol::walk_2d();
    let walls = field.walls_1d();
    let mut warnings = Vec::new();
    for i in 0..walls.len() {
        let next = if i + 1 < walls.len() { walls[i + 1] } else { walls[0] + ny as f64 };
        if walls.len() > 1 && next - walls[i] < 10.0 {
            let msg = format!("hybridized edges: walls at {} and {} are closer than 10 sites", walls[i], next);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let bulk_grid = KGrid::uniform(128);
    let (mut bulk_gap0, mut bulk_gap_pi) = (f64::INFINITY, f64::INFINITY);
    for pair in bulk_pairs(field, &walls) {
        let s = bloch_bands(&protocol, pair, &bulk_grid)?;
        bulk_gap0 = bulk_gap0.min(s.gap0);
        bulk_gap_pi = bulk_gap_pi.min(s.gap_pi);
    }
    // Wall index of each site (nearest wall on the ring), used to split degeneracies.
    let nearest_wall = |y: f64| -> Option<(usize, f64)> {
        walls
            .iter()
            .enumerate()
            .map(|(i, &w)| (i, g.displacement(0, w, y).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    };
    let mut wall_op = DMatrix::<Complex64>::zeros(2 * ny, 2 * ny);
    for s in 0..ny {
        let y = g.coords(s)[0] as f64;
        let w = nearest_wall(y).map(|(i, _)| i as f64 + 1.0).unwrap_or(0.0);
        // A slight gradient toward each wall breaks ties between modes on the same wall.
        let d = nearest_wall(y).map(|(_, d)| d).unwrap_or(0.0);
        for spin in 0..2 {
            wall_op[(2 * s + spin, 2 * s + spin)] = Complex64::new(w * 1000.0 + d, 0.0);
        }
    }
    let grid = KGrid::uniform(n_kx);
    let kx = grid.points().to_vec();
    let edge_tol = 1e-3;
    let mut states: Vec<Vec<StripState>> = kx
        .par_iter()
        .map(|&k| -> Result<Vec<StripState>> {
            let op = StepOperator::compile_with(&protocol, field, [AxisAction::Momentum(k), AxisAction::Lattice(0)])?;
            let mut eig = unitary_eigen(&op.matrix())?;
            split_degenerate(&mut eig, &wall_op, 1e-7);
            Ok((0..eig.len())
                .map(|i| {
                    let v = eig.vector(i);
                    let eps = eig.quasienergies[i];
                    let (mut cx, mut cy) = (0.0, 0.0);
                    let probs: Vec<f64> = (0..ny).map(|s| v[2 * s].norm_sqr() + v[2 * s + 1].norm_sqr()).collect();
                    for (s, &p) in probs.iter().enumerate() {
                        let ang = 2.0 * PI * g.coords(s)[0] as f64 / ny as f64;
                        cx += p * ang.cos();
                        cy += p * ang.sin();
                    }
                    let centroid = cy.atan2(cx) * ny as f64 / (2.0 * PI);
                    let gap = if eps.abs() < 0.5 * bulk_gap0 - edge_tol {
                        Some(Gap::Zero)
                    } else if PI - eps.abs() < 0.5 * bulk_gap_pi - edge_tol {
                        Some(Gap::Pi)
                    } else {
                        None
                    };
                    let in_gap = gap.is_some() && !walls.is_empty();
                    let edge = if in_gap { nearest_wall(centroid).map(|(i, _)| i) } else { None };
                    let far_weight = match edge {
                        Some(_) => probs
                            .iter()
                            .enumerate()
                            .filter(|(s, _)| nearest_wall(g.coords(*s)[0] as f64).map(|(_, d)| d > 10.0).unwrap_or(true))
                            .map(|(_, p)| p)
                            .sum(),
                        None => 0.0,
                    };
                    StripState {
                        epsilon: eps,
                        centroid,
                        edge,
                        gap: if in_gap { gap } else { None },
                        far_weight,
                        v_g: None,
                        vector: in_gap.then_some(v),
                    }
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    // Group velocity by central differences along overlap-matched neighbours.
    let n = kx.len();
    let dk = 2.0 * PI / n as f64;
    let mut vgs: Vec<Vec<Option<f64>>> = vec![Vec::new(); n];
    for i in 0..n {
        let prev = &states[(i + n - 1) % n];
        let next = &states[(i + 1) % n];
        vgs[i] = states[i]
            .iter()
            .map(|st| {
                let v = st.vector.as_ref()?;
                let (p, op) = best_match(v, prev)?;
                let (q, oq) = best_match(v, next)?;
                if op < 0.5 || oq < 0.5 {
                    return None;
                }
                let de = wrap_phase(next[q].epsilon - prev[p].epsilon);
                Some(de / (2.0 * dk))
            })
            .collect();
    }
    for (row, v) in states.iter_mut().zip(vgs) {
        for (st, vg) in row.iter_mut().zip(v) {
            st.v_g = vg;
        }
    }
    Ok(StripSpectrum {
        kx,
        ny,
        walls,
        bulk_gap0,
        bulk_gap_pi,
        states,
        warnings,
    })
}

/// Index and overlap `|<v|w>|^2` of the in-gap state in `row` closest to `v`.
fn best_match(v: &DVector<Complex64>, row: &[StripState]) -> Option<(usize, f64)> {
    row.iter()
        .enumerate()
        .filter_map(|(j, st)| st.vector.as_ref().map(|w| (j, v.dotc(w).norm_sqr())))
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

/// Net signed number of in-gap modes crossing the gap center on each wall
/// over one traversal of the `k_x` loop; downward crossings count +1.
pub fn edge_mode_count(strip: &StripSpectrum, gap: Gap) -> Result<Vec<i32>> {
    let mut counts = vec![0i32; strip.walls.len()];
    let n = strip.kx.len();
    let reference = gap.center();
    for i in 0..n {
        let next = &strip.states[(i + 1) % n];
        for st in &strip.states[i] {
            let (Some(v), Some(wall)) = (st.vector.as_ref(), st.edge) else {
                continue;
            };
            if st.gap != Some(gap) {
                continue;
            }
            let a = wrap_phase(st.epsilon - reference);
            if a.abs() >= PI / 2.0 {
                continue;
            }
            let Some((j, overlap)) = best_match(v, next) else {
                if a.abs() < 0.1 {
                    return Err(Error::AmbiguousCrossing(format!(
                        "no in-gap continuation near k_x = {:.4}; refine the k_x grid",
                        strip.kx[i]
                    )));
                }
                continue;
            };
            let step = wrap_phase(next[j].epsilon - st.epsilon);
            // Values at the reference within rounding count as exactly on it.
            let snap = |x: f64| if x.abs() < 1e-10 { 0.0 } else { x };
            let (a, b) = (snap(a), snap(a + step));
            let crosses = (a <= 0.0 && b > 0.0) || (b <= 0.0 && a > 0.0);
            if crosses && (overlap < 0.5 || step.abs() > PI / 8.0 || next[j].edge != Some(wall)) {
                return Err(Error::AmbiguousCrossing(format!(
                    "crossing near k_x = {:.4} (overlap {overlap:.3}, step {step:.3}); refine the k_x grid",
                    strip.kx[i]
                )));
            }
            if a <= 0.0 && b > 0.0 {
                counts[wall] -= 1;
            } else if b <= 0.0 && a > 0.0 {
                counts[wall] += 1;
            }
        }
    }
    Ok(counts)
}

impl StripSpectrum {
    /// `k,m,epsilon,edge_label,v_g`; the edge label is the wall index or `bulk`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,m,epsilon,edge_label,v_g")?;
        for (k, row) in self.kx.iter().zip(&self.states) {
            for (m, st) in row.iter().enumerate() {
                let label = st.edge.map(|e| format!("wall{e}")).unwrap_or_else(|| "bulk".into());
                let vg = st.v_g.map(|v| v.to_string()).unwrap_or_default();
                writeln!(w, "{k},{m},{},{label},{vg}", st.epsilon)?;
            }
        }
        Ok(())
    }

    pub fn edge_states(&self) -> impl Iterator<Item = (usize, &StripState)> {
        self.states
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(|s| s.edge.is_some()).map(move |s| (i, s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeGeometry;
    use crate::linalg::quasienergy_of;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn dense_bloch(protocol: &WalkProtocol, angles: AnglePair, k: f64) -> Vec<f64> {
        // Oracle: eigenphases of the explicit 2x2 product via the quadratic formula.
        let w = bloch_matrix(protocol, angles, [k, 0.0]);
        let tr = w[0][0] + w[1][1];
        let det = w[0][0] * w[1][1] - w[0][1] * w[1][0];
        let disc = (tr * tr - 4.0 * det).sqrt();
        let mut e = vec![quasienergy_of(0.5 * (tr + disc)), quasienergy_of(0.5 * (tr - disc))];
        e.sort_by(|a, b| a.total_cmp(b));
        e
    }

    #[test]
    fn hadamard_dispersion() {
        let p = WalkProtocol::split_step_1d();
        let h = AnglePair::new(FRAC_PI_2, 0.0);
        let s = bloch_bands(&p, h, &KGrid::uniform(64)).unwrap();
        for pt in &s.points {
            assert_abs_diff_eq!(pt.epsilon.cos(), pt.k[0].cos() / 2f64.sqrt(), epsilon = 1e-12);
            let e = dense_bloch(&p, h, pt.k[0]);
            assert_abs_diff_eq!(e[1], pt.epsilon, epsilon = 1e-12);
        }
        let at0 = band_point(&p, h, [0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(at0.epsilon, PI / 4.0, epsilon = 1e-12);
        assert!(s.gap0 > 0.1 && s.gap_pi > 0.1);
    }

    #[test]
    fn free_walk_is_gapless() {
        let p = WalkProtocol::split_step_1d();
        let s = bloch_bands(&p, AnglePair::new(0.0, 0.0), &KGrid::uniform(64)).unwrap();
        for pt in &s.points {
            assert_abs_diff_eq!(pt.epsilon, pt.k[0].abs(), epsilon = 1e-12);
        }
        assert!(s.gap0 < 1e-12 && s.gap_pi < 1e-12);
    }

    #[test]
    fn chiral_frames_keep_spinor_in_plane() {
        for frame in [ChiralFrame::Prime, ChiralFrame::DoublePrime] {
            let s = bloch_bands(&frame.protocol(), AnglePair::new(0.9, -0.4), &KGrid::uniform(128)).unwrap();
            assert!(s.points.iter().all(|p| p.spinor[0].abs() < 1e-10));
        }
        let s = bloch_bands(&WalkProtocol::sigma_z_frame(), AnglePair::new(0.9, -0.4), &KGrid::uniform(128)).unwrap();
        assert!(s.points.iter().all(|p| p.spinor[2].abs() < 1e-10));
    }

    #[test]
    fn hadamard_windings() {
        let h = AnglePair::new(FRAC_PI_2, 0.0);
        for n in [64, 128, 512] {
            assert_eq!(winding_number(ChiralFrame::Prime, h, &KGrid::uniform(n)).unwrap(), 1);
            assert_eq!(winding_number(ChiralFrame::DoublePrime, h, &KGrid::uniform(n)).unwrap(), 0);
        }
        let g = KGrid::uniform(128).reversed();
        assert_eq!(winding_number(ChiralFrame::Prime, h, &g).unwrap(), -1);
        assert_eq!(invariants_1d(h).unwrap(), (1, 1));
    }

    #[test]
    fn gapless_winding_rejected() {
        let r = winding_number(ChiralFrame::Prime, AnglePair::new(0.0, 0.0), &KGrid::uniform(128));
        assert!(matches!(r, Err(Error::IllDefinedWinding(_))));
    }

    #[test]
    fn domain_wall_invariants() {
        assert_eq!(invariants_1d(AnglePair::new(-FRAC_PI_2, PI / 4.0)).unwrap(), (0, 0));
        assert_eq!(invariants_1d(AnglePair::new(-FRAC_PI_2, 3.0 * PI / 4.0)).unwrap(), (1, 0));
    }

    #[test]
    fn gap_scan_anchors() {
        let inside = AnglePair::new(PI / 5.0, 4.0 * PI / 5.0);
        let outside = AnglePair::new(4.0 * PI / 5.0, PI / 5.0);
        let scan = gap_scan_2d(&[inside, outside, AnglePair::new(0.0, 0.0)], 64).unwrap();
        assert!(scan[0].is_gapped() && scan[1].is_gapped());
        assert!(!scan[2].is_gapped());
        let path: Vec<AnglePair> = (0..=40).map(|i| outside.lerp(inside, i as f64 / 40.0)).collect();
        let scan = gap_scan_2d(&path, 64).unwrap();
        let min = scan.iter().map(|p| p.gap0.min(p.gap_pi)).fold(f64::INFINITY, f64::min);
        assert!(min < 0.1, "segment stays gapped, min gap {min}");
    }

    #[test]
    fn homogeneous_strip_has_no_edge_states() {
        let g = LatticeGeometry::ring(20).unwrap();
        let f = CoinField::homogeneous(&g, AnglePair::new(PI / 5.0, 4.0 * PI / 5.0));
        let s = strip_spectrum(&f, 32).unwrap();
        assert!(s.walls.is_empty());
        assert_eq!(s.edge_states().count(), 0);
        assert!(edge_mode_count(&s, Gap::Zero).unwrap().is_empty());
    }

    #[test]
    fn trivial_junction_counts_zero() {
        // Same phase on both sides, different angles: walls exist but no modes cross.
        let g = LatticeGeometry::ring(40).unwrap();
        let inside = AnglePair::new(PI / 5.0, 4.0 * PI / 5.0);
        let other = AnglePair::new(PI / 5.0 + 0.05, 4.0 * PI / 5.0 - 0.05);
        let f = crate::coin_field::domain_profile(&g, -10, 20, inside, other, None).unwrap();
        let s = strip_spectrum(&f, 64).unwrap();
        assert_eq!(edge_mode_count(&s, Gap::Zero).unwrap(), vec![0, 0]);
        assert_eq!(edge_mode_count(&s, Gap::Pi).unwrap(), vec![0, 0]);
    }
}

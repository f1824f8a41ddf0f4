//! Edge states of inhomogeneous walks: search, characterization, decay under
//! decoherence, and edge transport around a 2D island.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::Gap;
use crate::coin_field::{island_field, ring_wall_field, AnglePair, CoinField, OpticsConfig, Shape};
use crate::decoherence::{evolve, Channel, DecoherenceConfig, EvolveOptions, Initial, Observable};
use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeGeometry, Region, Spin};
use crate::linalg::{hermitian_eigen, split_degenerate, unitary_eigen, wrap_phase};
use crate::protocol::{StepOperator, WalkProtocol};
use crate::state::{SpinorState, WalkerState};

/// Largest distance between an edge-state centroid and its wall.
pub const WALL_PROXIMITY: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct EdgeState {
    pub state: SpinorState,
    pub epsilon: f64,
    /// Probability centroid (physical coordinate).
    pub center: f64,
    /// Position of the nearest wall.
    pub wall: f64,
    pub rms_size: f64,
    /// Dominant eigenvector of the reduced spin density matrix.
    pub spin_factor: [Complex64; 2],
    /// Largest eigenvalue of the reduced spin density matrix; 1 for a product state.
    pub factorization_fidelity: f64,
    /// `|| W|E> - e^{-i eps}|E> ||`.
    pub residual: f64,
}

impl EdgeState {
    pub fn is_factorized(&self) -> bool {
        self.factorization_fidelity >= 1.0 - 1e-6
    }

    /// `sum_x |<x,s|E>|^2` for `s = up, down`.
    pub fn spin_populations(&self) -> [f64; 2] {
        self.state.spin_populations()
    }

    /// `|x> (x) |s_E>` at the site nearest the wall.
    pub fn wall_site_state(&self) -> Result<SpinorState> {
        let x = self.wall.round() as i64;
        SpinorState::localized(self.state.geometry(), &[x], self.spin_factor)
    }

    /// JSON sidecar; decay rates are given for unit probability (scale by `p`).
    pub fn write_sidecar<W: Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Sidecar {
            epsilon: f64,
            center: f64,
            rms_size: f64,
            spin_factor: [[f64; 2]; 2],
            gamma_spin: f64,
            gamma_position: f64,
        }
        let s = Sidecar {
            epsilon: self.epsilon,
            center: self.center,
            rms_size: self.rms_size,
            spin_factor: self.spin_factor.map(|z| [z.re, z.im]),
            gamma_spin: decay_rate(self, Channel::Spin, 1.0).gamma,
            gamma_position: decay_rate(self, Channel::Position, 1.0).gamma,
        };
        serde_json::to_writer_pretty(w, &s).map_err(|e| Error::Io(e.into()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct EdgeSearch {
    pub states: Vec<EdgeState>,
    pub warnings: Vec<String>,
}

fn circular_centroid(geometry: &LatticeGeometry, probs: &[f64]) -> f64 {
    let n = geometry.extent(0) as f64;
    if geometry.boundary(0) == Boundary::AbsorbingGuard {
        let total: f64 = probs.iter().sum();
        return probs.iter().enumerate().map(|(s, p)| p * geometry.coords(s)[0] as f64).sum::<f64>() / total;
    }
    let (mut c, mut s) = (0.0, 0.0);
    for (site, &p) in probs.iter().enumerate() {
        let a = 2.0 * PI * geometry.coords(site)[0] as f64 / n;
        c += p * a.cos();
        s += p * a.sin();
    }
    s.atan2(c) * n / (2.0 * PI)
}

fn rms_about(geometry: &LatticeGeometry, probs: &[f64], center: f64) -> f64 {
    let total: f64 = probs.iter().sum();
    let var: f64 = probs
        .iter()
        .enumerate()
        .map(|(s, p)| {
            let d = geometry.displacement(0, center, geometry.coords(s)[0] as f64);
            p * d * d
        })
        .sum();
    (var / total).sqrt()
}

/// Dominant spinor of the reduced spin state and its weight.
fn spin_factor(state: &SpinorState) -> ([Complex64; 2], f64) {
    let r = state.reduced_spin_matrix();
    let m = DMatrix::from_fn(2, 2, |i, j| r[i][j]);
    let (vals, vecs) = hermitian_eigen(m);
    let v = [vecs[(0, 1)], vecs[(1, 1)]];
    // Fix the global phase so the larger component is real and positive.
    let big = if v[0].norm() >= v[1].norm() { v[0] } else { v[1] };
    let phase = if big.norm() > 0.0 { big.conj() / big.norm() } else { Complex64::new(1.0, 0.0) };
    let trace: f64 = vals.iter().sum();
    ([v[0] * phase, v[1] * phase], vals[1] / trace)
}

/// In-gap eigenstates of a 1D inhomogeneous walk localized at a wall of `field`.
pub fn find_edge_states(protocol: &WalkProtocol, field: &CoinField, gap: Gap, tolerance: f64) -> Result<EdgeSearch> {
    let g = field.geometry();
    if g.dimension() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: g.dimension(),
        });
    }
    let walls = field.walls_1d();
    if walls.is_empty() {
        return Ok(EdgeSearch::default());
    }
    let op = StepOperator::compile(protocol, field)?;
    let w = op.matrix();
    let mut eig = unitary_eigen(&w)?;
    // Separate states from different walls that are degenerate to rounding.
    let nearest = |x: f64| -> (usize, f64) {
        walls
            .iter()
            .enumerate()
            .map(|(i, &wall)| (i, g.displacement(0, wall, x).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("walls nonempty")
    };
    let n = g.basis_size();
    let mut wall_op = DMatrix::<Complex64>::zeros(n, n);
    for s in 0..g.num_sites() {
        let (i, _) = nearest(g.coords(s)[0] as f64);
        for spin in 0..2 {
            wall_op[(2 * s + spin, 2 * s + spin)] = Complex64::new(i as f64, 0.0);
        }
    }
    split_degenerate(&mut eig, &wall_op, 1e-9);
    let mut out = EdgeSearch::default();
    let mut stray = 0;
    for i in 0..eig.len() {
        let eps = eig.quasienergies[i];
        if wrap_phase(eps - gap.center()).abs() > tolerance {
            continue;
        }
        let v = eig.vector(i);
        let state = SpinorState::from_amplitudes(g, v.iter().copied().collect())?;
        let probs = state.site_probabilities();
        let center = circular_centroid(g, &probs);
        let (wi, dist) = nearest(center);
        if dist > WALL_PROXIMITY {
            stray += 1;
            continue;
        }
        let lam = Complex64::from_polar(1.0, -eps);
        let residual = (&w * &v - &v * lam).norm();
        let (factor, fidelity) = spin_factor(&state);
        out.states.push(EdgeState {
            rms_size: rms_about(g, &probs, center),
            state,
            epsilon: eps,
            center,
            wall: walls[wi],
            spin_factor: factor,
            factorization_fidelity: fidelity,
            residual,
        });
    }
    if stray >= 2 {
        let msg = format!("{stray} near-degenerate in-gap states are not localized at a single wall (hybridized pair)");
        log::warn!("{msg}");
        out.warnings.push(msg);
    }
    out.states.sort_by(|a, b| a.wall.total_cmp(&b.wall));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayPrediction {
    pub channel: Channel,
    pub p: f64,
    pub gamma: f64,
}

impl DecayPrediction {
    /// `(1 - gamma)^n`.
    pub fn survival(&self, n: usize) -> f64 {
        (1.0 - self.gamma).powi(n as i32)
    }
}

/// Rate at which the edge-state population decays under the stroboscopic channel.
pub fn decay_rate(edge: &EdgeState, channel: Channel, p: f64) -> DecayPrediction {
    let amps = edge.state.amplitudes();
    let norm = edge.state.norm_sqr();
    let bracket = match channel {
        Channel::None => 0.0,
        Channel::Spin => {
            let [u, d] = edge.state.spin_populations();
            1.0 - (u * u + d * d) / (norm * norm)
        }
        Channel::Position => {
            let sum_sq: f64 = amps
                .chunks_exact(2)
                .map(|c| {
                    let q = (c[0].norm_sqr() + c[1].norm_sqr()) / norm;
                    q * q
                })
                .sum();
            1.0 - sum_sq
        }
    };
    DecayPrediction {
        channel,
        p,
        gamma: p * bracket,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayMeasurement {
    /// `Pi(n)` for `n = 0..=n_max`.
    pub survival: Vec<f64>,
    pub fit_window: (usize, usize),
    pub fitted_gamma: f64,
    pub prediction: DecayPrediction,
}

/// Least-squares slope and intercept.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Coefficient of determination of a linear fit.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let (a, b) = linear_fit(xs, ys);
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (a * x + b)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

pub const DECAY_FIT_WINDOW: (usize, usize) = (5, 50);

/// Evolves `|E><E|` under the dense channel and fits `ln Pi(n)` over the early window.
pub fn measure_decay(
    edge: &EdgeState,
    protocol: &WalkProtocol,
    field: &CoinField,
    cfg: &DecoherenceConfig,
    n_max: usize,
) -> Result<DecayMeasurement> {
    let dense = DecoherenceConfig { trajectories: 0, ..*cfg };
    let obs = [Observable::Overlap {
        name: "edge_population".into(),
        reference: edge.state.clone(),
    }];
    let ts = evolve(&Initial::Pure(edge.state.clone()), protocol, field, &dense, &EvolveOptions::new(n_max), &obs)?;
    let survival = ts.series("edge_population").expect("recorded");
    let (lo, hi) = (DECAY_FIT_WINDOW.0.min(n_max), DECAY_FIT_WINDOW.1.min(n_max));
    let xs: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
    let ys: Vec<f64> = (lo..=hi).map(|n| survival[n].max(f64::MIN_POSITIVE).ln()).collect();
    let fitted_gamma = if xs.len() >= 2 { 1.0 - linear_fit(&xs, &ys).0.exp() } else { 0.0 };
    Ok(DecayMeasurement {
        survival,
        fit_window: (lo, hi),
        fitted_gamma,
        prediction: decay_rate(edge, cfg.channel, cfg.p),
    })
}

/// Bulk angle pairs of the single-wall 1D landscape: trivial on the left,
/// `(nu_0, nu_pi) = (1, 0)` on the right.
pub fn wall_angles() -> (AnglePair, AnglePair) {
    (AnglePair::new(-PI / 2.0, PI / 4.0), AnglePair::new(-PI / 2.0, 3.0 * PI / 4.0))
}

/// Island angle pairs: inside and outside the 2D droplet.
pub fn island_angles() -> (AnglePair, AnglePair) {
    (AnglePair::new(PI / 5.0, 4.0 * PI / 5.0), AnglePair::new(4.0 * PI / 5.0, PI / 5.0))
}

/// Ring size used for 1D edge-state searches.
pub const EDGE_RING_SITES: usize = 201;

/// The ε = 0 edge state at the `x = 0` wall of the two-wall ring built from
/// the wall angles with the given Abbe ratio `R_A / a` (`None`: sharp walls).
pub fn wall_edge_state(protocol: &WalkProtocol, abbe_ratio: Option<f64>) -> Result<(CoinField, Option<EdgeState>)> {
    let g = LatticeGeometry::ring(EDGE_RING_SITES)?;
    let (left, right) = wall_angles();
    let optics = abbe_ratio.map(OpticsConfig::from_abbe_ratio).transpose()?;
    let field = ring_wall_field(&g, left, right, optics.as_ref())?;
    let found = find_edge_states(protocol, &field, Gap::Zero, 1e-6)?;
    let edge = found.states.into_iter().find(|e| e.wall.abs() < 1.0);
    Ok((field, edge))
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeSweepRow {
    /// `a / R_A`.
    pub ratio: f64,
    pub rms_size: Option<f64>,
    pub p_init: Option<f64>,
}

/// RMS size and initial-population overlap of the wall edge state versus `a / R_A`.
pub fn edge_state_size_sweep(protocol: &WalkProtocol, ratios: &[f64]) -> Result<Vec<SizeSweepRow>> {
    use rayon::prelude::*;
    ratios
        .par_iter()
        .map(|&ratio| {
            if ratio <= 0.0 {
                return Ok(SizeSweepRow {
                    ratio,
                    rms_size: None,
                    p_init: None,
                });
            }
            let (_, edge) = wall_edge_state(protocol, Some(1.0 / ratio))?;
            Ok(match edge {
                None => SizeSweepRow {
                    ratio,
                    rms_size: None,
                    p_init: None,
                },
                Some(e) => {
                    let init = e.wall_site_state()?;
                    SizeSweepRow {
                        ratio,
                        rms_size: Some(e.rms_size),
                        p_init: Some(e.state.inner(&init)?.norm_sqr()),
                    }
                }
            })
        })
        .collect()
}

pub fn write_size_sweep_csv<W: Write>(mut w: W, rows: &[SizeSweepRow]) -> Result<()> {
    writeln!(w, "ratio,rms_size,p_init")?;
    for r in rows {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", r.ratio, f(r.rms_size), f(r.p_init))?;
    }
    Ok(())
}

/// Parameters of an edge-transport run around a 2D island.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DropletSetup {
    pub extents: [usize; 2],
    pub boundary: Boundary,
    pub shape: Shape,
    pub inside: AnglePair,
    pub outside: AnglePair,
    pub optics: Option<OpticsConfig>,
    pub start: [i64; 2],
    pub spin: Spin,
    /// Indicator band `[lo, hi]` defining the contour region before dilation.
    pub band: (f64, f64),
    /// Chebyshev dilation of the band, in sites.
    pub dilation: usize,
}

impl DropletSetup {
    /// Droplet of radius 15 with a right-angle corner, 2D-setup optics,
    /// start at `(-15, 0)` spin down, absorbing 96 x 96 lattice.
    pub fn standard() -> Self {
        let (inside, outside) = island_angles();
        Self {
            extents: [96, 96],
            boundary: Boundary::AbsorbingGuard,
            shape: Shape::droplet([0.0, 0.0], 15.0),
            inside,
            outside,
            optics: Some(OpticsConfig::setup_2d()),
            start: [-15, 0],
            spin: Spin::Down,
            band: (0.05, 0.95),
            dilation: 3,
        }
    }
}

/// Lattice, field and the contour regions `F` and `L` of a droplet setup.
#[derive(Debug, Clone)]
pub struct DropletGeometry {
    pub geometry: LatticeGeometry,
    pub field: CoinField,
    pub indicator: Vec<f64>,
    pub f: Region,
    pub l: Region,
}

pub fn droplet_geometry(setup: &DropletSetup) -> Result<DropletGeometry> {
    let geometry = LatticeGeometry::new(&setup.extents, &[setup.boundary; 2], 1.0)?;
    let isl = island_field(&geometry, &setup.shape, setup.inside, setup.outside, setup.optics.as_ref())?;
    let f = contour_band(&geometry, &isl.indicator, setup.band, setup.dilation, setup.optics.is_none())?;
    let cy = setup.shape.center()[1];
    let lower = Region::from_predicate(&geometry, |[_, y]| (y as f64) < cy);
    let l = f.intersection(&lower);
    Ok(DropletGeometry {
        geometry,
        field: isl.field,
        indicator: isl.indicator,
        f,
        l,
    })
}

/// Sites within Chebyshev distance `dilation` of the island contour. The
/// contour is `{band.0 <= s <= band.1}` for smoothed indicators; for a
/// sharp indicator it is the set of sites with a 4-neighbour on the other side.
pub fn contour_band(geometry: &LatticeGeometry, indicator: &[f64], band: (f64, f64), dilation: usize, sharp: bool) -> Result<Region> {
    let (lo, hi) = band;
    let mask = (0..geometry.num_sites())
        .map(|s| {
            let v = indicator[s];
            if !sharp {
                return (lo..=hi).contains(&v);
            }
            let [x, y] = geometry.coords(s);
            [[1, 0], [-1, 0], [0, 1], [0, -1]].iter().any(|[dx, dy]| {
                geometry
                    .site_at(&[x + dx, y + dy])
                    .map(|t| indicator[t] != v)
                    .unwrap_or(false)
            })
        })
        .collect();
    Ok(Region::from_mask(geometry, mask)?.dilate(geometry, dilation))
}

#[derive(Debug, Clone, Serialize)]
pub struct DropletTransport {
    pub steps: Vec<usize>,
    pub p_f: Vec<f64>,
    pub p_l: Vec<f64>,
    pub l_over_f: Vec<f64>,
    /// Standard errors of `p_f` for trajectory runs.
    pub p_f_stderr: Vec<f64>,
    /// Arc-length coordinate of the leading front, travelled from the start.
    pub front: Vec<f64>,
    pub front_speed: f64,
    pub contour_length: f64,
    pub period: Option<f64>,
    pub warnings: Vec<String>,
}

/// Lag of the strongest autocorrelation peak after the first zero crossing.
pub fn dominant_period(series: &[f64]) -> Option<f64> {
    let n = series.len();
    if n < 8 {
        return None;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let var: f64 = x.iter().map(|v| v * v).sum();
    if var <= 0.0 {
        return None;
    }
    let max_lag = n / 2;
    let ac: Vec<f64> = (0..=max_lag)
        .map(|lag| x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / var)
        .collect();
    let first_neg = ac.iter().position(|&v| v < 0.0)?;
    let mut best: Option<(usize, f64)> = None;
    for lag in first_neg.max(1)..max_lag {
        if ac[lag] > ac[lag - 1] && ac[lag] >= ac[lag + 1] && best.is_none_or(|(_, v)| ac[lag] > v) {
            best = Some((lag, ac[lag]));
        }
    }
    best.filter(|(_, v)| *v > 0.0).map(|(lag, _)| lag as f64)
}

/// Weighted quantile of `values` with weights `w`.
fn weighted_quantile(values: &[f64], w: &[f64], q: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    for &i in &idx {
        acc += w[i];
        if acc >= q * total {
            return values[i];
        }
    }
    values[*idx.last().expect("nonempty")]
}

/// Runs the transport experiment: `P(F)`, `P(L)/P(F)`, the front and the
/// oscillation period of `P(L)/P(F)`.
pub fn droplet_transport(setup: &DropletSetup, cfg: &DecoherenceConfig, n_max: usize) -> Result<DropletTransport> {
    let dg = droplet_geometry(setup)?;
    let g = &dg.geometry;
    let psi0 = SpinorState::basis(g, &setup.start, setup.spin)?;
    let contour = setup.shape.contour(0.25);
    let lc = setup.shape.perimeter();
    // Arc coordinate of each contour vertex.
    let mut arc = vec![0.0; contour.len()];
    for i in 1..contour.len() {
        arc[i] = arc[i - 1] + (contour[i][0] - contour[i - 1][0]).hypot(contour[i][1] - contour[i - 1][1]);
    }
    let arc_of = |p: [f64; 2]| -> f64 {
        let (i, _) = contour
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (c[0] - p[0]).hypot(c[1] - p[1])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("contour nonempty");
        arc[i]
    };
    let f_sites: Vec<usize> = dg.f.sites().collect();
    let s0 = arc_of([setup.start[0] as f64, setup.start[1] as f64]);
    let rel: Vec<f64> = f_sites
        .iter()
        .map(|&s| {
            let [x, y] = g.coords(s);
            (arc_of([x as f64, y as f64]) - s0).rem_euclid(lc)
        })
        .collect();
    let obs = [
        Observable::Region {
            name: "p_f".into(),
            region: dg.f.clone(),
        },
        Observable::Region {
            name: "p_l".into(),
            region: dg.l.clone(),
        },
    ];
    let front_until = ((0.6 * lc).ceil() as usize).min(n_max);
    let opts = EvolveOptions {
        n_steps: n_max,
        record_every: 1,
        distribution_every: Some(1),
        distribution_sites: Some(f_sites.clone()),
    };
    let ts = evolve(&Initial::Pure(psi0), &WalkProtocol::walk_2d(), &dg.field, cfg, &opts, &obs)?;
    let p_f = ts.series("p_f").expect("recorded");
    let p_l = ts.series("p_l").expect("recorded");
    let l_over_f: Vec<f64> = p_l.iter().zip(&p_f).map(|(l, f)| if *f > 0.0 { l / f } else { 0.0 }).collect();
    let p_f_stderr = if ts.stderr.is_empty() {
        Vec::new()
    } else {
        ts.stderr.iter().map(|r| r[0]).collect()
    };
    // Direction of travel from the mean signed displacement early on.
    let early = 10.min(n_max);
    let signed = |d: f64| if d > lc / 2.0 { d - lc } else { d };
    let dist_at = |n: usize| &ts.distributions[n].1;
    let direction = {
        let d = dist_at(early);
        let m: f64 = rel.iter().zip(d).map(|(r, p)| signed(*r) * p).sum();
        if m >= 0.0 {
            1.0
        } else {
            -1.0
        }
    };
    let travelled: Vec<f64> = rel
        .iter()
        .map(|&r| {
            let d = (direction * r).rem_euclid(lc);
            if d >= 0.75 * lc {
                d - lc
            } else {
                d
            }
        })
        .collect();
    let front: Vec<f64> = (0..=front_until)
        .map(|n| {
            let d = dist_at(n);
            if d.iter().sum::<f64>() > 0.0 {
                weighted_quantile(&travelled, d, 0.9)
            } else {
                0.0
            }
        })
        .collect();
    let lo = 10.min(front_until);
    let xs: Vec<f64> = (lo..=front_until).map(|n| n as f64).collect();
    let ys: Vec<f64> = (lo..=front_until).map(|n| front[n]).collect();
    let front_speed = if xs.len() >= 2 { linear_fit(&xs, &ys).0 } else { 0.0 };
    let period = if n_max > 50 { dominant_period(&l_over_f[50..]) } else { None };
    Ok(DropletTransport {
        steps: ts.steps,
        p_f,
        p_l,
        l_over_f,
        p_f_stderr,
        front,
        front_speed,
        contour_length: lc,
        period,
        warnings: ts.warnings,
    })
}

impl DropletTransport {
    /// `n,p_f,p_l,l_over_f[,p_f_stderr]`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let err = !self.p_f_stderr.is_empty();
        writeln!(w, "n,p_f,p_l,l_over_f{}", if err { ",p_f_stderr" } else { "" })?;
        for (i, n) in self.steps.iter().enumerate() {
            write!(w, "{n},{},{},{}", self.p_f[i], self.p_l[i], self.l_over_f[i])?;
            if err {
                write!(w, ",{}", self.p_f_stderr[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Mean of `P(F)` over steps `lo..=hi`.
    pub fn plateau(&self, lo: usize, hi: usize) -> f64 {
        let hi = hi.min(self.p_f.len() - 1);
        self.p_f[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn synthetic_edge(amps: Vec<Complex64>) -> EdgeState {
        let g = LatticeGeometry::ring(amps.len() / 2).unwrap();
        let state = SpinorState::from_amplitudes(&g, amps).unwrap();
        let (spin_factor, factorization_fidelity) = super::spin_factor(&state);
        EdgeState {
            state,
            epsilon: 0.0,
            center: 0.0,
            wall: 0.0,
            rms_size: 0.0,
            spin_factor,
            factorization_fidelity,
            residual: 0.0,
        }
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn equal_spin_weights_halve_the_rate() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let e = synthetic_edge(vec![c(0.0), c(0.0), c(h * 0.6), c(h * 0.6), c(h * 0.8), c(h * 0.8)]);
        assert!(e.is_factorized());
        assert_abs_diff_eq!(decay_rate(&e, Channel::Spin, 0.3).gamma, 0.15, epsilon = 1e-12);
    }

    #[test]
    fn pinned_spin_and_single_site_are_immune() {
        let e = synthetic_edge(vec![c(0.6), c(0.0), c(0.8), c(0.0), c(0.0), c(0.0)]);
        assert_eq!(decay_rate(&e, Channel::Spin, 0.7).gamma, 0.0);
        let e = synthetic_edge(vec![c(0.0), c(0.0), c(0.6), c(0.8), c(0.0), c(0.0)]);
        assert_abs_diff_eq!(decay_rate(&e, Channel::Position, 0.7).gamma, 0.0, epsilon = 1e-15);
        let pred = decay_rate(&e, Channel::Spin, 0.5);
        assert!(pred.gamma <= 0.5 && pred.gamma >= 0.0);
        assert_abs_diff_eq!(pred.survival(3), (1.0 - pred.gamma).powi(3), epsilon = 1e-15);
    }

    #[test]
    fn fit_helpers() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let (a, b) = linear_fit(&xs, &ys);
        assert_abs_diff_eq!(a, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r_squared(&xs, &ys), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn period_of_a_cosine() {
        let s: Vec<f64> = (0..400).map(|n| (2.0 * PI * n as f64 / 37.0).cos()).collect();
        assert_abs_diff_eq!(dominant_period(&s).unwrap(), 37.0, epsilon = 1.0);
        assert!(dominant_period(&[1.0; 50]).is_none());
    }

    #[test]
    fn flat_field_has_no_edge_states() {
        let g = LatticeGeometry::ring(60).unwrap();
        let (left, _) = wall_angles();
        let f = CoinField::homogeneous(&g, left);
        let found = find_edge_states(&WalkProtocol::split_step_1d(), &f, Gap::Zero, 1e-6).unwrap();
        assert!(found.states.is_empty());
        let rows = edge_state_size_sweep(&WalkProtocol::split_step_1d(), &[0.0]).unwrap();
        assert!(rows[0].rms_size.is_none());
    }

    #[test]
    fn sharp_wall_edge_states() {
        let g = LatticeGeometry::ring(120).unwrap();
        let (left, right) = wall_angles();
        let f = ring_wall_field(&g, left, right, None).unwrap();
        for p in [WalkProtocol::split_step_1d(), WalkProtocol::frame_prime()] {
            let found = find_edge_states(&p, &f, Gap::Zero, 1e-6).unwrap();
            assert_eq!(found.states.len(), 2, "{:?}", found.warnings);
            for e in &found.states {
                assert!(e.residual < 1e-8);
                assert!(e.rms_size < 3.0);
            }
        }
        let found = find_edge_states(&WalkProtocol::frame_prime(), &f, Gap::Zero, 1e-6).unwrap();
        assert!(found.states.iter().all(|e| e.is_factorized()));
    }
}

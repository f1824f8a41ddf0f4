//! Stroboscopic decoherence: an exact channel on dense density operators and
//! an equivalent quantum-trajectory unraveling for pure states.
//!
//! One step maps `rho -> (1-p) W rho W^dag + p sum_i P_i W rho W^dag P_i`
//! with projectors on the spin (`P_s`) or the site (`P_x`) basis. On dense
//! matrices the projector sum amounts to scaling the off-diagonal blocks by
//! `1 - p`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coin_field::CoinField;
use crate::error::{Error, Result};
use crate::lattice::{Boundary, Region};
use crate::protocol::{StepOperator, WalkProtocol};
use crate::state::{DensityOperator, SpinorState, WalkerState};

/// Decoherence probabilities above this value are flagged as outside the
/// small-`p` validity domain of the model.
pub const VALIDITY_LIMIT: f64 = 0.2;

const TRACE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    #[default]
    None,
    Spin,
    Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceConfig {
    pub channel: Channel,
    pub p: f64,
    pub seed: u64,
    /// Number of trajectories; 0 selects dense density-operator evolution.
    pub trajectories: usize,
    /// Apply the channel after every primitive instead of once per step.
    pub kraus_per_primitive: bool,
}

impl Default for DecoherenceConfig {
    fn default() -> Self {
        Self {
            channel: Channel::None,
            p: 0.0,
            seed: 0,
            trajectories: 0,
            kraus_per_primitive: false,
        }
    }
}

impl DecoherenceConfig {
    pub fn new(channel: Channel, p: f64) -> Result<Self> {
        let cfg = Self {
            channel,
            p,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_trajectories(mut self, trajectories: usize, seed: u64) -> Self {
        self.trajectories = trajectories;
        self.seed = seed;
        self
    }

    pub fn per_primitive(mut self, on: bool) -> Self {
        self.kraus_per_primitive = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Decoherence(format!("p must lie in [0, 1], got {}", self.p)));
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.channel != Channel::None && self.p > 0.0
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.is_active() && self.p > VALIDITY_LIMIT {
            w.push(format!(
                "decoherence probability {} exceeds {VALIDITY_LIMIT}: the stroboscopic model assumes p << 1",
                self.p
            ));
        }
        w
    }
}

/// `rho <- W rho W^dag` for the stages `stages` of `op`.
fn conjugate(op: &StepOperator, stages: std::ops::Range<usize>, rho: &mut DMatrix<Complex64>) {
    for i in stages.clone() {
        op.apply_stage_columns(i, rho);
    }
    let mut t = rho.adjoint();
    for i in stages {
        op.apply_stage_columns(i, &mut t);
    }
    *rho = t.adjoint();
}

/// Scales the blocks of `rho` that connect different spins (spin channel)
/// or different sites (position channel) by `1 - p`.
pub fn dephase(rho: &mut DMatrix<Complex64>, channel: Channel, p: f64) {
    if channel == Channel::None || p == 0.0 {
        return;
    }
    let keep = 1.0 - p;
    let n = rho.nrows();
    for j in 0..n {
        for i in 0..n {
            let coherent = match channel {
                Channel::Spin => i % 2 != j % 2,
                Channel::Position => i / 2 != j / 2,
                Channel::None => false,
            };
            if coherent {
                rho[(i, j)] *= keep;
            }
        }
    }
}

/// Dense channel stepping with a precompiled step operator.
#[derive(Debug, Clone)]
pub struct DenseChannel {
    op: StepOperator,
    cfg: DecoherenceConfig,
}

impl DenseChannel {
    pub fn new(protocol: &WalkProtocol, field: &CoinField, cfg: &DecoherenceConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            op: StepOperator::compile(protocol, field)?,
            cfg: *cfg,
        })
    }

    pub fn operator(&self) -> &StepOperator {
        &self.op
    }

    pub fn step(&self, rho: &mut DensityOperator) -> Result<()> {
        self.op.geometry().ensure_same(rho.geometry())?;
        let before = rho.trace();
        let m = rho.matrix_mut();
        if self.cfg.kraus_per_primitive {
            for i in 0..self.op.num_stages() {
                conjugate(&self.op, i..i + 1, m);
                dephase(m, self.cfg.channel, self.cfg.p);
            }
        } else {
            conjugate(&self.op, 0..self.op.num_stages(), m);
            dephase(m, self.cfg.channel, self.cfg.p);
        }
        let after = rho.trace();
        rho.add_absorbed(before - after);
        Ok(())
    }
}

/// One channel step on a copy of `rho`.
pub fn channel_step(
    rho: &DensityOperator,
    protocol: &WalkProtocol,
    field: &CoinField,
    cfg: &DecoherenceConfig,
) -> Result<DensityOperator> {
    let ch = DenseChannel::new(protocol, field, cfg)?;
    let mut out = rho.clone();
    ch.step(&mut out)?;
    Ok(out)
}

/// Generator keyed by `(seed, trajectory, step)`.
pub fn trajectory_rng(seed: u64, trajectory: u64, step: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&trajectory.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(step);
    rng
}

/// With probability `p`, projects onto one outcome sampled by its weight and
/// restores the prior norm.
fn stochastic_projection<R: Rng>(amps: &mut [Complex64], channel: Channel, p: f64, rng: &mut R) {
    if channel == Channel::None || p == 0.0 || rng.random::<f64>() >= p {
        return;
    }
    let total: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    if total <= 0.0 {
        return;
    }
    let zero = Complex64::new(0.0, 0.0);
    match channel {
        Channel::Spin => {
            let up: f64 = amps.iter().step_by(2).map(|z| z.norm_sqr()).sum();
            let keep_up = loop {
                let r = rng.random::<f64>() * total;
                let pick_up = r < up;
                // Zero-weight outcomes cannot be sampled except through rounding.
                if (pick_up && up > 0.0) || (!pick_up && total - up > 0.0) {
                    break pick_up;
                }
            };
            let kept = if keep_up { up } else { total - up };
            let scale = (total / kept).sqrt();
            for (i, z) in amps.iter_mut().enumerate() {
                if (i % 2 == 0) == keep_up {
                    *z *= scale;
                } else {
                    *z = zero;
                }
            }
        }
        Channel::Position => {
            let weights: Vec<f64> = amps.chunks_exact(2).map(|c| c[0].norm_sqr() + c[1].norm_sqr()).collect();
            let site = loop {
                let mut r = rng.random::<f64>() * total;
                let mut chosen = weights.len() - 1;
                for (s, &w) in weights.iter().enumerate() {
                    if r < w {
                        chosen = s;
                        break;
                    }
                    r -= w;
                }
                if weights[chosen] > 0.0 {
                    break chosen;
                }
            };
            let scale = (total / weights[site]).sqrt();
            for (s, pair) in amps.chunks_exact_mut(2).enumerate() {
                if s == site {
                    pair[0] *= scale;
                    pair[1] *= scale;
                } else {
                    pair[0] = zero;
                    pair[1] = zero;
                }
            }
        }
        Channel::None => {}
    }
}

/// One stochastic step of trajectory `trajectory` at step index `step`.
pub fn trajectory_step_keyed(
    psi: &mut SpinorState,
    op: &StepOperator,
    cfg: &DecoherenceConfig,
    trajectory: u64,
    step: u64,
) -> Result<()> {
    let mut rng = trajectory_rng(cfg.seed, trajectory, step);
    trajectory_step(psi, op, cfg, &mut rng)
}

/// Applies `W`, then with probability `p` a projective measurement of the
/// channel's pointer basis with the outcome sampled by its weight.
pub fn trajectory_step<R: Rng>(psi: &mut SpinorState, op: &StepOperator, cfg: &DecoherenceConfig, rng: &mut R) -> Result<()> {
    op.geometry().ensure_same(psi.geometry())?;
    if cfg.kraus_per_primitive {
        for i in 0..op.num_stages() {
            let leaked = op.apply_stage(i, psi.amplitudes_mut());
            psi.add_absorbed(leaked);
            stochastic_projection(psi.amplitudes_mut(), cfg.channel, cfg.p, rng);
        }
    } else {
        op.apply_state(psi)?;
        stochastic_projection(psi.amplitudes_mut(), cfg.channel, cfg.p, rng);
    }
    Ok(())
}

/// Scalar observables recorded during evolution.
#[derive(Debug, Clone)]
pub enum Observable {
    /// Probability in a set of sites.
    Region { name: String, region: Region },
    /// `|<reference|psi>|^2` or `<reference|rho|reference>`.
    Overlap { name: String, reference: SpinorState },
    /// Probability at one site.
    Site { name: String, site: usize },
    /// Total up and down populations (two values, suffixed `_up`, `_down`).
    SpinPopulations { name: String },
    /// Norm lost through absorbing boundaries.
    Absorbed { name: String },
}

impl Observable {
    fn names(&self) -> Vec<String> {
        match self {
            Observable::Region { name, .. }
            | Observable::Overlap { name, .. }
            | Observable::Site { name, .. }
            | Observable::Absorbed { name } => vec![name.clone()],
            Observable::SpinPopulations { name } => vec![format!("{name}_up"), format!("{name}_down")],
        }
    }

    fn eval_pure(&self, psi: &SpinorState, out: &mut Vec<f64>) -> Result<()> {
        match self {
            Observable::Region { region, .. } => {
                let probs = psi.site_probabilities();
                out.push(region.sites().map(|s| probs[s]).sum());
            }
            Observable::Overlap { reference, .. } => out.push(reference.inner(psi)?.norm_sqr()),
            Observable::Site { site, .. } => {
                out.push(psi.amplitude(*site, crate::lattice::Spin::Up).norm_sqr() + psi.amplitude(*site, crate::lattice::Spin::Down).norm_sqr())
            }
            Observable::SpinPopulations { .. } => out.extend(psi.spin_populations()),
            Observable::Absorbed { .. } => out.push(psi.absorbed()),
        }
        Ok(())
    }

    fn eval_mixed(&self, rho: &DensityOperator, out: &mut Vec<f64>) -> Result<()> {
        let m = rho.matrix();
        match self {
            Observable::Region { region, .. } => {
                let probs = rho.site_probabilities();
                out.push(region.sites().map(|s| probs[s]).sum());
            }
            Observable::Overlap { reference, .. } => out.push(rho.expectation(reference)?),
            Observable::Site { site, .. } => out.push(m[(2 * site, 2 * site)].re + m[(2 * site + 1, 2 * site + 1)].re),
            Observable::SpinPopulations { .. } => {
                let n = m.nrows();
                out.push((0..n).step_by(2).map(|i| m[(i, i)].re).sum());
                out.push((1..n).step_by(2).map(|i| m[(i, i)].re).sum());
            }
            Observable::Absorbed { .. } => out.push(rho.absorbed_probability()),
        }
        Ok(())
    }
}

/// Initial condition for [`evolve`].
#[derive(Debug, Clone)]
pub enum Initial {
    Pure(SpinorState),
    Mixed(DensityOperator),
}

impl Initial {
    fn geometry(&self) -> &crate::lattice::LatticeGeometry {
        match self {
            Initial::Pure(s) => s.geometry(),
            Initial::Mixed(r) => r.geometry(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvolveOptions {
    pub n_steps: usize,
    /// Record scalar observables every this many steps (and at step 0).
    pub record_every: usize,
    /// Record position distributions every this many steps, if set.
    pub distribution_every: Option<usize>,
    /// Restrict recorded distributions to these sites, in site order.
    pub distribution_sites: Option<Vec<usize>>,
}

impl EvolveOptions {
    pub fn new(n_steps: usize) -> Self {
        Self {
            n_steps,
            record_every: 1,
            distribution_every: None,
            distribution_sites: None,
        }
    }
}

/// How the evolution was carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionMode {
    Pure,
    Dense,
    Trajectories,
}

#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub mode: EvolutionMode,
    pub names: Vec<String>,
    pub steps: Vec<usize>,
    /// `values[r][j]`: observable `j` at record `r`.
    pub values: Vec<Vec<f64>>,
    /// Standard error of the trajectory mean; empty for deterministic runs.
    pub stderr: Vec<Vec<f64>>,
    pub distributions: Vec<(usize, Vec<f64>)>,
    pub warnings: Vec<String>,
    /// Final pure state for pure runs.
    pub final_state: Option<SpinorState>,
}

impl TimeSeries {
    /// Column of one observable.
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.values.iter().map(|row| row[j]).collect())
    }

    /// `n,observable_name,value[,stderr]`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let with_err = !self.stderr.is_empty();
        writeln!(w, "{}", if with_err { "n,observable_name,value,stderr" } else { "n,observable_name,value" })?;
        for (r, &n) in self.steps.iter().enumerate() {
            for (j, name) in self.names.iter().enumerate() {
                if with_err {
                    writeln!(w, "{n},{name},{},{}", self.values[r][j], self.stderr[r][j])?;
                } else {
                    writeln!(w, "{n},{name},{}", self.values[r][j])?;
                }
            }
        }
        Ok(())
    }
}

/// Warns when a 1 site/step light cone reaches half of a periodic axis.
pub fn light_cone_warnings(geometry: &crate::lattice::LatticeGeometry, n_steps: usize) -> Vec<String> {
    (0..geometry.dimension())
        .filter(|&a| geometry.boundary(a) == Boundary::Periodic && 2 * n_steps >= geometry.extent(a))
        .map(|a| {
            format!(
                "light cone reaches half the circumference of periodic axis {a} (extent {}) within {n_steps} steps",
                geometry.extent(a)
            )
        })
        .collect()
}

fn check_pure(psi: &SpinorState, step: usize) -> Result<()> {
    let dev = (psi.norm_sqr() + psi.absorbed() - 1.0).abs();
    if dev > TRACE_TOLERANCE {
        return Err(Error::Invariant(format!("norm drift {dev:.3e} at step {step}")));
    }
    Ok(())
}

fn check_mixed(rho: &DensityOperator, step: usize) -> Result<()> {
    let dev = (rho.trace() + rho.absorbed_probability() - 1.0).abs();
    if dev > TRACE_TOLERANCE {
        return Err(Error::Invariant(format!("trace drift {dev:.3e} at step {step}")));
    }
    let herm = rho.hermiticity_error();
    if herm > TRACE_TOLERANCE {
        return Err(Error::Invariant(format!("Hermiticity error {herm:.3e} at step {step}")));
    }
    Ok(())
}

fn restrict(probs: Vec<f64>, sites: Option<&Vec<usize>>) -> Vec<f64> {
    match sites {
        Some(sites) => sites.iter().map(|&s| probs[s]).collect(),
        None => probs,
    }
}

/// Trajectories simulated concurrently before their results are folded in
/// index order; fixed so that sums do not depend on the thread count.
const TRAJECTORY_CHUNK: usize = 16;

fn records(opts: &EvolveOptions) -> impl Fn(usize) -> bool + '_ {
    move |n| n % opts.record_every.max(1) == 0 || n == opts.n_steps
}

/// Evolves `initial` for `opts.n_steps` steps, recording `observables`.
///
/// Pure initial states evolve unitarily when decoherence is inactive and by
/// trajectories when `cfg.trajectories > 0`; otherwise the dense channel is used.
pub fn evolve(
    initial: &Initial,
    protocol: &WalkProtocol,
    field: &CoinField,
    cfg: &DecoherenceConfig,
    opts: &EvolveOptions,
    observables: &[Observable],
) -> Result<TimeSeries> {
    cfg.validate()?;
    field.geometry().ensure_same(initial.geometry())?;
    let names: Vec<String> = observables.iter().flat_map(|o| o.names()).collect();
    let mut warnings = cfg.warnings();
    warnings.extend(light_cone_warnings(initial.geometry(), opts.n_steps));
    for w in &warnings {
        log::warn!("{w}");
    }
    let record = records(opts);
    let dist_due = |n: usize| opts.distribution_every.is_some_and(|d| n % d.max(1) == 0 || n == opts.n_steps);
    let op = StepOperator::compile(protocol, field)?;
    let mut out = TimeSeries {
        mode: EvolutionMode::Pure,
        names,
        steps: Vec::new(),
        values: Vec::new(),
        stderr: Vec::new(),
        distributions: Vec::new(),
        warnings,
        final_state: None,
    };
    match initial {
        Initial::Pure(psi0) if !cfg.is_active() => {
            let mut psi = psi0.clone();
            for n in 0..=opts.n_steps {
                if n > 0 {
                    op.apply_state(&mut psi)?;
                    check_pure(&psi, n)?;
                }
                if record(n) {
                    let mut row = Vec::new();
                    for o in observables {
                        o.eval_pure(&psi, &mut row)?;
                    }
                    out.steps.push(n);
                    out.values.push(row);
                }
                if dist_due(n) {
                    out.distributions.push((n, restrict(psi.site_probabilities(), opts.distribution_sites.as_ref())));
                }
            }
            out.final_state = Some(psi);
        }
        Initial::Pure(psi0) if cfg.trajectories > 0 => {
            out.mode = EvolutionMode::Trajectories;
            run_trajectories(psi0, &op, cfg, opts, observables, &mut out)?;
        }
        _ => {
            out.mode = EvolutionMode::Dense;
            let mut rho = match initial {
                Initial::Pure(psi) => DensityOperator::from_pure(psi)?,
                Initial::Mixed(r) => r.clone(),
            };
            let ch = DenseChannel { op, cfg: *cfg };
            for n in 0..=opts.n_steps {
                if n > 0 {
                    ch.step(&mut rho)?;
                }
                if record(n) {
                    check_mixed(&rho, n)?;
                    let mut row = Vec::new();
                    for o in observables {
                        o.eval_mixed(&rho, &mut row)?;
                    }
                    out.steps.push(n);
                    out.values.push(row);
                }
                if dist_due(n) {
                    out.distributions.push((n, restrict(rho.site_probabilities(), opts.distribution_sites.as_ref())));
                }
            }
        }
    }
    Ok(out)
}

fn run_trajectories(
    psi0: &SpinorState,
    op: &StepOperator,
    cfg: &DecoherenceConfig,
    opts: &EvolveOptions,
    observables: &[Observable],
    out: &mut TimeSeries,
) -> Result<()> {
    let record = records(opts);
    let dist_due = |n: usize| opts.distribution_every.is_some_and(|d| n % d.max(1) == 0 || n == opts.n_steps);
    let steps: Vec<usize> = (0..=opts.n_steps).filter(|&n| record(n)).collect();
    let dist_steps: Vec<usize> = (0..=opts.n_steps).filter(|&n| dist_due(n)).collect();
    let n_obs = out.names.len();
    let n_sites = opts
        .distribution_sites
        .as_ref()
        .map_or(psi0.geometry().num_sites(), |s| s.len());
    let n_traj = cfg.trajectories;
    let mut sum = vec![vec![0.0; n_obs]; steps.len()];
    let mut sum_sq = vec![vec![0.0; n_obs]; steps.len()];
    let mut dsum = vec![vec![0.0; n_sites]; dist_steps.len()];
    let mut start = 0;
    while start < n_traj {
        let end = (start + TRAJECTORY_CHUNK).min(n_traj);
        let chunk: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = (start..end)
            .into_par_iter()
            .map(|t| -> Result<_> {
                let mut psi = psi0.clone();
                let mut rows = Vec::with_capacity(steps.len());
                let mut dists = Vec::with_capacity(dist_steps.len());
                for n in 0..=opts.n_steps {
                    if n > 0 {
                        trajectory_step_keyed(&mut psi, op, cfg, t as u64, n as u64)?;
                        check_pure(&psi, n)?;
                    }
                    if record(n) {
                        let mut row = Vec::with_capacity(n_obs);
                        for o in observables {
                            o.eval_pure(&psi, &mut row)?;
                        }
                        rows.push(row);
                    }
                    if dist_due(n) {
                        dists.push(restrict(psi.site_probabilities(), opts.distribution_sites.as_ref()));
                    }
                }
                Ok((rows, dists))
            })
            .collect::<Result<Vec<_>>>()?;
        for (rows, dists) in &chunk {
            for (r, row) in rows.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    sum[r][j] += v;
                    sum_sq[r][j] += v * v;
                }
            }
            for (r, d) in dists.iter().enumerate() {
                for (s, &v) in d.iter().enumerate() {
                    dsum[r][s] += v;
                }
            }
        }
        start = end;
    }
    let nt = n_traj as f64;
    out.steps = steps;
    out.values = sum.iter().map(|row| row.iter().map(|v| v / nt).collect()).collect();
    out.stderr = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, q)| {
            s.iter()
                .zip(q)
                .map(|(&s, &q)| {
                    let mean = s / nt;
                    let var = if n_traj > 1 { ((q / nt - mean * mean) * nt / (nt - 1.0)).max(0.0) } else { 0.0 };
                    (var / nt).sqrt()
                })
                .collect()
        })
        .collect();
    out.distributions = dist_steps
        .into_iter()
        .zip(dsum)
        .map(|(n, d)| (n, d.into_iter().map(|v| v / nt).collect()))
        .collect();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coin_field::AnglePair;
    use crate::lattice::{LatticeGeometry, Spin};
    use approx::assert_abs_diff_eq;

    fn ring_setup(n: usize) -> (LatticeGeometry, CoinField, WalkProtocol) {
        let g = LatticeGeometry::ring(n).unwrap();
        let f = CoinField::from_fn(&g, |[x, _]| AnglePair::new(0.4 + 0.1 * x as f64, -1.1));
        (g, f, WalkProtocol::split_step_1d())
    }

    #[test]
    fn rejects_bad_probability() {
        assert!(DecoherenceConfig::new(Channel::Spin, 1.5).is_err());
        assert!(DecoherenceConfig::new(Channel::Spin, -0.1).is_err());
        assert_eq!(DecoherenceConfig::new(Channel::Spin, 0.3).unwrap().warnings().len(), 1);
        assert!(DecoherenceConfig::new(Channel::Spin, 0.1).unwrap().warnings().is_empty());
    }

    #[test]
    fn p_zero_is_unitary_conjugation() {
        let (g, f, p) = ring_setup(6);
        let psi = SpinorState::basis(&g, &[0], Spin::Down).unwrap();
        let rho = DensityOperator::from_pure(&psi).unwrap();
        let cfg = DecoherenceConfig::new(Channel::Spin, 0.0).unwrap();
        let out = channel_step(&rho, &p, &f, &cfg).unwrap();
        let psi1 = crate::protocol::step(&psi, &p, &f).unwrap();
        let expected = DensityOperator::from_pure(&psi1).unwrap();
        assert!((out.matrix() - expected.matrix()).norm() < 1e-14);
    }

    #[test]
    fn full_spin_projection_zeroes_off_diagonal_spin_blocks() {
        let (g, f, p) = ring_setup(6);
        let psi = SpinorState::localized(&g, &[1], [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]).unwrap();
        let rho = DensityOperator::from_pure(&psi).unwrap();
        let out = channel_step(&rho, &p, &f, &DecoherenceConfig::new(Channel::Spin, 1.0).unwrap()).unwrap();
        let m = out.matrix();
        for i in 0..12 {
            for j in 0..12 {
                if i % 2 != j % 2 {
                    assert_eq!(m[(i, j)], Complex64::new(0.0, 0.0));
                }
            }
        }
        assert_abs_diff_eq!(out.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn channel_is_linear_and_trace_preserving() {
        let (g, f, p) = ring_setup(5);
        let a = DensityOperator::from_pure(&SpinorState::basis(&g, &[0], Spin::Up).unwrap()).unwrap();
        let b = DensityOperator::maximally_mixed(&g).unwrap();
        for channel in [Channel::Spin, Channel::Position] {
            let cfg = DecoherenceConfig::new(channel, 0.3).unwrap();
            let mixed_first = channel_step(&a.mix(&b, 0.25).unwrap(), &p, &f, &cfg).unwrap();
            let mixed_after = channel_step(&a, &p, &f, &cfg)
                .unwrap()
                .mix(&channel_step(&b, &p, &f, &cfg).unwrap(), 0.25)
                .unwrap();
            assert!((mixed_first.matrix() - mixed_after.matrix()).norm() < 1e-12);
            assert_abs_diff_eq!(mixed_first.trace(), 1.0, epsilon = 1e-12);
            assert!(mixed_first.hermiticity_error() < 1e-12);
            assert!(mixed_first.min_eigenvalue().unwrap() > -1e-10);
        }
    }

    #[test]
    fn projection_is_noop_on_definite_spin() {
        let g = LatticeGeometry::ring(4).unwrap();
        let mut amps = SpinorState::basis(&g, &[1], Spin::Up).unwrap().amplitudes().to_vec();
        let before = amps.clone();
        let mut rng = trajectory_rng(1, 2, 3);
        stochastic_projection(&mut amps, Channel::Spin, 1.0, &mut rng);
        assert_eq!(amps, before);
    }

    #[test]
    fn keyed_rng_is_reproducible() {
        let a: f64 = trajectory_rng(7, 3, 11).random();
        let b: f64 = trajectory_rng(7, 3, 11).random();
        let c: f64 = trajectory_rng(7, 3, 12).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_steps_records_initial_only() {
        let (g, f, p) = ring_setup(6);
        let psi = SpinorState::basis(&g, &[0], Spin::Down).unwrap();
        let obs = [Observable::Site {
            name: "p0".into(),
            site: g.site_at(&[0]).unwrap(),
        }];
        let ts = evolve(&Initial::Pure(psi), &p, &f, &DecoherenceConfig::default(), &EvolveOptions::new(0), &obs).unwrap();
        assert_eq!(ts.steps, vec![0]);
        assert_eq!(ts.values, vec![vec![1.0]]);
    }

    #[test]
    fn dense_rejected_above_cap() {
        let g = LatticeGeometry::torus(64, 64).unwrap();
        let f = CoinField::homogeneous(&g, AnglePair::new(0.1, 0.2));
        let psi = SpinorState::basis(&g, &[0, 0], Spin::Up).unwrap();
        let cfg = DecoherenceConfig::new(Channel::Spin, 0.1).unwrap();
        let r = evolve(&Initial::Pure(psi), &WalkProtocol::walk_2d(), &f, &cfg, &EvolveOptions::new(1), &[]);
        assert!(matches!(r, Err(Error::DenseTooLarge { .. })));
    }
}

//! Coin and shift primitives, walk protocols and their compiled step operators.
//!
//! A [`WalkProtocol`] lists primitives in application order: the first entry
//! acts first on the state. Compiling it against a [`CoinField`] yields a
//! [`StepOperator`] that applies one step in place in O(basis) time.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::coin_field::{AngleComponent, CoinField};
use crate::error::{Error, Result};
use crate::lattice::{Axis, Boundary, LatticeGeometry, Spin};
use crate::state::{SpinorState, WalkerState};

/// Exact coin-angle multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoinScale {
    One,
    Half,
}

impl CoinScale {
    fn apply(self, theta: f64) -> f64 {
        match self {
            CoinScale::One => theta,
            CoinScale::Half => 0.5 * theta,
        }
    }
}

/// Where a coin takes its angle from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AngleSource {
    Field(AngleComponent),
    /// The same angle at every site, independent of the field.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Primitive {
    Coin { angle: AngleSource, scale: CoinScale },
    ShiftUp(Axis),
    ShiftDown(Axis),
}

impl Primitive {
    fn coin(component: AngleComponent, scale: CoinScale) -> Self {
        Primitive::Coin {
            angle: AngleSource::Field(component),
            scale,
        }
    }
}

/// Protocol names accepted in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    #[serde(rename = "split_step_1d")]
    SplitStep1d,
    FramePrime,
    FrameDoublePrime,
    SigmaZFrame,
    #[serde(rename = "walk_2d")]
    Walk2d,
}

impl ProtocolName {
    pub const ALL: [ProtocolName; 5] = [
        ProtocolName::SplitStep1d,
        ProtocolName::FramePrime,
        ProtocolName::FrameDoublePrime,
        ProtocolName::SigmaZFrame,
        ProtocolName::Walk2d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolName::SplitStep1d => "split_step_1d",
            ProtocolName::FramePrime => "frame_prime",
            ProtocolName::FrameDoublePrime => "frame_double_prime",
            ProtocolName::SigmaZFrame => "sigma_z_frame",
            ProtocolName::Walk2d => "walk_2d",
        }
    }

    pub fn protocol(self) -> WalkProtocol {
        match self {
            ProtocolName::SplitStep1d => WalkProtocol::split_step_1d(),
            ProtocolName::FramePrime => WalkProtocol::frame_prime(),
            ProtocolName::FrameDoublePrime => WalkProtocol::frame_double_prime(),
            ProtocolName::SigmaZFrame => WalkProtocol::sigma_z_frame(),
            ProtocolName::Walk2d => WalkProtocol::walk_2d(),
        }
    }

    pub fn chiral_frame(self) -> Option<ChiralFrame> {
        match self {
            ProtocolName::FramePrime => Some(ChiralFrame::Prime),
            ProtocolName::FrameDoublePrime => Some(ChiralFrame::DoublePrime),
            ProtocolName::SigmaZFrame => Some(ChiralFrame::SigmaZ),
            _ => None,
        }
    }
}

impl std::fmt::Display for ProtocolName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkProtocol {
    primitives: Vec<Primitive>,
    dimension: usize,
}

impl WalkProtocol {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        let dimension = if primitives
            .iter()
            .any(|p| matches!(p, Primitive::ShiftUp(Axis::Y) | Primitive::ShiftDown(Axis::Y)))
        {
            2
        } else {
            1
        };
        Self { primitives, dimension }
    }

    /// `S_x^dn C(theta2) S_x^up C(theta1)`.
    pub fn split_step_1d() -> Self {
        use AngleComponent::*;
        Self::new(vec![
            Primitive::coin(Theta1, CoinScale::One),
            Primitive::ShiftUp(Axis::X),
            Primitive::coin(Theta2, CoinScale::One),
            Primitive::ShiftDown(Axis::X),
        ])
    }

    /// `C(theta1/2) S_x^dn C(theta2) S_x^up C(theta1/2)`.
    pub fn frame_prime() -> Self {
        use AngleComponent::*;
        Self::new(vec![
            Primitive::coin(Theta1, CoinScale::Half),
            Primitive::ShiftUp(Axis::X),
            Primitive::coin(Theta2, CoinScale::One),
            Primitive::ShiftDown(Axis::X),
            Primitive::coin(Theta1, CoinScale::Half),
        ])
    }

    /// `C(theta2/2) S_x^up C(theta1) S_x^dn C(theta2/2)`.
    pub fn frame_double_prime() -> Self {
        use AngleComponent::*;
        Self::new(vec![
            Primitive::coin(Theta2, CoinScale::Half),
            Primitive::ShiftDown(Axis::X),
            Primitive::coin(Theta1, CoinScale::One),
            Primitive::ShiftUp(Axis::X),
            Primitive::coin(Theta2, CoinScale::Half),
        ])
    }

    /// `C(pi/2) W' C(-pi/2)`, chiral with respect to `sigma_3`.
    pub fn sigma_z_frame() -> Self {
        let mut prims = vec![Primitive::Coin {
            angle: AngleSource::Fixed(-FRAC_PI_2),
            scale: CoinScale::One,
        }];
        prims.extend(Self::frame_prime().primitives);
        prims.push(Primitive::Coin {
            angle: AngleSource::Fixed(FRAC_PI_2),
            scale: CoinScale::One,
        });
        Self::new(prims)
    }

    /// `S_y^dn S_y^up C(theta2) S_x^dn S_x^up C(theta1)`.
    pub fn walk_2d() -> Self {
        use AngleComponent::*;
        Self::new(vec![
            Primitive::coin(Theta1, CoinScale::One),
            Primitive::ShiftUp(Axis::X),
            Primitive::ShiftDown(Axis::X),
            Primitive::coin(Theta2, CoinScale::One),
            Primitive::ShiftUp(Axis::Y),
            Primitive::ShiftDown(Axis::Y),
        ])
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Net displacement of each spin component per step along each axis.
    pub fn net_shifts(&self) -> [[i32; 2]; 2] {
        let mut net = [[0; 2]; 2];
        for p in &self.primitives {
            match p {
                Primitive::ShiftUp(a) => net[a.index()][0] += 1,
                Primitive::ShiftDown(a) => net[a.index()][1] -= 1,
                Primitive::Coin { .. } => {}
            }
        }
        net
    }
}

/// Pauli matrices acting on the spin of every site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    Sigma1,
    Sigma2,
    Sigma3,
}

impl Pauli {
    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        let (o, z, i) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0));
        match self {
            Pauli::Sigma1 => [[z, o], [o, z]],
            Pauli::Sigma2 => [[z, -i], [i, z]],
            Pauli::Sigma3 => [[o, z], [z, -o]],
        }
    }

    /// Applies the Pauli matrix site by site to a basis vector.
    pub fn apply(self, amps: &mut [Complex64]) {
        let m = self.matrix();
        for pair in amps.chunks_exact_mut(2) {
            let (u, d) = (pair[0], pair[1]);
            pair[0] = m[0][0] * u + m[0][1] * d;
            pair[1] = m[1][0] * u + m[1][1] * d;
        }
    }

    /// Full `basis x basis` matrix of the site-wise operator.
    pub fn dense(self, basis_size: usize) -> DMatrix<Complex64> {
        let m = self.matrix();
        let mut out = DMatrix::zeros(basis_size, basis_size);
        for s in 0..basis_size / 2 {
            for a in 0..2 {
                for b in 0..2 {
                    out[(2 * s + a, 2 * s + b)] = m[a][b];
                }
            }
        }
        out
    }
}

/// Chiral-symmetric time frames of the 1D split-step walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiralFrame {
    Prime,
    DoublePrime,
    SigmaZ,
}

impl ChiralFrame {
    pub fn gamma(self) -> Pauli {
        match self {
            ChiralFrame::Prime | ChiralFrame::DoublePrime => Pauli::Sigma1,
            ChiralFrame::SigmaZ => Pauli::Sigma3,
        }
    }

    pub fn protocol(self) -> WalkProtocol {
        match self {
            ChiralFrame::Prime => WalkProtocol::frame_prime(),
            ChiralFrame::DoublePrime => WalkProtocol::frame_double_prime(),
            ChiralFrame::SigmaZ => WalkProtocol::sigma_z_frame(),
        }
    }

    pub fn name(self) -> ProtocolName {
        match self {
            ChiralFrame::Prime => ProtocolName::FramePrime,
            ChiralFrame::DoublePrime => ProtocolName::FrameDoublePrime,
            ChiralFrame::SigmaZ => ProtocolName::SigmaZFrame,
        }
    }
}

/// Primitive sequence of a chiral frame; frames are defined for 1D fields only.
pub fn frame_operator(frame: ChiralFrame, field: &CoinField) -> Result<WalkProtocol> {
    if field.geometry().dimension() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: field.geometry().dimension(),
        });
    }
    Ok(frame.protocol())
}

/// How a protocol axis is realized when compiling: as lattice shifts along
/// an axis of the target geometry, or as Bloch phases at fixed quasimomentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisAction {
    Lattice(usize),
    Momentum(f64),
}

#[derive(Debug, Clone)]
enum Stage {
    UniformCoin { c: f64, s: f64 },
    Coin { cs: Vec<(f64, f64)> },
    Shift { axis: usize, spin: Spin },
    Phase { spin: Spin, phase: Complex64 },
}

/// A protocol bound to a field and geometry, ready to apply.
#[derive(Debug, Clone)]
pub struct StepOperator {
    geometry: LatticeGeometry,
    stages: Vec<Stage>,
    lanes: [Vec<(usize, usize, usize)>; 2],
}

impl StepOperator {
    pub fn compile(protocol: &WalkProtocol, field: &CoinField) -> Result<Self> {
        let dim = field.geometry().dimension();
        if protocol.dimension() != dim {
            return Err(Error::DimensionMismatch {
                expected: protocol.dimension(),
                actual: dim,
            });
        }
        Self::compile_with(protocol, field, [AxisAction::Lattice(0), AxisAction::Lattice(1)])
    }

    /// Compiles with an explicit realization of each protocol axis. The
    /// field's geometry is the lattice the operator acts on.
    pub fn compile_with(protocol: &WalkProtocol, field: &CoinField, axes: [AxisAction; 2]) -> Result<Self> {
        let geometry = field.geometry().clone();
        let mut stages = Vec::with_capacity(protocol.primitives().len());
        for p in protocol.primitives() {
            let stage = match *p {
                Primitive::Coin { angle, scale } => match angle {
                    AngleSource::Fixed(t) => {
                        let h = 0.5 * scale.apply(t);
                        Stage::UniformCoin { c: h.cos(), s: h.sin() }
                    }
                    AngleSource::Field(component) => {
                        let angles = field.angles(component);
                        let first = angles[0];
                        if angles.iter().all(|&t| t == first) {
                            let h = 0.5 * scale.apply(first);
                            Stage::UniformCoin { c: h.cos(), s: h.sin() }
                        } else {
                            Stage::Coin {
                                cs: angles
                                    .iter()
                                    .map(|&t| {
                                        let h = 0.5 * scale.apply(t);
                                        (h.cos(), h.sin())
                                    })
                                    .collect(),
                            }
                        }
                    }
                },
                Primitive::ShiftUp(a) | Primitive::ShiftDown(a) => {
                    let spin = if matches!(p, Primitive::ShiftUp(_)) { Spin::Up } else { Spin::Down };
                    match axes[a.index()] {
                        AxisAction::Lattice(axis) => {
                            if axis >= geometry.dimension() {
                                return Err(Error::AxisOutOfRange {
                                    axis,
                                    dimension: geometry.dimension(),
                                });
                            }
                            Stage::Shift { axis, spin }
                        }
                        AxisAction::Momentum(k) => {
                            // Moving up by +e_d picks up e^{-ik}; down by -e_d picks up e^{+ik}.
                            let sign = if spin == Spin::Up { -1.0 } else { 1.0 };
                            Stage::Phase {
                                spin,
                                phase: Complex64::from_polar(1.0, sign * k),
                            }
                        }
                    }
                }
            };
            stages.push(stage);
        }
        let lanes = [lanes_for(&geometry, 0), lanes_for(&geometry, 1)];
        Ok(Self { geometry, stages, lanes })
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Applies one primitive; returns the norm removed by absorbing boundaries.
    pub fn apply_stage(&self, index: usize, amps: &mut [Complex64]) -> f64 {
        match &self.stages[index] {
            Stage::UniformCoin { c, s } => {
                let (c, s) = (*c, *s);
                for pair in amps.chunks_exact_mut(2) {
                    let (u, d) = (pair[0], pair[1]);
                    pair[0] = u * c - d * s;
                    pair[1] = u * s + d * c;
                }
                0.0
            }
            Stage::Coin { cs } => {
                for (pair, &(c, s)) in amps.chunks_exact_mut(2).zip(cs) {
                    let (u, d) = (pair[0], pair[1]);
                    pair[0] = u * c - d * s;
                    pair[1] = u * s + d * c;
                }
                0.0
            }
            Stage::Phase { spin, phase } => {
                let off = spin.index();
                for pair in amps.chunks_exact_mut(2) {
                    pair[off] *= phase;
                }
                0.0
            }
            Stage::Shift { axis, spin } => {
                let periodic = self.geometry.boundary(*axis) == Boundary::Periodic;
                let forward = *spin == Spin::Up;
                let off = spin.index();
                let mut leaked = 0.0;
                for &(base, stride, count) in &self.lanes[*axis] {
                    leaked += shift_lane(amps, base, stride, count, off, forward, periodic);
                }
                leaked
            }
        }
    }

    /// Applies one full step; returns the norm removed by absorbing boundaries.
    pub fn apply(&self, amps: &mut [Complex64]) -> f64 {
        (0..self.stages.len()).map(|i| self.apply_stage(i, amps)).sum()
    }

    pub fn apply_state(&self, state: &mut SpinorState) -> Result<()> {
        self.geometry.ensure_same(state.geometry())?;
        let leaked = self.apply(state.amplitudes_mut());
        state.add_absorbed(leaked);
        Ok(())
    }

    /// Left-multiplies every column of `m` by the step operator.
    pub fn apply_columns(&self, m: &mut DMatrix<Complex64>) {
        let n = m.nrows();
        m.as_mut_slice().par_chunks_mut(n).for_each(|col| {
            self.apply(col);
        });
    }

    /// Left-multiplies every column of `m` by a single primitive.
    pub fn apply_stage_columns(&self, index: usize, m: &mut DMatrix<Complex64>) {
        let n = m.nrows();
        m.as_mut_slice().par_chunks_mut(n).for_each(|col| {
            self.apply_stage(index, col);
        });
    }

    /// Dense one-step matrix over the `(site, spin)` basis.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::identity(self.geometry.basis_size(), self.geometry.basis_size());
        self.apply_columns(&mut m);
        m
    }
}

/// `(base site, stride, count)` for every line of sites along `axis`.
fn lanes_for(geometry: &LatticeGeometry, axis: usize) -> Vec<(usize, usize, usize)> {
    if axis >= geometry.dimension() {
        return Vec::new();
    }
    if geometry.dimension() == 1 {
        return vec![(0, 1, geometry.extent(0))];
    }
    let (nx, ny) = (geometry.extent(0), geometry.extent(1));
    match axis {
        0 => (0..ny).map(|iy| (iy, ny, nx)).collect(),
        _ => (0..nx).map(|ix| (ix * ny, 1, ny)).collect(),
    }
}

fn shift_lane(
    amps: &mut [Complex64],
    base: usize,
    stride: usize,
    count: usize,
    off: usize,
    forward: bool,
    periodic: bool,
) -> f64 {
    let idx = |j: usize| 2 * (base + j * stride) + off;
    let zero = Complex64::new(0.0, 0.0);
    if forward {
        let last = amps[idx(count - 1)];
        for j in (1..count).rev() {
            amps[idx(j)] = amps[idx(j - 1)];
        }
        if periodic {
            amps[idx(0)] = last;
            0.0
        } else {
            amps[idx(0)] = zero;
            last.norm_sqr()
        }
    } else {
        let first = amps[idx(0)];
        for j in 0..count - 1 {
            amps[idx(j)] = amps[idx(j + 1)];
        }
        if periodic {
            amps[idx(count - 1)] = first;
            0.0
        } else {
            amps[idx(count - 1)] = zero;
            first.norm_sqr()
        }
    }
}

fn single_stage(field: &CoinField, prim: Primitive) -> Result<StepOperator> {
    let dim = field.geometry().dimension();
    if let Primitive::ShiftUp(a) | Primitive::ShiftDown(a) = prim {
        if a.index() >= dim {
            return Err(Error::AxisOutOfRange {
                axis: a.index(),
                dimension: dim,
            });
        }
    }
    StepOperator::compile_with(
        &WalkProtocol::new(vec![prim]),
        field,
        [AxisAction::Lattice(0), AxisAction::Lattice(1)],
    )
}

/// Rotates every spinor by `exp(-i sigma_2 theta / 2)` with `theta = scale * field angle`.
pub fn apply_coin(state: &SpinorState, field: &CoinField, which: AngleComponent, scale: CoinScale) -> Result<SpinorState> {
    field.geometry().ensure_same(state.geometry())?;
    let op = single_stage(
        field,
        Primitive::Coin {
            angle: AngleSource::Field(which),
            scale,
        },
    )?;
    let mut out = state.clone();
    op.apply_state(&mut out)?;
    Ok(out)
}

/// Moves the `spin` component one site along `axis` (up: +e_d, down: -e_d).
pub fn apply_shift(state: &SpinorState, axis: Axis, spin: Spin) -> Result<SpinorState> {
    let geometry = state.geometry();
    if axis.index() >= geometry.dimension() {
        return Err(Error::AxisOutOfRange {
            axis: axis.index(),
            dimension: geometry.dimension(),
        });
    }
    let field = CoinField::homogeneous(geometry, crate::coin_field::AnglePair::new(0.0, 0.0));
    let prim = match spin {
        Spin::Up => Primitive::ShiftUp(axis),
        Spin::Down => Primitive::ShiftDown(axis),
    };
    let mut out = state.clone();
    single_stage(&field, prim)?.apply_state(&mut out)?;
    Ok(out)
}

/// One application of `protocol`.
pub fn step(state: &SpinorState, protocol: &WalkProtocol, field: &CoinField) -> Result<SpinorState> {
    field.geometry().ensure_same(state.geometry())?;
    let op = StepOperator::compile(protocol, field)?;
    let mut out = state.clone();
    op.apply_state(&mut out)?;
    Ok(out)
}

/// `n` applications of `protocol`.
pub fn evolve_pure(state: &SpinorState, protocol: &WalkProtocol, field: &CoinField, n: usize) -> Result<SpinorState> {
    field.geometry().ensure_same(state.geometry())?;
    let op = StepOperator::compile(protocol, field)?;
    let mut out = state.clone();
    for _ in 0..n {
        op.apply_state(&mut out)?;
    }
    Ok(out)
}

/// Largest entry of `|U^dagger U - 1|`.
pub fn unitarity_error(m: &DMatrix<Complex64>) -> f64 {
    let prod = m.adjoint() * m;
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - target).norm());
        }
    }
    worst
}

/// Largest entry of `|Gamma W Gamma^dagger - W^dagger|`.
pub fn chiral_symmetry_error(w: &DMatrix<Complex64>, gamma: Pauli) -> f64 {
    let g = gamma.dense(w.nrows());
    let lhs = &g * w * g.adjoint();
    (lhs - w.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

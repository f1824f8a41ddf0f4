//! Pure and mixed walker states and the observables computed from them.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeGeometry, Region, Spin};

/// Largest basis for which a dense density operator is allowed.
pub const DENSE_CAP: usize = 4096;

/// Largest basis for which positivity is checked by full diagonalization.
pub const POSITIVITY_CHECK_CAP: usize = 256;

const NORM_TOLERANCE: f64 = 1e-6;

/// Common read access to pure and mixed states.
pub trait WalkerState {
    fn geometry(&self) -> &LatticeGeometry;

    /// Probability still carried by the state (norm squared or trace).
    fn retained_probability(&self) -> f64;

    /// Probability removed by absorbing boundaries so far.
    fn absorbed_probability(&self) -> f64;

    /// Spin-summed probability per site, without normalization checks.
    fn site_probabilities(&self) -> Vec<f64>;
}

/// Pure state `|psi>`: one complex amplitude per `(site, spin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorState {
    geometry: LatticeGeometry,
    amplitudes: Vec<Complex64>,
    absorbed: f64,
}

impl SpinorState {
    pub fn zeros(geometry: &LatticeGeometry) -> Self {
        Self {
            amplitudes: vec![Complex64::new(0.0, 0.0); geometry.basis_size()],
            geometry: geometry.clone(),
            absorbed: 0.0,
        }
    }

    /// Single-site basis state `|x, s>` at physical coordinates.
    pub fn basis(geometry: &LatticeGeometry, coords: &[i64], spin: Spin) -> Result<Self> {
        let site = geometry.site_at(coords)?;
        let mut s = Self::zeros(geometry);
        s.amplitudes[LatticeGeometry::basis_index(site, spin)] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    /// Single-site state `|x> (x) (up|up> + down|down>)`.
    pub fn localized(geometry: &LatticeGeometry, coords: &[i64], spinor: [Complex64; 2]) -> Result<Self> {
        let site = geometry.site_at(coords)?;
        let mut s = Self::zeros(geometry);
        s.amplitudes[2 * site] = spinor[0];
        s.amplitudes[2 * site + 1] = spinor[1];
        Ok(s)
    }

    pub fn from_amplitudes(geometry: &LatticeGeometry, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != geometry.basis_size() {
            return Err(Error::GeometryMismatch(format!(
                "{} amplitudes for a basis of size {}",
                amplitudes.len(),
                geometry.basis_size()
            )));
        }
        Ok(Self {
            geometry: geometry.clone(),
            amplitudes,
            absorbed: 0.0,
        })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn amplitude(&self, site: usize, spin: Spin) -> Complex64 {
        self.amplitudes[LatticeGeometry::basis_index(site, spin)]
    }

    pub fn absorbed(&self) -> f64 {
        self.absorbed
    }

    pub(crate) fn add_absorbed(&mut self, p: f64) {
        self.absorbed += p;
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rescales to unit norm and clears the absorbed-probability counter.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::Unnormalized { deviation: 1.0 });
        }
        for a in &mut self.amplitudes {
            *a /= n;
        }
        self.absorbed = 0.0;
        Ok(())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &SpinorState) -> Result<Complex64> {
        self.geometry.ensure_same(&other.geometry)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Spin-resolved total populations `[P_up, P_down]`.
    pub fn spin_populations(&self) -> [f64; 2] {
        let mut p = [0.0; 2];
        for pair in self.amplitudes.chunks_exact(2) {
            p[0] += pair[0].norm_sqr();
            p[1] += pair[1].norm_sqr();
        }
        p
    }

    /// Reduced 2x2 spin density matrix `sum_x psi_x psi_x^dagger`.
    pub fn reduced_spin_matrix(&self) -> [[Complex64; 2]; 2] {
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for pair in self.amplitudes.chunks_exact(2) {
            for i in 0..2 {
                for j in 0..2 {
                    m[i][j] += pair[i] * pair[j].conj();
                }
            }
        }
        m
    }

    /// Writes the columnar snapshot: `# dim extent... n`, then `x [y] s re im`.
    pub fn write_snapshot<W: Write>(&self, mut w: W, step: usize) -> Result<()> {
        let g = &self.geometry;
        let mut header = format!("# {}", g.dimension());
        for e in g.extents() {
            write!(header, " {e}").unwrap();
        }
        writeln!(w, "{header} {step}")?;
        for site in 0..g.num_sites() {
            let [x, y] = g.coords(site);
            for spin in Spin::BOTH {
                let a = self.amplitude(site, spin);
                let s = match spin {
                    Spin::Up => "up",
                    Spin::Down => "down",
                };
                if g.dimension() == 1 {
                    writeln!(w, "{x} {s} {} {}", a.re, a.im)?;
                } else {
                    writeln!(w, "{x} {y} {s} {} {}", a.re, a.im)?;
                }
            }
        }
        Ok(())
    }

    /// Reads a snapshot written by [`SpinorState::write_snapshot`]; boundaries
    /// are taken from `boundaries` (periodic when `None`). Returns the state
    /// and the step number from the header.
    pub fn read_snapshot<R: BufRead>(r: R, boundaries: Option<&[Boundary]>) -> Result<(Self, usize)> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty snapshot".into()))??;
        let fields: Vec<&str> = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("snapshot header must start with '#'".into()))?
            .split_whitespace()
            .collect();
        let nums = fields
            .iter()
            .map(|f| f.parse::<usize>().map_err(|e| Error::Parse(format!("header field {f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let dim = *nums.first().ok_or_else(|| Error::Parse("missing dimension".into()))?;
        if nums.len() != dim + 2 {
            return Err(Error::Parse(format!("header {header:?} does not match dimension {dim}")));
        }
        let extents = &nums[1..=dim];
        let step = nums[dim + 1];
        let default_bc = vec![Boundary::Periodic; dim];
        let geometry = LatticeGeometry::new(extents, boundaries.unwrap_or(&default_bc), 1.0)?;
        let mut state = Self::zeros(&geometry);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != dim + 3 {
                return Err(Error::Parse(format!("line {}: expected {} columns", lineno + 2, dim + 3)));
            }
            let coords = parts[..dim]
                .iter()
                .map(|p| p.parse::<i64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2))))
                .collect::<Result<Vec<_>>>()?;
            let spin = match parts[dim] {
                "up" => Spin::Up,
                "down" => Spin::Down,
                other => return Err(Error::Parse(format!("line {}: unknown spin {other:?}", lineno + 2))),
            };
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)));
            let re = parse(parts[dim + 1])?;
            let im = parse(parts[dim + 2])?;
            let site = geometry.site_at(&coords)?;
            state.amplitudes[LatticeGeometry::basis_index(site, spin)] = Complex64::new(re, im);
        }
        Ok((state, step))
    }
}

impl WalkerState for SpinorState {
    fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    fn retained_probability(&self) -> f64 {
        self.norm_sqr()
    }

    fn absorbed_probability(&self) -> f64 {
        self.absorbed
    }

    fn site_probabilities(&self) -> Vec<f64> {
        self.amplitudes
            .chunks_exact(2)
            .map(|p| p[0].norm_sqr() + p[1].norm_sqr())
            .collect()
    }
}

/// Mixed state `rho` stored densely over the `(site, spin)` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    geometry: LatticeGeometry,
    matrix: DMatrix<Complex64>,
    absorbed: f64,
}

impl DensityOperator {
    fn check_cap(geometry: &LatticeGeometry) -> Result<()> {
        let size = geometry.basis_size();
        if size > DENSE_CAP {
            return Err(Error::DenseTooLarge { size, cap: DENSE_CAP });
        }
        Ok(())
    }

    pub fn from_pure(state: &SpinorState) -> Result<Self> {
        Self::check_cap(&state.geometry)?;
        let n = state.amplitudes.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| state.amplitudes[i] * state.amplitudes[j].conj());
        Ok(Self {
            geometry: state.geometry.clone(),
            matrix,
            absorbed: state.absorbed,
        })
    }

    pub fn maximally_mixed(geometry: &LatticeGeometry) -> Result<Self> {
        Self::check_cap(geometry)?;
        let n = geometry.basis_size();
        Ok(Self {
            geometry: geometry.clone(),
            matrix: DMatrix::identity(n, n) * Complex64::new(1.0 / n as f64, 0.0),
            absorbed: 0.0,
        })
    }

    pub fn from_matrix(geometry: &LatticeGeometry, matrix: DMatrix<Complex64>) -> Result<Self> {
        Self::check_cap(geometry)?;
        let n = geometry.basis_size();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::GeometryMismatch(format!(
                "{}x{} matrix for a basis of size {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            geometry: geometry.clone(),
            matrix,
            absorbed: 0.0,
        })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.matrix
    }

    pub(crate) fn add_absorbed(&mut self, p: f64) {
        self.absorbed += p;
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// Largest entry of `|rho - rho^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in 0..=j {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue; `None` above [`POSITIVITY_CHECK_CAP`].
    pub fn min_eigenvalue(&self) -> Option<f64> {
        if self.matrix.nrows() > POSITIVITY_CHECK_CAP {
            return None;
        }
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = nalgebra::SymmetricEigen::new(h);
        eig.eigenvalues.iter().cloned().reduce(f64::min)
    }

    /// `<psi|rho|psi>`.
    pub fn expectation(&self, state: &SpinorState) -> Result<f64> {
        self.geometry.ensure_same(&state.geometry)?;
        let psi = &state.amplitudes;
        let n = psi.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            if psi[j] == Complex64::new(0.0, 0.0) {
                continue;
            }
            let col = self.matrix.column(j);
            let mut cj = Complex64::new(0.0, 0.0);
            for i in 0..n {
                cj += psi[i].conj() * col[i];
            }
            acc += cj * psi[j];
        }
        Ok(acc.re)
    }

    /// `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, other: &DensityOperator, alpha: f64) -> Result<DensityOperator> {
        self.geometry.ensure_same(&other.geometry)?;
        Ok(DensityOperator {
            geometry: self.geometry.clone(),
            matrix: &self.matrix * Complex64::new(alpha, 0.0) + &other.matrix * Complex64::new(1.0 - alpha, 0.0),
            absorbed: alpha * self.absorbed + (1.0 - alpha) * other.absorbed,
        })
    }
}

impl WalkerState for DensityOperator {
    fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    fn retained_probability(&self) -> f64 {
        self.trace()
    }

    fn absorbed_probability(&self) -> f64 {
        self.absorbed
    }

    fn site_probabilities(&self) -> Vec<f64> {
        (0..self.geometry.num_sites())
            .map(|s| self.matrix[(2 * s, 2 * s)].re + self.matrix[(2 * s + 1, 2 * s + 1)].re)
            .collect()
    }
}

fn check_normalized<S: WalkerState>(state: &S) -> Result<()> {
    let deviation = (state.retained_probability() + state.absorbed_probability() - 1.0).abs();
    if deviation > NORM_TOLERANCE {
        return Err(Error::Unnormalized { deviation });
    }
    Ok(())
}

/// `P(x) = sum_s <x,s|rho|x,s>` indexed by site. With absorbing boundaries
/// the distribution covers the retained probability only.
pub fn position_distribution<S: WalkerState>(state: &S) -> Result<Vec<f64>> {
    check_normalized(state)?;
    Ok(state
        .site_probabilities()
        .into_iter()
        .map(|p| p.max(0.0))
        .collect())
}

/// `sum_{x in region} P(x)`; an empty region yields 0.
pub fn region_probability<S: WalkerState>(state: &S, region: &Region) -> Result<f64> {
    if region.num_lattice_sites() != state.geometry().num_sites() {
        return Err(Error::GeometryMismatch(format!(
            "region over {} sites, lattice has {}",
            region.num_lattice_sites(),
            state.geometry().num_sites()
        )));
    }
    let dist = position_distribution(state)?;
    Ok(region.sites().map(|s| dist[s]).sum())
}

/// `|<reference|state>|^2`.
pub fn overlap_probability(state: &SpinorState, reference: &SpinorState) -> Result<f64> {
    state.geometry.ensure_same(&reference.geometry)?;
    check_normalized(state)?;
    check_normalized(reference)?;
    Ok(reference.inner(state)?.norm_sqr())
}

/// Writes `x[,y],p` CSV rows for a site-indexed distribution.
pub fn write_distribution_csv<W: Write>(mut w: W, geometry: &LatticeGeometry, dist: &[f64]) -> Result<()> {
    if geometry.dimension() == 1 {
        writeln!(w, "x,p")?;
    } else {
        writeln!(w, "x,y,p")?;
    }
    for (site, p) in dist.iter().enumerate() {
        let [x, y] = geometry.coords(site);
        if geometry.dimension() == 1 {
            writeln!(w, "{x},{p}")?;
        } else {
            writeln!(w, "{x},{y},{p}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn delta_distribution() {
        let g = LatticeGeometry::ring(8).unwrap();
        let s = SpinorState::basis(&g, &[0], Spin::Down).unwrap();
        let d = position_distribution(&s).unwrap();
        let origin = g.site_at(&[0]).unwrap();
        for (site, p) in d.iter().enumerate() {
            assert_eq!(*p, if site == origin { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn maximally_mixed_two_sites() {
        let g = LatticeGeometry::ring(2).unwrap();
        let rho = DensityOperator::maximally_mixed(&g).unwrap();
        let d = position_distribution(&rho).unwrap();
        assert_abs_diff_eq!(d[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_unnormalized() {
        let g = LatticeGeometry::ring(4).unwrap();
        let mut s = SpinorState::zeros(&g);
        s.amplitudes_mut()[0] = c(2.0, 0.0);
        assert!(matches!(position_distribution(&s), Err(Error::Unnormalized { .. })));
    }

    #[test]
    fn region_edge_cases() {
        let g = LatticeGeometry::torus(4, 4).unwrap();
        let s = SpinorState::basis(&g, &[1, -1], Spin::Up).unwrap();
        assert_eq!(region_probability(&s, &Region::all(&g)).unwrap(), 1.0);
        assert_eq!(region_probability(&s, &Region::empty(&g)).unwrap(), 0.0);
    }

    #[test]
    fn overlap_basics() {
        let g = LatticeGeometry::ring(6).unwrap();
        let a = SpinorState::basis(&g, &[0], Spin::Up).unwrap();
        let b = SpinorState::basis(&g, &[0], Spin::Down).unwrap();
        assert_eq!(overlap_probability(&a, &a).unwrap(), 1.0);
        assert_eq!(overlap_probability(&a, &b).unwrap(), 0.0);
        let other = SpinorState::basis(&LatticeGeometry::ring(8).unwrap(), &[0], Spin::Up).unwrap();
        assert!(matches!(overlap_probability(&a, &other), Err(Error::GeometryMismatch(_))));
    }

    #[test]
    fn density_from_pure_matches_pure_observables() {
        let g = LatticeGeometry::ring(5).unwrap();
        let amps: Vec<Complex64> = (0..10).map(|i| c((i as f64).sin(), (i as f64 * 0.7).cos())).collect();
        let mut s = SpinorState::from_amplitudes(&g, amps).unwrap();
        s.normalize().unwrap();
        let rho = DensityOperator::from_pure(&s).unwrap();
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);
        assert!(rho.hermiticity_error() < 1e-15);
        assert!(rho.min_eigenvalue().unwrap() > -1e-12);
        assert_abs_diff_eq!(rho.expectation(&s).unwrap(), 1.0, epsilon = 1e-12);
        let dp = position_distribution(&s).unwrap();
        let dr = position_distribution(&rho).unwrap();
        for (a, b) in dp.iter().zip(&dr) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn dense_cap_enforced() {
        let g = LatticeGeometry::torus(64, 64).unwrap();
        let s = SpinorState::basis(&g, &[0, 0], Spin::Up).unwrap();
        assert!(matches!(DensityOperator::from_pure(&s), Err(Error::DenseTooLarge { .. })));
    }

    #[test]
    fn snapshot_header() {
        let g = LatticeGeometry::torus(2, 3).unwrap();
        let s = SpinorState::basis(&g, &[0, 0], Spin::Down).unwrap();
        let mut buf = Vec::new();
        s.write_snapshot(&mut buf, 7).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# 2 2 3 7\n"));
        assert_eq!(text.lines().count(), 1 + 12);
    }

    #[test]
    fn additive_over_disjoint_regions() {
        let g = LatticeGeometry::ring(10).unwrap();
        let amps: Vec<Complex64> = (0..20).map(|i| c(1.0 + i as f64, 0.5)).collect();
        let mut s = SpinorState::from_amplitudes(&g, amps).unwrap();
        s.normalize().unwrap();
        let a = Region::from_predicate(&g, |[x, _]| x < 0);
        let b = a.complement();
        let total = region_probability(&s, &a).unwrap() + region_probability(&s, &b).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
    }
}

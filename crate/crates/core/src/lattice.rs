//! Lattice geometry, basis indexing and site regions.
//!
//! Basis elements are ordered site-major, spin-minor: basis index
//! `2 * site + spin`. In 2D, sites are row-major over `(x, y)`, i.e.
//! `site = ix * ny + iy`. Physical coordinates are centered so that an axis
//! of extent `n` covers `-(n/2) ..= n - 1 - n/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Internal two-level state of the walker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }
}

/// Lattice axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// Boundary treatment along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[default]
    Periodic,
    /// Amplitude shifted across the lattice edge is removed and accounted as
    /// absorbed norm.
    AbsorbingGuard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    extents: Vec<usize>,
    boundaries: Vec<Boundary>,
    lattice_constant: f64,
}

impl LatticeGeometry {
    pub fn new(extents: &[usize], boundaries: &[Boundary], lattice_constant: f64) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 {
            return Err(Error::Geometry(format!(
                "dimension must be 1 or 2, got {}",
                extents.len()
            )));
        }
        if boundaries.len() != extents.len() {
            return Err(Error::Geometry(format!(
                "{} boundaries given for {} axes",
                boundaries.len(),
                extents.len()
            )));
        }
        if let Some(&bad) = extents.iter().find(|&&n| n < 2) {
            return Err(Error::Geometry(format!("every extent must be >= 2, got {bad}")));
        }
        if !(lattice_constant > 0.0 && lattice_constant.is_finite()) {
            return Err(Error::Geometry(format!(
                "lattice constant must be positive, got {lattice_constant}"
            )));
        }
        Ok(Self {
            extents: extents.to_vec(),
            boundaries: boundaries.to_vec(),
            lattice_constant,
        })
    }

    /// Periodic 1D ring with unit lattice constant.
    pub fn ring(n: usize) -> Result<Self> {
        Self::new(&[n], &[Boundary::Periodic], 1.0)
    }

    /// Periodic 2D torus with unit lattice constant.
    pub fn torus(nx: usize, ny: usize) -> Result<Self> {
        Self::new(&[nx, ny], &[Boundary::Periodic; 2], 1.0)
    }

    pub fn dimension(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn extent(&self, axis: usize) -> usize {
        self.extents[axis]
    }

    pub fn boundary(&self, axis: usize) -> Boundary {
        self.boundaries[axis]
    }

    pub fn boundaries(&self) -> &[Boundary] {
        &self.boundaries
    }

    pub fn lattice_constant(&self) -> f64 {
        self.lattice_constant
    }

    pub fn num_sites(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn basis_size(&self) -> usize {
        2 * self.num_sites()
    }

    /// Offset subtracted from an axis index to obtain its physical coordinate.
    #[inline]
    pub fn origin(&self, axis: usize) -> i64 {
        (self.extents[axis] / 2) as i64
    }

    /// Physical integer coordinates of a site (second entry is 0 in 1D).
    pub fn coords(&self, site: usize) -> [i64; 2] {
        match self.dimension() {
            1 => [site as i64 - self.origin(0), 0],
            _ => {
                let ny = self.extents[1];
                let ix = site / ny;
                let iy = site % ny;
                [ix as i64 - self.origin(0), iy as i64 - self.origin(1)]
            }
        }
    }

    /// Site index of physical coordinates; periodic axes wrap, absorbing axes
    /// reject out-of-range coordinates.
    pub fn site_at(&self, coords: &[i64]) -> Result<usize> {
        if coords.len() != self.dimension() {
            return Err(Error::GeometryMismatch(format!(
                "{} coordinates given for a {}D lattice",
                coords.len(),
                self.dimension()
            )));
        }
        let mut idx = [0usize; 2];
        for (axis, &c) in coords.iter().enumerate() {
            let n = self.extents[axis] as i64;
            let raw = c + self.origin(axis);
            idx[axis] = match self.boundaries[axis] {
                Boundary::Periodic => raw.rem_euclid(n) as usize,
                Boundary::AbsorbingGuard => {
                    if raw < 0 || raw >= n {
                        return Err(Error::Geometry(format!(
                            "coordinate {c} outside axis {axis} of extent {n}"
                        )));
                    }
                    raw as usize
                }
            };
        }
        Ok(match self.dimension() {
            1 => idx[0],
            _ => idx[0] * self.extents[1] + idx[1],
        })
    }

    #[inline]
    pub fn basis_index(site: usize, spin: Spin) -> usize {
        2 * site + spin.index()
    }

    /// Signed minimum-image displacement `to - from` along an axis.
    pub fn displacement(&self, axis: usize, from: f64, to: f64) -> f64 {
        let d = to - from;
        match self.boundaries[axis] {
            Boundary::Periodic => {
                let n = self.extents[axis] as f64;
                d - n * (d / n).round()
            }
            Boundary::AbsorbingGuard => d,
        }
    }

    pub fn ensure_same(&self, other: &LatticeGeometry) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "extents {:?} vs {:?}",
                self.extents, other.extents
            )))
        }
    }
}

/// A deterministic set of lattice sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    mask: Vec<bool>,
}

impl Region {
    pub fn empty(geometry: &LatticeGeometry) -> Self {
        Self {
            mask: vec![false; geometry.num_sites()],
        }
    }

    pub fn all(geometry: &LatticeGeometry) -> Self {
        Self {
            mask: vec![true; geometry.num_sites()],
        }
    }

    pub fn from_sites(geometry: &LatticeGeometry, sites: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = vec![false; geometry.num_sites()];
        for s in sites {
            *mask.get_mut(s).ok_or_else(|| {
                Error::Geometry(format!("site {s} outside lattice of {} sites", geometry.num_sites()))
            })? = true;
        }
        Ok(Self { mask })
    }

    pub fn from_coords(geometry: &LatticeGeometry, coords: &[Vec<i64>]) -> Result<Self> {
        let sites = coords
            .iter()
            .map(|c| geometry.site_at(c))
            .collect::<Result<Vec<_>>>()?;
        Self::from_sites(geometry, sites)
    }

    /// Sites whose physical coordinates satisfy `pred`.
    pub fn from_predicate(geometry: &LatticeGeometry, pred: impl Fn([i64; 2]) -> bool) -> Self {
        Self {
            mask: (0..geometry.num_sites())
                .map(|s| pred(geometry.coords(s)))
                .collect(),
        }
    }

    pub fn from_mask(geometry: &LatticeGeometry, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != geometry.num_sites() {
            return Err(Error::GeometryMismatch(format!(
                "mask of length {} for {} sites",
                mask.len(),
                geometry.num_sites()
            )));
        }
        Ok(Self { mask })
    }

    pub fn contains(&self, site: usize) -> bool {
        self.mask.get(site).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn num_lattice_sites(&self) -> usize {
        self.mask.len()
    }

    pub fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn intersection(&self, other: &Region) -> Region {
        Region {
            mask: self.mask.iter().zip(&other.mask).map(|(&a, &b)| a && b).collect(),
        }
    }

    pub fn union(&self, other: &Region) -> Region {
        Region {
            mask: self.mask.iter().zip(&other.mask).map(|(&a, &b)| a || b).collect(),
        }
    }

    pub fn complement(&self) -> Region {
        Region {
            mask: self.mask.iter().map(|&m| !m).collect(),
        }
    }

    /// Grows the region by all sites within Chebyshev distance `radius`.
    pub fn dilate(&self, geometry: &LatticeGeometry, radius: usize) -> Region {
        let r = radius as i64;
        let mut out = self.mask.clone();
        for site in self.sites() {
            let [x, y] = geometry.coords(site);
            let (ylo, yhi) = if geometry.dimension() == 1 { (0, 0) } else { (-r, r) };
            for dx in -r..=r {
                for dy in ylo..=yhi {
                    let c = if geometry.dimension() == 1 {
                        vec![x + dx]
                    } else {
                        vec![x + dx, y + dy]
                    };
                    if let Ok(s) = geometry.site_at(&c) {
                        out[s] = true;
                    }
                }
            }
        }
        Region { mask: out }
    }
}

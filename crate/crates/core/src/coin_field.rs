//! Spatial coin-angle landscapes.
//!
//! Fields are built from bulk angle pairs joined by diffraction-limited
//! crossovers. The optical point spread function is modeled as a Gaussian of
//! standard deviation `(sqrt 2 / pi) R_A` with the Abbe radius
//! `R_A = lambda_C / (2 NA)`; a unit step convolved with it gives the erf
//! crossover used for 1D walls, and 2D islands are obtained by direct
//! summation of the kernel over a supersampled inside/outside indicator.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;

/// Coin-angle pair `(theta1, theta2)` in radians.
///
/// Deserializes from `[theta1, theta2]` or `{ theta1, theta2 }`, each angle a
/// number or a rational multiple of pi such as `"-3pi/4"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnglePair {
    pub theta1: f64,
    pub theta2: f64,
}

impl AnglePair {
    pub const fn new(theta1: f64, theta2: f64) -> Self {
        Self { theta1, theta2 }
    }

    /// Point `self + s * (other - self)` on the straight segment in angle space.
    pub fn lerp(self, other: AnglePair, s: f64) -> AnglePair {
        AnglePair {
            theta1: self.theta1 + s * (other.theta1 - self.theta1),
            theta2: self.theta2 + s * (other.theta2 - self.theta2),
        }
    }
}

/// Parses an angle: a decimal number, `pi`, or forms like `3pi/4`, `-pi/2`,
/// `2*pi/5`, `1/3`.
pub fn parse_angle(text: &str) -> Result<f64> {
    let bad = || Error::Parse(format!("invalid angle {text:?}"));
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, t.strip_prefix('+').unwrap_or(&t)),
    };
    let (num, den) = match body.split_once('/') {
        Some((n, d)) => (n, Some(d.parse::<f64>().map_err(|_| bad())?)),
        None => (body, None),
    };
    let value = match num.strip_suffix("pi") {
        Some(coef) => {
            let coef = coef.strip_suffix('*').unwrap_or(coef);
            let c = if coef.is_empty() { 1.0 } else { coef.parse::<f64>().map_err(|_| bad())? };
            c * PI
        }
        None => num.parse::<f64>().map_err(|_| bad())?,
    };
    let value = match den {
        Some(d) if d != 0.0 => value / d,
        Some(_) => return Err(bad()),
        None => value,
    };
    if !value.is_finite() {
        return Err(bad());
    }
    Ok(sign * value)
}

struct AngleVisitor;

impl<'de> serde::de::Visitor<'de> for AngleVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str("an angle in radians or a string such as \"pi/5\"")
    }

    fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<f64, E> {
        parse_angle(v).map_err(E::custom)
    }
}

/// Angle accepting the same forms as [`parse_angle`] when deserialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Angle(pub f64);

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        d.deserialize_any(AngleVisitor).map(Angle)
    }
}

struct PairVisitor;

impl<'de> serde::de::Visitor<'de> for PairVisitor {
    type Value = AnglePair;

    fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str("an angle pair [theta1, theta2]")
    }

    fn visit_seq<A: serde::de::SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<AnglePair, A::Error> {
        use serde::de::Error as _;
        let a: Angle = seq.next_element()?.ok_or_else(|| A::Error::invalid_length(0, &self))?;
        let b: Angle = seq.next_element()?.ok_or_else(|| A::Error::invalid_length(1, &self))?;
        if seq.next_element::<Angle>()?.is_some() {
            return Err(A::Error::invalid_length(3, &self));
        }
        Ok(AnglePair::new(a.0, b.0))
    }

    fn visit_map<A: serde::de::MapAccess<'de>>(self, mut map: A) -> std::result::Result<AnglePair, A::Error> {
        use serde::de::Error as _;
        let (mut t1, mut t2) = (None, None);
        while let Some(key) = map.next_key::<String>()? {
            match key.as_str() {
                "theta1" => t1 = Some(map.next_value::<Angle>()?.0),
                "theta2" => t2 = Some(map.next_value::<Angle>()?.0),
                other => return Err(A::Error::unknown_field(other, &["theta1", "theta2"])),
            }
        }
        Ok(AnglePair::new(
            t1.ok_or_else(|| A::Error::missing_field("theta1"))?,
            t2.ok_or_else(|| A::Error::missing_field("theta2"))?,
        ))
    }
}

impl<'de> Deserialize<'de> for AnglePair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        d.deserialize_any(PairVisitor)
    }
}

/// Which angle of the pair a coin reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AngleComponent {
    Theta1,
    Theta2,
}

/// Imaging parameters of the coin-addressing optics. Lengths share one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsConfig {
    pub numerical_aperture: f64,
    pub wavelength: f64,
    pub lattice_constant: f64,
}

impl OpticsConfig {
    pub fn new(numerical_aperture: f64, wavelength: f64, lattice_constant: f64) -> Result<Self> {
        if !(numerical_aperture > 0.0 && numerical_aperture <= 1.0) {
            return Err(Error::Optics(format!("NA must lie in (0, 1], got {numerical_aperture}")));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::Optics(format!("wavelength must be positive, got {wavelength}")));
        }
        if !(lattice_constant >= 0.0 && lattice_constant.is_finite()) {
            return Err(Error::Optics(format!("lattice constant must be >= 0, got {lattice_constant}")));
        }
        Ok(Self {
            numerical_aperture,
            wavelength,
            lattice_constant,
        })
    }

    /// Optics with unit lattice constant whose Abbe radius is `ratio` sites.
    pub fn from_abbe_ratio(ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::Optics(format!("Abbe ratio must be positive, got {ratio}")));
        }
        Self::new(0.5, ratio, 1.0)
    }

    /// Present 1D setup: NA 0.22, 894 nm coin light, a = 866 nm / 2.
    pub fn setup_1d() -> Self {
        Self::new(0.22, 894.0, 866.0 / 2.0).expect("valid constants")
    }

    /// 2D setup: NA 0.92, 894 nm coin light, a = sqrt(2) 866 nm / 2.
    pub fn setup_2d() -> Self {
        Self::new(0.92, 894.0, SQRT_2 * 866.0 / 2.0).expect("valid constants")
    }

    pub fn abbe_radius(&self) -> f64 {
        self.wavelength / (2.0 * self.numerical_aperture)
    }

    /// Gaussian PSF standard deviation in lattice units.
    pub fn psf_sigma_sites(&self) -> Result<f64> {
        Ok(SQRT_2 / PI * abbe_ratio(self)?)
    }
}

/// `R_A / a`.
pub fn abbe_ratio(optics: &OpticsConfig) -> Result<f64> {
    if optics.lattice_constant == 0.0 {
        return Err(Error::Optics("lattice constant is zero".into()));
    }
    Ok(optics.abbe_radius() / optics.lattice_constant)
}

/// Angle at position `x` (lattice units) of a smoothed step from `theta_l` to
/// `theta_r` centered at the origin.
pub fn crossover_angle(theta_l: f64, theta_r: f64, optics: &OpticsConfig, x: f64) -> f64 {
    let arg = optics.lattice_constant * PI * x / (2.0 * optics.abbe_radius());
    theta_l + 0.5 * (theta_r - theta_l) * (1.0 + erf(arg))
}

/// [`crossover_angle`] evaluated at each integer site in `sites`.
pub fn erf_crossover(theta_l: f64, theta_r: f64, optics: &OpticsConfig, sites: impl IntoIterator<Item = i64>) -> Vec<f64> {
    sites
        .into_iter()
        .map(|x| crossover_angle(theta_l, theta_r, optics, x as f64))
        .collect()
}

/// Weight in `[0, 1]` of the region between two walls on a ring of length
/// `ring_length`: ~1 for `wall_lo < x < wall_hi`, ~0 on the complementary arc.
/// `optics = None` gives sharp steps (`x` exactly on `wall_lo` counts as outside).
pub fn two_wall_profile(x: f64, ring_length: f64, wall_lo: f64, wall_hi: f64, optics: Option<&OpticsConfig>) -> f64 {
    let width = wall_hi - wall_lo;
    let half_center = 0.5 * width;
    // Place the periodic cut in the middle of the outer arc.
    let mut u = x - wall_lo;
    u -= ring_length * ((u - half_center) / ring_length).round();
    match optics {
        None => {
            if u > 0.0 && u < width {
                1.0
            } else if u == width {
                0.5
            } else {
                0.0
            }
        }
        Some(o) => {
            let c = o.lattice_constant * PI / (2.0 * o.abbe_radius());
            0.5 * (erf(c * u) + erf(c * (width - u)))
        }
    }
}

/// Region shapes for 2D islands, in physical lattice coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Disc { center: [f64; 2], radius: f64 },
    /// Disc with a tangent triangle on top whose apex, at distance
    /// `apex_distance` above the center, forms a sharp corner.
    Droplet {
        center: [f64; 2],
        radius: f64,
        apex_distance: f64,
    },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Shape {
    /// Droplet with a right-angle corner (`apex_distance = sqrt(2) radius`).
    pub fn droplet(center: [f64; 2], radius: f64) -> Self {
        Shape::Droplet {
            center,
            radius,
            apex_distance: SQRT_2 * radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Disc { radius, .. } if !(*radius > 0.0) => {
                Err(Error::DegenerateShape(format!("disc radius {radius}")))
            }
            Shape::Droplet {
                radius, apex_distance, ..
            } => {
                if !(*radius > 0.0) {
                    Err(Error::DegenerateShape(format!("droplet radius {radius}")))
                } else if !(*apex_distance > *radius) {
                    Err(Error::DegenerateShape(format!(
                        "droplet apex distance {apex_distance} must exceed the radius {radius}"
                    )))
                } else {
                    Ok(())
                }
            }
            Shape::Polygon { vertices } => {
                if vertices.len() < 3 || polygon_area(vertices).abs() < 1e-12 {
                    Err(Error::DegenerateShape("polygon has zero area".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn droplet_tangents(center: [f64; 2], radius: f64, apex_distance: f64) -> ([f64; 2], [f64; 2], [f64; 2], f64) {
        let beta = (radius / apex_distance).acos();
        let apex = [center[0], center[1] + apex_distance];
        let left = [center[0] - radius * beta.sin(), center[1] + radius * beta.cos()];
        let right = [center[0] + radius * beta.sin(), center[1] + radius * beta.cos()];
        (apex, left, right, beta)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Shape::Disc { center, radius } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                dx * dx + dy * dy <= radius * radius
            }
            Shape::Droplet {
                center,
                radius,
                apex_distance,
            } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                if dx * dx + dy * dy <= radius * radius {
                    return true;
                }
                let (apex, left, right, _) = Self::droplet_tangents(*center, *radius, *apex_distance);
                point_in_triangle(p, apex, left, right)
            }
            Shape::Polygon { vertices } => point_in_polygon(p, vertices),
        }
    }

    /// Closed counterclockwise polyline with vertex spacing at most `spacing`.
    pub fn contour(&self, spacing: f64) -> Vec<[f64; 2]> {
        let spacing = spacing.max(1e-6);
        match self {
            Shape::Disc { center, radius } => {
                let n = ((2.0 * PI * radius / spacing).ceil() as usize).max(8);
                (0..n)
                    .map(|k| {
                        let a = 2.0 * PI * k as f64 / n as f64;
                        [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
                    })
                    .collect()
            }
            Shape::Droplet {
                center,
                radius,
                apex_distance,
            } => {
                let (apex, left, right, beta) = Self::droplet_tangents(*center, *radius, *apex_distance);
                let mut pts = Vec::new();
                push_segment(&mut pts, apex, left, spacing);
                let start = PI / 2.0 + beta;
                let span = 2.0 * PI - 2.0 * beta;
                let n = ((radius * span / spacing).ceil() as usize).max(8);
                for k in 0..n {
                    let a = start + span * k as f64 / n as f64;
                    pts.push([center[0] + radius * a.cos(), center[1] + radius * a.sin()]);
                }
                push_segment(&mut pts, right, apex, spacing);
                pts
            }
            Shape::Polygon { vertices } => {
                let mut pts = Vec::new();
                let ccw = polygon_area(vertices) > 0.0;
                let mut vs = vertices.clone();
                if !ccw {
                    vs.reverse();
                }
                for i in 0..vs.len() {
                    push_segment(&mut pts, vs[i], vs[(i + 1) % vs.len()], spacing);
                }
                pts
            }
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            Shape::Disc { radius, .. } => 2.0 * PI * radius,
            Shape::Droplet {
                radius, apex_distance, ..
            } => {
                let beta = (radius / apex_distance).acos();
                2.0 * (apex_distance * apex_distance - radius * radius).sqrt() + radius * (2.0 * PI - 2.0 * beta)
            }
            Shape::Polygon { vertices } => (0..vertices.len())
                .map(|i| {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % vertices.len()];
                    (b[0] - a[0]).hypot(b[1] - a[1])
                })
                .sum(),
        }
    }

    pub fn center(&self) -> [f64; 2] {
        match self {
            Shape::Disc { center, .. } | Shape::Droplet { center, .. } => *center,
            Shape::Polygon { vertices } => {
                let n = vertices.len() as f64;
                let sx: f64 = vertices.iter().map(|v| v[0]).sum();
                let sy: f64 = vertices.iter().map(|v| v[1]).sum();
                [sx / n, sy / n]
            }
        }
    }
}

fn push_segment(pts: &mut Vec<[f64; 2]>, a: [f64; 2], b: [f64; 2], spacing: f64) {
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let n = ((len / spacing).ceil() as usize).max(1);
    for k in 0..n {
        let t = k as f64 / n as f64;
        pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
}

fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

fn point_in_triangle(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let side = |u: [f64; 2], v: [f64; 2]| (v[0] - u[0]) * (p[1] - u[1]) - (v[1] - u[1]) * (p[0] - u[0]);
    let (d1, d2, d3) = (side(a, b), side(b, c), side(c, a));
    (d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0) || (d1 <= 0.0 && d2 <= 0.0 && d3 <= 0.0)
}

fn point_in_polygon(p: [f64; 2], v: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = v.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Per-site coin angles over a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CoinField {
    geometry: LatticeGeometry,
    theta1: Vec<f64>,
    theta2: Vec<f64>,
}

impl CoinField {
    pub fn homogeneous(geometry: &LatticeGeometry, angles: AnglePair) -> Self {
        let n = geometry.num_sites();
        Self {
            geometry: geometry.clone(),
            theta1: vec![angles.theta1; n],
            theta2: vec![angles.theta2; n],
        }
    }

    pub fn from_fn(geometry: &LatticeGeometry, f: impl Fn([i64; 2]) -> AnglePair) -> Self {
        let (theta1, theta2) = (0..geometry.num_sites())
            .map(|s| {
                let p = f(geometry.coords(s));
                (p.theta1, p.theta2)
            })
            .unzip();
        Self {
            geometry: geometry.clone(),
            theta1,
            theta2,
        }
    }

    pub fn from_angles(geometry: &LatticeGeometry, theta1: Vec<f64>, theta2: Vec<f64>) -> Result<Self> {
        let n = geometry.num_sites();
        if theta1.len() != n || theta2.len() != n {
            return Err(Error::GeometryMismatch(format!(
                "angle vectors of length {}/{} for {n} sites",
                theta1.len(),
                theta2.len()
            )));
        }
        Ok(Self {
            geometry: geometry.clone(),
            theta1,
            theta2,
        })
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn angles(&self, component: AngleComponent) -> &[f64] {
        match component {
            AngleComponent::Theta1 => &self.theta1,
            AngleComponent::Theta2 => &self.theta2,
        }
    }

    pub fn pair(&self, site: usize) -> AnglePair {
        AnglePair::new(self.theta1[site], self.theta2[site])
    }

    /// `Some(pair)` when every site carries the same angles.
    pub fn uniform_pair(&self) -> Option<AnglePair> {
        let p = self.pair(0);
        (self.theta1.iter().all(|&t| t == p.theta1) && self.theta2.iter().all(|&t| t == p.theta2)).then_some(p)
    }

    /// Centers of the crossover regions of a 1D field, in physical coordinates.
    ///
    /// A wall is a maximal run of bonds whose combined angle jump exceeds
    /// 1e-3 of the largest jump; its center is the jump-weighted mean bond
    /// position. Fields with no jump above 1e-9 have no walls.
    pub fn walls_1d(&self) -> Vec<f64> {
        if self.geometry.dimension() != 1 {
            return Vec::new();
        }
        let n = self.geometry.num_sites();
        let periodic = self.geometry.boundary(0) == crate::lattice::Boundary::Periodic;
        let bonds = if periodic { n } else { n - 1 };
        let jump: Vec<f64> = (0..bonds)
            .map(|i| {
                let j = (i + 1) % n;
                (self.theta1[j] - self.theta1[i]).abs() + (self.theta2[j] - self.theta2[i]).abs()
            })
            .collect();
        let max = jump.iter().cloned().fold(0.0, f64::max);
        if max <= 1e-9 {
            return Vec::new();
        }
        let thr = 1e-3 * max;
        let active: Vec<bool> = jump.iter().map(|&j| j > thr).collect();
        if active.iter().all(|&a| a) {
            return Vec::new();
        }
        // Start scanning just after an inactive bond so runs never straddle the start.
        let start = if periodic {
            (0..bonds).find(|&i| !active[i]).unwrap() + 1
        } else {
            0
        };
        let mut walls = Vec::new();
        let mut run: Vec<usize> = Vec::new();
        for k in 0..=bonds {
            let i = (start + k) % bonds;
            if k < bonds && active[i] {
                run.push(i);
                continue;
            }
            if !run.is_empty() {
                let ref_pos = self.geometry.coords(run[0])[0] as f64 + 0.5;
                let (mut wsum, mut psum) = (0.0, 0.0);
                for &b in &run {
                    let pos = self.geometry.coords(b)[0] as f64 + 0.5;
                    let d = self.geometry.displacement(0, ref_pos, pos);
                    wsum += jump[b];
                    psum += jump[b] * d;
                }
                let mut c = ref_pos + psum / wsum;
                if periodic {
                    let len = n as f64;
                    let lo = -(self.geometry.origin(0) as f64) - 0.5;
                    c = lo + (c - lo).rem_euclid(len);
                }
                walls.push(c);
                run.clear();
            }
        }
        walls.sort_by(|a, b| a.total_cmp(b));
        walls
    }

    /// `x[,y],theta1,theta2`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let two_d = self.geometry.dimension() == 2;
        writeln!(w, "{}", if two_d { "x,y,theta1,theta2" } else { "x,theta1,theta2" })?;
        for s in 0..self.geometry.num_sites() {
            let [x, y] = self.geometry.coords(s);
            if two_d {
                writeln!(w, "{x},{y},{},{}", self.theta1[s], self.theta2[s])?;
            } else {
                writeln!(w, "{x},{},{}", self.theta1[s], self.theta2[s])?;
            }
        }
        Ok(())
    }
}

fn require_dimension(geometry: &LatticeGeometry, dim: usize) -> Result<()> {
    if geometry.dimension() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: geometry.dimension(),
        });
    }
    Ok(())
}

/// Single erf wall at `x = 0`, each angle crossing independently. On a
/// periodic ring the wrap point is an abrupt second wall.
pub fn wall_field_1d(
    geometry: &LatticeGeometry,
    left: AnglePair,
    right: AnglePair,
    optics: &OpticsConfig,
) -> Result<CoinField> {
    require_dimension(geometry, 1)?;
    Ok(CoinField::from_fn(geometry, |[x, _]| {
        AnglePair::new(
            crossover_angle(left.theta1, right.theta1, optics, x as f64),
            crossover_angle(left.theta2, right.theta2, optics, x as f64),
        )
    }))
}

/// Ring with two smoothed walls: `right` occupies `0 < x < N/2`, `left` the
/// opposite half. The wall at `x = 0` is the erf crossover from `left` to
/// `right`; the antipodal wall mirrors it.
pub fn ring_wall_field(
    geometry: &LatticeGeometry,
    left: AnglePair,
    right: AnglePair,
    optics: Option<&OpticsConfig>,
) -> Result<CoinField> {
    require_dimension(geometry, 1)?;
    let n = geometry.extent(0) as f64;
    Ok(CoinField::from_fn(geometry, |[x, _]| {
        let s = two_wall_profile(x as f64, n, 0.0, 0.5 * n, optics);
        left.lerp(right, s)
    }))
}

/// 1D profile along a ring of `geometry.extent(0)` sites with an inner domain
/// covering sites `inner_start .. inner_start + inner_width` (physical
/// coordinates); walls sit on the half-integer bonds bounding the domain.
pub fn domain_profile(
    geometry: &LatticeGeometry,
    inner_start: i64,
    inner_width: usize,
    inside: AnglePair,
    outside: AnglePair,
    optics: Option<&OpticsConfig>,
) -> Result<CoinField> {
    require_dimension(geometry, 1)?;
    let n = geometry.extent(0) as f64;
    let lo = inner_start as f64 - 0.5;
    let hi = lo + inner_width as f64;
    Ok(CoinField::from_fn(geometry, |[y, _]| {
        outside.lerp(inside, two_wall_profile(y as f64, n, lo, hi, optics))
    }))
}

/// Indicator of `shape` convolved with the Gaussian PSF, sampled per site on
/// a `supersample x supersample` grid with the kernel truncated at 5 sigma.
/// `optics = None` gives the sharp indicator.
pub fn smoothed_indicator(
    geometry: &LatticeGeometry,
    shape: &Shape,
    optics: Option<&OpticsConfig>,
    supersample: usize,
) -> Result<Vec<f64>> {
    require_dimension(geometry, 2)?;
    shape.validate()?;
    let centers: Vec<[f64; 2]> = (0..geometry.num_sites())
        .map(|s| {
            let [x, y] = geometry.coords(s);
            [x as f64, y as f64]
        })
        .collect();
    let Some(optics) = optics else {
        return Ok(centers.iter().map(|&p| if shape.contains(p) { 1.0 } else { 0.0 }).collect());
    };
    let sigma = optics.psf_sigma_sites()?;
    let cutoff = 5.0 * sigma;
    let ss = supersample.max(1) as f64;
    let k = (cutoff * ss).ceil() as i64;
    let mut kernel = Vec::new();
    for i in -k..k {
        for j in -k..k {
            let (ox, oy) = ((i as f64 + 0.5) / ss, (j as f64 + 0.5) / ss);
            let r2 = ox * ox + oy * oy;
            if r2 <= cutoff * cutoff {
                kernel.push((ox, oy, (-r2 / (2.0 * sigma * sigma)).exp()));
            }
        }
    }
    let total: f64 = kernel.iter().map(|k| k.2).sum();
    Ok(centers
        .par_iter()
        .map(|&[cx, cy]| {
            let inside: f64 = kernel
                .iter()
                .filter(|(ox, oy, _)| shape.contains([cx + ox, cy + oy]))
                .map(|k| k.2)
                .sum();
            inside / total
        })
        .collect())
}

/// 2D island field together with the smoothed indicator it was built from.
#[derive(Debug, Clone)]
pub struct IslandField {
    pub field: CoinField,
    /// `s(x, y)`: 1 deep inside, 0 far outside.
    pub indicator: Vec<f64>,
}

/// Island of `inside` angles embedded in `outside`; crossover angles follow
/// the straight segment between the pairs, `theta = outside + s (inside - outside)`.
pub fn island_field(
    geometry: &LatticeGeometry,
    shape: &Shape,
    inside: AnglePair,
    outside: AnglePair,
    optics: Option<&OpticsConfig>,
) -> Result<IslandField> {
    let indicator = smoothed_indicator(geometry, shape, optics, 8)?;
    let (theta1, theta2) = indicator
        .iter()
        .map(|&s| {
            let p = outside.lerp(inside, s);
            (p.theta1, p.theta2)
        })
        .unzip();
    Ok(IslandField {
        field: CoinField::from_angles(geometry, theta1, theta2)?,
        indicator,
    })
}

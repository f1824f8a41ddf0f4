//! Scenario files: a TOML description of one run, validated before any
//! computation and executed into CSV/JSON outputs plus a manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::bloch::{
    angle_grid, bloch_bands, edge_mode_count, gap_scan_2d, invariants_1d, strip_spectrum, winding_number, write_gap_scan_csv, Gap, KGrid,
};
use crate::coin_field::{
    domain_profile, island_field, ring_wall_field, wall_field_1d, Angle, AnglePair, CoinField, OpticsConfig, Shape,
};
use crate::decoherence::{evolve, Channel, DecoherenceConfig, EvolveOptions, Initial, Observable};
use crate::edge::{
    contour_band, droplet_transport, edge_state_size_sweep, find_edge_states, island_angles, measure_decay, write_size_sweep_csv,
    DropletSetup, EdgeState,
};
use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeGeometry, Region, Spin};
use crate::protocol::{ChiralFrame, ProtocolName, WalkProtocol};
use crate::state::{write_distribution_csv, DensityOperator, SpinorState, DENSE_CAP};

/// Environment variable naming the default output root.
pub const OUTPUT_DIR_ENV: &str = "DTQW_OUTPUT_DIR";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the working directory.
    pub output: Option<PathBuf>,
    pub protocol: Option<ProtocolName>,
    pub steps: Option<usize>,
    pub geometry: Option<GeometrySpec>,
    pub field: Option<FieldSpec>,
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub decoherence: DecoherenceSpec,
    #[serde(default)]
    pub observers: Vec<ObserverSpec>,
    pub analysis: Option<AnalysisSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub extents: Vec<usize>,
    #[serde(default)]
    pub boundary: Boundary,
    pub lattice_constant: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpticsSetup {
    #[serde(rename = "setup_1d")]
    Setup1d,
    #[serde(rename = "setup_2d")]
    Setup2d,
}

/// Optics given as a named setup, an Abbe ratio `R_A / a`, or explicitly.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsSpec {
    pub setup: Option<OpticsSetup>,
    pub abbe_ratio: Option<f64>,
    pub numerical_aperture: Option<f64>,
    pub wavelength: Option<f64>,
    pub lattice_constant: Option<f64>,
}

impl OpticsSpec {
    pub fn resolve(&self) -> Result<OpticsConfig> {
        let explicit = [self.numerical_aperture, self.wavelength, self.lattice_constant];
        let n_explicit = explicit.iter().filter(|v| v.is_some()).count();
        let forms = self.setup.is_some() as usize + self.abbe_ratio.is_some() as usize + (n_explicit > 0) as usize;
        if forms != 1 {
            return Err(Error::Config(
                "optics needs exactly one of `setup`, `abbe_ratio`, or (`numerical_aperture`, `wavelength`, `lattice_constant`)".into(),
            ));
        }
        if let Some(setup) = self.setup {
            return Ok(match setup {
                OpticsSetup::Setup1d => OpticsConfig::setup_1d(),
                OpticsSetup::Setup2d => OpticsConfig::setup_2d(),
            });
        }
        if let Some(r) = self.abbe_ratio {
            return OpticsConfig::from_abbe_ratio(r);
        }
        match explicit {
            [Some(na), Some(wl), Some(a)] => OpticsConfig::new(na, wl, a),
            _ => Err(Error::Config(
                "explicit optics need `numerical_aperture`, `wavelength` and `lattice_constant`".into(),
            )),
        }
    }
}

fn resolve_optics(spec: &Option<OpticsSpec>) -> Result<Option<OpticsConfig>> {
    spec.as_ref().map(OpticsSpec::resolve).transpose()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Homogeneous {
        angles: AnglePair,
    },
    /// Single erf wall at `x = 0` (the ring wrap point is a second, sharp wall).
    Wall {
        left: AnglePair,
        right: AnglePair,
        optics: OpticsSpec,
    },
    /// Two walls on a ring, at `x = 0` and antipodally.
    RingWalls {
        left: AnglePair,
        right: AnglePair,
        optics: Option<OpticsSpec>,
    },
    /// Inner domain of `inner_width` sites starting at `inner_start`.
    Domain {
        inner_start: i64,
        inner_width: usize,
        inside: AnglePair,
        outside: AnglePair,
        optics: Option<OpticsSpec>,
    },
    Island {
        shape: Shape,
        inside: AnglePair,
        outside: AnglePair,
        optics: Option<OpticsSpec>,
    },
}

impl FieldSpec {
    fn dimension(&self) -> Option<usize> {
        match self {
            FieldSpec::Homogeneous { .. } => None,
            FieldSpec::Island { .. } => Some(2),
            _ => Some(1),
        }
    }

    /// Field and, for islands, the smoothed indicator.
    pub fn build(&self, geometry: &LatticeGeometry) -> Result<(CoinField, Option<Vec<f64>>)> {
        Ok(match self {
            FieldSpec::Homogeneous { angles } => (CoinField::homogeneous(geometry, *angles), None),
            FieldSpec::Wall { left, right, optics } => (wall_field_1d(geometry, *left, *right, &optics.resolve()?)?, None),
            FieldSpec::RingWalls { left, right, optics } => {
                (ring_wall_field(geometry, *left, *right, resolve_optics(optics)?.as_ref())?, None)
            }
            FieldSpec::Domain {
                inner_start,
                inner_width,
                inside,
                outside,
                optics,
            } => (
                domain_profile(geometry, *inner_start, *inner_width, *inside, *outside, resolve_optics(optics)?.as_ref())?,
                None,
            ),
            FieldSpec::Island {
                shape,
                inside,
                outside,
                optics,
            } => {
                let isl = island_field(geometry, shape, *inside, *outside, resolve_optics(optics)?.as_ref())?;
                (isl.field, Some(isl.indicator))
            }
        })
    }
}

fn default_gap_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Site {
        site: Vec<i64>,
        spin: Spin,
    },
    /// In-gap edge state of the scenario's 1D field, at the wall nearest `wall`.
    EdgeState {
        #[serde(default = "default_gap")]
        gap: Gap,
        #[serde(default)]
        wall: f64,
        #[serde(default = "default_gap_tolerance")]
        tolerance: f64,
    },
    MaximallyMixed,
}

fn default_gap() -> Gap {
    Gap::Zero
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoherenceSpec {
    #[serde(default)]
    pub channel: Channel,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub trajectories: usize,
    #[serde(default)]
    pub kraus_per_primitive: bool,
}

impl DecoherenceSpec {
    fn config(&self, seed: u64) -> DecoherenceConfig {
        DecoherenceConfig {
            channel: self.channel,
            p: self.p,
            seed,
            trajectories: self.trajectories,
            kraus_per_primitive: self.kraus_per_primitive,
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    Lower,
    Upper,
}

fn default_band() -> (f64, f64) {
    (0.05, 0.95)
}

fn default_dilation() -> usize {
    3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    Sites {
        coords: Vec<Vec<i64>>,
    },
    /// Inclusive coordinate box.
    Box {
        min: Vec<i64>,
        max: Vec<i64>,
    },
    /// Band around an island contour, optionally cut to the half-plane below
    /// or above the island center.
    ContourBand {
        #[serde(default = "default_band")]
        band: (f64, f64),
        #[serde(default = "default_dilation")]
        dilation: usize,
        half: Option<Half>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObserverSpec {
    Distribution {
        #[serde(default = "one")]
        every: usize,
    },
    Site {
        name: String,
        site: Vec<i64>,
        #[serde(default = "one")]
        every: usize,
    },
    Region {
        name: String,
        region: RegionSpec,
        #[serde(default = "one")]
        every: usize,
    },
    Overlap {
        name: String,
        reference: InitialSpec,
        #[serde(default = "one")]
        every: usize,
    },
    SpinPopulations {
        name: String,
        #[serde(default = "one")]
        every: usize,
    },
    Absorbed {
        name: String,
        #[serde(default = "one")]
        every: usize,
    },
}

impl ObserverSpec {
    fn every(&self) -> usize {
        match self {
            ObserverSpec::Distribution { every }
            | ObserverSpec::Site { every, .. }
            | ObserverSpec::Region { every, .. }
            | ObserverSpec::Overlap { every, .. }
            | ObserverSpec::SpinPopulations { every, .. }
            | ObserverSpec::Absorbed { every, .. } => *every,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub from: AnglePair,
    pub to: AnglePair,
    pub points: usize,
}

fn full_turn() -> [Angle; 2] {
    [Angle(-std::f64::consts::PI), Angle(std::f64::consts::PI)]
}

fn default_droplet_radius() -> f64 {
    15.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropletSpec {
    #[serde(default = "default_droplet_radius")]
    pub radius: f64,
    #[serde(default)]
    pub center: [f64; 2],
    /// Defaults to a right-angle corner.
    pub apex_distance: Option<f64>,
    pub extents: Option<[usize; 2]>,
    pub boundary: Option<Boundary>,
    pub inside: Option<AnglePair>,
    pub outside: Option<AnglePair>,
    /// Defaults to the 2D setup.
    pub optics: Option<OpticsSpec>,
    #[serde(default)]
    pub sharp: bool,
    pub start: Option<[i64; 2]>,
    pub spin: Option<Spin>,
    #[serde(default = "default_band")]
    pub band: (f64, f64),
    #[serde(default = "default_dilation")]
    pub dilation: usize,
}

impl Default for DropletSpec {
    fn default() -> Self {
        Self {
            radius: default_droplet_radius(),
            center: [0.0; 2],
            apex_distance: None,
            extents: None,
            boundary: None,
            inside: None,
            outside: None,
            optics: None,
            sharp: false,
            start: None,
            spin: None,
            band: default_band(),
            dilation: default_dilation(),
        }
    }
}

impl DropletSpec {
    pub fn setup(&self) -> Result<DropletSetup> {
        let base = DropletSetup::standard();
        let (inside, outside) = island_angles();
        let shape = Shape::Droplet {
            center: self.center,
            radius: self.radius,
            apex_distance: self.apex_distance.unwrap_or(std::f64::consts::SQRT_2 * self.radius),
        };
        shape.validate()?;
        let optics = if self.sharp {
            if self.optics.is_some() {
                return Err(Error::Config("`sharp = true` conflicts with `optics`".into()));
            }
            None
        } else {
            Some(match &self.optics {
                Some(o) => o.resolve()?,
                None => OpticsConfig::setup_2d(),
            })
        };
        Ok(DropletSetup {
            extents: self.extents.unwrap_or(base.extents),
            boundary: self.boundary.unwrap_or(base.boundary),
            shape,
            inside: self.inside.unwrap_or(inside),
            outside: self.outside.unwrap_or(outside),
            optics,
            start: self
                .start
                .unwrap_or([(self.center[0] - self.radius).round() as i64, self.center[1].round() as i64]),
            spin: self.spin.unwrap_or(base.spin),
            band: self.band,
            dilation: self.dilation,
        })
    }
}

fn default_k_points() -> usize {
    512
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisSpec {
    /// Bloch bands of the homogeneous protocol and, in 1D, frame windings.
    Bands {
        angles: AnglePair,
        #[serde(default = "default_k_points")]
        k_points: usize,
    },
    /// 1D invariants `(nu_0, nu_pi)` over a square grid of angle pairs.
    PhaseDiagram {
        #[serde(default = "full_turn")]
        range: [Angle; 2],
        points: usize,
    },
    /// 2D gap sizes over a grid, optionally along a segment.
    GapScan {
        #[serde(default = "full_turn")]
        range: [Angle; 2],
        points: usize,
        k_points: usize,
        segment: Option<SegmentSpec>,
    },
    /// Strip spectrum of the 2D walk with an inner domain along y.
    Strip {
        ny: usize,
        inner_start: i64,
        inner_width: usize,
        inside: AnglePair,
        outside: AnglePair,
        kx_points: usize,
        optics: Option<OpticsSpec>,
    },
    /// Decay of the edge-state population for several probabilities.
    EdgeDecay {
        #[serde(default = "default_gap")]
        gap: Gap,
        channel: Channel,
        p: Vec<f64>,
        #[serde(default)]
        kraus_per_primitive: bool,
    },
    /// Edge transport around a 2D droplet.
    Droplet {
        #[serde(default)]
        droplet: DropletSpec,
    },
    /// Edge-state size and initial overlap versus `a / R_A`.
    SizeSweep {
        ratios: Vec<f64>,
    },
}

/// A configuration error tied to a key path such as `observers[1].site`.
struct Invalid {
    path: String,
    message: String,
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> Invalid {
    Invalid {
        path: path.into(),
        message: message.into(),
    }
}

fn is_header(line: &str) -> Option<(&str, bool)> {
    let t = line.trim();
    if let Some(inner) = t.strip_prefix("[[") {
        return Some((inner.split("]]").next()?.trim(), true));
    }
    if let Some(inner) = t.strip_prefix('[') {
        return Some((inner.split(']').next()?.trim(), false));
    }
    None
}

fn defines_key(line: &str, key: &str) -> bool {
    line.trim()
        .strip_prefix(key)
        .is_some_and(|rest| rest.trim_start().starts_with('=') || rest.starts_with('.'))
}

/// 1-based line of the key at `path`, or of its enclosing table.
fn locate(src: &str, path: &str) -> Option<usize> {
    let segs: Vec<&str> = path.split('.').collect();
    let key_of = |seg: &str| -> (String, Option<usize>) {
        match seg.split_once('[') {
            Some((name, idx)) => (name.to_string(), idx.trim_end_matches(']').parse().ok()),
            None => (seg.to_string(), None),
        }
    };
    let lines: Vec<&str> = src.lines().collect();
    let (table, index) = key_of(segs[0]);
    if segs.len() == 1 {
        return lines
            .iter()
            .take_while(|l| is_header(l).is_none())
            .position(|l| defines_key(l, &table))
            .map(|i| i + 1);
    }
    let mut seen = 0;
    let mut start = None;
    for (i, l) in lines.iter().enumerate() {
        if let Some((name, _)) = is_header(l) {
            if name == table {
                if index.is_none_or(|k| k == seen) {
                    start = Some(i);
                    break;
                }
                seen += 1;
            }
        }
    }
    let Some(start) = start else {
        // Inline table at the top level.
        return lines.iter().position(|l| defines_key(l, &table)).map(|i| i + 1);
    };
    let last = key_of(segs[segs.len() - 1]).0;
    for (i, l) in lines.iter().enumerate().skip(start + 1) {
        if let Some((name, _)) = is_header(l) {
            if !name.starts_with(&format!("{table}.")) {
                break;
            }
        }
        if defines_key(l, &last) {
            return Some(i + 1);
        }
    }
    Some(start + 1)
}

/// Line of a parse error. Errors inside tagged tables span the whole table;
/// narrow them to the first line in the span quoting a token of the message.
fn error_line(src: &str, span: std::ops::Range<usize>, message: &str) -> usize {
    let first = src[..span.start].matches('\n').count() + 1;
    let lines: Vec<&str> = src.lines().collect();
    let mut last = (src[..span.end.min(src.len())].matches('\n').count() + 1).max(first);
    while last < lines.len() && is_header(lines[last]).is_none() {
        last += 1;
    }
    let tokens: Vec<&str> = message
        .split(['`', '"'])
        .skip(1)
        .step_by(2)
        .filter(|t| !t.is_empty())
        .collect();
    for t in tokens {
        if let Some(i) = lines.iter().enumerate().skip(first - 1).take(last + 1 - first).find(|(_, l)| l.contains(t)) {
            return i.0 + 1;
        }
    }
    first
}

fn anchored(src: &str, origin: &str, inv: Invalid) -> Error {
    match locate(src, &inv.path) {
        Some(line) => Error::Config(format!("{origin}:{line}: `{}`: {}", inv.path, inv.message)),
        None => Error::Config(format!("{origin}: `{}`: {}", inv.path, inv.message)),
    }
}

/// A parsed and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    source: String,
    origin: String,
    warnings: Vec<String>,
}

impl Scenario {
    /// Parses and validates TOML text; `origin` labels diagnostics.
    pub fn parse(source: &str, origin: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(source).map_err(|e| {
            let pos = e.span().map(|span| format!("{origin}:{}: ", error_line(source, span, e.message())));
            Error::Config(format!("{}{}", pos.unwrap_or_else(|| format!("{origin}: ")), e.message()))
        })?;
        let mut scenario = Self {
            config,
            source: source.to_string(),
            origin: origin.to_string(),
            warnings: Vec::new(),
        };
        scenario.warnings = scenario.validate().map_err(|inv| anchored(source, origin, inv))?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::parse(&src, &path.display().to_string())
    }

    pub fn name(&self) -> &str {
        self.config.name.as_deref().unwrap_or("scenario")
    }

    /// Non-fatal findings of validation.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Hex SHA-256 of the configuration text.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.source.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn protocol_name(&self) -> ProtocolName {
        self.config.protocol.unwrap_or(ProtocolName::SplitStep1d)
    }

    fn geometry(&self) -> std::result::Result<LatticeGeometry, Invalid> {
        let g = self.config.geometry.as_ref().ok_or_else(|| invalid("geometry", "missing `[geometry]` table"))?;
        let bounds = vec![g.boundary; g.extents.len()];
        LatticeGeometry::new(&g.extents, &bounds, g.lattice_constant.unwrap_or(1.0))
            .map_err(|e| invalid("geometry.extents", e.to_string()))
    }

    fn validate(&self) -> std::result::Result<Vec<String>, Invalid> {
        let c = &self.config;
        let mut warnings = Vec::new();
        let dc = c.decoherence.config(c.seed);
        dc.validate().map_err(|e| invalid("decoherence.p", e.to_string()))?;
        warnings.extend(dc.warnings());
        if let Some(analysis) = &c.analysis {
            self.validate_analysis(analysis)?;
            for key in ["initial", "observers"] {
                let used = match key {
                    "initial" => c.initial.is_some(),
                    _ => !c.observers.is_empty(),
                };
                if used {
                    return Err(invalid(key, "not used by analysis scenarios"));
                }
            }
            return Ok(warnings);
        }
        let g = self.geometry()?;
        let dim = g.dimension();
        let protocol = self.protocol_name().protocol();
        if protocol.dimension() != dim {
            return Err(invalid(
                "protocol",
                format!("{} is a {}D protocol but the lattice is {dim}D", self.protocol_name(), protocol.dimension()),
            ));
        }
        let field = c.field.as_ref().ok_or_else(|| invalid("field", "missing `[field]` table"))?;
        self.validate_field(field, dim)?;
        if c.steps.is_none() {
            return Err(invalid("steps", "missing `steps`"));
        }
        let initial = c.initial.as_ref().ok_or_else(|| invalid("initial", "missing `[initial]` table"))?;
        self.validate_state(initial, &g, "initial")?;
        if matches!(initial, InitialSpec::MaximallyMixed) && c.decoherence.trajectories > 0 {
            return Err(invalid("decoherence.trajectories", "trajectories need a pure initial state"));
        }
        let dense = c.decoherence.trajectories == 0 && (dc.is_active() || matches!(initial, InitialSpec::MaximallyMixed));
        if dense && g.basis_size() > DENSE_CAP {
            return Err(invalid(
                "decoherence.trajectories",
                format!("basis size {} exceeds the dense cap {DENSE_CAP}; set `trajectories`", g.basis_size()),
            ));
        }
        let mut names = std::collections::HashSet::new();
        for (i, obs) in c.observers.iter().enumerate() {
            let path = |k: &str| format!("observers[{i}].{k}");
            if obs.every() == 0 {
                return Err(invalid(path("every"), "must be at least 1"));
            }
            match obs {
                ObserverSpec::Distribution { .. } => {}
                ObserverSpec::Site { name, site, .. } => {
                    checked_site(&g, site).map_err(|e| invalid(path("site"), e.to_string()))?;
                    if !names.insert(name.clone()) {
                        return Err(invalid(path("name"), format!("duplicate observer name {name:?}")));
                    }
                }
                ObserverSpec::Region { name, region, .. } => {
                    self.validate_region(region, &g, &path("region"))?;
                    if !names.insert(name.clone()) {
                        return Err(invalid(path("name"), format!("duplicate observer name {name:?}")));
                    }
                }
                ObserverSpec::Overlap { name, reference, .. } => {
                    if matches!(reference, InitialSpec::MaximallyMixed) {
                        return Err(invalid(path("reference"), "overlap reference must be a pure state"));
                    }
                    self.validate_state(reference, &g, &path("reference"))?;
                    if !names.insert(name.clone()) {
                        return Err(invalid(path("name"), format!("duplicate observer name {name:?}")));
                    }
                }
                ObserverSpec::SpinPopulations { name, .. } | ObserverSpec::Absorbed { name, .. } => {
                    if !names.insert(name.clone()) {
                        return Err(invalid(path("name"), format!("duplicate observer name {name:?}")));
                    }
                }
            }
        }
        warnings.extend(crate::decoherence::light_cone_warnings(&g, c.steps.unwrap_or(0)));
        Ok(warnings)
    }

    fn validate_field(&self, field: &FieldSpec, dim: usize) -> std::result::Result<(), Invalid> {
        if let Some(d) = field.dimension() {
            if d != dim {
                return Err(invalid("field.kind", format!("this field needs a {d}D lattice, the lattice is {dim}D")));
            }
        }
        let optics = match field {
            FieldSpec::Wall { optics, .. } => Some(optics.clone()),
            FieldSpec::RingWalls { optics, .. } | FieldSpec::Domain { optics, .. } | FieldSpec::Island { optics, .. } => optics.clone(),
            FieldSpec::Homogeneous { .. } => None,
        };
        if let Some(o) = optics {
            o.resolve().map_err(|e| invalid("field.optics", e.to_string()))?;
        }
        if let FieldSpec::Island { shape, .. } = field {
            shape.validate().map_err(|e| invalid("field.shape", e.to_string()))?;
        }
        Ok(())
    }

    fn validate_state(&self, spec: &InitialSpec, g: &LatticeGeometry, path: &str) -> std::result::Result<(), Invalid> {
        match spec {
            InitialSpec::Site { site, .. } => {
                checked_site(g, site).map_err(|e| invalid(format!("{path}.site"), e.to_string()))?;
            }
            InitialSpec::EdgeState { tolerance, .. } => {
                if g.dimension() != 1 {
                    return Err(invalid(format!("{path}.kind"), "edge states are searched on 1D lattices only"));
                }
                if g.basis_size() > DENSE_CAP {
                    return Err(invalid(format!("{path}.kind"), "lattice too large for dense diagonalization"));
                }
                if !(*tolerance > 0.0) {
                    return Err(invalid(format!("{path}.tolerance"), "must be positive"));
                }
            }
            InitialSpec::MaximallyMixed => {
                if g.basis_size() > DENSE_CAP {
                    return Err(invalid(format!("{path}.kind"), "lattice too large for a dense density operator"));
                }
            }
        }
        Ok(())
    }

    fn validate_region(&self, region: &RegionSpec, g: &LatticeGeometry, path: &str) -> std::result::Result<(), Invalid> {
        match region {
            RegionSpec::Sites { coords } => {
                Region::from_coords(g, coords).map_err(|e| invalid(format!("{path}.coords"), e.to_string()))?;
            }
            RegionSpec::Box { min, max } => {
                if min.len() != g.dimension() || max.len() != g.dimension() {
                    return Err(invalid(format!("{path}.min"), format!("box corners need {} coordinates", g.dimension())));
                }
            }
            RegionSpec::ContourBand { band, .. } => {
                if !matches!(self.config.field, Some(FieldSpec::Island { .. })) {
                    return Err(invalid(format!("{path}.kind"), "contour bands need an island field"));
                }
                if !(0.0 <= band.0 && band.0 <= band.1 && band.1 <= 1.0) {
                    return Err(invalid(format!("{path}.band"), "need 0 <= lo <= hi <= 1"));
                }
            }
        }
        Ok(())
    }

    fn validate_analysis(&self, analysis: &AnalysisSpec) -> std::result::Result<(), Invalid> {
        let c = &self.config;
        match analysis {
            AnalysisSpec::Bands { k_points, .. } => {
                if *k_points < 8 {
                    return Err(invalid("analysis.k_points", "need at least 8 points"));
                }
            }
            AnalysisSpec::PhaseDiagram { points, .. } | AnalysisSpec::GapScan { points, .. } => {
                if *points < 2 {
                    return Err(invalid("analysis.points", "need at least 2 points per axis"));
                }
                if let AnalysisSpec::GapScan { segment: Some(s), .. } = analysis {
                    if s.points < 2 {
                        return Err(invalid("analysis.segment.points", "need at least 2 points"));
                    }
                }
            }
            AnalysisSpec::Strip {
                ny,
                inner_width,
                kx_points,
                optics,
                ..
            } => {
                if *inner_width == 0 || inner_width >= ny {
                    return Err(invalid("analysis.inner_width", "inner domain must be nonempty and smaller than the strip"));
                }
                if *kx_points < 4 {
                    return Err(invalid("analysis.kx_points", "need at least 4 points"));
                }
                if let Some(o) = optics {
                    o.resolve().map_err(|e| invalid("analysis.optics", e.to_string()))?;
                }
            }
            AnalysisSpec::EdgeDecay { p, .. } => {
                let g = self.geometry()?;
                if g.dimension() != 1 || g.basis_size() > DENSE_CAP {
                    return Err(invalid("geometry.extents", "edge decay needs a 1D lattice within the dense cap"));
                }
                let field = c.field.as_ref().ok_or_else(|| invalid("field", "missing `[field]` table"))?;
                self.validate_field(field, 1)?;
                if c.steps.is_none() {
                    return Err(invalid("steps", "missing `steps`"));
                }
                if p.is_empty() || p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(invalid("analysis.p", "need probabilities in [0, 1]"));
                }
            }
            AnalysisSpec::Droplet { droplet } => {
                droplet.setup().map_err(|e| invalid("analysis.droplet", e.to_string()))?;
                if c.steps.is_none() {
                    return Err(invalid("steps", "missing `steps`"));
                }
                if c.decoherence.config(c.seed).is_active() && c.decoherence.trajectories == 0 {
                    return Err(invalid("decoherence.trajectories", "droplet runs with decoherence need `trajectories`"));
                }
            }
            AnalysisSpec::SizeSweep { ratios } => {
                if ratios.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
                    return Err(invalid("analysis.ratios", "ratios must be finite and nonnegative"));
                }
            }
        }
        Ok(())
    }

    /// Executes the scenario into `out_dir`. `seed` overrides the configured seed.
    pub fn run(&self, out_dir: &Path, seed: Option<u64>) -> Result<Manifest> {
        let start = Instant::now();
        let seed = seed.unwrap_or(self.config.seed);
        std::fs::create_dir_all(out_dir)?;
        let mut run = Run {
            dir: out_dir.to_path_buf(),
            outputs: Vec::new(),
            warnings: self.warnings.clone(),
            summary: serde_json::Map::new(),
        };
        match &self.config.analysis {
            Some(a) => self.run_analysis(a, seed, &mut run)?,
            None => self.run_evolution(seed, &mut run)?,
        }
        let manifest = Manifest {
            name: self.name().to_string(),
            description: self.config.description.clone(),
            config_source: self.origin.clone(),
            config_sha256: self.config_hash(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            outputs: run.outputs,
            warnings: run.warnings,
            summary: serde_json::Value::Object(run.summary),
        };
        let f = BufWriter::new(File::create(out_dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(f, &manifest).map_err(|e| Error::Io(e.into()))?;
        Ok(manifest)
    }

    fn resolve_state(
        &self,
        spec: &InitialSpec,
        g: &LatticeGeometry,
        protocol: &WalkProtocol,
        field: &CoinField,
        run: &mut Run,
    ) -> Result<Initial> {
        Ok(match spec {
            InitialSpec::Site { site, spin } => Initial::Pure(SpinorState::basis(g, site, *spin)?),
            InitialSpec::MaximallyMixed => Initial::Mixed(DensityOperator::maximally_mixed(g)?),
            InitialSpec::EdgeState { gap, wall, tolerance } => {
                let e = select_edge_state(protocol, field, *gap, *wall, *tolerance, run)?;
                run.write("edge_state.snapshot", |w| e.state.write_snapshot(w, 0))?;
                run.write("edge_state.json", |w| e.write_sidecar(w))?;
                Initial::Pure(e.state)
            }
        })
    }

    fn run_evolution(&self, seed: u64, run: &mut Run) -> Result<()> {
        let c = &self.config;
        let g = self.geometry().map_err(|inv| anchored(&self.source, &self.origin, inv))?;
        let protocol = self.protocol_name().protocol();
        let (field, indicator) = c.field.as_ref().expect("validated").build(&g)?;
        let steps = c.steps.expect("validated");
        if c.observers.is_empty() {
            return Ok(());
        }
        run.write("field.csv", |w| field.write_csv(w))?;
        let initial = self.resolve_state(c.initial.as_ref().expect("validated"), &g, &protocol, &field, run)?;
        let mut observables = Vec::new();
        let mut intervals = Vec::new();
        let mut dist_every = None;
        for obs in &c.observers {
            let o = match obs {
                ObserverSpec::Distribution { every } => {
                    dist_every = Some(*every);
                    continue;
                }
                ObserverSpec::Site { name, site, .. } => Observable::Site {
                    name: name.clone(),
                    site: g.site_at(site)?,
                },
                ObserverSpec::Region { name, region, .. } => Observable::Region {
                    name: name.clone(),
                    region: build_region(region, &g, indicator.as_deref(), c.field.as_ref())?,
                },
                ObserverSpec::Overlap { name, reference, .. } => {
                    let Initial::Pure(reference) = self.resolve_state(reference, &g, &protocol, &field, run)? else {
                        unreachable!("validated pure reference")
                    };
                    Observable::Overlap {
                        name: name.clone(),
                        reference,
                    }
                }
                ObserverSpec::SpinPopulations { name, .. } => Observable::SpinPopulations { name: name.clone() },
                ObserverSpec::Absorbed { name, .. } => Observable::Absorbed { name: name.clone() },
            };
            let k = if matches!(o, Observable::SpinPopulations { .. }) { 2 } else { 1 };
            intervals.extend(std::iter::repeat_n(obs.every(), k));
            observables.push(o);
        }
        let record_every = intervals.iter().copied().reduce(gcd).unwrap_or(steps.max(1));
        let opts = EvolveOptions {
            n_steps: steps,
            record_every,
            distribution_every: dist_every,
            distribution_sites: None,
        };
        let cfg = c.decoherence.config(seed);
        let ts = evolve(&initial, &protocol, &field, &cfg, &opts, &observables)?;
        for w in &ts.warnings {
            if !run.warnings.contains(w) {
                run.warnings.push(w.clone());
            }
        }
        if !observables.is_empty() {
            run.write("observables.csv", |w| {
                let with_err = !ts.stderr.is_empty();
                writeln!(w, "{}", if with_err { "n,observable_name,value,stderr" } else { "n,observable_name,value" })?;
                for (r, &n) in ts.steps.iter().enumerate() {
                    for (j, name) in ts.names.iter().enumerate() {
                        if n % intervals[j] != 0 && n != steps {
                            continue;
                        }
                        write!(w, "{n},{name},{}", ts.values[r][j])?;
                        if with_err {
                            write!(w, ",{}", ts.stderr[r][j])?;
                        }
                        writeln!(w)?;
                    }
                }
                Ok(())
            })?;
        }
        if dist_every.is_some() {
            run.write("distribution.csv", |w| {
                let header = if g.dimension() == 2 { "n,x,y,probability" } else { "n,x,probability" };
                writeln!(w, "{header}")?;
                for (n, d) in &ts.distributions {
                    for (s, p) in d.iter().enumerate() {
                        let [x, y] = g.coords(s);
                        if g.dimension() == 2 {
                            writeln!(w, "{n},{x},{y},{p}")?;
                        } else {
                            writeln!(w, "{n},{x},{p}")?;
                        }
                    }
                }
                Ok(())
            })?;
            if let Some((n, d)) = ts.distributions.last() {
                run.write("final_distribution.csv", |w| write_distribution_csv(w, &g, d))?;
                run.summary.insert("final_distribution_step".into(), json!(n));
            }
        }
        if let Some(psi) = &ts.final_state {
            run.write("final_state.snapshot", |w| psi.write_snapshot(w, steps))?;
        }
        run.summary.insert("mode".into(), json!(ts.mode));
        run.summary.insert("steps".into(), json!(steps));
        Ok(())
    }

    fn run_analysis(&self, analysis: &AnalysisSpec, seed: u64, run: &mut Run) -> Result<()> {
        let c = &self.config;
        match analysis {
            AnalysisSpec::Bands { angles, k_points } => {
                let name = self.protocol_name();
                let protocol = name.protocol();
                let grid = KGrid::uniform(*k_points);
                let bands = bloch_bands(&protocol, *angles, &grid)?;
                run.write("bands.csv", |w| bands.write_csv(w, protocol.dimension()))?;
                run.summary.insert("gap0".into(), json!(bands.gap0));
                run.summary.insert("gap_pi".into(), json!(bands.gap_pi));
                if protocol.dimension() == 1 {
                    let mut windings = BTreeMap::new();
                    for frame in [ChiralFrame::Prime, ChiralFrame::DoublePrime] {
                        let spec = bloch_bands(&frame.protocol(), *angles, &grid)?;
                        let file = format!("spinors_{}.csv", frame.name());
                        run.write(&file, |w| {
                            writeln!(w, "k,epsilon,n_x,n_y,n_z")?;
                            for p in &spec.points {
                                writeln!(w, "{},{},{},{},{}", p.k[0], p.epsilon, p.spinor[0], p.spinor[1], p.spinor[2])?;
                            }
                            Ok(())
                        })?;
                        windings.insert(frame.name().as_str(), winding_number(frame, *angles, &grid)?);
                    }
                    let (nu0, nupi) = invariants_1d(*angles)?;
                    run.summary.insert("windings".into(), json!(windings));
                    run.summary.insert("nu0".into(), json!(nu0));
                    run.summary.insert("nupi".into(), json!(nupi));
                }
            }
            AnalysisSpec::PhaseDiagram { range, points } => {
                use rayon::prelude::*;
                let pairs = angle_grid(range[0].0, range[1].0, *points);
                let inv: Vec<Option<(i32, i32)>> = pairs.par_iter().map(|&p| invariants_1d(p).ok()).collect();
                let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                run.write("phase_diagram.csv", |w| {
                    writeln!(w, "theta1,theta2,nu0,nupi")?;
                    for (p, v) in pairs.iter().zip(&inv) {
                        match v {
                            Some((a, b)) => writeln!(w, "{},{},{a},{b}", p.theta1, p.theta2)?,
                            None => writeln!(w, "{},{},,", p.theta1, p.theta2)?,
                        }
                    }
                    Ok(())
                })?;
                for v in &inv {
                    let key = v.map(|(a, b)| format!("({a},{b})")).unwrap_or_else(|| "gapless".into());
                    *counts.entry(key).or_default() += 1;
                }
                run.summary.insert("phase_counts".into(), json!(counts));
            }
            AnalysisSpec::GapScan {
                range,
                points,
                k_points,
                segment,
            } => {
                let scan = gap_scan_2d(&angle_grid(range[0].0, range[1].0, *points), *k_points)?;
                run.write("gap_scan.csv", |w| write_gap_scan_csv(w, &scan))?;
                run.summary.insert("gapped_fraction".into(), json!(scan.iter().filter(|p| p.is_gapped()).count() as f64 / scan.len() as f64));
                if let Some(seg) = segment {
                    let pairs: Vec<AnglePair> = (0..seg.points)
                        .map(|i| seg.from.lerp(seg.to, i as f64 / (seg.points - 1) as f64))
                        .collect();
                    let line = gap_scan_2d(&pairs, *k_points)?;
                    run.write("segment.csv", |w| {
                        writeln!(w, "s,theta1,theta2,gap0,gappi,gapped")?;
                        for (i, p) in line.iter().enumerate() {
                            let s = i as f64 / (seg.points - 1) as f64;
                            writeln!(w, "{s},{},{},{},{},{}", p.angles.theta1, p.angles.theta2, p.gap0, p.gap_pi, p.is_gapped())?;
                        }
                        Ok(())
                    })?;
                    run.summary.insert(
                        "segment_closures".into(),
                        json!(line.iter().filter(|p| !p.is_gapped()).count()),
                    );
                }
            }
            AnalysisSpec::Strip {
                ny,
                inner_start,
                inner_width,
                inside,
                outside,
                kx_points,
                optics,
            } => {
                let g = LatticeGeometry::ring(*ny)?;
                let field = domain_profile(&g, *inner_start, *inner_width, *inside, *outside, resolve_optics(optics)?.as_ref())?;
                let strip = strip_spectrum(&field, *kx_points)?;
                run.write("strip_spectrum.csv", |w| strip.write_csv(w))?;
                run.warnings.extend(strip.warnings.iter().cloned());
                run.summary.insert("walls".into(), json!(strip.walls));
                run.summary.insert("bulk_gap0".into(), json!(strip.bulk_gap0));
                run.summary.insert("bulk_gap_pi".into(), json!(strip.bulk_gap_pi));
                run.summary.insert("edge_modes_gap0".into(), json!(edge_mode_count(&strip, Gap::Zero)?));
                run.summary.insert("edge_modes_gap_pi".into(), json!(edge_mode_count(&strip, Gap::Pi)?));
            }
            AnalysisSpec::EdgeDecay {
                gap,
                channel,
                p,
                kraus_per_primitive,
            } => {
                let g = self.geometry().map_err(|inv| anchored(&self.source, &self.origin, inv))?;
                let protocol = self.protocol_name().protocol();
                let (field, _) = c.field.as_ref().expect("validated").build(&g)?;
                let steps = c.steps.expect("validated");
                let e = select_edge_state(&protocol, &field, *gap, 0.0, 1e-6, run)?;
                run.write("edge_state.snapshot", |w| e.state.write_snapshot(w, 0))?;
                run.write("edge_state.json", |w| e.write_sidecar(w))?;
                let mut fits = Vec::new();
                let mut rows = Vec::new();
                for &prob in p {
                    let cfg = DecoherenceConfig::new(*channel, prob)?.per_primitive(*kraus_per_primitive);
                    run.warnings.extend(cfg.warnings());
                    let m = measure_decay(&e, &protocol, &field, &cfg, steps)?;
                    fits.push(json!({
                        "p": prob,
                        "gamma_predicted": m.prediction.gamma,
                        "gamma_fitted": m.fitted_gamma,
                        "fit_window": m.fit_window,
                    }));
                    rows.push((prob, m));
                }
                run.write("decay.csv", |w| {
                    writeln!(w, "n,p,measured,predicted")?;
                    for (prob, m) in &rows {
                        for (n, v) in m.survival.iter().enumerate() {
                            writeln!(w, "{n},{prob},{v},{}", m.prediction.survival(n))?;
                        }
                    }
                    Ok(())
                })?;
                run.summary.insert("fits".into(), json!(fits));
            }
            AnalysisSpec::Droplet { droplet } => {
                let setup = droplet.setup()?;
                let steps = c.steps.expect("validated");
                let cfg = c.decoherence.config(seed);
                let result = droplet_transport(&setup, &cfg, steps)?;
                run.warnings.extend(result.warnings.iter().cloned());
                run.write("transport.csv", |w| result.write_csv(w))?;
                run.write("front.csv", |w| {
                    writeln!(w, "n,front")?;
                    for (n, f) in result.front.iter().enumerate() {
                        writeln!(w, "{n},{f}")?;
                    }
                    Ok(())
                })?;
                let dg = crate::edge::droplet_geometry(&setup)?;
                run.write("regions.csv", |w| {
                    writeln!(w, "x,y,indicator,in_f,in_l")?;
                    for s in 0..dg.geometry.num_sites() {
                        let [x, y] = dg.geometry.coords(s);
                        writeln!(w, "{x},{y},{},{},{}", dg.indicator[s], dg.f.contains(s) as u8, dg.l.contains(s) as u8)?;
                    }
                    Ok(())
                })?;
                run.summary.insert("front_speed".into(), json!(result.front_speed));
                run.summary.insert("contour_length".into(), json!(result.contour_length));
                run.summary.insert("period".into(), json!(result.period));
                if steps >= 400 {
                    run.summary.insert("p_f_plateau_200_400".into(), json!(result.plateau(200, 400)));
                }
                run.summary.insert("setup".into(), serde_json::to_value(&setup).map_err(|e| Error::Io(e.into()))?);
            }
            AnalysisSpec::SizeSweep { ratios } => {
                let rows = edge_state_size_sweep(&self.protocol_name().protocol(), ratios)?;
                run.write("size_sweep.csv", |w| write_size_sweep_csv(w, &rows))?;
                run.summary.insert("rows".into(), json!(rows));
            }
        }
        Ok(())
    }
}

/// Site index of in-range physical coordinates (no periodic wrapping).
fn checked_site(g: &LatticeGeometry, coords: &[i64]) -> Result<usize> {
    if coords.len() != g.dimension() {
        return Err(Error::Geometry(format!("expected {} coordinates, got {}", g.dimension(), coords.len())));
    }
    for (a, &c) in coords.iter().enumerate() {
        let lo = -g.origin(a);
        let hi = lo + g.extent(a) as i64 - 1;
        if c < lo || c > hi {
            return Err(Error::Geometry(format!("coordinate {c} outside [{lo}, {hi}] on axis {a}")));
        }
    }
    g.site_at(coords)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn select_edge_state(protocol: &WalkProtocol, field: &CoinField, gap: Gap, wall: f64, tolerance: f64, run: &mut Run) -> Result<EdgeState> {
    let found = find_edge_states(protocol, field, gap, tolerance)?;
    run.warnings.extend(found.warnings);
    let g = field.geometry();
    found
        .states
        .into_iter()
        .min_by(|a, b| {
            g.displacement(0, wall, a.wall)
                .abs()
                .total_cmp(&g.displacement(0, wall, b.wall).abs())
        })
        .ok_or_else(|| Error::Config(format!("no edge state found in the {gap:?} gap")))
}

fn build_region(spec: &RegionSpec, g: &LatticeGeometry, indicator: Option<&[f64]>, field: Option<&FieldSpec>) -> Result<Region> {
    Ok(match spec {
        RegionSpec::Sites { coords } => Region::from_coords(g, coords)?,
        RegionSpec::Box { min, max } => Region::from_predicate(g, |c| (0..g.dimension()).all(|a| min[a] <= c[a] && c[a] <= max[a])),
        RegionSpec::ContourBand { band, dilation, half } => {
            let Some(FieldSpec::Island { shape, optics, .. }) = field else {
                return Err(Error::Config("contour bands need an island field".into()));
            };
            let indicator = indicator.expect("island fields carry an indicator");
            let f = contour_band(g, indicator, *band, *dilation, optics.is_none())?;
            let cy = shape.center()[1];
            match half {
                None => f,
                Some(Half::Lower) => f.intersection(&Region::from_predicate(g, |[_, y]| (y as f64) < cy)),
                Some(Half::Upper) => f.intersection(&Region::from_predicate(g, |[_, y]| (y as f64) > cy)),
            }
        }
    })
}

struct Run {
    dir: PathBuf,
    outputs: Vec<String>,
    warnings: Vec<String>,
    summary: serde_json::Map<String, serde_json::Value>,
}

impl Run {
    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(())
    }
}

/// Record of one run, written as `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub description: Option<String>,
    pub config_source: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
}

/// Output directory: explicit choice, then the config's `output`, then
/// `$DTQW_OUTPUT_DIR/<name>`, then `output/<name>`.
pub fn resolve_output_dir(explicit: Option<&Path>, scenario: &Scenario) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = &scenario.config.output {
        return p.clone();
    }
    let root = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("output"));
    root.join(scenario.name())
}

const PRESETS: [(&str, &str, &str); 10] = [
    ("fig1", "Hadamard-walk bands, frame spinors and windings", include_str!("../presets/fig1.toml")),
    ("fig2a", "1D phase diagram of (nu_0, nu_pi) over the coin angles", include_str!("../presets/fig2a.toml")),
    ("fig2b", "2D gap scan and the gap along the island segment", include_str!("../presets/fig2b.toml")),
    ("fig3b", "1D wall evolution from |0,down> without decoherence", include_str!("../presets/fig3b.toml")),
    ("fig3c", "1D wall evolution under spin decoherence", include_str!("../presets/fig3c.toml")),
    ("fig4", "Strip spectrum with edge-mode labels and group velocities", include_str!("../presets/fig4.toml")),
    ("fig5a", "Droplet edge transport without decoherence", include_str!("../presets/fig5a.toml")),
    ("fig5b", "Droplet edge transport under spin decoherence (trajectories)", include_str!("../presets/fig5b.toml")),
    ("fig6", "Edge-state population decay versus spin decoherence", include_str!("../presets/fig6.toml")),
    ("fig7", "Edge-state RMS size and initial overlap versus a/R_A", include_str!("../presets/fig7.toml")),
];

/// Preset names with one-line descriptions.
pub fn list_presets() -> Vec<(&'static str, &'static str)> {
    PRESETS.iter().map(|(n, d, _)| (*n, *d)).collect()
}

/// TOML text of a preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _, _)| *n == name).map(|(_, _, s)| *s)
}

pub fn preset(name: &str) -> Result<Scenario> {
    let src = preset_source(name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
        Error::Config(format!("unknown preset {name:?}; available: {}", names.join(", ")))
    })?;
    Scenario::parse(src, &format!("preset:{name}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
steps = 4
protocol = "split_step_1d"

[geometry]
extents = [21]

[field]
kind = "homogeneous"
angles = ["pi/2", 0]

[initial]
kind = "site"
site = [0]
spin = "up"
"#;

    #[test]
    fn minimal_parses() {
        let s = Scenario::parse(MINIMAL, "t").unwrap();
        assert_eq!(s.name(), "tiny");
        assert_eq!(s.config_hash().len(), 64);
    }

    #[test]
    fn unknown_key_is_anchored() {
        let src = MINIMAL.replace("spin = \"up\"", "spin = \"up\"\ncolour = 3");
        let err = Scenario::parse(&src, "t").unwrap_err().to_string();
        assert!(err.contains("t:17:"), "{err}");
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn semantic_error_is_anchored() {
        let src = MINIMAL.replace("site = [0]", "site = [40]");
        let err = Scenario::parse(&src, "t").unwrap_err().to_string();
        assert!(err.contains("t:15:"), "{err}");
        let src = MINIMAL.replace("split_step_1d", "walk_2d");
        let err = Scenario::parse(&src, "t").unwrap_err().to_string();
        assert!(err.contains("t:4:"), "{err}");
    }

    #[test]
    fn bad_angle_rejected() {
        let src = MINIMAL.replace("\"pi/2\"", "\"tau/2\"");
        let err = Scenario::parse(&src, "t").unwrap_err().to_string();
        assert!(err.contains("t:11:"), "{err}");
    }

    #[test]
    fn optics_forms_are_exclusive() {
        let spec = OpticsSpec {
            setup: Some(OpticsSetup::Setup2d),
            abbe_ratio: Some(1.0),
            ..Default::default()
        };
        assert!(spec.resolve().is_err());
        let spec = OpticsSpec {
            numerical_aperture: Some(0.5),
            ..Default::default()
        };
        assert!(spec.resolve().is_err());
    }

    #[test]
    fn locate_paths() {
        let src = "a = 1\n[x]\nb = 2\n[[obs]]\nc = 1\n[[obs]]\nc = 2\n[obs.region]\nd = 4\n";
        assert_eq!(locate(src, "a"), Some(1));
        assert_eq!(locate(src, "x.b"), Some(3));
        assert_eq!(locate(src, "obs[1].c"), Some(7));
        assert_eq!(locate(src, "obs[1].region.d"), Some(9));
        assert_eq!(locate(src, "x.zz"), Some(2));
    }

    #[test]
    fn presets_validate() {
        assert_eq!(list_presets().len(), 10);
        for (name, _) in list_presets() {
            preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(preset("fig9").is_err());
    }
}

//! Run configuration: a JSON document with the top-level keys `geometry`,
//! `basis`, `solver`, `quadrature` and `task`. Unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;
use serde_json::Value;
use sturm_core::hamiltonian::AssemblySpec;
use sturm_core::solver::Sampling;
use sturm_core::{BasisSet, ClusterGeometry, Ion, QuadratureSpec, ScanConfig, Shell};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub basis: BasisConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub task: TaskConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub ions: Vec<IonConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonConfig {
    #[serde(rename = "Z")]
    pub charge: f64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub shells: ShellList,
}

/// Either explicit tokens (`["1S", "2S", "2P"]`) or one of the named
/// sets `"M5"`, `"M14"`, `"M23"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ShellList {
    Tokens(Vec<String>),
    Named(String),
}

/// Scan window overrides; anything left out comes from
/// [`ScanConfig::for_geometry`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub p0_min: Option<f64>,
    pub p0_max: Option<f64>,
    pub samples: Option<usize>,
    pub refine_tolerance: Option<f64>,
    pub null_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Whole matrix at once on a molecular grid.
    #[default]
    Batched,
    /// Entry by entry from the cached one-, two- and three-center integrals.
    Reference,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default)]
    pub method: Method,
    /// Relative tolerance of the adaptive integrals (reference method).
    pub tolerance: Option<f64>,
    pub max_refinements: Option<usize>,
    /// Molecular grid resolution (batched method).
    pub radial_points: Option<usize>,
    pub polar_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// Number of levels to report; all levels in the window if absent.
    pub levels: Option<usize>,
    pub wavefunction: Option<WavefunctionTask>,
    pub scan: Option<ScanTask>,
    pub oracle: Option<OracleTask>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavefunctionTask {
    pub level: usize,
    pub line: LineConfig,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
    pub range: [f64; 2],
    pub step: f64,
}

impl LineConfig {
    pub fn sampling(&self) -> Sampling {
        Sampling::Line {
            origin: self.origin,
            direction: self.direction,
            start: self.range[0],
            stop: self.range[1],
            step: self.step,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanTask {
    pub charge: f64,
    pub r12: f64,
    pub r23: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleTask {
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_sectors")]
    pub sectors: Vec<u32>,
    #[serde(default = "default_per_sector")]
    pub per_sector: usize,
    /// Levels compared by `compare`.
    #[serde(default = "default_compared")]
    pub levels: usize,
    /// Largest accepted energy difference.
    pub bound: f64,
    /// Levels whose line profiles are compared along `task.wavefunction.line`.
    #[serde(default)]
    pub profile_levels: Vec<usize>,
    #[serde(default = "default_profile_bound")]
    pub profile_bound: f64,
    /// Fine-grid eigenvectors are written here by `oracle`.
    pub export_dir: Option<String>,
}

fn default_spacing() -> f64 {
    sturm_core::gridref::DEFAULT_SPACING
}

fn default_margin() -> f64 {
    sturm_core::gridref::DEFAULT_MARGIN
}

fn default_sectors() -> Vec<u32> {
    vec![0, 1]
}

fn default_per_sector() -> usize {
    8
}

fn default_compared() -> usize {
    4
}

fn default_profile_bound() -> f64 {
    2e-2
}

fn config_error(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    /// Reads `path` and applies `key.path=value` overrides before
    /// deserializing, so overrides are checked like the file itself.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(config_error)?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let g = self.geometry()?;
        self.basis(&g)?;
        self.scan_config(&g).validate().map_err(config_error)?;
        self.assembly().validate().map_err(config_error)?;
        self.quadrature_spec().validate().map_err(config_error)?;
        if let Some(w) = &self.task.wavefunction {
            w.line.sampling().points().map_err(config_error)?;
            if w.level == 0 {
                return Err(CliError::Config("wavefunction level is 1-based".into()));
            }
        }
        if let Some(s) = &self.task.scan {
            if s.r23.is_empty() || s.r23.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(CliError::Config("scan.r23 must be a non-empty ascending list".into()));
            }
            if !(s.charge > 0.0) || !(s.r12 > 0.0) || !(s.r23[0] > 0.0) {
                return Err(CliError::Config("scan needs positive charge and separations".into()));
            }
        }
        if let Some(o) = &self.task.oracle {
            if !(o.spacing > 0.0) || !(o.margin > 0.0) || o.per_sector == 0 || o.sectors.is_empty() {
                return Err(CliError::Config("oracle needs spacing > 0, margin > 0 and at least one sector".into()));
            }
            if !(o.bound >= 0.0) || !(o.profile_bound >= 0.0) {
                return Err(CliError::Config("oracle bounds must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ClusterGeometry, CliError> {
        let ions = self.geometry.ions.iter().map(|i| Ion { charge: i.charge, position: i.position }).collect();
        ClusterGeometry::new(ions).map_err(config_error)
    }

    pub fn shells(&self) -> Result<Vec<Shell>, CliError> {
        match &self.basis.shells {
            ShellList::Tokens(t) => t.iter().map(|s| s.parse::<Shell>().map_err(config_error)).collect(),
            ShellList::Named(name) => name
                .strip_prefix(['M', 'm'])
                .and_then(|n| n.parse::<usize>().ok())
                .and_then(Shell::standard_set)
                .ok_or_else(|| CliError::Config(format!("unknown shell set {name:?}; use M5, M14 or M23"))),
        }
    }

    pub fn basis(&self, geometry: &ClusterGeometry) -> Result<BasisSet, CliError> {
        sturm_core::build_basis(geometry, &self.shells()?).map_err(config_error)
    }

    pub fn scan_config(&self, geometry: &ClusterGeometry) -> ScanConfig {
        let d = ScanConfig::for_geometry(geometry);
        let s = &self.solver;
        ScanConfig {
            p0_min: s.p0_min.unwrap_or(d.p0_min),
            p0_max: s.p0_max.unwrap_or(d.p0_max),
            samples: s.samples.unwrap_or(d.samples),
            refine_tolerance: s.refine_tolerance.unwrap_or(d.refine_tolerance),
            null_threshold: s.null_threshold.unwrap_or(d.null_threshold),
            max_levels: self.task.levels,
        }
    }

    pub fn assembly(&self) -> AssemblySpec {
        let d = AssemblySpec::default();
        AssemblySpec {
            radial_points: self.quadrature.radial_points.unwrap_or(d.radial_points),
            polar_points: self.quadrature.polar_points.unwrap_or(d.polar_points),
        }
    }

    pub fn quadrature_spec(&self) -> QuadratureSpec {
        let d = QuadratureSpec::default();
        QuadratureSpec {
            tolerance: self.quadrature.tolerance.unwrap_or(d.tolerance),
            max_refinements: self.quadrature.max_refinements.unwrap_or(d.max_refinements),
            ..d
        }
    }
}

/// `a.b.c=value`; the value is parsed as JSON and taken as a plain string
/// if that fails, so `basis.shells=M5` works without quotes.
fn apply_override(doc: &mut Value, item: &str) -> Result<(), CliError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if key.is_empty() {
            return Err(CliError::Config(format!("override {item:?} has an empty key")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override {item:?}: {key:?} is not inside an object")))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

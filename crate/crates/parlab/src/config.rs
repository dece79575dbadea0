//! Versioned JSON experiment configuration: grid, coefficient preset,
//! source, probe and fit windows, Davies parameters, tolerances, seed.

use serde::{Deserialize, Serialize};

use crate::coefficients::{drift_from_stream, presets, theta_of, CoefficientSet, DriftProvenance};
use crate::error::{Error, Result};
use crate::fundsol::SourceSpec;
use crate::lattice::{Grid, SpaceTimePoint};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub m: usize,
    pub l: f64,
    pub nx: usize,
    pub dt: f64,
    pub t0: f64,
    pub t1: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.n, self.m, self.l, self.nx, self.dt, self.t0, self.t1)
    }
}

/// Named coefficient presets; stream-based drifts record their provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientSpec {
    Heat,
    /// Per-axis diffusivities.
    Anisotropic { diag: Vec<f64> },
    /// Per-component diffusivities (decoupled system).
    Decoupled { comps: Vec<f64> },
    /// m = 2 coupled principal part with off-diagonal coupling.
    CoupledSystem { couple: f64 },
    /// Skew-symmetric scalar principal part (n = 2).
    SkewPrincipal { skew: f64 },
    CellularStream { amplitude: f64 },
    ShearStream { amplitude: f64 },
    ConstantDrift { b: Vec<f64> },
    /// Heat with a constant nonnegative zeroth-order coefficient.
    ZerothOrder { scale: f64 },
}

impl CoefficientSpec {
    pub fn build(&self, grid: &Grid, drift_tol: f64) -> Result<CoefficientSet> {
        let zero_b = presets::zero_b(grid);
        let zero_c = presets::zero_c(grid);
        match self {
            CoefficientSpec::Heat => CoefficientSet::build(
                grid,
                presets::identity_a(grid),
                zero_b,
                zero_c,
                DriftProvenance::None,
                None,
                drift_tol,
            ),
            CoefficientSpec::Anisotropic { diag } => {
                if diag.len() < grid.n {
                    return Err(Error::ConfigError(format!(
                        "anisotropic preset needs {} diffusivities",
                        grid.n
                    )));
                }
                CoefficientSet::build(
                    grid,
                    presets::diagonal_a(grid, diag),
                    zero_b,
                    zero_c,
                    DriftProvenance::None,
                    None,
                    drift_tol,
                )
            }
            CoefficientSpec::Decoupled { comps } => {
                if comps.len() < grid.m {
                    return Err(Error::ConfigError(format!(
                        "decoupled preset needs {} diffusivities",
                        grid.m
                    )));
                }
                CoefficientSet::build(
                    grid,
                    presets::decoupled_a(grid, comps),
                    zero_b,
                    zero_c,
                    DriftProvenance::None,
                    None,
                    drift_tol,
                )
            }
            CoefficientSpec::CoupledSystem { couple } => CoefficientSet::build(
                grid,
                presets::coupled_system_a(grid, *couple),
                zero_b,
                zero_c,
                DriftProvenance::None,
                None,
                drift_tol,
            ),
            CoefficientSpec::SkewPrincipal { skew } => CoefficientSet::build(
                grid,
                presets::skew_a(grid, *skew),
                zero_b,
                zero_c,
                DriftProvenance::None,
                None,
                drift_tol,
            ),
            CoefficientSpec::CellularStream { amplitude } => {
                let phi = presets::cellular_stream(grid, *amplitude)?;
                let b = drift_from_stream(&phi, grid)?;
                let theta = theta_of(grid, &phi)?;
                CoefficientSet::build(
                    grid,
                    presets::identity_a(grid),
                    b,
                    zero_c,
                    DriftProvenance::Stream,
                    Some(theta),
                    drift_tol,
                )
            }
            CoefficientSpec::ShearStream { amplitude } => {
                let phi = presets::shear_stream(grid, *amplitude)?;
                let b = drift_from_stream(&phi, grid)?;
                let theta = theta_of(grid, &phi)?;
                CoefficientSet::build(
                    grid,
                    presets::identity_a(grid),
                    b,
                    zero_c,
                    DriftProvenance::Stream,
                    Some(theta),
                    drift_tol,
                )
            }
            CoefficientSpec::ConstantDrift { b } => {
                if b.len() < grid.n {
                    return Err(Error::ConfigError(format!(
                        "constant drift needs {} components",
                        grid.n
                    )));
                }
                CoefficientSet::build(
                    grid,
                    presets::identity_a(grid),
                    presets::constant_b(grid, b),
                    zero_c,
                    DriftProvenance::Direct,
                    None,
                    drift_tol,
                )
            }
            CoefficientSpec::ZerothOrder { scale } => CoefficientSet::build(
                grid,
                presets::identity_a(grid),
                zero_b,
                presets::scaled_identity_c(grid, *scale),
                DriftProvenance::None,
                None,
                drift_tol,
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceConfig {
    pub s: f64,
    pub x: Vec<f64>,
    pub k: usize,
    pub eps: f64,
}

impl SourceConfig {
    pub fn to_spec(&self) -> SourceSpec {
        let mut x = [0.0; 2];
        for (i, v) in self.x.iter().take(2).enumerate() {
            x[i] = *v;
        }
        SourceSpec::new(SpaceTimePoint::new(self.s, x), self.k, self.eps)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ProbeConfig {
    /// Averaging radii for the scaling sweep.
    #[serde(default)]
    pub eps_sweep: Vec<f64>,
    /// Radii for the annulus decay table.
    #[serde(default)]
    pub decay_radii: Vec<f64>,
    /// Gaussian fit window as time separations [lo, hi].
    #[serde(default)]
    pub fit_window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaviesConfig {
    pub gammas: Vec<f64>,
    pub anchor_x: Vec<f64>,
    pub anchor_y: Vec<f64>,
    #[serde(default = "default_c0")]
    pub c0: f64,
}

fn default_c0() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tolerances {
    #[serde(default = "default_rtol")]
    pub solver_rtol: f64,
    #[serde(default = "default_drift_tol")]
    pub drift_tol: f64,
    #[serde(default = "default_residual_tol")]
    pub identity_tol: f64,
}

fn default_rtol() -> f64 {
    1e-13
}
fn default_drift_tol() -> f64 {
    1e-10
}
fn default_residual_tol() -> f64 {
    1e-10
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            solver_rtol: default_rtol(),
            drift_tol: default_drift_tol(),
            identity_tol: default_residual_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub grid: GridSpec,
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub source: Option<SourceConfig>,
    #[serde(default)]
    pub probes: ProbeConfig,
    #[serde(default)]
    pub davies: Option<DaviesConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(json)
            .map_err(|e| Error::ConfigError(format!("bad config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Structural validation before any solve is attempted.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::ConfigError(format!(
                "unsupported schema version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        let grid = self.grid.build().map_err(|e| Error::ConfigError(e.to_string()))?;
        if let Some(src) = &self.source {
            src.to_spec().validate(&grid).map_err(|e| Error::ConfigError(e.to_string()))?;
        }
        for &eps in &self.probes.eps_sweep {
            if eps < 2.0 * grid.h || eps * eps < 2.0 * grid.dt {
                return Err(Error::ConfigError(format!(
                    "sweep radius {eps} is not resolvable (h = {}, dt = {})",
                    grid.h, grid.dt
                )));
            }
        }
        if let Some([lo, hi]) = self.probes.fit_window {
            if !(lo > 0.0) || hi <= lo {
                return Err(Error::ConfigError(format!("bad fit window [{lo}, {hi}]")));
            }
        }
        if let Some(d) = &self.davies {
            if d.anchor_x.len() < grid.n || d.anchor_y.len() < grid.n {
                return Err(Error::ConfigError("davies anchors need n components".into()));
            }
            if !(d.c0 > 0.0) {
                return Err(Error::ConfigError(format!("c0 must be positive, got {}", d.c0)));
            }
        }
        Ok(())
    }

    /// Stable hash of the canonical JSON encoding, for report provenance.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        // FNV-1a, enough for provenance tagging
        let mut h: u64 = 0xcbf29ce484222325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

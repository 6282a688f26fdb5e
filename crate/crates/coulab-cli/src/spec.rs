//! Run specification files.

use std::path::{Path, PathBuf};

use coulomb_lab::equilibrium::{MuBetaOptions, ObstacleOptions};
use coulomb_lab::jellium::Lattice;
use coulomb_lab::sampler::{AnnealSchedule, TiProtocol};
use coulomb_lab::verify::Tolerances;
use coulomb_lab::{Dimension, PowerPotential};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Pipelines a spec can name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Equilibrium,
    GroundState,
    Gibbs,
    FreeEnergy,
    Jellium,
    Diagnostics,
    Tile,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Self::Equilibrium => "equilibrium",
            Self::GroundState => "ground-state",
            Self::Gibbs => "gibbs",
            Self::FreeEnergy => "free-energy",
            Self::Jellium => "jellium",
            Self::Diagnostics => "diagnostics",
            Self::Tile => "tile",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub command: Option<Pipeline>,
    pub dimension: Option<usize>,
    /// Defaults to `|x|^2`.
    pub potential: Option<PowerPotential>,
    pub n: Option<usize>,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid: Option<GridSpec>,
    pub equilibrium: Option<EquilibriumSpec>,
    pub schedule: Option<AnnealSchedule>,
    pub gibbs: Option<GibbsSpec>,
    pub free_energy: Option<TiProtocol>,
    pub tile: Option<TileSpec>,
    pub jellium: Option<JelliumSpec>,
    pub diagnostics: Option<DiagnosticsSpec>,
    pub tolerances: Option<Tolerances>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub half_width: f64,
    pub h: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Radial,
    Obstacle,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumSpec {
    pub method: Method,
    /// Obstacle solver tolerance; `1e-10` when absent.
    pub tol: Option<f64>,
    pub obstacle: ObstacleOptions,
    /// Solve for `mu_beta` too when the spec sets `n` and `beta`.
    pub mu_beta: Option<MuBetaOptions>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsSpec {
    pub burn_in: usize,
    pub samples: usize,
    pub thin: Option<usize>,
    /// Write every `dump_stride`-th stored sample as a configuration CSV; 0 writes none.
    pub dump_stride: usize,
    /// Checkpoint to resume from; burn-in is skipped for a resumed chain.
    pub resume: Option<PathBuf>,
}

impl Default for GibbsSpec {
    fn default() -> Self {
        Self { burn_in: 500, samples: 1000, thin: None, dump_stride: 0, resume: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TileSpec {
    pub cell_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JelliumSpec {
    /// Catalog names (`triangular`, `square`, `rhombic45`, `sc`, `bcc`, `fcc`);
    /// empty means the whole catalog of the spec's dimension.
    pub lattices: Vec<String>,
    /// Extra lattices given by name, dimension and basis.
    pub custom: Vec<Lattice>,
    pub density: f64,
    pub zeta_s: Vec<f64>,
    pub tol: f64,
}

impl Default for JelliumSpec {
    fn default() -> Self {
        Self { lattices: Vec::new(), custom: Vec::new(), density: 1.0, zeta_s: vec![0.1, 0.5, 1.0], tol: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSpec {
    /// Configuration CSV files; when empty, `iid_samples` draws from `mu0` are used.
    pub configurations: Vec<PathBuf>,
    pub iid_samples: usize,
    /// Discrepancy radii; empty means the micro radius `n^{-1/(d+2)}`.
    pub radii: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Spacing of the histogram grid for the density profile.
    pub profile_h: f64,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self { configurations: Vec::new(), iid_samples: 200, radii: Vec::new(), lambdas: vec![0.2, 0.5], profile_h: 0.1 }
    }
}

/// The spec file as read, with its raw bytes for hashing.
pub struct LoadedSpec {
    pub spec: RunSpec,
    pub bytes: Vec<u8>,
    pub path: PathBuf,
}

/// Parses JSON (`.json`) or TOML (anything else); unknown keys are errors.
pub fn load(path: &Path) -> Result<LoadedSpec, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Spec(format!("{}: not UTF-8", path.display())))?;
    let spec = parse(&text, path.extension().is_some_and(|e| e == "json"))
        .map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?;
    Ok(LoadedSpec { spec, bytes, path: path.to_path_buf() })
}

pub fn parse(text: &str, json: bool) -> Result<RunSpec, String> {
    if json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

impl RunSpec {
    pub fn require<T: Clone>(value: &Option<T>, field: &str) -> Result<T, CliError> {
        value.clone().ok_or_else(|| CliError::Spec(format!("missing required field `{field}`")))
    }

    pub fn dimension(&self) -> Result<Dimension, CliError> {
        let d = Self::require(&self.dimension, "dimension")?;
        Dimension::new(d).map_err(|_| CliError::Spec(format!("field `dimension` must be 2 or 3, got {d}")))
    }

    pub fn n(&self) -> Result<usize, CliError> {
        let n = Self::require(&self.n, "n")?;
        if n == 0 {
            return Err(CliError::Spec("field `n` must be positive".into()));
        }
        Ok(n)
    }

    pub fn beta(&self) -> Result<f64, CliError> {
        let b = Self::require(&self.beta, "beta")?;
        if !(b > 0.0 && b.is_finite()) {
            return Err(CliError::Spec(format!("field `beta` must be positive and finite, got {b}")));
        }
        Ok(b)
    }

    pub fn potential(&self, dim: Dimension) -> Result<PowerPotential, CliError> {
        let d = dim.get();
        let p = match &self.potential {
            None => return Ok(PowerPotential::quadratic(dim)),
            Some(p) => p.clone(),
        };
        let center = if p.center.is_empty() { vec![0.0; d] } else { p.center.clone() };
        if center.len() != d {
            return Err(CliError::Spec(format!("field `potential.center` needs {d} coordinates, got {}", center.len())));
        }
        PowerPotential::new(p.alpha, p.power, center).map_err(|e| CliError::Spec(format!("field `potential`: {e}")))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

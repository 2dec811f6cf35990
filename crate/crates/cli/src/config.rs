//! Run configuration: a single TOML file, optionally patched with
//! `--set path=value` overrides, validated into solver inputs before any
//! solve starts.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thinslip_core::fullorder::{BottomStencil, FullOptions};
use thinslip_core::reynolds::LimitOptions;
use thinslip_core::{
    Error as CoreError, FluidParams, ForcingPreset, Grid3, HeightField, HeightPreset, ReducedDim, ReducedGrid,
};

use crate::error::CliError;

/// Environment variable holding the root for relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "THINSLIP_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Limit,
    Full,
    Sweep,
    Verify,
    Classify,
    Profile,
    Compare,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Limit => "limit",
            Mode::Full => "full",
            Mode::Sweep => "sweep",
            Mode::Verify => "verify",
            Mode::Classify => "classify",
            Mode::Profile => "profile",
            Mode::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Recorded in the manifest; no mode draws random numbers.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eps_list: Vec<f64>,
    pub geometry: GeometryConfig,
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub profile: Option<ProfileConfig>,
}

fn default_output_dir() -> String {
    "thinslip-out".into()
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub dim: usize,
    #[serde(default)]
    pub origin: [f64; 2],
    #[serde(default = "unit_extent")]
    pub extent: [f64; 2],
    /// One entry per reduced direction.
    pub n_cells: Vec<usize>,
    pub n_z3: usize,
    #[serde(default = "default_height")]
    pub height: String,
    #[serde(default = "default_height_coefficients")]
    pub height_coefficients: Vec<f64>,
}

fn unit_extent() -> [f64; 2] {
    [1.0, 1.0]
}

fn default_height() -> String {
    "constant".into()
}

fn default_height_coefficients() -> Vec<f64> {
    vec![1.0]
}

/// Slip tensor: a scalar `k` for `k I`, or a full 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TensorConfig {
    Scalar(f64),
    Matrix([[f64; 2]; 2]),
}

impl TensorConfig {
    pub fn matrix(&self) -> Matrix2<f64> {
        match *self {
            TensorConfig::Scalar(k) => FluidParams::isotropic_tensor(k),
            TensorConfig::Matrix(m) => Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub nu: f64,
    pub s: f64,
    pub gamma: f64,
    pub k: TensorConfig,
    /// Thickness for single full-order solves.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Regularization override; defaults to `1e-6` times the characteristic
    /// velocity `|f'|_max h_max² / (2ν)`.
    #[serde(default)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub preset: String,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        Self {
            preset: "zero".into(),
            coefficients: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub convection: bool,
    pub stencil: BottomStencil,
    pub full_tolerance: f64,
    pub full_max_outer: usize,
    pub acceleration_depth: usize,
    pub limit_relaxation: f64,
    pub limit_tolerance: f64,
    pub limit_max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let f = FullOptions::default();
        let l = LimitOptions::default();
        Self {
            convection: f.convection,
            stencil: f.stencil,
            full_tolerance: f.tolerance,
            full_max_outer: f.max_outer,
            acceleration_depth: f.acceleration_depth,
            limit_relaxation: l.relaxation,
            limit_tolerance: l.tolerance,
            limit_max_iters: l.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub drive: [f64; 2],
    pub gap: f64,
}

/// Parses `text` after applying `overrides` (`dotted.path=value`; the value
/// is read as a TOML value, or as a string when that fails).
pub fn parse(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config {
        field: String::new(),
        message: e.message().trim().to_string(),
    })?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    serde_path_to_error::deserialize(table).map_err(|e| CliError::Config {
        field: e.path().to_string(),
        message: e.inner().message().trim().to_string(),
    })
}

pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse(&text, overrides)
}

fn apply_override(table: &mut toml::Table, entry: &str) -> Result<(), CliError> {
    let bad = |m: &str| CliError::Config {
        field: entry.to_string(),
        message: m.to_string(),
    };
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| bad("override must look like path=value"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad("empty key in override path"));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| bad(&format!("`{k}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Validated solver inputs.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub height: HeightField,
    pub grid: Arc<Grid3>,
    pub forcing: ForcingPreset,
    /// Parameters with `eps` from `physics.eps` (or the first sweep value).
    pub params: FluidParams,
    pub full: FullOptions,
    pub limit: LimitOptions,
}

/// Maps a core parameter name to its config path.
fn config_path(field: &str) -> String {
    match field {
        "nu" | "s" | "gamma" | "k" | "eps" => format!("physics.{field}"),
        "delta_reg" => "physics.delta".into(),
        "height.coefficients" => "geometry.height_coefficients".into(),
        "height.preset" => "geometry.height".into(),
        "h" => "geometry.height_coefficients".into(),
        "relaxation" => "solver.limit_relaxation".into(),
        f if f.starts_with("forcing.") => f.into(),
        f => format!("geometry.{f}"),
    }
}

fn core_to_config(e: CoreError) -> CliError {
    match e {
        CoreError::ParameterDomain { field, message } => CliError::Config {
            field: config_path(&field),
            message,
        },
        other => CliError::Core(other),
    }
}

fn config_err(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Checks every precondition of `mode` and builds the solver inputs.
    pub fn resolve(&self, mode: Mode) -> Result<Resolved, CliError> {
        if self.workers == 0 {
            return Err(config_err("workers", "need at least one worker"));
        }
        let g = &self.geometry;
        let dim = ReducedDim::from_usize(g.dim).map_err(|_| config_err("geometry.dim", "must be 1 or 2"))?;
        if g.n_cells.len() != g.dim {
            return Err(config_err(
                "geometry.n_cells",
                format!(
                    "expected {} entries for dim = {}, got {}",
                    g.dim,
                    g.dim,
                    g.n_cells.len()
                ),
            ));
        }
        let n = [g.n_cells[0], if g.dim == 2 { g.n_cells[1] } else { 1 }];
        let reduced = ReducedGrid::new(dim, g.origin, g.extent, n).map_err(core_to_config)?;
        let preset = HeightPreset::from_key(&g.height, &g.height_coefficients).map_err(core_to_config)?;
        let height = HeightField::from_preset(reduced.clone(), &preset).map_err(core_to_config)?;
        if g.n_z3 < 2 {
            return Err(config_err("geometry.n_z3", "need at least 2 vertical cells"));
        }
        let grid = Grid3::new(&height, g.n_z3).map_err(core_to_config)?;
        let forcing =
            ForcingPreset::from_key(&self.forcing.preset, &self.forcing.coefficients).map_err(core_to_config)?;

        let p = &self.physics;
        let delta = match p.delta {
            Some(d) => d,
            None if p.s == 2.0 => 0.0,
            None => {
                let h = height.max();
                FluidParams::default_delta(
                    forcing.max_magnitude(&reduced) * h * h / (2.0 * p.nu.abs().max(f64::MIN_POSITIVE)),
                )
            }
        };
        let needs_sweep = matches!(mode, Mode::Sweep | Mode::Verify | Mode::Classify);
        let needs_eps = matches!(mode, Mode::Full | Mode::Compare);
        if needs_sweep {
            let min = if mode == Mode::Verify { 3 } else { 1 };
            if self.eps_list.len() < min {
                return Err(config_err(
                    "eps_list",
                    format!("mode `{}` needs at least {min} eps values", mode.name()),
                ));
            }
            for (i, e) in self.eps_list.iter().enumerate() {
                if !(*e > 0.0 && e.is_finite()) {
                    return Err(config_err(
                        &format!("eps_list[{i}]"),
                        format!("thickness must be positive, got {e}"),
                    ));
                }
            }
            let mut sorted = self.eps_list.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(config_err("eps_list", "eps values must be distinct"));
            }
        }
        let eps = if needs_eps {
            p.eps
                .ok_or_else(|| config_err("physics.eps", format!("mode `{}` needs a thickness", mode.name())))?
        } else {
            p.eps.or(self.eps_list.first().copied()).unwrap_or(1.0)
        };
        let params = FluidParams::new(p.nu, p.s, p.gamma, p.k.matrix(), eps, delta).map_err(core_to_config)?;
        if matches!(mode, Mode::Full | Mode::Compare) || needs_sweep {
            grid.uniform_height()
                .map_err(|e| config_err("geometry.height", format!("full-order solves need a constant gap: {e}")))?;
        }
        if mode == Mode::Profile {
            let pr = self
                .profile
                .as_ref()
                .ok_or_else(|| config_err("profile", "mode `profile` needs a [profile] table"))?;
            if !(pr.gap > 0.0 && pr.gap.is_finite()) {
                return Err(config_err(
                    "profile.gap",
                    format!("gap must be positive, got {}", pr.gap),
                ));
            }
        }

        let s = &self.solver;
        if s.full_tolerance.is_nan() || s.full_tolerance <= 0.0 {
            return Err(config_err("solver.full_tolerance", "must be positive"));
        }
        if s.limit_tolerance.is_nan() || s.limit_tolerance <= 0.0 {
            return Err(config_err("solver.limit_tolerance", "must be positive"));
        }
        if !(s.limit_relaxation > 0.0 && s.limit_relaxation <= 1.0) {
            return Err(config_err("solver.limit_relaxation", "must lie in (0, 1]"));
        }
        let full = FullOptions {
            convection: s.convection,
            stencil: s.stencil,
            tolerance: s.full_tolerance,
            max_outer: s.full_max_outer,
            acceleration_depth: s.acceleration_depth,
        };
        let limit = LimitOptions {
            n_z3: g.n_z3,
            relaxation: s.limit_relaxation,
            tolerance: s.limit_tolerance,
            max_iters: s.limit_max_iters,
        };
        Ok(Resolved {
            height,
            grid,
            forcing,
            params,
            full,
            limit,
        })
    }

    /// Output directory: the CLI override, else `output_dir` resolved against
    /// the output root variable when relative.
    pub fn output_path(&self, cli: Option<&Path>) -> PathBuf {
        let p = cli
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(&self.output_dir));
        if p.is_relative() {
            if let Ok(root) = std::env::var(OUTPUT_ROOT_VAR) {
                return PathBuf::from(root).join(p);
            }
        }
        p
    }
}

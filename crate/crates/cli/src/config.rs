//! Experiment configuration: a TOML document resolved as preset, then file,
//! then command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sphere_pint::dynamics::ViscositySpec;
use sphere_pint::pint::{CycleKind, LevelSpec, PintConfig};
use sphere_pint::scenarios::Scenario;
use sphere_pint::stability::{ImexVariant, StabilityScheme, XiGrid, REFERENCE_PHIBAR, REFERENCE_RADIUS};
use sphere_pint::stepping::{CoriolisTreatment, Scheme, SettlsMode, StepperConfig};
use sphere_pint::SphereGeometry;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown preset `{0}` (available: {1})")]
    UnknownPreset(String, String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    /// Horizon in seconds; the scenario's own horizon when absent.
    #[serde(default)]
    pub t_final: Option<f64>,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub geometry: Option<SphereGeometry>,
    pub fine: LevelSpec,
    #[serde(default)]
    pub pint: Option<PintSection>,
    #[serde(default)]
    pub reference: Option<LevelSpec>,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub serial: SerialSection,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default)]
    pub viscosity_table: ViscosityTableSection,
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Mgrit,
    Parareal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PintSection {
    #[serde(default)]
    pub algorithm: Algorithm,
    pub nlevels: usize,
    pub cfactor: usize,
    #[serde(default)]
    pub nrelax: usize,
    pub max_iters: usize,
    #[serde(default)]
    pub chunk_size: Option<usize>,
    #[serde(default)]
    pub cycle: CycleKind,
    /// Settings shared by every coarse level.
    pub coarse: CoarseSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseSpec {
    pub truncation: usize,
    pub scheme: Scheme,
    #[serde(default)]
    pub settls_mode: SettlsMode,
    #[serde(default)]
    pub coriolis: CoriolisTreatment,
    #[serde(default = "ViscositySpec::none")]
    pub viscosity: ViscositySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_rnorms")]
    pub rnorms: Vec<usize>,
    /// Iterations whose final-time KE spectrum is written by `run-pint`.
    #[serde(default)]
    pub spectrum_iterations: Vec<usize>,
    /// Times (s) at which `run-serial` writes a KE spectrum.
    #[serde(default)]
    pub spectrum_times: Vec<f64>,
}

fn default_rnorms() -> Vec<usize> {
    vec![8, 16, 32]
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            rnorms: default_rnorms(),
            spectrum_iterations: Vec::new(),
            spectrum_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerialSection {
    /// Time steps for the error-vs-Δt table. Empty skips the table.
    #[serde(default)]
    pub dt_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(default = "ref_phibar")]
    pub phibar: f64,
    #[serde(default = "ref_radius")]
    pub radius: f64,
    /// `ξ_L` values as multiples of `ξ̃_L = i√(Φ̄/a²)`.
    #[serde(default = "default_multiples")]
    pub xi_l_multiples: Vec<f64>,
    #[serde(default)]
    pub grid: XiGrid,
    #[serde(default)]
    pub imex_variant: ImexVariant,
    #[serde(default = "default_slices")]
    pub n: usize,
    #[serde(default = "default_cfactor")]
    pub cfactor: u32,
    #[serde(default = "default_parareal_k")]
    pub parareal_iterations: Vec<usize>,
    #[serde(default = "default_mgrit_k")]
    pub mgrit_iteration: usize,
    #[serde(default = "default_nrelax")]
    pub mgrit_nrelax: Vec<usize>,
    #[serde(default = "default_coarse_schemes")]
    pub coarse_schemes: Vec<StabilityScheme>,
}

fn ref_phibar() -> f64 {
    REFERENCE_PHIBAR
}
fn ref_radius() -> f64 {
    REFERENCE_RADIUS
}
fn default_multiples() -> Vec<f64> {
    vec![0.0, 5e3, 1e4, 2.5e4]
}
fn default_slices() -> usize {
    100
}
fn default_cfactor() -> u32 {
    2
}
fn default_parareal_k() -> Vec<usize> {
    vec![0, 1, 5, 10]
}
fn default_mgrit_k() -> usize {
    5
}
fn default_nrelax() -> Vec<usize> {
    vec![0, 1, 2, 3]
}
fn default_coarse_schemes() -> Vec<StabilityScheme> {
    vec![StabilityScheme::Imex, StabilityScheme::Settls]
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            phibar: ref_phibar(),
            radius: ref_radius(),
            xi_l_multiples: default_multiples(),
            grid: XiGrid::default(),
            imex_variant: ImexVariant::default(),
            n: default_slices(),
            cfactor: default_cfactor(),
            parareal_iterations: default_parareal_k(),
            mgrit_iteration: default_mgrit_k(),
            mgrit_nrelax: default_nrelax(),
            coarse_schemes: default_coarse_schemes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscosityTableSection {
    #[serde(default = "default_table_truncations")]
    pub truncations: Vec<usize>,
    #[serde(default = "default_orders")]
    pub orders: Vec<u32>,
    /// Damping times `τ` in seconds.
    #[serde(default = "default_taus")]
    pub damping_times: Vec<f64>,
    #[serde(default = "default_damping_dt")]
    pub damping_dt: f64,
    #[serde(default = "default_damping_truncation")]
    pub damping_truncation: usize,
    #[serde(default = "default_damping_specs")]
    pub damping_specs: Vec<ViscositySpec>,
}

fn default_table_truncations() -> Vec<usize> {
    vec![51, 128, 256]
}
fn default_orders() -> Vec<u32> {
    vec![2, 4, 6, 8]
}
fn default_taus() -> Vec<f64> {
    [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
        .iter()
        .map(|h| h * 3600.0)
        .collect()
}
fn default_damping_dt() -> f64 {
    60.0
}
fn default_damping_truncation() -> usize {
    256
}
fn default_damping_specs() -> Vec<ViscositySpec> {
    [1e4, 1e5, 1e6]
        .iter()
        .map(|&c| ViscositySpec { order: 2, coeff: c })
        .collect()
}

impl Default for ViscosityTableSection {
    fn default() -> Self {
        Self {
            truncations: default_table_truncations(),
            orders: default_orders(),
            damping_times: default_taus(),
            damping_dt: default_damping_dt(),
            damping_truncation: default_damping_truncation(),
            damping_specs: default_damping_specs(),
        }
    }
}

/// Command-line values that override the resolved document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

pub const PRESETS: &[(&str, &str)] = &[
    ("tiny", include_str!("../presets/tiny.toml")),
    ("bumps64", include_str!("../presets/bumps64.toml")),
    ("bumps64_aggressive", include_str!("../presets/bumps64_aggressive.toml")),
    ("jet64", include_str!("../presets/jet64.toml")),
    ("bumps256", include_str!("../presets/bumps256.toml")),
];

pub fn preset(name: &str) -> Result<toml::Table, ConfigError> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            ConfigError::UnknownPreset(name.to_string(), names.join(", "))
        })?;
    Ok(text.parse::<toml::Table>()?)
}

/// Recursively overlays `top` onto `base`; tables merge, everything else is
/// replaced.
pub fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ExperimentConfig {
    pub fn resolve(
        preset_name: Option<&str>,
        file: Option<&Path>,
        overrides: &Overrides,
    ) -> Result<Self, ConfigError> {
        let mut doc = match preset_name {
            Some(p) => preset(p)?,
            None => toml::Table::new(),
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            merge(&mut doc, text.parse::<toml::Table>()?);
        }
        if let Some(w) = overrides.workers {
            doc.insert("workers".into(), toml::Value::Integer(w as i64));
        }
        if let Some(out) = &overrides.output_dir {
            doc.insert("output_dir".into(), toml::Value::String(out.display().to_string()));
        }
        let cfg: ExperimentConfig = toml::Value::Table(doc).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        Scenario::from_name(&self.scenario).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn geometry(&self) -> SphereGeometry {
        self.geometry.unwrap_or_else(SphereGeometry::earth)
    }

    pub fn horizon(&self) -> Result<f64, ConfigError> {
        Ok(match self.t_final {
            Some(t) => t,
            None => self.scenario()?.horizon(),
        })
    }

    /// Whole number of steps of `dt` covering the horizon.
    pub fn steps_for(&self, dt: f64) -> Result<usize, ConfigError> {
        let t = self.horizon()?;
        let n = (t / dt).round();
        if !(n >= 1.0) || (n * dt - t).abs() > 1e-9 * t {
            return invalid(format!("t_final = {t} is not a whole number of steps of {dt} s"));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario()?;
        if self.workers == 0 {
            return invalid("workers must be at least 1");
        }
        if let Some(g) = &self.geometry {
            g.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let t = self.horizon()?;
        if !(t.is_finite() && t > 0.0) {
            return invalid(format!("t_final must be positive, got {t}"));
        }
        self.fine
            .stepper
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("fine: {e}")))?;
        self.steps_for(self.fine.dt())?;
        if let Some(r) = &self.reference {
            r.stepper
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("reference: {e}")))?;
            self.steps_for(r.dt())?;
        }
        for &dt in &self.serial.dt_values {
            if !(dt.is_finite() && dt > 0.0) {
                return invalid(format!("serial.dt_values must be positive, got {dt}"));
            }
            self.steps_for(dt)?;
        }
        let max_r = self.fine.truncation;
        if let Some(&r) = self.diagnostics.rnorms.iter().find(|&&r| r > max_r) {
            return invalid(format!("rnorm {r} exceeds the fine truncation {max_r}"));
        }
        if self.pint.is_some() {
            self.pint_config()?
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let s = &self.stability;
        s.grid.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if s.cfactor == 0 || s.n == 0 {
            return invalid("stability.n and stability.cfactor must be positive");
        }
        Ok(())
    }

    /// The level hierarchy implied by `fine` and `pint`.
    pub fn pint_config(&self) -> Result<PintConfig, ConfigError> {
        let Some(p) = &self.pint else {
            return invalid("the [pint] section is required for run-pint");
        };
        if p.cfactor < 2 {
            return invalid(format!("pint.cfactor must be at least 2, got {}", p.cfactor));
        }
        if p.nlevels < 2 {
            return invalid(format!("pint.nlevels must be at least 2, got {}", p.nlevels));
        }
        if p.algorithm == Algorithm::Parareal && (p.nlevels != 2 || p.nrelax != 0) {
            return invalid("parareal needs nlevels = 2 and nrelax = 0");
        }
        let n0 = self.steps_for(self.fine.dt())?;
        let mut levels = vec![self.fine];
        for l in 1..p.nlevels {
            let dt = self.fine.dt() * (p.cfactor as f64).powi(l as i32);
            levels.push(LevelSpec {
                truncation: p.coarse.truncation,
                stepper: StepperConfig {
                    scheme: p.coarse.scheme,
                    dt,
                    viscosity: p.coarse.viscosity,
                    settls_mode: p.coarse.settls_mode,
                    coriolis: p.coarse.coriolis,
                    nonlinear: self.fine.stepper.nonlinear,
                },
            });
        }
        Ok(PintConfig {
            nlevels: p.nlevels,
            cfactor: p.cfactor,
            nrelax: p.nrelax,
            levels,
            t_final: self.horizon()?,
            n0,
            chunk_size: p.chunk_size,
            max_iters: p.max_iters,
            cycle: p.cycle,
        })
    }
}

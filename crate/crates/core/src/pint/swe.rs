//! Shallow-water level hierarchy with spectral coarsening.

use serde::{Deserialize, Serialize};

use super::{CycleKind, PintError, PintParams, PintProblem};
use crate::diagnostics::{DiagnosticsError, ErrorRecord, ErrorTarget};
use crate::dynamics::{PrognosticState, SweModel};
use crate::harmonics::{SphereGeometry, SphereTransform, Truncation};
use crate::stepping::{Scheme, StepError, Stepper, StepperConfig};

use std::sync::Arc;

/// One discretisation level. The time step is `stepper.dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    /// Spectral truncation `M_l`.
    pub truncation: usize,
    pub stepper: StepperConfig,
}

impl LevelSpec {
    pub fn dt(&self) -> f64 {
        self.stepper.dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PintConfig {
    pub nlevels: usize,
    pub cfactor: usize,
    #[serde(default)]
    pub nrelax: usize,
    pub levels: Vec<LevelSpec>,
    /// Horizon in seconds.
    pub t_final: f64,
    /// Fine steps over the horizon.
    pub n0: usize,
    /// Level-0 slices per simulated processor; defaults to the whole run.
    #[serde(default)]
    pub chunk_size: Option<usize>,
    pub max_iters: usize,
    #[serde(default)]
    pub cycle: CycleKind,
}

impl PintConfig {
    pub fn params(&self) -> PintParams {
        let slices = self.n0 / self.cfactor.max(1);
        PintParams {
            nlevels: self.nlevels,
            cfactor: self.cfactor,
            nrelax: self.nrelax,
            n0: self.n0,
            max_iters: self.max_iters,
            chunk_size: self.chunk_size.unwrap_or(slices.max(1)),
            cycle: self.cycle,
        }
    }

    pub fn validate(&self) -> Result<(), PintError> {
        let bad = |m: String| Err(PintError::InvalidConfig(m));
        self.params().validate()?;
        if self.levels.len() != self.nlevels {
            return bad(format!("{} level specs for nlevels = {}", self.levels.len(), self.nlevels));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return bad(format!("t_final must be positive, got {}", self.t_final));
        }
        let dt0 = self.levels[0].dt();
        if (self.n0 as f64 * dt0 - self.t_final).abs() > 1e-9 * self.t_final {
            return bad(format!(
                "n0 * dt0 = {} does not match t_final = {}",
                self.n0 as f64 * dt0,
                self.t_final
            ));
        }
        let m0 = self.levels[0].truncation;
        for (l, spec) in self.levels.iter().enumerate() {
            spec.stepper
                .validate()
                .map_err(|e| PintError::InvalidConfig(format!("level {l}: {e}")))?;
            if spec.truncation == 0 || spec.truncation > m0 {
                return bad(format!("level {l}: truncation {} must be in 1..={m0}", spec.truncation));
            }
            if l > 0 {
                let want = self.cfactor as f64 * self.levels[l - 1].dt();
                if (spec.dt() - want).abs() > 1e-9 * want {
                    return bad(format!("level {l}: dt = {} but cfactor * dt_{} = {want}", spec.dt(), l - 1));
                }
            }
        }
        Ok(())
    }
}

/// Per-level steppers sharing transforms between levels of equal truncation.
#[derive(Debug, Clone)]
pub struct SweProblem {
    steppers: Vec<Stepper>,
}

impl SweProblem {
    pub fn new(config: &PintConfig, geometry: SphereGeometry) -> Result<Self, PintError> {
        config.validate()?;
        let mut transforms: Vec<Arc<SphereTransform>> = Vec::new();
        let mut steppers = Vec::with_capacity(config.levels.len());
        for spec in &config.levels {
            let existing = transforms
                .iter()
                .find(|t| t.truncation().max_wavenumber() == spec.truncation)
                .cloned();
            let transform = match existing {
                Some(t) => t,
                None => {
                    let trunc = Truncation::new(spec.truncation).map_err(StepError::from)?;
                    let t = Arc::new(SphereTransform::new(trunc, geometry).map_err(StepError::from)?);
                    transforms.push(t.clone());
                    t
                }
            };
            steppers.push(Stepper::new(SweModel::new(transform), spec.stepper)?);
        }
        Ok(Self { steppers })
    }

    pub fn stepper(&self, level: usize) -> &Stepper {
        &self.steppers[level]
    }

    pub fn truncation(&self, level: usize) -> Truncation {
        self.steppers[level].model().truncation()
    }

    pub fn transform(&self, level: usize) -> &Arc<SphereTransform> {
        self.steppers[level].model().transform()
    }

    /// Truncates or pads `state` onto `level`.
    pub fn restrict_state(&self, state: &PrognosticState, level: usize) -> PrognosticState {
        state.resample(self.truncation(level))
    }

    pub fn prolong_state(&self, state: &PrognosticState, level: usize) -> PrognosticState {
        state.resample(self.truncation(level))
    }

    /// Geopotential errors of the final-time value of every iterate.
    pub fn final_time_errors(
        &self,
        iterates: &[Vec<PrognosticState>],
        target: ErrorTarget,
        reference: &PrognosticState,
        rnorms: &[usize],
    ) -> Result<Vec<ErrorRecord>, DiagnosticsError> {
        let transform = self.transform(0);
        iterates
            .iter()
            .enumerate()
            .filter_map(|(k, it)| it.last().map(|s| (k, s)))
            .map(|(k, s)| ErrorRecord::phi_errors(k, target, s, reference, rnorms, transform))
            .collect()
    }
}

impl PintProblem for SweProblem {
    type State = PrognosticState;

    fn num_levels(&self) -> usize {
        self.steppers.len()
    }

    fn step(
        &self,
        level: usize,
        u: &PrognosticState,
        previous: Option<&PrognosticState>,
    ) -> Result<PrognosticState, StepError> {
        let s = &self.steppers[level];
        match s.config().scheme {
            Scheme::Imex => s.imex_step(u),
            Scheme::SlSiSettls => s.settls_step(u, previous),
        }
    }

    fn restrict(&self, level: usize, u: &PrognosticState) -> PrognosticState {
        self.restrict_state(u, level + 1)
    }

    fn prolong(&self, level: usize, u: &PrognosticState) -> PrognosticState {
        self.prolong_state(u, level)
    }

    fn same_space(&self, level: usize) -> bool {
        self.truncation(level) == self.truncation(level + 1)
    }

    fn uses_history(&self, level: usize) -> bool {
        self.steppers[level].config().scheme == Scheme::SlSiSettls
    }
}

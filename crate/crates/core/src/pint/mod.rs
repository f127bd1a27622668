//! Parareal and MGRIT over a hierarchy of time levels.
//!
//! The engines are generic over [`PintProblem`], which supplies one time step
//! per level and the spatial transfer between neighbouring levels. The
//! shallow-water hierarchy lives in [`swe`]; [`ScalarProblem`] is the
//! one-mode linear test equation used by the recurrence oracles.

mod engine;
pub mod swe;

use std::time::Duration;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::PrognosticState;
use crate::stepping::{SettlsMode, StepError};

pub use engine::{fine_serial, mgrit_iteration, mgrit_run, parareal_run, relax_fcf, Relaxed};
pub use swe::{LevelSpec, PintConfig, SweProblem};

/// Any spectral max this many times the initial one counts as a blow-up.
pub const BLOWUP_FACTOR: f64 = 1e10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PintError {
    #[error("invalid PinT configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// What the engines need from a state: a vector space with a size measure.
pub trait PintState: Clone + Send + Sync {
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn max_abs(&self) -> f64;
    fn is_finite(&self) -> bool;
}

impl PintState for f64 {
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn max_abs(&self) -> f64 {
        self.abs()
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl PintState for Complex64 {
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn max_abs(&self) -> f64 {
        self.norm()
    }
    fn is_finite(&self) -> bool {
        Complex64::is_finite(*self)
    }
}

impl PintState for PrognosticState {
    fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(1.0, other);
        out
    }
    fn minus(&self, other: &Self) -> Self {
        self.sub(other)
    }
    fn max_abs(&self) -> f64 {
        PrognosticState::max_abs(self)
    }
    fn is_finite(&self) -> bool {
        PrognosticState::is_finite(self)
    }
}

/// A level hierarchy. Level 0 is the finest; `restrict(l, ·)` maps level `l`
/// to `l + 1` and `prolong(l, ·)` maps back.
pub trait PintProblem: Sync {
    type State: PintState;

    fn num_levels(&self) -> usize;

    /// One step on `level`. `previous` is the state one step earlier when the
    /// two-step SETTLS history is wanted.
    fn step(&self, level: usize, u: &Self::State, previous: Option<&Self::State>) -> Result<Self::State, StepError>;

    fn restrict(&self, level: usize, u: &Self::State) -> Self::State;

    fn prolong(&self, level: usize, u: &Self::State) -> Self::State;

    /// True when levels `level` and `level + 1` share the spatial
    /// discretisation, so transfers are the identity.
    fn same_space(&self, _level: usize) -> bool {
        false
    }

    /// True when the level's stepper can use a previous state.
    fn uses_history(&self, _level: usize) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleKind {
    /// F-cycle with one V-cycle after each coarse F-cycle.
    #[default]
    FThenV,
    V,
}

/// Time-grid parameters shared by the engines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PintParams {
    pub nlevels: usize,
    pub cfactor: usize,
    pub nrelax: usize,
    /// Fine steps over the whole horizon.
    pub n0: usize,
    pub max_iters: usize,
    /// Level-0 slices per simulated processor.
    pub chunk_size: usize,
    pub cycle: CycleKind,
}

impl PintParams {
    pub fn two_level(cfactor: usize, nrelax: usize, slices: usize, max_iters: usize) -> Self {
        Self {
            nlevels: 2,
            cfactor,
            nrelax,
            n0: slices * cfactor,
            max_iters,
            chunk_size: slices.max(1),
            cycle: CycleKind::FThenV,
        }
    }

    pub fn validate(&self) -> Result<(), PintError> {
        let bad = |m: String| Err(PintError::InvalidConfig(m));
        if self.nlevels < 2 {
            return bad(format!("nlevels must be at least 2, got {}", self.nlevels));
        }
        if self.cfactor < 2 {
            return bad(format!("cfactor must be at least 2, got {}", self.cfactor));
        }
        if self.chunk_size == 0 {
            return bad("chunk_size must be positive".into());
        }
        let coarsest = self.cfactor.checked_pow((self.nlevels - 1) as u32);
        match coarsest {
            Some(c) if self.n0 > 0 && self.n0 % c == 0 => Ok(()),
            _ => bad(format!(
                "n0 = {} is not a positive multiple of cfactor^(nlevels-1)",
                self.n0
            )),
        }
    }

    /// Number of steps on `level`.
    pub fn steps(&self, level: usize) -> usize {
        self.n0 / self.cfactor.pow(level as u32)
    }

    /// Number of level-0 slices, i.e. level-0 C-intervals.
    pub fn slices(&self) -> usize {
        self.steps(1)
    }

    /// Iterations after which the two-level iteration reproduces the fine
    /// solution exactly.
    pub fn exactness_bound(&self) -> usize {
        self.slices().div_ceil(self.nrelax + 1)
    }
}

/// Per-step SETTLS mode on `level` with `n_steps` steps.
///
/// The coarsest level runs two-step except at steps starting on a chunk
/// boundary; every other level runs one-step. Step 0 has no history and is
/// always one-step.
pub fn settls_boundary_policy(
    level: usize,
    nlevels: usize,
    cfactor: usize,
    n_steps: usize,
    chunk_size: usize,
) -> Vec<SettlsMode> {
    if level + 1 != nlevels || level == 0 {
        return vec![SettlsMode::OneStep; n_steps];
    }
    // Each coarsest-level step covers cfactor^(level-1) level-0 slices.
    let per_step = cfactor.pow(level as u32 - 1);
    let chunk = chunk_size.max(1);
    (0..n_steps)
        .map(|i| {
            let slice = i * per_step;
            if slice % chunk == 0 {
                SettlsMode::OneStep
            } else {
                SettlsMode::TwoStep
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BlowUp { iteration: usize, slice: usize, reason: String },
}

impl RunStatus {
    pub fn is_blow_up(&self) -> bool {
        matches!(self, RunStatus::BlowUp { .. })
    }
}

/// Level-0 C-point values per iteration. `iterates[0]` is the coarse serial
/// initial guess; `iterates[k][n]` sits at the start of slice `n`, so the last
/// entry is the final time.
#[derive(Debug, Clone)]
pub struct IterationTrace<S> {
    pub iterates: Vec<Vec<S>>,
    /// Wall time spent producing each iterate.
    pub wall: Vec<Duration>,
    pub status: RunStatus,
}

impl<S> IterationTrace<S> {
    pub fn completed_iterations(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    pub fn last(&self) -> Option<&Vec<S>> {
        self.iterates.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRecord {
    pub iteration: usize,
    pub workers: usize,
    /// Cumulative PinT wall time through this iteration, seconds.
    pub t_pint: f64,
    pub t_ref: f64,
    pub speedup: f64,
}

/// `S = T_ref / T_PinT` with `T_PinT` accumulated over iterations.
pub fn speedup_report<S>(trace: &IterationTrace<S>, t_ref: Duration, workers: usize) -> Vec<SpeedupRecord> {
    let t_ref = t_ref.as_secs_f64();
    let mut acc = 0.0;
    trace
        .wall
        .iter()
        .enumerate()
        .map(|(k, w)| {
            acc += w.as_secs_f64();
            SpeedupRecord {
                iteration: k,
                workers,
                t_pint: acc,
                t_ref,
                speedup: if acc > 0.0 { t_ref / acc } else { f64::INFINITY },
            }
        })
        .collect()
}

/// `u' = λu` with a fixed amplification factor per level. Transfers are the
/// identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarProblem {
    pub factors: Vec<Complex64>,
}

impl ScalarProblem {
    pub fn new(factors: Vec<Complex64>) -> Self {
        Self { factors }
    }
}

impl PintProblem for ScalarProblem {
    type State = Complex64;

    fn num_levels(&self) -> usize {
        self.factors.len()
    }

    fn step(&self, level: usize, u: &Complex64, _previous: Option<&Complex64>) -> Result<Complex64, StepError> {
        Ok(self.factors[level] * u)
    }

    fn restrict(&self, _level: usize, u: &Complex64) -> Complex64 {
        *u
    }

    fn prolong(&self, _level: usize, u: &Complex64) -> Complex64 {
        *u
    }

    fn same_space(&self, _level: usize) -> bool {
        true
    }
}

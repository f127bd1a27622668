//! Serial time steppers: Strang-split IMEX and SL-SI-SETTLS, both followed by
//! the implicit viscosity step.

pub mod semilag;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{apply_viscosity_in_place, DynamicsError, PrognosticState, SweModel, ViscositySpec};
use crate::harmonics::{GridField, HarmonicsError, SpectralField};

pub use semilag::{CartesianField, Departure, SemiLagrangian, SETTLS_ITERATIONS};

/// Relative tolerance of the Coriolis fixed-point iteration.
pub const CORIOLIS_TOL: f64 = 1e-12;
pub const CORIOLIS_MAX_ITERS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("singular implicit system for mode (m={m}, n={n})")]
    SingularMode { m: usize, n: usize },
    #[error("Coriolis iteration did not converge after {iterations} iterations (residual {residual:e})")]
    CoriolisNotConverged { iterations: usize, residual: f64 },
    #[error("departure point iteration {iteration} produced a non-finite point at grid index {index}")]
    DeparturePoint { iteration: usize, index: usize },
    #[error("invalid stepper configuration: {0}")]
    InvalidConfig(String),
    #[error("interval [{t0}, {t1}] is not a whole number of steps of {dt} s")]
    NonIntegralSlice { t0: f64, t1: f64, dt: f64 },
}

impl From<HarmonicsError> for StepError {
    fn from(e: HarmonicsError) -> Self {
        StepError::Dynamics(DynamicsError::Harmonics(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Imex,
    SlSiSettls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SettlsMode {
    #[default]
    TwoStep,
    OneStep,
}

/// Where `L_C` goes in the IMEX scheme. The SL scheme always treats it implicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoriolisTreatment {
    #[default]
    Implicit,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    pub scheme: Scheme,
    /// Time step in seconds.
    pub dt: f64,
    #[serde(default)]
    pub viscosity: ViscositySpec,
    #[serde(default)]
    pub settls_mode: SettlsMode,
    #[serde(default)]
    pub coriolis: CoriolisTreatment,
    /// Switching this off leaves the linear problem `∂U/∂t = LU`.
    #[serde(default = "default_true")]
    pub nonlinear: bool,
}

fn default_true() -> bool {
    true
}

impl StepperConfig {
    pub fn imex(dt: f64) -> Self {
        Self {
            scheme: Scheme::Imex,
            dt,
            viscosity: ViscositySpec::none(),
            settls_mode: SettlsMode::TwoStep,
            coriolis: CoriolisTreatment::Implicit,
            nonlinear: true,
        }
    }

    pub fn settls(dt: f64, mode: SettlsMode) -> Self {
        Self {
            scheme: Scheme::SlSiSettls,
            settls_mode: mode,
            ..Self::imex(dt)
        }
    }

    pub fn with_viscosity(mut self, viscosity: ViscositySpec) -> Self {
        self.viscosity = viscosity;
        self
    }

    pub fn linear_only(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(StepError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        self.viscosity
            .validate()
            .map_err(|e| StepError::InvalidConfig(e.to_string()))
    }
}

/// Current state plus the SL two-step history.
#[derive(Debug, Clone, PartialEq)]
pub struct StepperState {
    pub current: PrognosticState,
    pub previous: Option<PrognosticState>,
}

impl StepperState {
    pub fn new(current: PrognosticState) -> Self {
        Self {
            current,
            previous: None,
        }
    }
}

/// A configured propagator at one resolution.
#[derive(Debug, Clone)]
pub struct Stepper {
    model: SweModel,
    config: StepperConfig,
    semilag: Option<Arc<SemiLagrangian>>,
}

impl Stepper {
    pub fn new(model: SweModel, config: StepperConfig) -> Result<Self, StepError> {
        config.validate()?;
        let semilag = match config.scheme {
            Scheme::SlSiSettls => Some(Arc::new(SemiLagrangian::new(model.transform()))),
            Scheme::Imex => None,
        };
        Ok(Self {
            model,
            config,
            semilag,
        })
    }

    pub fn model(&self) -> &SweModel {
        &self.model
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    fn implicit_coriolis(&self) -> bool {
        self.config.scheme == Scheme::SlSiSettls || self.config.coriolis == CoriolisTreatment::Implicit
    }

    /// The part of `L` treated implicitly by this stepper.
    pub fn implicit_operator(&self, s: &PrognosticState) -> Result<PrognosticState, StepError> {
        if self.implicit_coriolis() {
            Ok(self.model.linear(s)?)
        } else {
            Ok(self.model.linear_gravity(s)?)
        }
    }

    /// The explicitly integrated part of the IMEX tendency.
    fn explicit_operator(&self, s: &PrognosticState) -> Result<Option<PrognosticState>, StepError> {
        let mut out: Option<PrognosticState> = None;
        if self.config.nonlinear {
            out = Some(self.model.nonlinear(s)?);
        }
        if !self.implicit_coriolis() {
            let c = self.model.linear_coriolis(s)?;
            out = Some(match out {
                Some(mut o) => {
                    o.add_scaled(1.0, &c);
                    o
                }
                None => c,
            });
        }
        Ok(out)
    }

    /// Per-mode solve of `(I − αL_G)U = rhs`.
    fn helmholtz_solve(&self, rhs: &PrognosticState, alpha: f64) -> Result<PrognosticState, StepError> {
        let trunc = rhs.truncation();
        let phibar = rhs.phibar;
        let mut out = rhs.clone();
        for (i, (m, n)) in trunc.modes().enumerate() {
            let k = self.model.eigen(n);
            let det = 1.0 + alpha * alpha * phibar * k;
            if det == 0.0 || !det.is_finite() {
                return Err(StepError::SingularMode { m, n });
            }
            let rp = rhs.phi.coeffs()[i];
            let rd = rhs.delta.coeffs()[i];
            let d = (rd + rp * (alpha * k)) / det;
            out.delta.coeffs_mut()[i] = d;
            out.phi.coeffs_mut()[i] = rp - d * (alpha * phibar);
        }
        Ok(out)
    }

    /// Solves `(I − αL)U = rhs` for the implicitly treated `L`.
    ///
    /// `L_G` is inverted mode by mode; an implicit `L_C` is handled by the
    /// fixed-point iteration `U ← H⁻¹(rhs + αL_C U)`.
    pub fn implicit_linear_solve(&self, rhs: &PrognosticState, alpha: f64) -> Result<PrognosticState, StepError> {
        if alpha == 0.0 {
            return Ok(rhs.clone());
        }
        let mut u = self.helmholtz_solve(rhs, alpha)?;
        if !self.implicit_coriolis() || self.model.geometry().omega == 0.0 {
            return Ok(u);
        }
        let mut residual = f64::INFINITY;
        for _ in 0..CORIOLIS_MAX_ITERS {
            let mut r = rhs.clone();
            r.add_scaled(alpha, &self.model.linear_coriolis(&u)?);
            let next = self.helmholtz_solve(&r, alpha)?;
            let diff = next.sub(&u);
            // ξ and δ share units and L_C trades between them, so they share
            // a scale; a near-zero δ would otherwise never look converged.
            let wind_scale = next.xi.max_abs().max(next.delta.max_abs());
            let rel = |d: &SpectralField, scale: f64| {
                if scale == 0.0 {
                    d.max_abs()
                } else {
                    d.max_abs() / scale
                }
            };
            residual = rel(&diff.phi, next.phi.max_abs())
                .max(rel(&diff.xi, wind_scale))
                .max(rel(&diff.delta, wind_scale));
            u = next;
            if residual <= CORIOLIS_TOL {
                return Ok(u);
            }
            if !residual.is_finite() {
                break;
            }
        }
        Err(StepError::CoriolisNotConverged {
            iterations: CORIOLIS_MAX_ITERS,
            residual,
        })
    }

    /// Crank–Nicolson half step `(I − αL)U* = (I + αL)U`.
    fn crank_nicolson(&self, u: &PrognosticState, alpha: f64) -> Result<PrognosticState, StepError> {
        let mut rhs = u.clone();
        rhs.add_scaled(alpha, &self.implicit_operator(u)?);
        self.implicit_linear_solve(&rhs, alpha)
    }

    /// One IMEX step: CN over `Δt/2`, Heun over `Δt`, CN over `Δt/2`, viscosity.
    pub fn imex_step(&self, u: &PrognosticState) -> Result<PrognosticState, StepError> {
        let dt = self.config.dt;
        let alpha = dt / 4.0;
        let star = self.crank_nicolson(u, alpha)?;
        let star2 = match self.explicit_operator(&star)? {
            None => star,
            Some(k1) => {
                let mut pred = star.clone();
                pred.add_scaled(dt, &k1);
                let k2 = self
                    .explicit_operator(&pred)?
                    .expect("explicit operator present");
                let mut out = star;
                out.add_scaled(0.5 * dt, &k1);
                out.add_scaled(0.5 * dt, &k2);
                out
            }
        };
        let mut out = self.crank_nicolson(&star2, alpha)?;
        apply_viscosity_in_place(&mut out, &self.config.viscosity, dt, self.model.radius());
        Ok(out)
    }

    fn semilag(&self) -> &SemiLagrangian {
        self.semilag.as_deref().expect("semi-Lagrangian tables for SL stepper")
    }

    /// `N_R` on the grid.
    fn rest_grid(&self, s: &PrognosticState) -> Result<GridField, StepError> {
        let tr = self.model.transform();
        let pp = tr.synthesis(&s.phi_prime())?;
        let d = tr.synthesis(&s.delta)?;
        Ok(pp.zip_map(&d, |a, b| -a * b))
    }

    /// One SL-SI-SETTLS step from `current`, with `previous` as `U^{n−1}`.
    ///
    /// Passing `None` (or `current` itself) gives the one-step variant.
    pub fn settls_step(
        &self,
        current: &PrognosticState,
        previous: Option<&PrognosticState>,
    ) -> Result<PrognosticState, StepError> {
        self.settls_step_traced(current, previous).map(|(s, _)| s)
    }

    /// As [`Self::settls_step`], also returning the departure points.
    pub fn settls_step_traced(
        &self,
        current: &PrognosticState,
        previous: Option<&PrognosticState>,
    ) -> Result<(PrognosticState, Departure), StepError> {
        let dt = self.config.dt;
        let half = 0.5 * dt;
        let prev = previous.unwrap_or(current);
        let tr = self.model.transform();
        let sl = self.semilag();

        let mut x = current.clone();
        x.add_scaled(half, &self.model.linear(current)?);

        let departure = if self.config.nonlinear {
            let (un, vn) = self.model.wind(current)?;
            let (up, vp) = self.model.wind(prev)?;
            let wn = sl.to_cartesian(&un, &vn);
            let wp = sl.to_cartesian(&up, &vp);
            sl.departure_points(&wn, &wn.combine(2.0, &wp, -1.0), dt)?
        } else {
            Departure {
                points: sl.arrival_points().to_vec(),
                increments: vec![0.0; SETTLS_ITERATIONS],
            }
        };

        let phi_x = tr.synthesis(&x.phi)?;
        let (ux, vx) = self.model.wind(&x)?;
        let wx = sl.to_cartesian(&ux, &vx);
        let mut sources: Vec<&[f64]> = vec![phi_x.values(), &wx.x, &wx.y, &wx.z];

        let (nr_now, nr_ext) = if self.config.nonlinear {
            let now = self.rest_grid(current)?;
            let before = if std::ptr::eq(prev, current) {
                now.clone()
            } else {
                self.rest_grid(prev)?
            };
            let ext = now.zip_map(&before, |a, b| 2.0 * a - b);
            (Some(now), Some(ext))
        } else {
            (None, None)
        };
        if let Some(ext) = &nr_ext {
            sources.push(ext.values());
        }
        let interp = sl.interpolate_many(&sources, &departure.points);

        let mut rphi = interp[0].clone();
        if let (Some(now), Some(_)) = (&nr_now, &nr_ext) {
            for ((r, e), nv) in rphi.iter_mut().zip(&interp[4]).zip(now.values()) {
                *r += half * (e + nv);
            }
        }
        let vecs: Vec<[f64; 3]> = (0..interp[1].len())
            .map(|i| [interp[1][i], interp[2][i], interp[3][i]])
            .collect();
        let rotated = sl.rotate_to_arrival(&departure.points, &vecs);
        let (ua, va) = sl.to_local(&rotated);
        let (xi, delta) = tr.vort_div_from_wind(&ua, &va)?;
        let rhs = PrognosticState {
            phi: tr.analysis(&GridField::from_values(tr.truncation(), rphi)?)?,
            xi,
            delta,
            phibar: current.phibar,
        };
        let mut out = self.implicit_linear_solve(&rhs, half)?;
        apply_viscosity_in_place(&mut out, &self.config.viscosity, dt, self.model.radius());
        Ok((out, departure))
    }

    /// One step with an explicit SETTLS mode, ignoring the configured one.
    pub fn step_with_mode(
        &self,
        current: &PrognosticState,
        previous: Option<&PrognosticState>,
        mode: SettlsMode,
    ) -> Result<PrognosticState, StepError> {
        match self.config.scheme {
            Scheme::Imex => self.imex_step(current),
            Scheme::SlSiSettls => match mode {
                SettlsMode::OneStep => self.settls_step(current, None),
                SettlsMode::TwoStep => self.settls_step(current, previous),
            },
        }
    }

    /// One step, maintaining the two-step history.
    pub fn step(&self, state: &StepperState) -> Result<StepperState, StepError> {
        let next = self.step_with_mode(&state.current, state.previous.as_ref(), self.config.settls_mode)?;
        let keep_history =
            self.config.scheme == Scheme::SlSiSettls && self.config.settls_mode == SettlsMode::TwoStep;
        Ok(StepperState {
            previous: keep_history.then(|| state.current.clone()),
            current: next,
        })
    }

    /// Number of steps covering `[t0, t1]`.
    pub fn steps_between(&self, t0: f64, t1: f64) -> Result<usize, StepError> {
        let dt = self.config.dt;
        let ratio = (t1 - t0) / dt;
        let n = ratio.round();
        if !(n >= 0.0) || (ratio - n).abs() > 1e-9 * n.max(1.0) {
            return Err(StepError::NonIntegralSlice { t0, t1, dt });
        }
        Ok(n as usize)
    }

    pub fn propagate(&self, state: &StepperState, t0: f64, t1: f64) -> Result<StepperState, StepError> {
        let n = self.steps_between(t0, t1)?;
        let mut s = state.clone();
        for _ in 0..n {
            s = self.step(&s)?;
        }
        Ok(s)
    }

    /// Zero spectral field at this resolution; convenient for callers.
    pub fn zeros(&self) -> SpectralField {
        SpectralField::zeros(self.model.truncation())
    }
}

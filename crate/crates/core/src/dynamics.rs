//! Right-hand side of the shallow water equations in vorticity–divergence
//! form, split into linear gravity (`L_G`), linear Coriolis (`L_C`),
//! nonlinear advection (`N_A`) and the remaining nonlinear term (`N_R`), plus
//! the implicit (hyper)viscosity operator.
//!
//! All products are formed on the Gaussian grid of the state's truncation.
//! Velocities are handled as `U = u cos θ`, `V = v cos θ`, which are smooth
//! at the poles.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harmonics::{GridField, HarmonicsError, SpectralField, SphereGeometry, SphereTransform, Truncation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
    #[error("invalid viscosity: {0}")]
    InvalidViscosity(String),
    #[error("state truncation {actual} does not match model truncation {expected}")]
    TruncationMismatch { expected: usize, actual: usize },
}

/// Prognostic variables `(Φ, ξ, δ)`; `phi` holds the total geopotential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrognosticState {
    pub phi: SpectralField,
    pub xi: SpectralField,
    pub delta: SpectralField,
    /// Mean geopotential `Φ̄`, constant in time.
    pub phibar: f64,
}

impl PrognosticState {
    pub fn zeros(trunc: Truncation, phibar: f64) -> Self {
        Self {
            phi: SpectralField::zeros(trunc),
            xi: SpectralField::zeros(trunc),
            delta: SpectralField::zeros(trunc),
            phibar,
        }
    }

    /// A state at rest with `Φ ≡ Φ̄`.
    pub fn at_rest(trunc: Truncation, phibar: f64) -> Self {
        let mut s = Self::zeros(trunc, phibar);
        s.phi.set(0, 0, Complex64::new(phibar * (4.0 * PI).sqrt(), 0.0));
        s
    }

    pub fn truncation(&self) -> Truncation {
        self.phi.truncation()
    }

    /// `Φ′ = Φ − Φ̄` in spectral space.
    pub fn phi_prime(&self) -> SpectralField {
        let mut p = self.phi.clone();
        let c = p.get(0, 0);
        p.set(0, 0, c - self.phibar * (4.0 * PI).sqrt());
        p
    }

    pub fn fields(&self) -> [&SpectralField; 3] {
        [&self.phi, &self.xi, &self.delta]
    }

    pub fn fields_mut(&mut self) -> [&mut SpectralField; 3] {
        [&mut self.phi, &mut self.xi, &mut self.delta]
    }

    /// `self += alpha * other` on all three fields; `phibar` is kept.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        self.phi.add_scaled(alpha, &other.phi);
        self.xi.add_scaled(alpha, &other.xi);
        self.delta.add_scaled(alpha, &other.delta);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            phi: self.phi.scaled(alpha),
            xi: self.xi.scaled(alpha),
            delta: self.delta.scaled(alpha),
            phibar: self.phibar,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.fields().iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.fields().iter().all(|f| f.is_finite())
    }

    /// Spectral truncation or zero-padding of every field.
    pub fn resample(&self, trunc: Truncation) -> Self {
        Self {
            phi: self.phi.resample(trunc),
            xi: self.xi.resample(trunc),
            delta: self.delta.resample(trunc),
            phibar: self.phibar,
        }
    }

    pub fn truncate_pad(&self, target: usize) -> Result<Self, HarmonicsError> {
        Ok(Self {
            phi: self.phi.truncate_pad(target)?,
            xi: self.xi.truncate_pad(target)?,
            delta: self.delta.truncate_pad(target)?,
            phibar: self.phibar,
        })
    }
}

/// Implicit `∇^q` dissipation with coefficient `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscositySpec {
    /// Even order `q ≥ 2`.
    pub order: u32,
    /// Coefficient `ν` in m^q s⁻¹.
    pub coeff: f64,
}

impl ViscositySpec {
    pub fn none() -> Self {
        Self { order: 2, coeff: 0.0 }
    }

    pub fn new(order: u32, coeff: f64) -> Result<Self, DynamicsError> {
        let v = Self { order, coeff };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.order < 2 || self.order % 2 != 0 {
            return Err(DynamicsError::InvalidViscosity(format!(
                "order must be an even integer >= 2, got {}",
                self.order
            )));
        }
        if !(self.coeff.is_finite() && self.coeff >= 0.0) {
            return Err(DynamicsError::InvalidViscosity(format!(
                "coefficient must be finite and non-negative, got {}",
                self.coeff
            )));
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.coeff > 0.0
    }

    /// Backward-Euler damping factor `[1 + Δt ν (n(n+1)/a²)^{q/2}]⁻¹`.
    pub fn damping_factor(&self, n: usize, dt: f64, radius: f64) -> f64 {
        let k2 = (n * (n + 1)) as f64 / (radius * radius);
        1.0 / (1.0 + dt * self.coeff * k2.powi(self.order as i32 / 2))
    }
}

impl Default for ViscositySpec {
    fn default() -> Self {
        Self::none()
    }
}

/// `ν` such that the highest retained degree `M` is damped on timescale `τ`:
/// `ν = (1/τ)(M(M+1)/a²)^{−q/2}`.
pub fn viscosity_coefficient_from_damping_time(
    max_wavenumber: usize,
    order: u32,
    tau: f64,
    radius: f64,
) -> Result<f64, DynamicsError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(DynamicsError::InvalidViscosity(format!(
            "damping time must be positive, got {tau}"
        )));
    }
    ViscositySpec { order, coeff: 0.0 }.validate()?;
    let k2 = (max_wavenumber * (max_wavenumber + 1)) as f64 / (radius * radius);
    Ok(k2.powi(-(order as i32) / 2) / tau)
}

/// Applies the implicit viscosity step to `Φ′`, `ξ`, `δ`. The `n = 0` factor
/// is exactly 1, so `Φ̄` is left untouched.
pub fn viscosity_step(state: &PrognosticState, spec: &ViscositySpec, dt: f64, radius: f64) -> PrognosticState {
    let mut out = state.clone();
    apply_viscosity_in_place(&mut out, spec, dt, radius);
    out
}

pub(crate) fn apply_viscosity_in_place(state: &mut PrognosticState, spec: &ViscositySpec, dt: f64, radius: f64) {
    if !spec.is_active() {
        return;
    }
    for f in state.fields_mut() {
        f.scale_by_degree_in_place(|n| spec.damping_factor(n, dt, radius));
    }
}

/// Grid quantities shared by several tendency terms.
struct GridWinds {
    u: GridField,
    v: GridField,
    /// `1 − μ²` for each grid point row.
    cos2: Vec<f64>,
}

/// Evaluates the SWE tendency terms at one truncation.
#[derive(Debug, Clone)]
pub struct SweModel {
    transform: Arc<SphereTransform>,
    coriolis: GridField,
}

impl SweModel {
    pub fn new(transform: Arc<SphereTransform>) -> Self {
        let omega = transform.geometry().omega;
        let coriolis = transform.grid_from_fn(|_, lat| 2.0 * omega * lat.sin());
        Self { transform, coriolis }
    }

    pub fn with_truncation(trunc: Truncation, geometry: SphereGeometry) -> Result<Self, DynamicsError> {
        Ok(Self::new(Arc::new(SphereTransform::new(trunc, geometry)?)))
    }

    pub fn transform(&self) -> &Arc<SphereTransform> {
        &self.transform
    }

    pub fn geometry(&self) -> &SphereGeometry {
        self.transform.geometry()
    }

    pub fn truncation(&self) -> Truncation {
        self.transform.truncation()
    }

    pub fn radius(&self) -> f64 {
        self.geometry().radius
    }

    /// `n(n+1)/a²`.
    pub fn eigen(&self, n: usize) -> f64 {
        let a = self.radius();
        (n * (n + 1)) as f64 / (a * a)
    }

    fn check(&self, s: &PrognosticState) -> Result<(), DynamicsError> {
        let t = s.truncation();
        if t != self.truncation() || s.xi.truncation() != t || s.delta.truncation() != t {
            return Err(DynamicsError::TruncationMismatch {
                expected: self.truncation().max_wavenumber(),
                actual: t.max_wavenumber(),
            });
        }
        Ok(())
    }

    fn winds(&self, s: &PrognosticState) -> Result<GridWinds, DynamicsError> {
        let (u, v) = self.transform.uv_cos_from_vort_div(&s.xi, &s.delta)?;
        let cos2 = self.transform.mu().iter().map(|m| 1.0 - m * m).collect();
        Ok(GridWinds { u, v, cos2 })
    }

    fn product(&self, a: &GridField, b: &GridField) -> GridField {
        a.zip_map(b, |x, y| x * y)
    }

    /// `(−Φ̄δ, 0, −∇²Φ)`, diagonal per mode.
    pub fn linear_gravity(&self, s: &PrognosticState) -> Result<PrognosticState, DynamicsError> {
        self.check(s)?;
        let t = s.truncation();
        let a2 = self.radius() * self.radius();
        Ok(PrognosticState {
            phi: s.delta.scaled(-s.phibar),
            xi: SpectralField::zeros(t),
            delta: s.phi.scale_by_degree(|n| (n * (n + 1)) as f64 / a2),
            phibar: s.phibar,
        })
    }

    /// `(0, −∇·(fV), k·∇×(fV))` with `f = 2Ω sin θ`, evaluated on the grid.
    pub fn linear_coriolis(&self, s: &PrognosticState) -> Result<PrognosticState, DynamicsError> {
        self.check(s)?;
        let w = self.winds(s)?;
        let fu = self.product(&self.coriolis, &w.u);
        let fv = self.product(&self.coriolis, &w.v);
        let (div, curl) = self.transform.div_curl_from_uv_cos(&fu, &fv)?;
        Ok(PrognosticState {
            phi: SpectralField::zeros(s.truncation()),
            xi: -&div,
            delta: curl,
            phibar: s.phibar,
        })
    }

    /// `(−V·∇Φ, −∇·(ξV), −∇²(V·V/2) + k·∇×(ξV))`.
    pub fn nonlinear_advection(&self, s: &PrognosticState) -> Result<PrognosticState, DynamicsError> {
        self.check(s)?;
        let tr = &self.transform;
        let w = self.winds(s)?;
        let nlon = self.truncation().nlon();

        let (gx, gy) = tr.gradient_cos(&s.phi)?;
        let mut adv = GridField::zeros(self.truncation());
        let mut ke = GridField::zeros(self.truncation());
        {
            let (u, v) = (w.u.values(), w.v.values());
            let (gxv, gyv) = (gx.values(), gy.values());
            let advv = adv.values_mut();
            for (j, c2) in w.cos2.iter().enumerate() {
                for k in j * nlon..(j + 1) * nlon {
                    advv[k] = -(u[k] * gxv[k] + v[k] * gyv[k]) / c2;
                }
            }
            let kev = ke.values_mut();
            for (j, c2) in w.cos2.iter().enumerate() {
                for k in j * nlon..(j + 1) * nlon {
                    kev[k] = 0.5 * (u[k] * u[k] + v[k] * v[k]) / c2;
                }
            }
        }
        let xi_grid = tr.synthesis(&s.xi)?;
        let xu = self.product(&xi_grid, &w.u);
        let xv = self.product(&xi_grid, &w.v);
        let (div, curl) = tr.div_curl_from_uv_cos(&xu, &xv)?;
        let ke_spec = tr.analysis(&ke)?;
        let a2 = self.radius() * self.radius();
        let mut delta = curl;
        delta.add_scaled(1.0, &ke_spec.scale_by_degree(|n| (n * (n + 1)) as f64 / a2));
        Ok(PrognosticState {
            phi: tr.analysis(&adv)?,
            xi: -&div,
            delta,
            phibar: s.phibar,
        })
    }

    /// `(−Φ′δ, 0, 0)`.
    pub fn nonlinear_rest(&self, s: &PrognosticState) -> Result<PrognosticState, DynamicsError> {
        self.check(s)?;
        let tr = &self.transform;
        let pp = tr.synthesis(&s.phi_prime())?;
        let d = tr.synthesis(&s.delta)?;
        let prod = pp.zip_map(&d, |a, b| -a * b);
        let t = s.truncation();
        Ok(PrognosticState {
            phi: tr.analysis(&prod)?,
            xi: SpectralField::zeros(t),
            delta: SpectralField::zeros(t),
            phibar: s.phibar,
        })
    }

    /// `L = L_G + L_C`.
    pub fn linear(&self, s: &PrognosticState) -> Result<PrognosticState, DynamicsError> {
        let mut out = self.linear_gravity(s)?;
        out.add_scaled(1.0, &self.linear_coriolis(s)?);
        Ok(out)
    }

    /// `N = N_A + N_R`.
    pub fn nonlinear(&self, s: &PrognosticState) -> Result<PrognosticState, DynamicsError> {
        let mut out = self.nonlinear_advection(s)?;
        out.add_scaled(1.0, &self.nonlinear_rest(s)?);
        Ok(out)
    }

    /// Full tendency evaluated in flux form in a single pass:
    /// `∂Φ/∂t = −Φ̄δ − ∇·(Φ′V)`, `∂ξ/∂t = −∇·((ξ+f)V)`,
    /// `∂δ/∂t = k·∇×((ξ+f)V) − ∇²(Φ + V·V/2)`.
    pub fn full_rhs(&self, s: &PrognosticState) -> Result<PrognosticState, DynamicsError> {
        self.check(s)?;
        let tr = &self.transform;
        let w = self.winds(s)?;
        let nlon = self.truncation().nlon();
        let pp = tr.synthesis(&s.phi_prime())?;
        let abs_vort = tr.synthesis(&s.xi)?.zip_map(&self.coriolis, |a, b| a + b);

        let (pu, pv) = (self.product(&pp, &w.u), self.product(&pp, &w.v));
        let (qu, qv) = (self.product(&abs_vort, &w.u), self.product(&abs_vort, &w.v));
        let mut energy = pp.clone();
        {
            let (u, v) = (w.u.values(), w.v.values());
            let e = energy.values_mut();
            for (j, c2) in w.cos2.iter().enumerate() {
                for k in j * nlon..(j + 1) * nlon {
                    e[k] += 0.5 * (u[k] * u[k] + v[k] * v[k]) / c2;
                }
            }
        }
        let (flux_div, _) = tr.div_curl_from_uv_cos(&pu, &pv)?;
        let (qdiv, qcurl) = tr.div_curl_from_uv_cos(&qu, &qv)?;
        let a2 = self.radius() * self.radius();
        let mut phi = s.delta.scaled(-s.phibar);
        phi.add_scaled(-1.0, &flux_div);
        let mut delta = qcurl;
        delta.add_scaled(1.0, &tr.analysis(&energy)?.scale_by_degree(|n| (n * (n + 1)) as f64 / a2));
        Ok(PrognosticState {
            phi,
            xi: -&qdiv,
            delta,
            phibar: s.phibar,
        })
    }

    /// Physical wind of a state.
    pub fn wind(&self, s: &PrognosticState) -> Result<(GridField, GridField), DynamicsError> {
        Ok(self.transform.wind_from_vort_div(&s.xi, &s.delta)?)
    }
}

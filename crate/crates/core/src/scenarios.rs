//! Initial conditions.
//!
//! Fields are projected onto the spectral basis by oversampled quadrature
//! (see [`project_fn`]) so that steep features do not alias into the retained
//! modes; initial conditions are then consistent across resolutions.

use std::cell::Cell;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::PrognosticState;
use crate::harmonics::{project_fn, GaussLegendre, HarmonicsError, SpectralField, SphereGeometry, Truncation};

/// Oversampling factor of the projection grid.
const PROJECTION_OVERSAMPLE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
    #[error("unknown scenario '{0}' (expected gaussian_bumps, unstable_jet, unstable_jet_unperturbed or solid_body)")]
    Unknown(String),
    #[error("balance integration failed to converge near latitude {latitude}")]
    Balance { latitude: f64 },
}

/// Great-circle distance on the unit sphere.
pub fn great_circle_distance(lon: f64, lat: f64, lon_c: f64, lat_c: f64) -> f64 {
    (lat.sin() * lat_c.sin() + lat.cos() * lat_c.cos() * (lon - lon_c).cos())
        .clamp(-1.0, 1.0)
        .acos()
}

pub mod bumps {
    use std::f64::consts::PI;

    /// Mean depth `h̄` in metres.
    pub const MEAN_DEPTH: f64 = 29400.0;
    /// Bump amplitude `A` in metres.
    pub const AMPLITUDE: f64 = 6000.0;
    pub const CENTERS: [(f64, f64); 3] = [(PI / 5.0, PI / 3.0), (6.0 * PI / 5.0, PI / 5.0), (8.0 * PI / 5.0, -PI / 4.0)];
    pub const SHARPNESS: [f64; 3] = [20.0, 80.0, 360.0];
    /// 36 h.
    pub const HORIZON: f64 = 36.0 * 3600.0;
}

/// Height perturbation of the three Gaussian bumps, in metres.
pub fn bumps_height(lon: f64, lat: f64) -> f64 {
    bumps::CENTERS
        .iter()
        .zip(bumps::SHARPNESS)
        .map(|(&(lc, tc), a)| {
            let d = great_circle_distance(lon, lat, lc, tc);
            (-a * d * d).exp()
        })
        .sum::<f64>()
        * bumps::AMPLITUDE
}

/// Fluid at rest with `Φ = g(h̄ + h_bumps)`.
pub fn gaussian_bumps(trunc: Truncation, geometry: &SphereGeometry) -> Result<PrognosticState, ScenarioError> {
    let g = geometry.gravity;
    let phi = project_fn(trunc, PROJECTION_OVERSAMPLE, |lon, lat| {
        g * (bumps::MEAN_DEPTH + bumps_height(lon, lat))
    })?;
    Ok(PrognosticState {
        phi,
        xi: SpectralField::zeros(trunc),
        delta: SpectralField::zeros(trunc),
        phibar: g * bumps::MEAN_DEPTH,
    })
}

/// Barotropically unstable mid-latitude jet (Galewsky et al., 2004).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JetParams {
    /// Peak zonal wind, m s⁻¹.
    pub u_max: f64,
    /// Southern edge of the jet, radians.
    pub lat0: f64,
    /// Northern edge of the jet, radians.
    pub lat1: f64,
    /// Global mean depth, m.
    pub mean_depth: f64,
    /// Perturbation height `ĥ`, m. Zero gives the steady balanced jet.
    pub perturbation: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Latitude of the perturbation centre, radians.
    pub lat2: f64,
}

impl Default for JetParams {
    fn default() -> Self {
        let lat0 = PI / 7.0;
        Self {
            u_max: 80.0,
            lat0,
            lat1: PI / 2.0 - lat0,
            mean_depth: 10000.0,
            perturbation: 120.0,
            alpha: 1.0 / 3.0,
            beta: 1.0 / 15.0,
            lat2: PI / 4.0,
        }
    }
}

impl JetParams {
    pub fn unperturbed() -> Self {
        Self {
            perturbation: 0.0,
            ..Self::default()
        }
    }

    fn en(&self) -> f64 {
        (-4.0 / (self.lat1 - self.lat0).powi(2)).exp()
    }

    /// Zonal wind `u(φ)`; identically zero outside `(lat0, lat1)`.
    pub fn zonal_wind(&self, lat: f64) -> f64 {
        if lat <= self.lat0 || lat >= self.lat1 {
            return 0.0;
        }
        self.u_max / self.en() * (1.0 / ((lat - self.lat0) * (lat - self.lat1))).exp()
    }

    /// Relative vorticity `−(1/(a cos φ)) d(u cos φ)/dφ` of the jet.
    pub fn vorticity(&self, lat: f64, radius: f64) -> f64 {
        let u = self.zonal_wind(lat);
        if u == 0.0 {
            return 0.0;
        }
        let q = (lat - self.lat0) * (lat - self.lat1);
        let du = -u * (2.0 * lat - self.lat0 - self.lat1) / (q * q);
        -(du - u * lat.tan()) / radius
    }

    /// Height perturbation in metres.
    pub fn perturbation_height(&self, lon: f64, lat: f64) -> f64 {
        if self.perturbation == 0.0 {
            return 0.0;
        }
        // Longitude measured in (−π, π].
        let mut l = lon;
        while l > PI {
            l -= 2.0 * PI;
        }
        self.perturbation
            * lat.cos()
            * (-(l / self.alpha).powi(2)).exp()
            * (-((self.lat2 - lat) / self.beta).powi(2)).exp()
    }
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    tol: f64,
    depth: usize,
) -> Option<f64> {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    Some(
        adaptive_simpson_rec(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)?
            + adaptive_simpson_rec(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)?,
    )
}

/// `∫_a^b f` by adaptive Simpson; `None` if the recursion limit is reached.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Option<f64> {
    if a == b {
        return Some(0.0);
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(&f, a, fa, b, fb);
    adaptive_simpson_rec(&f, a, fa, b, fb, whole, m, fm, tol, 40)
}

/// Balanced geopotential `Φ(φ)` of a zonal flow, up to a constant:
/// `−∫ a u (f + u tan φ / a) dφ` from the southern edge of the jet.
fn jet_balance_offset(params: &JetParams, geometry: &SphereGeometry, lat: f64) -> Result<f64, ScenarioError> {
    let upper = lat.clamp(params.lat0, params.lat1);
    let a = geometry.radius;
    let om = geometry.omega;
    let integrand = |p: f64| {
        let u = params.zonal_wind(p);
        a * u * (2.0 * om * p.sin() + u * p.tan() / a)
    };
    adaptive_simpson(integrand, params.lat0, upper, 1e-8)
        .map(|v| -v)
        .ok_or(ScenarioError::Balance { latitude: lat })
}

pub fn unstable_jet(
    trunc: Truncation,
    geometry: &SphereGeometry,
    params: &JetParams,
) -> Result<PrognosticState, ScenarioError> {
    let g = geometry.gravity;
    // Constant chosen so the unperturbed depth has the prescribed global mean.
    let quad = GaussLegendre::new(256)?;
    let mut mean = 0.0;
    for (&mu, &w) in quad.nodes.iter().zip(&quad.weights) {
        mean += 0.5 * w * jet_balance_offset(params, geometry, mu.asin())?;
    }
    let base = g * params.mean_depth - mean;

    let cache: Cell<(f64, f64)> = Cell::new((f64::NAN, 0.0));
    let failure: Cell<Option<f64>> = Cell::new(None);
    let phi = project_fn(trunc, PROJECTION_OVERSAMPLE, |lon, lat| {
        let (cached_lat, cached) = cache.get();
        let offset = if cached_lat == lat {
            cached
        } else {
            let v = jet_balance_offset(params, geometry, lat).unwrap_or_else(|_| {
                failure.set(Some(lat));
                0.0
            });
            cache.set((lat, v));
            v
        };
        base + offset + g * params.perturbation_height(lon, lat)
    })?;
    if let Some(latitude) = failure.get() {
        return Err(ScenarioError::Balance { latitude });
    }
    let xi = project_fn(trunc, PROJECTION_OVERSAMPLE, |_, lat| params.vorticity(lat, geometry.radius))?;
    Ok(PrognosticState {
        phi,
        xi,
        delta: SpectralField::zeros(trunc),
        phibar: g * params.mean_depth,
    })
}

/// Zonal solid-body rotation with a height bump riding on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolidBodyParams {
    /// Equatorial wind speed, m s⁻¹.
    pub u0: f64,
    /// Mean geopotential `g h₀`, m² s⁻².
    pub phi0: f64,
    /// Bump height, m.
    pub bump_height: f64,
    pub bump_center: (f64, f64),
    pub bump_sharpness: f64,
}

impl SolidBodyParams {
    /// Speed of one revolution per `days` days on a sphere of radius `a`.
    pub fn revolution_speed(radius: f64, days: f64) -> f64 {
        2.0 * PI * radius / (days * 86400.0)
    }

    pub fn with_speed(u0: f64) -> Self {
        Self {
            u0,
            phi0: 2.94e4,
            bump_height: 100.0,
            bump_center: (1.5 * PI, 0.0),
            bump_sharpness: 20.0,
        }
    }

    /// Bump height in metres at `(λ, θ)`.
    pub fn bump(&self, lon: f64, lat: f64) -> f64 {
        let d = great_circle_distance(lon, lat, self.bump_center.0, self.bump_center.1);
        self.bump_height * (-self.bump_sharpness * d * d).exp()
    }
}

impl Default for SolidBodyParams {
    fn default() -> Self {
        Self::with_speed(Self::revolution_speed(SphereGeometry::EARTH_RADIUS, 12.0))
    }
}

/// Geostrophically balanced solid-body flow `u = u0 cos θ` plus a bump.
pub fn solid_body_test(
    trunc: Truncation,
    geometry: &SphereGeometry,
    params: &SolidBodyParams,
) -> Result<PrognosticState, ScenarioError> {
    let (a, om, g, u0) = (geometry.radius, geometry.omega, geometry.gravity, params.u0);
    let phi = project_fn(trunc, PROJECTION_OVERSAMPLE, |lon, lat| {
        params.phi0 - (a * om * u0 + 0.5 * u0 * u0) * lat.sin().powi(2) + g * params.bump(lon, lat)
    })?;
    let mut xi = SpectralField::zeros(trunc);
    // 2 u0 sin θ / a is exactly the (0, 1) mode: sin θ = √(4π/3) Y_{0,1}.
    xi.set(0, 1, Complex64::new(2.0 * u0 / a * (4.0 * PI / 3.0).sqrt(), 0.0));
    Ok(PrognosticState {
        phi,
        xi,
        delta: SpectralField::zeros(trunc),
        phibar: params.phi0,
    })
}

/// A named initial-value problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    GaussianBumps,
    UnstableJet(JetParams),
    SolidBody(SolidBodyParams),
}

impl Scenario {
    pub fn from_name(name: &str) -> Result<Self, ScenarioError> {
        match name {
            "gaussian_bumps" => Ok(Self::GaussianBumps),
            "unstable_jet" => Ok(Self::UnstableJet(JetParams::default())),
            "unstable_jet_unperturbed" => Ok(Self::UnstableJet(JetParams::unperturbed())),
            "solid_body" => Ok(Self::SolidBody(SolidBodyParams::default())),
            other => Err(ScenarioError::Unknown(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::GaussianBumps => "gaussian_bumps",
            Self::UnstableJet(p) if p.perturbation == 0.0 => "unstable_jet_unperturbed",
            Self::UnstableJet(_) => "unstable_jet",
            Self::SolidBody(_) => "solid_body",
        }
    }

    /// Default integration horizon in seconds.
    pub fn horizon(&self) -> f64 {
        match self {
            Self::GaussianBumps => bumps::HORIZON,
            Self::UnstableJet(_) => 144.0 * 3600.0,
            Self::SolidBody(_) => 12.0 * 86400.0,
        }
    }

    pub fn phibar(&self, geometry: &SphereGeometry) -> f64 {
        match self {
            Self::GaussianBumps => geometry.gravity * bumps::MEAN_DEPTH,
            Self::UnstableJet(p) => geometry.gravity * p.mean_depth,
            Self::SolidBody(p) => p.phi0,
        }
    }

    pub fn initial_state(&self, trunc: Truncation, geometry: &SphereGeometry) -> Result<PrognosticState, ScenarioError> {
        match self {
            Self::GaussianBumps => gaussian_bumps(trunc, geometry),
            Self::UnstableJet(p) => unstable_jet(trunc, geometry, p),
            Self::SolidBody(p) => solid_body_test(trunc, geometry, p),
        }
    }
}

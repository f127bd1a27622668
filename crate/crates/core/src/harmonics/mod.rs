//! Spherical-harmonic transforms on a Gaussian grid.
//!
//! # Normalisation
//!
//! The basis is orthonormal on the unit sphere:
//! `Y_{m,n}(λ, μ) = P̄_n^m(μ) e^{imλ}` with `∫_S |Y_{m,n}|² dΩ = 1` and
//! `Y_{-m,n} = conj(Y_{m,n})`. A real field is stored through its `m ≥ 0`
//! coefficients only (`ψ_{-m,n} = conj(ψ_{m,n})`) and the `m = 0`
//! coefficients are real. A constant field `c` has `ψ_{0,0} = c·√(4π)`, and
//! `∫_S f² dΩ = Σ_n |ψ_{0,n}|² + 2 Σ_{m>0} Σ_n |ψ_{m,n}|²`.
//!
//! # Grid
//!
//! Latitudes are Gaussian nodes `μ_j` (strictly decreasing, north to south),
//! longitudes are `λ_k = 2πk/nlon`. Grid values are stored row-major,
//! `values[j * nlon + k]`. The minimal grid for truncation `M` has
//! `nlat = ⌈(3M+1)/2⌉` and `nlon` the smallest even integer `≥ 3M+1`, so
//! quadratic products of band-limited fields are alias free.

mod legendre;

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use legendre::GaussLegendre;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarmonicsError {
    #[error("invalid truncation: {0}")]
    InvalidTruncation(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("Gauss-Legendre root finder did not converge for node {index}")]
    RootFinding { index: usize },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
}

/// Physical constants of the rotating sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereGeometry {
    /// Radius `a` in metres.
    pub radius: f64,
    /// Angular velocity `Ω` in s⁻¹.
    pub omega: f64,
    /// Gravitational acceleration `g` in m s⁻².
    pub gravity: f64,
}

impl SphereGeometry {
    pub const EARTH_RADIUS: f64 = 6371.22e3;
    pub const EARTH_OMEGA: f64 = 7.292e-5;
    pub const EARTH_GRAVITY: f64 = 9.80616;

    pub fn earth() -> Self {
        Self {
            radius: Self::EARTH_RADIUS,
            omega: Self::EARTH_OMEGA,
            gravity: Self::EARTH_GRAVITY,
        }
    }

    pub fn new(radius: f64, omega: f64, gravity: f64) -> Result<Self, HarmonicsError> {
        let g = Self {
            radius,
            omega,
            gravity,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), HarmonicsError> {
        for (name, v) in [
            ("radius", self.radius),
            ("omega", self.omega),
            ("gravity", self.gravity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(HarmonicsError::InvalidGeometry(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Same sphere without rotation. Bypasses validation on purpose, since
    /// `Ω = 0` is only meaningful for linear test problems.
    pub fn non_rotating(&self) -> Self {
        Self {
            omega: 0.0,
            ..*self
        }
    }
}

impl Default for SphereGeometry {
    fn default() -> Self {
        Self::earth()
    }
}

/// Triangular truncation `M` together with the Gaussian grid it lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Truncation {
    max_wavenumber: usize,
    nlat: usize,
    nlon: usize,
}

impl Truncation {
    /// Smallest admissible grid for `M`.
    pub fn new(max_wavenumber: usize) -> Result<Self, HarmonicsError> {
        if max_wavenumber < 1 {
            return Err(HarmonicsError::InvalidTruncation(
                "M must be at least 1".into(),
            ));
        }
        let nlat = (3 * max_wavenumber + 1).div_ceil(2);
        let mut nlon = 3 * max_wavenumber + 1;
        if nlon % 2 == 1 {
            nlon += 1;
        }
        Ok(Self {
            max_wavenumber,
            nlat,
            nlon,
        })
    }

    pub fn with_grid(max_wavenumber: usize, nlat: usize, nlon: usize) -> Result<Self, HarmonicsError> {
        let min = Self::new(max_wavenumber)?;
        if nlat < min.nlat || nlon < min.nlon || nlon % 2 == 1 {
            return Err(HarmonicsError::InvalidTruncation(format!(
                "grid {nlat}x{nlon} too small or odd for M={max_wavenumber} \
                 (need nlat >= {}, even nlon >= {})",
                min.nlat, min.nlon
            )));
        }
        Ok(Self {
            max_wavenumber,
            nlat,
            nlon,
        })
    }

    pub fn max_wavenumber(&self) -> usize {
        self.max_wavenumber
    }

    pub fn nlat(&self) -> usize {
        self.nlat
    }

    pub fn nlon(&self) -> usize {
        self.nlon
    }

    pub fn grid_len(&self) -> usize {
        self.nlat * self.nlon
    }

    /// `(M+1)(M+2)/2`.
    pub fn num_coeffs(&self) -> usize {
        (self.max_wavenumber + 1) * (self.max_wavenumber + 2) / 2
    }

    /// Storage index of mode `(m, n)`; modes are laid out by `m`, then `n`.
    #[inline]
    pub fn index(&self, m: usize, n: usize) -> usize {
        debug_assert!(m <= n && n <= self.max_wavenumber);
        m * (2 * self.max_wavenumber + 3 - m) / 2 + (n - m)
    }

    /// All `(m, n)` pairs in storage order.
    pub fn modes(&self) -> impl Iterator<Item = (usize, usize)> {
        let mx = self.max_wavenumber;
        (0..=mx).flat_map(move |m| (m..=mx).map(move |n| (m, n)))
    }
}

/// Spectral coefficients of a real field under triangular truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    trunc: Truncation,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(trunc: Truncation) -> Self {
        Self {
            trunc,
            coeffs: vec![Complex64::new(0.0, 0.0); trunc.num_coeffs()],
        }
    }

    pub fn from_coeffs(trunc: Truncation, coeffs: Vec<Complex64>) -> Result<Self, HarmonicsError> {
        if coeffs.len() != trunc.num_coeffs() {
            return Err(HarmonicsError::ShapeMismatch {
                expected: format!("{} coefficients", trunc.num_coeffs()),
                actual: format!("{}", coeffs.len()),
            });
        }
        let mut f = Self { trunc, coeffs };
        f.enforce_reality();
        Ok(f)
    }

    pub fn from_fn(trunc: Truncation, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let coeffs = trunc.modes().map(|(m, n)| f(m, n)).collect();
        let mut field = Self { trunc, coeffs };
        field.enforce_reality();
        field
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn max_wavenumber(&self) -> usize {
        self.trunc.max_wavenumber
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.coeffs[self.trunc.index(m, n)]
    }

    /// Sets one coefficient; the imaginary part is dropped when `m = 0`.
    #[inline]
    pub fn set(&mut self, m: usize, n: usize, value: Complex64) {
        let i = self.trunc.index(m, n);
        self.coeffs[i] = if m == 0 {
            Complex64::new(value.re, 0.0)
        } else {
            value
        };
    }

    pub fn enforce_reality(&mut self) {
        for n in 0..=self.trunc.max_wavenumber {
            self.coeffs[n].im = 0.0;
        }
    }

    /// Multiplies mode `(m, n)` by `f(n)`.
    pub fn scale_by_degree(&self, f: impl Fn(usize) -> f64) -> Self {
        let mut out = self.clone();
        out.scale_by_degree_in_place(f);
        out
    }

    pub fn scale_by_degree_in_place(&mut self, f: impl Fn(usize) -> f64) {
        let mx = self.trunc.max_wavenumber;
        let factors: Vec<f64> = (0..=mx).map(&f).collect();
        let mut i = 0;
        for m in 0..=mx {
            for factor in &factors[m..=mx] {
                self.coeffs[i] *= factor;
                i += 1;
            }
        }
    }

    /// Drops modes with `n > target` or zero-pads up to `target`.
    pub fn truncate_pad(&self, target: usize) -> Result<Self, HarmonicsError> {
        let trunc = if target == self.trunc.max_wavenumber {
            self.trunc
        } else {
            Truncation::new(target)?
        };
        Ok(self.resample(trunc))
    }

    /// Copies coefficients onto another truncation, dropping or zero-padding
    /// modes as needed.
    pub fn resample(&self, trunc: Truncation) -> Self {
        if trunc == self.trunc {
            return self.clone();
        }
        let common = trunc.max_wavenumber.min(self.trunc.max_wavenumber);
        let mut out = Self::zeros(trunc);
        for m in 0..=common {
            for n in m..=common {
                out.coeffs[trunc.index(m, n)] = self.get(m, n);
            }
        }
        out
    }

    /// Squared L2 norm over the unit sphere.
    pub fn energy(&self) -> f64 {
        self.trunc
            .modes()
            .zip(&self.coeffs)
            .map(|((m, _), c)| if m == 0 { c.norm_sqr() } else { 2.0 * c.norm_sqr() })
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        assert_eq!(self.trunc, other.trunc, "truncation mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            trunc: self.trunc,
            coeffs: self.coeffs.iter().map(|c| c * alpha).collect(),
        }
    }
}

impl Add<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.add_scaled(1.0, rhs);
        out
    }
}

impl Sub<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.add_scaled(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(rhs)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}

/// Real field sampled on the Gaussian grid of a truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    trunc: Truncation,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(trunc: Truncation) -> Self {
        Self {
            trunc,
            values: vec![0.0; trunc.grid_len()],
        }
    }

    pub fn from_values(trunc: Truncation, values: Vec<f64>) -> Result<Self, HarmonicsError> {
        if values.len() != trunc.grid_len() {
            return Err(HarmonicsError::ShapeMismatch {
                expected: format!("{}x{} grid", trunc.nlat, trunc.nlon),
                actual: format!("{} values", values.len()),
            });
        }
        Ok(Self { trunc, values })
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.trunc.nlon + k]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            trunc: self.trunc,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.trunc, other.trunc, "grid mismatch");
        Self {
            trunc: self.trunc,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Precomputed transform tables for one truncation and geometry.
///
/// Every method takes `&self`; share it behind an [`Arc`] across workers.
pub struct SphereTransform {
    trunc: Truncation,
    geometry: SphereGeometry,
    quad: GaussLegendre,
    /// `1 − μ_j²`.
    cos2: Vec<f64>,
    lons: Vec<f64>,
    /// `P̄_n^m(μ_j)`, row `j` contiguous in storage order.
    p: Vec<f64>,
    /// `(1 − μ_j²) dP̄_n^m/dμ (μ_j)`, same layout.
    h: Vec<f64>,
    fft_forward: Arc<dyn Fft<f64>>,
    fft_inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SphereTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SphereTransform")
            .field("trunc", &self.trunc)
            .field("geometry", &self.geometry)
            .finish_non_exhaustive()
    }
}

impl SphereTransform {
    /// Builds the tables. The geometry is not re-validated so that
    /// non-rotating test spheres can be used.
    pub fn new(trunc: Truncation, geometry: SphereGeometry) -> Result<Self, HarmonicsError> {
        if !(geometry.radius.is_finite() && geometry.radius > 0.0) {
            return Err(HarmonicsError::InvalidGeometry(format!(
                "radius must be strictly positive, got {}",
                geometry.radius
            )));
        }
        let quad = GaussLegendre::new(trunc.nlat)?;
        let mx = trunc.max_wavenumber;
        let ncoef = trunc.num_coeffs();
        let ext_len = legendre::triangular_len(mx, mx + 1);
        let scale = 1.0 / (2.0 * PI).sqrt();

        let mut p = vec![0.0; trunc.nlat * ncoef];
        let mut h = vec![0.0; trunc.nlat * ncoef];
        let mut ext = vec![0.0; ext_len];
        for (j, &mu) in quad.nodes.iter().enumerate() {
            legendre::normalized_legendre_into(mx, mx + 1, mu, &mut ext);
            let prow = &mut p[j * ncoef..(j + 1) * ncoef];
            let hrow = &mut h[j * ncoef..(j + 1) * ncoef];
            let mut src = 0;
            let mut dst = 0;
            for m in 0..=mx {
                // ext holds n = m ..= mx + 1 for this m.
                let count = mx + 2 - m;
                let col = &ext[src..src + count];
                for k in 0..(count - 1) {
                    let n = m + k;
                    let below = if k >= 1 { col[k - 1] } else { 0.0 };
                    let nf = n as f64;
                    prow[dst] = col[k] * scale;
                    hrow[dst] = (-nf * legendre::epsilon(m, n + 1) * col[k + 1]
                        + (nf + 1.0) * legendre::epsilon(m, n) * below)
                        * scale;
                    dst += 1;
                }
                src += count;
            }
        }

        let cos2 = quad.nodes.iter().map(|mu| 1.0 - mu * mu).collect();
        let lons = (0..trunc.nlon)
            .map(|k| 2.0 * PI * k as f64 / trunc.nlon as f64)
            .collect();
        let mut planner = FftPlanner::new();
        let fft_forward = planner.plan_fft_forward(trunc.nlon);
        let fft_inverse = planner.plan_fft_inverse(trunc.nlon);
        Ok(Self {
            trunc,
            geometry,
            quad,
            cos2,
            lons,
            p,
            h,
            fft_forward,
            fft_inverse,
        })
    }

    pub fn for_wavenumber(max_wavenumber: usize, geometry: SphereGeometry) -> Result<Self, HarmonicsError> {
        Self::new(Truncation::new(max_wavenumber)?, geometry)
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn geometry(&self) -> &SphereGeometry {
        &self.geometry
    }

    /// Gaussian nodes `μ_j`, decreasing.
    pub fn mu(&self) -> &[f64] {
        &self.quad.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.quad.weights
    }

    /// Latitudes `θ_j = asin(μ_j)` in radians.
    pub fn latitudes(&self) -> Vec<f64> {
        self.quad.nodes.iter().map(|mu| mu.asin()).collect()
    }

    pub fn longitudes(&self) -> &[f64] {
        &self.lons
    }

    pub fn coslat(&self) -> Vec<f64> {
        self.cos2.iter().map(|c| c.sqrt()).collect()
    }

    /// Samples `f(λ, θ)` on the grid.
    pub fn grid_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> GridField {
        let lats = self.latitudes();
        let mut values = Vec::with_capacity(self.trunc.grid_len());
        for &lat in &lats {
            for &lon in &self.lons {
                values.push(f(lon, lat));
            }
        }
        GridField {
            trunc: self.trunc,
            values,
        }
    }

    fn check_spec(&self, f: &SpectralField) -> Result<(), HarmonicsError> {
        if f.trunc != self.trunc {
            return Err(HarmonicsError::ShapeMismatch {
                expected: format!("{:?}", self.trunc),
                actual: format!("{:?}", f.trunc),
            });
        }
        Ok(())
    }

    fn check_grid(&self, g: &GridField) -> Result<(), HarmonicsError> {
        if g.trunc != self.trunc {
            return Err(HarmonicsError::ShapeMismatch {
                expected: format!("{:?}", self.trunc),
                actual: format!("{:?}", g.trunc),
            });
        }
        Ok(())
    }

    /// `∫ f e^{-imλ} dλ` for `m ≤ M`, per latitude.
    fn fourier_rows(&self, grid: &[f64]) -> Vec<Complex64> {
        let (nlat, nlon, mx) = (self.trunc.nlat, self.trunc.nlon, self.trunc.max_wavenumber);
        let mut out = vec![Complex64::new(0.0, 0.0); nlat * (mx + 1)];
        let mut buf = vec![Complex64::new(0.0, 0.0); nlon];
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); self.fft_forward.get_inplace_scratch_len()];
        let dl = 2.0 * PI / nlon as f64;
        for j in 0..nlat {
            for (b, &v) in buf.iter_mut().zip(&grid[j * nlon..(j + 1) * nlon]) {
                *b = Complex64::new(v, 0.0);
            }
            self.fft_forward.process_with_scratch(&mut buf, &mut scratch);
            for m in 0..=mx {
                out[j * (mx + 1) + m] = buf[m] * dl;
            }
        }
        out
    }

    /// Real grid from per-latitude `m ≥ 0` Fourier coefficients.
    fn fourier_synthesis(&self, rows: &[Complex64]) -> Vec<f64> {
        let (nlat, nlon, mx) = (self.trunc.nlat, self.trunc.nlon, self.trunc.max_wavenumber);
        let mut out = vec![0.0; nlat * nlon];
        let mut buf = vec![Complex64::new(0.0, 0.0); nlon];
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); self.fft_inverse.get_inplace_scratch_len()];
        for j in 0..nlat {
            buf.fill(Complex64::new(0.0, 0.0));
            let row = &rows[j * (mx + 1)..(j + 1) * (mx + 1)];
            buf[0] = Complex64::new(row[0].re, 0.0);
            for m in 1..=mx {
                buf[m] = row[m];
                buf[nlon - m] = row[m].conj();
            }
            self.fft_inverse.process_with_scratch(&mut buf, &mut scratch);
            for (o, b) in out[j * nlon..(j + 1) * nlon].iter_mut().zip(&buf) {
                *o = b.re;
            }
        }
        out
    }

    pub fn analysis(&self, grid: &GridField) -> Result<SpectralField, HarmonicsError> {
        self.check_grid(grid)?;
        let rows = self.fourier_rows(&grid.values);
        let (nlat, mx) = (self.trunc.nlat, self.trunc.max_wavenumber);
        let ncoef = self.trunc.num_coeffs();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); ncoef];
        for j in 0..nlat {
            let w = self.quad.weights[j];
            let prow = &self.p[j * ncoef..(j + 1) * ncoef];
            let row = &rows[j * (mx + 1)..(j + 1) * (mx + 1)];
            let mut i = 0;
            for (m, &fm) in row.iter().enumerate() {
                let wf = fm * w;
                for _ in m..=mx {
                    coeffs[i] += wf * prow[i];
                    i += 1;
                }
            }
        }
        let mut f = SpectralField {
            trunc: self.trunc,
            coeffs,
        };
        f.enforce_reality();
        Ok(f)
    }

    pub fn synthesis(&self, spec: &SpectralField) -> Result<GridField, HarmonicsError> {
        self.check_spec(spec)?;
        let (nlat, mx) = (self.trunc.nlat, self.trunc.max_wavenumber);
        let ncoef = self.trunc.num_coeffs();
        let mut rows = vec![Complex64::new(0.0, 0.0); nlat * (mx + 1)];
        for j in 0..nlat {
            let prow = &self.p[j * ncoef..(j + 1) * ncoef];
            let mut i = 0;
            for m in 0..=mx {
                let mut acc = Complex64::new(0.0, 0.0);
                for _ in m..=mx {
                    acc += spec.coeffs[i] * prow[i];
                    i += 1;
                }
                rows[j * (mx + 1) + m] = acc;
            }
        }
        Ok(GridField {
            trunc: self.trunc,
            values: self.fourier_synthesis(&rows),
        })
    }

    /// `∇²`: mode `(m, n)` scaled by `−n(n+1)/a²`.
    pub fn laplacian(&self, spec: &SpectralField) -> SpectralField {
        let a2 = self.geometry.radius * self.geometry.radius;
        spec.scale_by_degree(|n| -((n * (n + 1)) as f64) / a2)
    }

    /// `∇⁻²`, with the `n = 0` mode mapped to zero.
    pub fn inverse_laplacian(&self, spec: &SpectralField) -> SpectralField {
        let a2 = self.geometry.radius * self.geometry.radius;
        spec.scale_by_degree(|n| {
            if n == 0 {
                0.0
            } else {
                -a2 / ((n * (n + 1)) as f64)
            }
        })
    }

    /// Cosine-weighted velocity `(u cos θ, v cos θ)` of `V = k×∇ψ + ∇χ`.
    pub fn uv_cos_from_potentials(
        &self,
        psi: &SpectralField,
        chi: &SpectralField,
    ) -> Result<(GridField, GridField), HarmonicsError> {
        self.check_spec(psi)?;
        self.check_spec(chi)?;
        let (nlat, mx) = (self.trunc.nlat, self.trunc.max_wavenumber);
        let ncoef = self.trunc.num_coeffs();
        let inv_a = 1.0 / self.geometry.radius;
        let mut urows = vec![Complex64::new(0.0, 0.0); nlat * (mx + 1)];
        let mut vrows = vec![Complex64::new(0.0, 0.0); nlat * (mx + 1)];
        for j in 0..nlat {
            let prow = &self.p[j * ncoef..(j + 1) * ncoef];
            let hrow = &self.h[j * ncoef..(j + 1) * ncoef];
            let mut i = 0;
            for m in 0..=mx {
                let im = Complex64::new(0.0, m as f64);
                let mut u = Complex64::new(0.0, 0.0);
                let mut v = Complex64::new(0.0, 0.0);
                for _ in m..=mx {
                    let (ps, ch) = (psi.coeffs[i], chi.coeffs[i]);
                    u += im * ch * prow[i] - ps * hrow[i];
                    v += im * ps * prow[i] + ch * hrow[i];
                    i += 1;
                }
                urows[j * (mx + 1) + m] = u * inv_a;
                vrows[j * (mx + 1) + m] = v * inv_a;
            }
        }
        Ok((
            GridField {
                trunc: self.trunc,
                values: self.fourier_synthesis(&urows),
            },
            GridField {
                trunc: self.trunc,
                values: self.fourier_synthesis(&vrows),
            },
        ))
    }

    pub fn uv_cos_from_vort_div(
        &self,
        xi: &SpectralField,
        delta: &SpectralField,
    ) -> Result<(GridField, GridField), HarmonicsError> {
        self.uv_cos_from_potentials(&self.inverse_laplacian(xi), &self.inverse_laplacian(delta))
    }

    /// Physical wind `(u, v)` from vorticity and divergence.
    pub fn wind_from_vort_div(
        &self,
        xi: &SpectralField,
        delta: &SpectralField,
    ) -> Result<(GridField, GridField), HarmonicsError> {
        let (mut u, mut v) = self.uv_cos_from_vort_div(xi, delta)?;
        self.divide_by_coslat(&mut u);
        self.divide_by_coslat(&mut v);
        Ok((u, v))
    }

    /// `cos θ ∇f`, i.e. `((1/a)∂f/∂λ, (1/a)(1−μ²)∂f/∂μ)`.
    pub fn gradient_cos(&self, f: &SpectralField) -> Result<(GridField, GridField), HarmonicsError> {
        self.uv_cos_from_potentials(&SpectralField::zeros(self.trunc), f)
    }

    pub fn divide_by_coslat(&self, g: &mut GridField) {
        let nlon = self.trunc.nlon;
        for (j, c2) in self.cos2.iter().enumerate() {
            let inv = 1.0 / c2.sqrt();
            for v in &mut g.values[j * nlon..(j + 1) * nlon] {
                *v *= inv;
            }
        }
    }

    pub fn multiply_by_coslat(&self, g: &mut GridField) {
        let nlon = self.trunc.nlon;
        for (j, c2) in self.cos2.iter().enumerate() {
            let c = c2.sqrt();
            for v in &mut g.values[j * nlon..(j + 1) * nlon] {
                *v *= c;
            }
        }
    }

    /// Divergence and curl (spectral) of a vector field given through its
    /// cosine-weighted components `(A, B) = (u cos θ, v cos θ)`.
    ///
    /// The `μ` derivative is moved onto the basis functions by parts, so the
    /// grid data is never differentiated.
    pub fn div_curl_from_uv_cos(
        &self,
        a: &GridField,
        b: &GridField,
    ) -> Result<(SpectralField, SpectralField), HarmonicsError> {
        self.check_grid(a)?;
        self.check_grid(b)?;
        let (nlat, mx) = (self.trunc.nlat, self.trunc.max_wavenumber);
        let ncoef = self.trunc.num_coeffs();
        let arows = self.fourier_rows(&a.values);
        let brows = self.fourier_rows(&b.values);
        let inv_a = 1.0 / self.geometry.radius;
        let mut div = vec![Complex64::new(0.0, 0.0); ncoef];
        let mut curl = vec![Complex64::new(0.0, 0.0); ncoef];
        for j in 0..nlat {
            let w = self.quad.weights[j] / self.cos2[j] * inv_a;
            let prow = &self.p[j * ncoef..(j + 1) * ncoef];
            let hrow = &self.h[j * ncoef..(j + 1) * ncoef];
            let mut i = 0;
            for m in 0..=mx {
                let am = arows[j * (mx + 1) + m] * w;
                let bm = brows[j * (mx + 1) + m] * w;
                let im = Complex64::new(0.0, m as f64);
                let (ima, imb) = (im * am, im * bm);
                for _ in m..=mx {
                    div[i] += ima * prow[i] - bm * hrow[i];
                    curl[i] += imb * prow[i] + am * hrow[i];
                    i += 1;
                }
            }
        }
        let mut d = SpectralField {
            trunc: self.trunc,
            coeffs: div,
        };
        let mut c = SpectralField {
            trunc: self.trunc,
            coeffs: curl,
        };
        d.enforce_reality();
        c.enforce_reality();
        Ok((d, c))
    }

    /// Vorticity and divergence (in that order) of a physical wind.
    pub fn vort_div_from_wind(
        &self,
        u: &GridField,
        v: &GridField,
    ) -> Result<(SpectralField, SpectralField), HarmonicsError> {
        let mut a = u.clone();
        let mut b = v.clone();
        self.multiply_by_coslat(&mut a);
        self.multiply_by_coslat(&mut b);
        let (div, curl) = self.div_curl_from_uv_cos(&a, &b)?;
        Ok((curl, div))
    }

    /// `∫_S f dΩ` by quadrature.
    pub fn integrate(&self, g: &GridField) -> f64 {
        let nlon = self.trunc.nlon;
        let dl = 2.0 * PI / nlon as f64;
        self.quad
            .weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * dl * g.values[j * nlon..(j + 1) * nlon].iter().sum::<f64>())
            .sum()
    }
}

/// Spectral coefficients of an analytic field `f(λ, θ)`, by quadrature on a
/// Gaussian grid `oversample` times finer than the truncation's own grid.
///
/// Fields with sharp features (narrow bumps, jets) are not band-limited, and
/// sampling them on the minimal grid aliases the unresolved tail back into the
/// retained modes. Legendre values are generated per latitude, so memory stays
/// independent of the oversampling factor.
pub fn project_fn(
    trunc: Truncation,
    oversample: usize,
    f: impl Fn(f64, f64) -> f64,
) -> Result<SpectralField, HarmonicsError> {
    let k = oversample.max(1);
    let (nlat, nlon) = (trunc.nlat * k, trunc.nlon * k);
    let mx = trunc.max_wavenumber;
    let quad = GaussLegendre::new(nlat)?;
    let fft = FftPlanner::new().plan_fft_forward(nlon);
    let mut buf = vec![Complex64::new(0.0, 0.0); nlon];
    let mut p = vec![0.0; legendre::triangular_len(mx, mx)];
    let mut coeffs = vec![Complex64::new(0.0, 0.0); trunc.num_coeffs()];
    let dl = 2.0 * PI / nlon as f64;
    let scale = 1.0 / (2.0 * PI).sqrt();
    for (&mu, &w) in quad.nodes.iter().zip(&quad.weights) {
        let lat = mu.asin();
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(f(dl * i as f64, lat), 0.0);
        }
        fft.process(&mut buf);
        legendre::normalized_legendre_into(mx, mx, mu, &mut p);
        let mut i = 0;
        for (m, &fm) in buf.iter().take(mx + 1).enumerate() {
            let wf = fm * (w * dl * scale);
            for _ in m..=mx {
                coeffs[i] += wf * p[i];
                i += 1;
            }
        }
    }
    SpectralField::from_coeffs(trunc, coeffs)
}

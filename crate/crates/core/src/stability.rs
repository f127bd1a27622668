//! Amplification factors of the linearised test problem `u' = λ_L u + λ_N u`
//! and rasterised stability regions in the `ξ_N = λ_N Δt` plane.
//!
//! Closed forms for Parareal and two-level MGRIT are evaluated with a running
//! term so that `n = 100` does not overflow the binomial coefficients.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("amplification factor has a pole at xi_L = {0}")]
    Pole(Complex64),
    #[error("settls quadratic degenerates: leading coefficient vanishes at xi_L = {0}")]
    DegenerateQuadratic(Complex64),
    #[error("invalid stability query: {0}")]
    InvalidQuery(String),
}

/// `|A|` may exceed one by this much and still count as stable. Purely
/// imaginary `ξ_L` gives implicit factors whose modulus is one only up to
/// rounding.
pub const STABILITY_TOL: f64 = 1e-12;

/// Number of `κs` samples on `[0, 2π]` with step `π/10`.
pub const KAPPA_SAMPLES: usize = 21;

pub fn is_stable(a: Complex64) -> bool {
    a.norm() <= 1.0 + STABILITY_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImexVariant {
    /// Explicit factor `ξ_N(2 + ξ_N)/2`.
    AsPrinted,
    /// Explicit factor `1 + ξ_N + ξ_N²/2`, matching the stepper.
    #[default]
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityScheme {
    Imex,
    Settls,
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// `((4 + ξ_L)/(4 − ξ_L))² · E(ξ_N)` with `E` chosen by `variant`.
pub fn amp_imex(xi_l: Complex64, xi_n: Complex64, variant: ImexVariant) -> Result<Complex64, StabilityError> {
    let den = 4.0 - xi_l;
    if den.norm() == 0.0 {
        return Err(StabilityError::Pole(xi_l));
    }
    let implicit = (4.0 + xi_l) / den;
    let explicit = match variant {
        ImexVariant::AsPrinted => xi_n * (2.0 + xi_n) / 2.0,
        ImexVariant::Heun => one() + xi_n + xi_n * xi_n / 2.0,
    };
    Ok(implicit * implicit * explicit)
}

/// Both roots of
/// `A²(1 − ξ_L/2) − A(e^{−iκs}(1 + ξ_L/2 + ξ_N) + ξ_N/2) + (ξ_N/2)e^{−iκs} = 0`,
/// larger modulus first.
pub fn amp_settls(xi_l: Complex64, xi_n: Complex64, kappa_s: f64) -> Result<[Complex64; 2], StabilityError> {
    let a = one() - xi_l / 2.0;
    if a.norm() == 0.0 {
        return Err(StabilityError::DegenerateQuadratic(xi_l));
    }
    let e = Complex64::from_polar(1.0, -kappa_s);
    let b = -(e * (one() + xi_l / 2.0 + xi_n) + xi_n / 2.0);
    let c = xi_n / 2.0 * e;
    let disc = (b * b - 4.0 * a * c).sqrt();
    // Pick the sign that avoids cancellation, then recover the other root from
    // the product c/a.
    let q = if (b.conj() * disc).re >= 0.0 {
        -(b + disc) / 2.0
    } else {
        -(b - disc) / 2.0
    };
    let (r1, r2) = if q.norm() == 0.0 {
        (Complex64::default(), Complex64::default())
    } else {
        (q / a, c / q)
    };
    Ok(if r1.norm() >= r2.norm() { [r1, r2] } else { [r2, r1] })
}

/// `κs = jπ/10` for `j = 0..=20`.
pub fn kappa_samples() -> Vec<f64> {
    (0..KAPPA_SAMPLES).map(|j| j as f64 * PI / 10.0).collect()
}

/// `Σ_{i=0}^{k} C(n,i) (A_f^{N_f} − A_c^{N_c})^i (A_c^{N_c})^{n−i}`.
pub fn amp_parareal(n: usize, k: usize, nf: u32, nc: u32, af: Complex64, ac: Complex64) -> Complex64 {
    amp_mgrit2(n, k, nf, nc, 0, af, ac)
}

/// Two-level MGRIT with F(CF)^nrelax relaxation,
/// `Σ_i C(n − i·nr, i) (A_f^{N_f nr}(A_f^{N_f} − A_c^{N_c}))^i (A_c^{N_c})^{n − i(nr+1)}`.
///
/// The sum runs over `i ≤ min(k, ⌊n/(nr+1)⌋)`, which is what unrolling
/// `u^k_n = R u^k_{n−1} + S u^{k−1}_{n−(nr+1)}` produces. See
/// [`amp_mgrit2_as_printed`] for the `⌊k/(nr+1)⌋` limit.
pub fn amp_mgrit2(n: usize, k: usize, nf: u32, nc: u32, nrelax: usize, af: Complex64, ac: Complex64) -> Complex64 {
    let upper = k.min(n / (nrelax + 1));
    mgrit_sum(n, upper, nf, nc, nrelax, af, ac)
}

/// Same sum truncated at `⌊k/(nr+1)⌋`. Coincides with [`amp_mgrit2`] for
/// `nrelax = 0`.
pub fn amp_mgrit2_as_printed(
    n: usize,
    k: usize,
    nf: u32,
    nc: u32,
    nrelax: usize,
    af: Complex64,
    ac: Complex64,
) -> Complex64 {
    let upper = (k / (nrelax + 1)).min(n / (nrelax + 1));
    mgrit_sum(n, upper, nf, nc, nrelax, af, ac)
}

fn mgrit_sum(n: usize, upper: usize, nf: u32, nc: u32, nrelax: usize, af: Complex64, ac: Complex64) -> Complex64 {
    let r = ac.powu(nc);
    let s = af.powu(nf * nrelax as u32) * (af.powu(nf) - r);
    let step = nrelax + 1;
    let mut total = Complex64::default();
    let mut s_pow = one();
    let mut binom = 1.0_f64;
    for i in 0..=upper {
        if i > 0 {
            // C(n − i·nr, i) / C(n − (i−1)·nr, i−1)
            let top = n - i * nrelax;
            let prev_top = n - (i - 1) * nrelax;
            let mut ratio = 1.0 / i as f64;
            // top!/prev_top! · (prev_top−i+1)!/(top−i)! / i
            for t in (top + 1)..=prev_top {
                ratio /= t as f64;
            }
            for t in (top - i + 1)..=(prev_top - i + 1) {
                ratio *= t as f64;
            }
            binom *= ratio;
            s_pow *= s;
        }
        let r_pow = r.powu((n - i * step) as u32);
        total += binom * s_pow * r_pow;
    }
    total
}

/// `ξ̃_L = i√(Φ̄/a²)`.
pub fn xi_tilde_l(phibar: f64, radius: f64) -> Complex64 {
    Complex64::new(0.0, (phibar / (radius * radius)).sqrt())
}

pub const REFERENCE_PHIBAR: f64 = 1e5;
pub const REFERENCE_RADIUS: f64 = 6371.22e3;
pub const REFERENCE_CORIOLIS: f64 = 2.0 * 7.292e-5;

/// Spectral f-plane operator acting on `(Φ, ξ, δ)` for total wavenumber `n`.
pub fn f_plane_operator(n: usize, f: f64, phibar: f64, radius: f64) -> Matrix3<f64> {
    let k = (n * (n + 1)) as f64 / (radius * radius);
    Matrix3::new(0.0, 0.0, -phibar, 0.0, 0.0, -f, k, f, 0.0)
}

/// Eigenvalues of [`f_plane_operator`], sorted by imaginary part.
pub fn f_plane_eigenvalues(n: usize, f: f64, phibar: f64, radius: f64) -> [Complex64; 3] {
    let ev = f_plane_operator(n, f, phibar, radius).complex_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2]];
    out.sort_by(|a, b| a.im.total_cmp(&b.im));
    out
}

/// `{0, ±i√(f² + n(n+1)Φ̄/a²)}` in the same order as [`f_plane_eigenvalues`].
pub fn f_plane_eigenvalues_exact(n: usize, f: f64, phibar: f64, radius: f64) -> [Complex64; 3] {
    let w = (f * f + (n * (n + 1)) as f64 * phibar / (radius * radius)).sqrt();
    [Complex64::new(0.0, -w), Complex64::default(), Complex64::new(0.0, w)]
}

/// Uniform rectangular grid over `Re ξ_N × Im ξ_N`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XiGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub n_re: usize,
    pub im_min: f64,
    pub im_max: f64,
    pub n_im: usize,
}

impl Default for XiGrid {
    fn default() -> Self {
        Self::square(4.0, 401)
    }
}

impl XiGrid {
    pub fn square(half_width: f64, points: usize) -> Self {
        Self {
            re_min: -half_width,
            re_max: half_width,
            n_re: points,
            im_min: -half_width,
            im_max: half_width,
            n_im: points,
        }
    }

    pub fn validate(&self) -> Result<(), StabilityError> {
        let finite = [self.re_min, self.re_max, self.im_min, self.im_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(StabilityError::InvalidQuery("grid bounds must be finite".into()));
        }
        if self.n_re < 2 || self.n_im < 2 {
            return Err(StabilityError::InvalidQuery("grid needs at least 2 points per axis".into()));
        }
        if self.re_min >= self.re_max || self.im_min >= self.im_max {
            return Err(StabilityError::InvalidQuery("grid bounds must be increasing".into()));
        }
        Ok(())
    }

    fn axis(min: f64, max: f64, n: usize, i: usize) -> f64 {
        // Symmetric formula so that mirrored grids hit the same values.
        let t = i as f64 / (n - 1) as f64;
        min * (1.0 - t) + max * t
    }

    pub fn re(&self, i: usize) -> f64 {
        Self::axis(self.re_min, self.re_max, self.n_re, i)
    }

    pub fn im(&self, j: usize) -> f64 {
        Self::axis(self.im_min, self.im_max, self.n_im, j)
    }

    pub fn len(&self) -> usize {
        self.n_re * self.n_im
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point at flat index `j * n_re + i`.
    pub fn point(&self, idx: usize) -> Complex64 {
        Complex64::new(self.re(idx % self.n_re), self.im(idx / self.n_re))
    }
}

/// Parallel-in-time part of a query. `ξ` on the grid is per time slice; the
/// fine and coarse schemes see `ξ/N_f` and `ξ/N_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PintQuery {
    pub n: usize,
    pub k: usize,
    pub nf: u32,
    pub nc: u32,
    #[serde(default)]
    pub nrelax: usize,
    pub fine: StabilityScheme,
    pub coarse: StabilityScheme,
}

impl PintQuery {
    /// `n = 100`, `N_c = 1`, `N_f = cfactor`.
    pub fn figure(k: usize, cfactor: u32, nrelax: usize, coarse: StabilityScheme) -> Self {
        Self {
            n: 100,
            k,
            nf: cfactor,
            nc: 1,
            nrelax,
            fine: StabilityScheme::Imex,
            coarse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityQuery {
    pub xi_l: Complex64,
    #[serde(default)]
    pub grid: XiGrid,
    pub scheme: StabilityScheme,
    #[serde(default)]
    pub pint: Option<PintQuery>,
    #[serde(default)]
    pub imex_variant: ImexVariant,
}

impl StabilityQuery {
    pub fn serial(xi_l: Complex64, scheme: StabilityScheme) -> Self {
        Self {
            xi_l,
            grid: XiGrid::default(),
            scheme,
            pint: None,
            imex_variant: ImexVariant::default(),
        }
    }

    pub fn with_grid(mut self, grid: XiGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_pint(mut self, pint: PintQuery) -> Self {
        self.pint = Some(pint);
        self
    }

    pub fn validate(&self) -> Result<(), StabilityError> {
        self.grid.validate()?;
        if !(self.xi_l.re.is_finite() && self.xi_l.im.is_finite()) {
            return Err(StabilityError::InvalidQuery("xi_L must be finite".into()));
        }
        if let Some(p) = &self.pint {
            if p.nf == 0 || p.nc == 0 {
                return Err(StabilityError::InvalidQuery("N_f and N_c must be positive".into()));
            }
            if p.nrelax == 0 && p.k > p.n {
                return Err(StabilityError::InvalidQuery(format!("k = {} exceeds n = {}", p.k, p.n)));
            }
            if p.n * (p.nrelax + 1) < p.k {
                return Err(StabilityError::InvalidQuery(format!(
                    "n = {} is below k/(nrelax+1) for k = {}, nrelax = {}",
                    p.n, p.k, p.nrelax
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRaster {
    pub query: StabilityQuery,
    /// Row-major over `Im ξ_N`, i.e. `mask[j * n_re + i]`.
    pub mask: Vec<bool>,
}

impl RegionRaster {
    pub fn stable_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn at(&self, i_re: usize, j_im: usize) -> bool {
        self.mask[j_im * self.query.grid.n_re + i_re]
    }

    /// `(Re ξ_N, Im ξ_N, stable)` for every grid point.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, bool)> + '_ {
        self.mask.iter().enumerate().map(|(idx, &s)| {
            let z = self.query.grid.point(idx);
            (z.re, z.im, s)
        })
    }

    pub fn intersect(&mut self, other: &RegionRaster) {
        for (a, b) in self.mask.iter_mut().zip(&other.mask) {
            *a &= *b;
        }
    }
}

fn raster(query: &StabilityQuery, stable_at: impl Fn(Complex64) -> bool + Sync) -> RegionRaster {
    let grid = query.grid;
    let mask = (0..grid.n_im)
        .into_par_iter()
        .flat_map_iter(|j| {
            let stable_at = &stable_at;
            (0..grid.n_re).map(move |i| stable_at(Complex64::new(grid.re(i), grid.im(j))))
        })
        .collect();
    RegionRaster {
        query: query.clone(),
        mask,
    }
}

/// SETTLS region for a single `κs`.
pub fn settls_region_single(xi_l: Complex64, grid: XiGrid, kappa_s: f64) -> Result<RegionRaster, StabilityError> {
    amp_settls(xi_l, Complex64::default(), kappa_s)?;
    let q = StabilityQuery::serial(xi_l, StabilityScheme::Settls).with_grid(grid);
    q.validate()?;
    Ok(raster(&q, |z| {
        amp_settls(xi_l, z, kappa_s).is_ok_and(|r| r.iter().all(|&a| is_stable(a)))
    }))
}

/// Intersection of the single-`κs` regions over [`kappa_samples`].
pub fn settls_region(xi_l: Complex64, grid: XiGrid) -> Result<RegionRaster, StabilityError> {
    settls_region_over(xi_l, grid, &kappa_samples())
}

pub fn settls_region_over(xi_l: Complex64, grid: XiGrid, kappas: &[f64]) -> Result<RegionRaster, StabilityError> {
    amp_settls(xi_l, Complex64::default(), 0.0)?;
    let q = StabilityQuery::serial(xi_l, StabilityScheme::Settls).with_grid(grid);
    q.validate()?;
    Ok(raster(&q, |z| {
        kappas.iter().all(|&ks| {
            amp_settls(xi_l, z, ks).is_ok_and(|r| r.iter().all(|&a| is_stable(a)))
        })
    }))
}

/// Per-step amplification factors of `scheme`. IMEX has a single branch,
/// SETTLS two (larger modulus first).
fn branches(
    scheme: StabilityScheme,
    xi_l: Complex64,
    xi_n: Complex64,
    kappa_s: f64,
    variant: ImexVariant,
) -> Result<Vec<Complex64>, StabilityError> {
    match scheme {
        StabilityScheme::Imex => Ok(vec![amp_imex(xi_l, xi_n, variant)?]),
        StabilityScheme::Settls => Ok(amp_settls(xi_l, xi_n, kappa_s)?.to_vec()),
    }
}

/// Rasterises `|A| ≤ 1` for the query.
///
/// Serial SETTLS intersects over the 21 `κs` samples. In the parallel case a
/// SETTLS fine or coarse scheme is evaluated per `κs` and per root branch;
/// when both are SETTLS the branches are paired by index. A point is stable
/// only if every combination is.
pub fn region_scan(query: &StabilityQuery) -> Result<RegionRaster, StabilityError> {
    query.validate()?;
    let xi_l = query.xi_l;
    let variant = query.imex_variant;

    let Some(p) = query.pint else {
        return match query.scheme {
            StabilityScheme::Imex => {
                amp_imex(xi_l, Complex64::default(), variant)?;
                Ok(raster(query, |z| amp_imex(xi_l, z, variant).is_ok_and(is_stable)))
            }
            StabilityScheme::Settls => {
                let mut r = settls_region(xi_l, query.grid)?;
                r.query = query.clone();
                Ok(r)
            }
        };
    };

    let (xl_f, xl_c) = (xi_l / p.nf as f64, xi_l / p.nc as f64);
    // Surface poles once, up front, rather than as unstable points.
    branches(p.fine, xl_f, Complex64::default(), 0.0, variant)?;
    branches(p.coarse, xl_c, Complex64::default(), 0.0, variant)?;

    let uses_kappa = p.fine == StabilityScheme::Settls || p.coarse == StabilityScheme::Settls;
    let kappas = if uses_kappa { kappa_samples() } else { vec![0.0] };
    let paired = p.fine == StabilityScheme::Settls && p.coarse == StabilityScheme::Settls;

    Ok(raster(query, |z| {
        let (zf, zc) = (z / p.nf as f64, z / p.nc as f64);
        kappas.iter().all(|&ks| {
            let (Ok(f), Ok(c)) = (
                branches(p.fine, xl_f, zf, ks, variant),
                branches(p.coarse, xl_c, zc, ks, variant),
            ) else {
                return false;
            };
            let stable = |af: Complex64, ac: Complex64| is_stable(amp_mgrit2(p.n, p.k, p.nf, p.nc, p.nrelax, af, ac));
            if paired {
                f.iter().zip(&c).all(|(&af, &ac)| stable(af, ac))
            } else {
                f.iter().all(|&af| c.iter().all(|&ac| stable(af, ac)))
            }
        })
    }))
}

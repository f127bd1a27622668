//! Semi-Lagrangian machinery on the Gaussian grid: departure points by the
//! SETTLS trajectory iteration and bicubic Lagrange interpolation.
//!
//! Velocities are carried as Cartesian 3-vectors on the unit sphere, so vector
//! components are smooth scalars everywhere, including across the poles. The
//! interpolation stencil crosses a pole by reflecting the latitude
//! (`θ ↦ ±π − θ`) and shifting the longitude by half a revolution.

use std::f64::consts::PI;

use crate::harmonics::{GridField, SphereTransform, Truncation};

use super::StepError;

/// Number of trajectory refinements after the first-guess displacement.
pub const SETTLS_ITERATIONS: usize = 2;

/// Mirrored rows on each side of the latitude axis.
const HALO: usize = 2;

pub type Vec3 = [f64; 3];

#[inline]
fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Grid vector field in Cartesian components.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl CartesianField {
    #[inline]
    pub fn at(&self, i: usize) -> Vec3 {
        [self.x[i], self.y[i], self.z[i]]
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        let f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| alpha * p + beta * q).collect();
        Self {
            x: f(&self.x, &other.x),
            y: f(&self.y, &other.y),
            z: f(&self.z, &other.z),
        }
    }
}

/// Departure points for every arrival grid point.
#[derive(Debug, Clone)]
pub struct Departure {
    pub points: Vec<Vec3>,
    /// Largest point displacement (radians) between successive trajectory
    /// iterates; one entry per refinement.
    pub increments: Vec<f64>,
}

/// Precomputed point interpolation stencil.
#[derive(Debug, Clone, Copy)]
struct Stencil {
    /// Flat grid indices of the 16 stencil values.
    idx: [usize; 16],
    w: [f64; 16],
}

#[derive(Debug, Clone)]
pub struct SemiLagrangian {
    trunc: Truncation,
    radius: f64,
    /// Latitudes with `HALO` mirrored rows on each end; strictly decreasing.
    theta_ext: Vec<f64>,
    /// Source row and longitude shift for every extended row.
    row_src: Vec<(usize, usize)>,
    arrival: Vec<Vec3>,
    e_lambda: Vec<Vec3>,
    e_theta: Vec<Vec3>,
}

impl SemiLagrangian {
    pub fn new(transform: &SphereTransform) -> Self {
        let trunc = transform.truncation();
        let (nlat, nlon) = (trunc.nlat(), trunc.nlon());
        let lats = transform.latitudes();
        let half = nlon / 2;

        let mut theta_ext = Vec::with_capacity(nlat + 2 * HALO);
        let mut row_src = Vec::with_capacity(nlat + 2 * HALO);
        for i in (0..HALO).rev() {
            theta_ext.push(PI - lats[i]);
            row_src.push((i, half));
        }
        for (j, &t) in lats.iter().enumerate() {
            theta_ext.push(t);
            row_src.push((j, 0));
        }
        for i in 0..HALO {
            let j = nlat - 1 - i;
            theta_ext.push(-PI - lats[j]);
            row_src.push((j, half));
        }

        let mut arrival = Vec::with_capacity(trunc.grid_len());
        let mut e_lambda = Vec::with_capacity(trunc.grid_len());
        let mut e_theta = Vec::with_capacity(trunc.grid_len());
        for &th in &lats {
            let (st, ct) = th.sin_cos();
            for &lam in transform.longitudes() {
                let (sl, cl) = lam.sin_cos();
                arrival.push([ct * cl, ct * sl, st]);
                e_lambda.push([-sl, cl, 0.0]);
                e_theta.push([-st * cl, -st * sl, ct]);
            }
        }
        Self {
            trunc,
            radius: transform.geometry().radius,
            theta_ext,
            row_src,
            arrival,
            e_lambda,
            e_theta,
        }
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    /// Unit position vectors of the grid points.
    pub fn arrival_points(&self) -> &[Vec3] {
        &self.arrival
    }

    /// Cartesian components of the physical wind `(u, v)`.
    pub fn to_cartesian(&self, u: &GridField, v: &GridField) -> CartesianField {
        let n = self.arrival.len();
        let (mut x, mut y, mut z) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let (uu, vv) = (u.values()[i], v.values()[i]);
            let (el, et) = (&self.e_lambda[i], &self.e_theta[i]);
            x[i] = uu * el[0] + vv * et[0];
            y[i] = uu * el[1] + vv * et[1];
            z[i] = uu * el[2] + vv * et[2];
        }
        CartesianField { x, y, z }
    }

    /// Local `(u, v)` of vectors attached to the grid points.
    pub fn to_local(&self, w: &[Vec3]) -> (GridField, GridField) {
        let u = w.iter().zip(&self.e_lambda).map(|(a, b)| dot(a, b)).collect();
        let v = w.iter().zip(&self.e_theta).map(|(a, b)| dot(a, b)).collect();
        (
            GridField::from_values(self.trunc, u).expect("grid size"),
            GridField::from_values(self.trunc, v).expect("grid size"),
        )
    }

    /// Moves `x` along the great circle tangent to `w` (m s⁻¹) for time `dt`.
    /// Negative `dt` traces backwards.
    fn displace(&self, x: &Vec3, w: &Vec3, dt: f64) -> Vec3 {
        let wn = dot(w, x);
        let t = [w[0] - wn * x[0], w[1] - wn * x[1], w[2] - wn * x[2]];
        let speed = dot(&t, &t).sqrt();
        if speed == 0.0 {
            return *x;
        }
        let ang = speed * dt / self.radius;
        let (s, c) = ang.sin_cos();
        let mut out = [
            c * x[0] + s * t[0] / speed,
            c * x[1] + s * t[1] / speed,
            c * x[2] + s * t[2] / speed,
        ];
        let norm = dot(&out, &out).sqrt();
        for o in &mut out {
            *o /= norm;
        }
        out
    }

    /// SETTLS departure points: first guess `x_a − Δt V_n(x_a)`, then
    /// `x_d = x_a − Δt · ½(V_extrap(x_d) + V_n(x_a))` with
    /// `V_extrap = 2V_n − V_{n−1}` supplied as `extrapolated`.
    pub fn departure_points(
        &self,
        current: &CartesianField,
        extrapolated: &CartesianField,
        dt: f64,
    ) -> Result<Departure, StepError> {
        let n = self.arrival.len();
        let mut points: Vec<Vec3> = (0..n)
            .map(|i| self.displace(&self.arrival[i], &current.at(i), -dt))
            .collect();
        let mut increments = Vec::with_capacity(SETTLS_ITERATIONS);
        for iteration in 0..SETTLS_ITERATIONS {
            let stencils: Vec<Stencil> = points.iter().map(|p| self.stencil(p)).collect();
            let ex = self.apply(&stencils, &extrapolated.x);
            let ey = self.apply(&stencils, &extrapolated.y);
            let ez = self.apply(&stencils, &extrapolated.z);
            let mut max_inc: f64 = 0.0;
            for i in 0..n {
                let vn = current.at(i);
                let mid = [
                    0.5 * (ex[i] + vn[0]),
                    0.5 * (ey[i] + vn[1]),
                    0.5 * (ez[i] + vn[2]),
                ];
                let next = self.displace(&self.arrival[i], &mid, -dt);
                if !next.iter().all(|c| c.is_finite()) {
                    return Err(StepError::DeparturePoint {
                        iteration,
                        index: i,
                    });
                }
                let d = [next[0] - points[i][0], next[1] - points[i][1], next[2] - points[i][2]];
                max_inc = max_inc.max(dot(&d, &d).sqrt());
                points[i] = next;
            }
            increments.push(max_inc);
        }
        Ok(Departure { points, increments })
    }

    fn stencil(&self, p: &Vec3) -> Stencil {
        let nlon = self.trunc.nlon();
        let theta = p[2].clamp(-1.0, 1.0).asin();
        let mut lam = p[1].atan2(p[0]);
        if lam < 0.0 {
            lam += 2.0 * PI;
        }

        // Extended row r with theta_ext[r] >= theta > theta_ext[r + 1].
        let te = &self.theta_ext;
        let r = match te.binary_search_by(|t| theta.partial_cmp(t).expect("finite latitude")) {
            Ok(i) => i.min(te.len() - 3),
            Err(i) => i - 1,
        }
        .clamp(1, te.len() - 3);
        let rows = [r - 1, r, r + 1, r + 2];
        let mut wy = [0.0; 4];
        for a in 0..4 {
            let mut w = 1.0;
            for b in 0..4 {
                if a != b {
                    w *= (theta - te[rows[b]]) / (te[rows[a]] - te[rows[b]]);
                }
            }
            wy[a] = w;
        }

        let dl = 2.0 * PI / nlon as f64;
        let s = lam / dl;
        let k0 = s.floor();
        let t = s - k0;
        let k0 = k0 as i64;
        let wx = [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ];

        let mut idx = [0usize; 16];
        let mut w = [0.0; 16];
        for (a, &row) in rows.iter().enumerate() {
            let (src, shift) = self.row_src[row];
            for b in 0..4 {
                let k = (k0 - 1 + b as i64).rem_euclid(nlon as i64) as usize;
                let k = (k + shift) % nlon;
                idx[4 * a + b] = src * nlon + k;
                w[4 * a + b] = wy[a] * wx[b];
            }
        }
        Stencil { idx, w }
    }

    fn apply(&self, stencils: &[Stencil], values: &[f64]) -> Vec<f64> {
        stencils
            .iter()
            .map(|s| s.idx.iter().zip(&s.w).map(|(&i, &w)| w * values[i]).sum())
            .collect()
    }

    /// Bicubic interpolation of a grid field at arbitrary points.
    pub fn interpolate(&self, field: &GridField, points: &[Vec3]) -> Vec<f64> {
        let stencils: Vec<Stencil> = points.iter().map(|p| self.stencil(p)).collect();
        self.apply(&stencils, field.values())
    }

    /// Interpolates several scalar arrays with one set of stencils.
    pub fn interpolate_many(&self, fields: &[&[f64]], points: &[Vec3]) -> Vec<Vec<f64>> {
        let stencils: Vec<Stencil> = points.iter().map(|p| self.stencil(p)).collect();
        fields.iter().map(|f| self.apply(&stencils, f)).collect()
    }

    /// Rotates vectors tangent at their departure point onto the tangent plane
    /// of the matching arrival point, along the connecting great circle.
    pub fn rotate_to_arrival(&self, departure: &[Vec3], vectors: &[Vec3]) -> Vec<Vec3> {
        departure
            .iter()
            .zip(vectors)
            .zip(&self.arrival)
            .map(|((xd, v), xa)| {
                let c = cross(xd, xa);
                let d = dot(xd, xa);
                let cv = cross(&c, v);
                let k = dot(&c, v) / (1.0 + d);
                [
                    v[0] * d + cv[0] + c[0] * k,
                    v[1] * d + cv[1] + c[1] * k,
                    v[2] * d + cv[2] + c[2] * k,
                ]
            })
            .collect()
    }

    /// One semi-Lagrangian step of a passive scalar in a steady wind.
    pub fn advect_tracer(
        &self,
        q: &GridField,
        u: &GridField,
        v: &GridField,
        dt: f64,
    ) -> Result<GridField, StepError> {
        let w = self.to_cartesian(u, v);
        let dep = self.departure_points(&w, &w, dt)?;
        Ok(GridField::from_values(self.trunc, self.interpolate(q, &dep.points)).expect("grid size"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::SphereGeometry;

    fn setup(m: usize) -> (SphereTransform, SemiLagrangian) {
        let tr = SphereTransform::for_wavenumber(m, SphereGeometry::earth()).unwrap();
        let sl = SemiLagrangian::new(&tr);
        (tr, sl)
    }

    #[test]
    fn interpolation_reproduces_grid_values() {
        let (tr, sl) = setup(16);
        let f = tr.grid_from_fn(|lon, lat| lat.sin() * (2.0 * lon).cos() + 0.3 * lat.cos());
        let got = sl.interpolate(&f, sl.arrival_points());
        for (a, b) in got.iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn interpolation_is_accurate_for_smooth_fields_including_polar_caps() {
        let (tr, sl) = setup(32);
        // Cartesian z and x are smooth through the poles.
        let f = |p: &Vec3| p[2] + 0.5 * p[0] * p[1] + p[0];
        let g = tr.grid_from_fn(|lon, lat| {
            let p = [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()];
            f(&p)
        });
        let pts: Vec<Vec3> = (0..200)
            .map(|i| {
                let lat = -1.5699 + 3.1398 * (i as f64 + 0.37) / 200.0;
                let lon = 0.731 * i as f64;
                [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
            })
            .collect();
        let got = sl.interpolate(&g, &pts);
        for (p, v) in pts.iter().zip(got) {
            assert!((v - f(p)).abs() < 2e-4, "{p:?} {v} {}", f(p));
        }
    }

    #[test]
    fn zero_wind_keeps_arrival_points() {
        let (tr, sl) = setup(8);
        let z = GridField::zeros(tr.truncation());
        let w = sl.to_cartesian(&z, &z);
        let dep = sl.departure_points(&w, &w, 600.0).unwrap();
        assert_eq!(dep.points, sl.arrival_points());
    }

    #[test]
    fn rotation_maps_departure_tangent_to_arrival_tangent() {
        let (tr, sl) = setup(8);
        let u = tr.grid_from_fn(|_, lat| 30.0 * lat.cos());
        let v = tr.grid_from_fn(|lon, _| 5.0 * lon.sin());
        let w = sl.to_cartesian(&u, &v);
        let dep = sl.departure_points(&w, &w, 3600.0).unwrap();
        let vecs: Vec<Vec3> = dep
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let wv = w.at(i);
                let n = dot(&wv, p);
                [wv[0] - n * p[0], wv[1] - n * p[1], wv[2] - n * p[2]]
            })
            .collect();
        let rot = sl.rotate_to_arrival(&dep.points, &vecs);
        for ((r, v), xa) in rot.iter().zip(&vecs).zip(sl.arrival_points()) {
            assert!(dot(r, xa).abs() < 1e-10 * (1.0 + dot(v, v).sqrt()));
            assert!((dot(r, r) - dot(v, v)).abs() < 1e-9 * (1.0 + dot(v, v)));
        }
    }

    #[test]
    fn solid_body_departure_points_match_rotation() {
        // Zonal solid-body flow rotates every point by −u0 Δt / a about the z axis.
        let (tr, sl) = setup(16);
        let (u0, dt) = (40.0, 1800.0);
        let a = tr.geometry().radius;
        let u = tr.grid_from_fn(|_, lat| u0 * lat.cos());
        let v = GridField::zeros(tr.truncation());
        let w = sl.to_cartesian(&u, &v);
        let dep = sl.departure_points(&w, &w, dt).unwrap();
        let ang = -u0 * dt / a;
        let (s, c) = ang.sin_cos();
        let mut worst: f64 = 0.0;
        for (p, xa) in dep.points.iter().zip(sl.arrival_points()) {
            let exact = [c * xa[0] - s * xa[1], s * xa[0] + c * xa[1], xa[2]];
            let d = [p[0] - exact[0], p[1] - exact[1], p[2] - exact[2]];
            worst = worst.max(dot(&d, &d).sqrt());
        }
        assert!(worst < 1e-6, "{worst}");
        assert!(dep.increments[1] < dep.increments[0]);
    }
}

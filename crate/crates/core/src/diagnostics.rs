//! Error norms and kinetic-energy spectra, plus the row types written to CSV.

use std::f64::consts::PI;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dynamics::PrognosticState;
use crate::harmonics::{GridField, HarmonicsError, SpectralField, SphereTransform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
    #[error("reference field is zero over the norm's index set")]
    ZeroReference,
    #[error("rnorm = {rnorm} exceeds the available truncation {available}")]
    RnormTooLarge { rnorm: usize, available: usize },
    #[error("grid shapes differ")]
    GridMismatch,
}

/// Formats a float with 17 significant digits, enough to round-trip exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn serialize_f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_f64(*v))
}

pub fn deserialize_f64<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        F(f64),
        S(String),
    }
    match Num::deserialize(d)? {
        Num::F(v) => Ok(v),
        Num::S(s) => s.trim().parse().map_err(serde::de::Error::custom),
    }
}

/// Max-norm of the coefficients over `m ≤ rnorm`, `m ≤ n ≤ rnorm`.
fn capped_max(field: &SpectralField, rnorm: usize) -> f64 {
    let mut best: f64 = 0.0;
    for m in 0..=rnorm {
        for n in m..=rnorm {
            best = best.max(field.get(m, n).norm());
        }
    }
    best
}

/// `max |ψ − ψ_ref| / max |ψ_ref|` over `m ≤ rnorm`, `m ≤ n ≤ rnorm`.
pub fn spectral_error(psi: &SpectralField, psi_ref: &SpectralField, rnorm: usize) -> Result<f64, DiagnosticsError> {
    let available = psi.max_wavenumber().min(psi_ref.max_wavenumber());
    if rnorm > available {
        return Err(DiagnosticsError::RnormTooLarge { rnorm, available });
    }
    let mut num: f64 = 0.0;
    for m in 0..=rnorm {
        for n in m..=rnorm {
            num = num.max((psi.get(m, n) - psi_ref.get(m, n)).norm());
        }
    }
    let den = capped_max(psi_ref, rnorm);
    if den == 0.0 {
        return Err(DiagnosticsError::ZeroReference);
    }
    Ok(num / den)
}

/// Relative root-mean-square difference with equal weight per grid point.
pub fn l2_error(psi: &GridField, psi_ref: &GridField) -> Result<f64, DiagnosticsError> {
    if psi.truncation() != psi_ref.truncation() {
        return Err(DiagnosticsError::GridMismatch);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in psi.values().iter().zip(psi_ref.values()) {
        num += (a - b) * (a - b);
        den += b * b;
    }
    if den == 0.0 {
        return Err(DiagnosticsError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// [`l2_error`] of two spectral fields on the grid of `transform`, after
/// truncating both to its resolution.
pub fn l2_error_spectral(
    psi: &SpectralField,
    psi_ref: &SpectralField,
    transform: &SphereTransform,
) -> Result<f64, DiagnosticsError> {
    let t = transform.truncation();
    let a = transform.synthesis(&psi.resample(t))?;
    let b = transform.synthesis(&psi_ref.resample(t))?;
    l2_error(&a, &b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorTarget {
    Fine,
    Reference,
}

/// Errors of one iterate against one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub iteration: usize,
    pub target: ErrorTarget,
    /// `(rnorm, E_rnorm)` pairs.
    pub spectral: Vec<(usize, f64)>,
    pub l2: f64,
}

impl ErrorRecord {
    /// Spectral errors for each `rnorm` and the grid L2 error of the
    /// geopotential, on the common truncation of the two states.
    pub fn phi_errors(
        iteration: usize,
        target: ErrorTarget,
        state: &PrognosticState,
        reference: &PrognosticState,
        rnorms: &[usize],
        transform: &SphereTransform,
    ) -> Result<Self, DiagnosticsError> {
        let spectral = rnorms
            .iter()
            .map(|&r| spectral_error(&state.phi, &reference.phi, r).map(|e| (r, e)))
            .collect::<Result<_, _>>()?;
        let l2 = l2_error_spectral(&state.phi, &reference.phi, transform)?;
        Ok(Self {
            iteration,
            target,
            spectral,
            l2,
        })
    }

    /// Flattens into CSV rows; the L2 error gets `rnorm = "l2"`.
    pub fn rows(&self) -> Vec<ErrorRow> {
        let mut out: Vec<ErrorRow> = self
            .spectral
            .iter()
            .map(|&(r, v)| ErrorRow {
                k: self.iteration,
                rnorm: r.to_string(),
                target: self.target,
                value: v,
            })
            .collect();
        out.push(ErrorRow {
            k: self.iteration,
            rnorm: "l2".into(),
            target: self.target,
            value: self.l2,
        });
        out
    }
}

/// One line of `errors.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub k: usize,
    /// Wavenumber cap, or `l2` for the physical-space error.
    pub rnorm: String,
    pub target: ErrorTarget,
    #[serde(serialize_with = "serialize_f64", deserialize_with = "deserialize_f64")]
    pub value: f64,
}

/// One line of a kinetic-energy spectrum file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub n: usize,
    #[serde(serialize_with = "serialize_f64", deserialize_with = "deserialize_f64")]
    pub wavelength_m: f64,
    #[serde(serialize_with = "serialize_f64", deserialize_with = "deserialize_f64")]
    pub energy: f64,
}

/// `E(n) = (1/4) a²/(n(n+1)) Σ_{m=−n}^{n} (|ξ_{m,n}|² + |δ_{m,n}|²)` for `n ≥ 1`.
///
/// Only `m ≥ 0` is stored, so `m > 0` terms count twice.
pub fn ke_spectrum(state: &PrognosticState, radius: f64) -> Vec<SpectrumRow> {
    let mx = state.truncation().max_wavenumber();
    let mut energy = vec![0.0; mx + 1];
    for (m, n) in state.truncation().modes() {
        if n == 0 {
            continue;
        }
        let w = if m == 0 { 1.0 } else { 2.0 };
        energy[n] += w * (state.xi.get(m, n).norm_sqr() + state.delta.get(m, n).norm_sqr());
    }
    (1..=mx)
        .map(|n| SpectrumRow {
            n,
            wavelength_m: 2.0 * PI * radius / n as f64,
            energy: 0.25 * radius * radius / (n * (n + 1)) as f64 * energy[n],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::Truncation;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(t: Truncation, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralField::from_fn(t, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn spectral_error_basics() {
        let t = Truncation::new(20).unwrap();
        let r = random(t, 1);
        assert_eq!(spectral_error(&r, &r, 10).unwrap(), 0.0);
        assert!((spectral_error(&r.scaled(2.0), &r, 10).unwrap() - 1.0).abs() < 1e-15);
        let mut p = r.clone();
        p.set(3, 11, Complex64::new(9.0, 9.0));
        assert_eq!(spectral_error(&p, &r, 10).unwrap(), 0.0);
        assert!(spectral_error(&r, &r, 21).is_err());
        assert_eq!(
            spectral_error(&r, &SpectralField::zeros(t), 5),
            Err(DiagnosticsError::ZeroReference)
        );
    }

    #[test]
    fn spectral_error_across_resolutions_uses_common_modes() {
        let hi = random(Truncation::new(24).unwrap(), 2);
        let lo = hi.truncate_pad(16).unwrap();
        assert_eq!(spectral_error(&lo, &hi, 16).unwrap(), 0.0);
    }

    #[test]
    fn l2_error_matches_double_loop() {
        let t = Truncation::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..t.grid_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..t.grid_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ga = GridField::from_values(t, a.clone()).unwrap();
        let gb = GridField::from_values(t, b.clone()).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..t.nlat() {
            for k in 0..t.nlon() {
                let i = j * t.nlon() + k;
                num += (a[i] - b[i]).powi(2) / (t.grid_len() as f64);
                den += b[i].powi(2) / (t.grid_len() as f64);
            }
        }
        let expect = (num / den).sqrt();
        assert!((l2_error(&ga, &gb).unwrap() - expect).abs() < 1e-12 * expect);
        assert_eq!(l2_error(&gb, &gb).unwrap(), 0.0);
        let g2 = gb.map(|v| 2.0 * v);
        assert!((l2_error(&g2, &gb).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ke_single_mode() {
        let t = Truncation::new(4).unwrap();
        let mut s = PrognosticState::zeros(t, 1.0);
        let c = 3.0;
        s.xi.set(0, 2, Complex64::new(c, 0.0));
        let spec = ke_spectrum(&s, 1.0);
        assert!((spec[1].energy - c * c / 24.0).abs() < 1e-15);
        assert!(spec.iter().filter(|r| r.n != 2).all(|r| r.energy == 0.0));
        let zero = ke_spectrum(&PrognosticState::zeros(t, 1.0), 1.0);
        assert!(zero.iter().all(|r| r.energy == 0.0));
    }

    #[test]
    fn records_round_trip_through_json() {
        let row = ErrorRow {
            k: 3,
            rnorm: "32".into(),
            target: ErrorTarget::Reference,
            value: 0.1 + 0.2,
        };
        let s = serde_json::to_string(&row).unwrap();
        assert_eq!(serde_json::from_str::<ErrorRow>(&s).unwrap(), row);
        let sp = SpectrumRow {
            n: 7,
            wavelength_m: 2.0 * PI * 6371.22e3 / 7.0,
            energy: 1.0 / 3.0,
        };
        let s = serde_json::to_string(&sp).unwrap();
        assert_eq!(serde_json::from_str::<SpectrumRow>(&s).unwrap(), sp);
        assert_eq!(format_f64(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}

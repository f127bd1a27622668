//! Gauss–Legendre quadrature and fully normalised associated Legendre functions.
//!
//! The functions `P̃_n^m(μ)` computed here satisfy `∫_{-1}^{1} P̃_n^m(μ)² dμ = 1`
//! and carry no Condon–Shortley phase. They are generated by the standard
//! three-term recurrence in `n` seeded by the sectoral values `P̃_m^m`, which is
//! stable and never forms factorials.

use super::HarmonicsError;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITERS: usize = 100;

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Nodes are stored in strictly decreasing order (north to south when the
/// node is read as `μ = sin(latitude)`).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

impl GaussLegendre {
    pub fn new(n: usize) -> Result<Self, HarmonicsError> {
        if n == 0 {
            return Err(HarmonicsError::InvalidTruncation(
                "Gauss-Legendre rule needs at least one node".into(),
            ));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut converged = false;
            let mut dp = 0.0;
            for _ in 0..NEWTON_MAX_ITERS {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= NEWTON_TOL {
                    converged = true;
                    break;
                }
            }
            if !converged || !x.is_finite() {
                return Err(HarmonicsError::RootFinding { index: i });
            }
            // Recompute the derivative at the converged node for the weight.
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = x;
            weights[i] = w;
            nodes[n - 1 - i] = -x;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies the rule to `f`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Values of `P̃_n^m(μ)` for `0 ≤ m ≤ mmax`, `m ≤ n ≤ nmax`, written into `out`
/// in triangular order (all `n` for `m = 0`, then `m = 1`, ...).
///
/// `out` must hold `triangular_len(mmax, nmax)` entries.
pub(crate) fn normalized_legendre_into(mmax: usize, nmax: usize, mu: f64, out: &mut [f64]) {
    debug_assert!(mmax <= nmax);
    debug_assert_eq!(out.len(), triangular_len(mmax, nmax));
    let cos = (1.0 - mu * mu).max(0.0).sqrt();
    let mut sectoral = std::f64::consts::FRAC_1_SQRT_2;
    let mut offset = 0;
    for m in 0..=mmax {
        if m > 0 {
            let mf = m as f64;
            sectoral *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * cos;
        }
        let count = nmax - m + 1;
        let row = &mut out[offset..offset + count];
        row[0] = sectoral;
        if count > 1 {
            row[1] = (2.0 * m as f64 + 3.0).sqrt() * mu * sectoral;
        }
        let mf = m as f64;
        for k in 2..count {
            let n = (m + k) as f64;
            let a = ((4.0 * n * n - 1.0) / (n * n - mf * mf)).sqrt();
            let b = (((n - 1.0) * (n - 1.0) - mf * mf) / (4.0 * (n - 1.0) * (n - 1.0) - 1.0)).sqrt();
            row[k] = a * (mu * row[k - 1] - b * row[k - 2]);
        }
        offset += count;
    }
}

/// Number of `(m, n)` pairs with `0 ≤ m ≤ mmax`, `m ≤ n ≤ nmax`.
pub(crate) fn triangular_len(mmax: usize, nmax: usize) -> usize {
    (0..=mmax).map(|m| nmax - m + 1).sum()
}

/// `ε_n^m = sqrt((n² − m²)/(4n² − 1))`, the coupling coefficient of the
/// `μ`-recurrence for normalised Legendre functions.
pub(crate) fn epsilon(m: usize, n: usize) -> f64 {
    if n == 0 || n < m {
        return 0.0;
    }
    let (mf, nf) = (m as f64, n as f64);
    ((nf * nf - mf * mf) / (4.0 * nf * nf - 1.0)).sqrt()
}

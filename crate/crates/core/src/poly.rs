//! Polynomial-extrapolation baseline.
//!
//! Each of the six channels gets an independent least-squares polynomial
//! over the history window, which is then evaluated past the window's end
//! to produce the forecast. No learned state, no scaler: everything is
//! per-window and in physical units.
//!
//! The fit parameterizes time as u ∈ [−1, 1] across the history (u > 1
//! ahead of it) and subtracts each channel's mean before solving. Raw
//! monomials in sample index would be hopelessly ill-conditioned at
//! degree 8 over 150 points; the symmetric normalized basis keeps the
//! Vandermonde factorization accurate, and centering makes constant
//! histories round-trip bit-exactly. The solver is Householder QR, not
//! normal equations.

use crate::error::{Error, Result};
use crate::predictor::Forecast;
use crate::trajectory::{Sample, CHANNELS};

pub const DEFAULT_POLY_DEGREE: usize = 8;

/// Per-channel polynomial coefficients in the normalized basis.
/// `coeffs[p][c]` multiplies u^p for channel c; `coeffs.len() = degree + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyFit {
    pub degree: usize,
    pub n_history: usize,
    pub coeffs: Vec<[f64; CHANNELS]>,
}

impl PolyFit {
    /// Normalized time for a step offset: 0 is the last history sample,
    /// negative offsets reach back into the history, positive ones ahead.
    fn u_at(&self, step_offset: i64) -> f64 {
        let half_span = (self.n_history - 1) as f64;
        2.0 * step_offset as f64 / half_span + 1.0
    }

    /// Evaluate all channels at a step offset (Horner).
    pub fn eval_at_step(&self, step_offset: i64) -> Sample {
        let u = self.u_at(step_offset);
        let mut acc = [0.0; CHANNELS];
        for p in (0..self.coeffs.len()).rev() {
            for c in 0..CHANNELS {
                acc[c] = acc[c] * u + self.coeffs[p][c];
            }
        }
        Sample::from_array(acc)
    }
}

/// Least-squares fit of one polynomial per channel over the history.
pub fn fit_poly(history: &[Sample], degree: usize) -> Result<PolyFit> {
    let n = history.len();
    let m = degree + 1;
    if n < 2 || m > n {
        return Err(Error::config(format!(
            "cannot fit degree {degree} to {n} samples"
        )));
    }
    if history.iter().any(|s| !s.is_finite()) {
        return Err(Error::numerical("polynomial fit given non-finite history"));
    }

    // Centering: fit the residual about each channel's mean, then fold the
    // mean back into the constant term. A constant history therefore maps
    // to an all-zero residual system, whose solution is exactly zero.
    let mut mean = [0.0; CHANNELS];
    for s in history {
        for (acc, v) in mean.iter_mut().zip(s.to_array()) {
            *acc += v;
        }
    }
    for acc in &mut mean {
        *acc /= n as f64;
    }

    let half_span = (n - 1) as f64;
    let mut a = vec![0.0; n * m];
    let mut b = vec![0.0; n * CHANNELS];
    for (j, s) in history.iter().enumerate() {
        let u = (2 * j) as f64 / half_span - 1.0;
        let mut pw = 1.0;
        for p in 0..m {
            a[j * m + p] = pw;
            pw *= u;
        }
        for (c, v) in s.to_array().into_iter().enumerate() {
            b[j * CHANNELS + c] = v - mean[c];
        }
    }

    let x = lstsq_qr(&mut a, &mut b, n, m)?;
    let mut coeffs = vec![[0.0; CHANNELS]; m];
    for p in 0..m {
        for c in 0..CHANNELS {
            coeffs[p][c] = x[p * CHANNELS + c];
        }
    }
    for c in 0..CHANNELS {
        coeffs[0][c] += mean[c];
    }
    if coeffs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::numerical("polynomial fit produced non-finite coefficients"));
    }
    Ok(PolyFit {
        degree,
        n_history: n,
        coeffs,
    })
}

/// Evaluate the fitted polynomial at steps +1..+horizon past the history.
/// The normalized basis makes the values independent of the sample rate;
/// the rate is validated for interface consistency with the other
/// forecasters.
pub fn extrapolate(fit: &PolyFit, horizon: usize, rate_hz: f64) -> Result<Forecast> {
    if horizon == 0 {
        return Err(Error::config("extrapolation horizon must be at least 1"));
    }
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(Error::config(format!("invalid sample rate {rate_hz}")));
    }
    let steps: Vec<Sample> = (1..=horizon as i64).map(|h| fit.eval_at_step(h)).collect();
    if steps.iter().any(|s| !s.is_finite()) {
        return Err(Error::numerical("polynomial extrapolation produced non-finite values"));
    }
    Ok(Forecast { steps, horizon })
}

/// Minimum-norm residual solve of A·X = B with A n×m (n ≥ m) and B
/// n×nrhs, both row-major, via Householder QR. A and B are consumed as
/// workspace. Returns X as m×nrhs row-major.
fn lstsq_qr(a: &mut [f64], b: &mut [f64], n: usize, m: usize) -> Result<Vec<f64>> {
    const NRHS: usize = CHANNELS;
    // Rank tolerance relative to the largest initial column norm.
    let mut scale: f64 = 0.0;
    for p in 0..m {
        let norm2: f64 = (0..n).map(|i| a[i * m + p] * a[i * m + p]).sum();
        scale = scale.max(norm2.sqrt());
    }
    let tol = scale * 1e-13;

    for p in 0..m {
        let tail_norm2: f64 = (p..n).map(|i| a[i * m + p] * a[i * m + p]).sum();
        let norm = tail_norm2.sqrt();
        if !(norm > tol) {
            return Err(Error::numerical(format!(
                "rank-deficient polynomial system at column {p}"
            )));
        }
        let x_p = a[p * m + p];
        let alpha = if x_p >= 0.0 { -norm } else { norm };
        let v_p = x_p - alpha;
        let vtv = v_p * v_p + (tail_norm2 - x_p * x_p);
        // Reflect the remaining columns of A.
        for j in p + 1..m {
            let mut dot = v_p * a[p * m + j];
            for i in p + 1..n {
                dot += a[i * m + p] * a[i * m + j];
            }
            let f = 2.0 * dot / vtv;
            a[p * m + j] -= f * v_p;
            for i in p + 1..n {
                a[i * m + j] -= f * a[i * m + p];
            }
        }
        // Reflect every right-hand side.
        for j in 0..NRHS {
            let mut dot = v_p * b[p * NRHS + j];
            for i in p + 1..n {
                dot += a[i * m + p] * b[i * NRHS + j];
            }
            let f = 2.0 * dot / vtv;
            b[p * NRHS + j] -= f * v_p;
            for i in p + 1..n {
                b[i * NRHS + j] -= f * a[i * m + p];
            }
        }
        a[p * m + p] = alpha;
    }

    // Back substitution on the upper triangle.
    let mut x = vec![0.0; m * NRHS];
    for j in 0..NRHS {
        for i in (0..m).rev() {
            let mut s = b[i * NRHS + j];
            for t in i + 1..m {
                s -= a[i * m + t] * x[t * NRHS + j];
            }
            x[i * NRHS + j] = s / a[i * m + i];
        }
    }
    Ok(x)
}

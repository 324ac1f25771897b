//! Least-squares fits used by the calibration protocols: a cosine model for
//! phase scans, a quadratic for amplitude scans and a log-linear Gaussian for
//! waist extraction.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::hologram::reduce_phase;

/// Fit of `I(phi) = c0 + c1 cos(phi - phi0)` with `c1 >= 0`.
#[derive(Clone, Copy, Debug)]
pub struct CosineFit {
    pub c0: f64,
    pub c1: f64,
    pub phi0: f64,
    /// Phase of the fitted minimum, reduced to [0, 2 pi).
    pub minimum: f64,
    pub residual_rms: f64,
}

impl CosineFit {
    /// True when the modulation is too weak to trust the minimum.
    pub fn degenerate(&self) -> bool {
        self.c1 < 3.0 * self.residual_rms
    }
}

/// Linear least squares of I on (1, cos phi, sin phi).
pub fn cosine_fit(phases: &[f64], intensities: &[f64]) -> Result<CosineFit> {
    if phases.len() != intensities.len() || phases.len() < 3 {
        return Err(Error::Parameter(format!(
            "cosine fit needs >= 3 matched samples, got {} and {}",
            phases.len(),
            intensities.len()
        )));
    }
    // Normal equations for the 3-parameter linear model.
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for (&p, &y) in phases.iter().zip(intensities) {
        let b = [1.0, p.cos(), p.sin()];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += b[r] * b[c];
            }
            rhs[r] += b[r] * y;
        }
    }
    let sol = solve3(m, rhs)
        .ok_or_else(|| Error::Parameter("cosine fit is singular (degenerate phase grid)".into()))?;
    let (a, b, c) = (sol[0], sol[1], sol[2]);
    let c1 = b.hypot(c);
    let phi0 = c.atan2(b);
    let mut ss = 0.0;
    for (&p, &y) in phases.iter().zip(intensities) {
        let model = a + c1 * (p - phi0).cos();
        ss += (y - model) * (y - model);
    }
    let residual_rms = (ss / phases.len() as f64).sqrt();
    Ok(CosineFit { c0: a, c1, phi0: reduce_phase(phi0), minimum: reduce_phase(phi0 + PI), residual_rms })
}

/// Fit of `I(A) = a A^2 + b A + c` with the vertex clamped to [0, 1].
#[derive(Clone, Copy, Debug)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Vertex location clamped to [0, 1]; meaningful only when convex.
    pub vertex: f64,
    pub convex: bool,
    pub residual_rms: f64,
}

pub fn quadratic_fit(xs: &[f64], ys: &[f64]) -> Result<QuadraticFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Parameter(format!(
            "quadratic fit needs >= 3 matched samples, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let b = [x * x, x, 1.0];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += b[r] * b[c];
            }
            rhs[r] += b[r] * y;
        }
    }
    let sol = solve3(m, rhs)
        .ok_or_else(|| Error::Parameter("quadratic fit is singular (degenerate grid)".into()))?;
    let (a, b, c) = (sol[0], sol[1], sol[2]);
    let convex = a > 0.0;
    let vertex = if convex { (-b / (2.0 * a)).clamp(0.0, 1.0) } else { f64::NAN };
    let mut ss = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let model = a * x * x + b * x + c;
        ss += (y - model) * (y - model);
    }
    Ok(QuadraticFit { a, b, c, vertex, convex, residual_rms: (ss / xs.len() as f64).sqrt() })
}

/// Gaussian waist fit of a peak-normalized profile `I = exp(-2 x^2 / w^2)`.
#[derive(Clone, Copy, Debug)]
pub struct WaistFit {
    pub waist: f64,
    /// rms of (I - model) over the fitted samples, in intensity units.
    pub residual_rms: f64,
    /// Set when the central lobe deviates from a Gaussian by more than 10%.
    pub flagged: bool,
}

/// Log-linear least squares on samples with I >= 0.1; positions in meters
/// relative to the peak.
pub fn waist_fit(positions: &[f64], intensities: &[f64]) -> Result<WaistFit> {
    let pts: Vec<(f64, f64)> = positions
        .iter()
        .zip(intensities)
        .filter(|(_, &y)| y >= 0.1)
        .map(|(&x, &y)| (x, y))
        .collect();
    if pts.len() < 5 {
        return Err(Error::Parameter(format!(
            "waist fit needs >= 5 samples in the central lobe, got {}",
            pts.len()
        )));
    }
    // ln I = -2 x^2 / w^2 ; slope of ln I against x^2.
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in &pts {
        let s = x * x;
        sxx += s * s;
        sxy += s * y.ln();
    }
    if sxx <= 0.0 {
        return Err(Error::Parameter("waist fit needs off-center samples".into()));
    }
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return Err(Error::Parameter("central lobe does not decay; no waist".into()));
    }
    let waist = (-2.0 / slope).sqrt();
    let mut ss = 0.0;
    for &(x, y) in &pts {
        let model = (slope * x * x).exp();
        ss += (y - model) * (y - model);
    }
    let residual_rms = (ss / pts.len() as f64).sqrt();
    Ok(WaistFit { waist, residual_rms, flagged: residual_rms > 0.10 })
}

/// Solve a 3x3 linear system by Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| {
            m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap()
        })?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut acc = rhs[row];
        for k in row + 1..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_fit_recovers_exact_model() {
        let phases: Vec<f64> = (0..16).map(|k| k as f64 * std::f64::consts::TAU / 16.0).collect();
        let ys: Vec<f64> = phases.iter().map(|&p| 2.0 + 0.7 * (p - 1.3).cos()).collect();
        let fit = cosine_fit(&phases, &ys).unwrap();
        assert!((fit.c0 - 2.0).abs() < 1e-12);
        assert!((fit.c1 - 0.7).abs() < 1e-12);
        assert!((fit.phi0 - 1.3).abs() < 1e-12);
        assert!((fit.minimum - (1.3 + PI)).abs() < 1e-12);
        assert!(fit.residual_rms < 1e-12);
        assert!(!fit.degenerate());
    }

    #[test]
    fn cosine_fit_flags_flat_data() {
        let phases: Vec<f64> = (0..16).map(|k| k as f64 * std::f64::consts::TAU / 16.0).collect();
        let ys: Vec<f64> = phases.iter().map(|&p| 1.0 + 1e-6 * (3.0 * p).sin()).collect();
        let fit = cosine_fit(&phases, &ys).unwrap();
        assert!(fit.degenerate());
    }

    #[test]
    fn quadratic_fit_recovers_vertex() {
        let xs: Vec<f64> = (0..9).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 3.0 * (x - 0.38) * (x - 0.38) + 0.01).collect();
        let fit = quadratic_fit(&xs, &ys).unwrap();
        assert!(fit.convex);
        assert!((fit.vertex - 0.38).abs() < 1e-12);
    }

    #[test]
    fn quadratic_fit_reports_non_convex() {
        let xs: Vec<f64> = (0..9).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 1.0 - x * x).collect();
        let fit = quadratic_fit(&xs, &ys).unwrap();
        assert!(!fit.convex);
        assert!(fit.vertex.is_nan());
    }

    #[test]
    fn waist_fit_round_trip() {
        for &w in &[5e-6, 9e-6, 20e-6, 40e-6] {
            let positions: Vec<f64> = (-40..=40).map(|k| k as f64 * w / 10.0).collect();
            let ys: Vec<f64> =
                positions.iter().map(|&x| (-2.0 * x * x / (w * w)).exp()).collect();
            let fit = waist_fit(&positions, &ys).unwrap();
            assert!((fit.waist - w).abs() / w < 0.005, "w {w} fit {}", fit.waist);
            assert!(!fit.flagged);
        }
    }

    #[test]
    fn waist_fit_needs_central_samples() {
        let positions = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 0.01, 0.001, 0.0001];
        assert!(waist_fit(&positions, &ys).is_err());
    }
}

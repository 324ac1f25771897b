//! Crosstalk metrics: axial intensity profiles, the relative intensity
//! crosstalk I_X in dB, and waist extraction.
//!
//! Profiles are peak-normalized, so I_X is a pure ratio: scaling the field
//! leaves every value unchanged. A configurable detector floor clamps
//! reported intensities from below, emulating the measurement limit.

use crate::error::{Error, Result};
use crate::field::{ComplexField, Plane};
use crate::fit::{waist_fit, WaistFit};

/// 1-D intensity cut through the addressed spot along the addressing axis.
#[derive(Clone, Debug)]
pub struct CrosstalkProfile {
    /// Positions along the axis relative to the spot center, meters.
    pub positions: Vec<f64>,
    /// Peak-normalized linear intensities, floored at the detector floor.
    pub intensities: Vec<f64>,
    /// Fitted 1/e^2 waist of the central lobe, meters.
    pub waist: f64,
    pub waist_residual_rms: f64,
    /// Set when the central lobe is visibly non-Gaussian.
    pub waist_flagged: bool,
    /// Detector floor that was applied, dB.
    pub floor_db: f64,
    pub plane: Plane,
}

impl CrosstalkProfile {
    /// Position range covered by the profile.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.positions.first().copied().unwrap_or(0.0),
            self.positions.last().copied().unwrap_or(0.0),
        )
    }
}

/// Extract the profile through the global intensity peak.
///
/// Samples patch-averaged intensity (patch x patch camera-pixel surrogate)
/// along the axis at `axis_angle` (0 = +x) through the peak, at the grid
/// pitch, normalizes to the profile maximum and applies the detector floor
/// `max(I, 10^(floor_db/10))`.
pub fn extract_profile(
    field: &ComplexField,
    axis_angle: f64,
    patch: usize,
    floor_db: f64,
) -> Result<CrosstalkProfile> {
    if field.samples.iter().all(|a| a.norm_sqr() == 0.0) {
        return Err(Error::Parameter("no peak: field is identically zero".into()));
    }
    let (rows, cols) = field.dim();
    let (pi, pj) = field.argmax_intensity();
    let (dy, dx) = (axis_angle.sin(), axis_angle.cos());
    // Step along the axis at the finer grid pitch.
    let step = if dx.abs() >= dy.abs() { field.pitch_x } else { field.pitch_y };
    // Walk outward in both directions while the sample stays on the grid.
    let mut ts: Vec<i64> = Vec::new();
    let max_t = (rows.max(cols)) as i64;
    for t in -max_t..=max_t {
        let y = pi as f64 + (t as f64) * step * dy / field.pitch_y;
        let x = pj as f64 + (t as f64) * step * dx / field.pitch_x;
        if y >= 0.0 && x >= 0.0 && (y.round() as usize) < rows && (x.round() as usize) < cols {
            ts.push(t);
        }
    }
    if ts.len() < 2 {
        return Err(Error::Parameter("profile axis leaves the grid immediately".into()));
    }
    let mut positions = Vec::with_capacity(ts.len());
    let mut intensities = Vec::with_capacity(ts.len());
    for &t in &ts {
        let y = (pi as f64 + (t as f64) * step * dy / field.pitch_y).round() as usize;
        let x = (pj as f64 + (t as f64) * step * dx / field.pitch_x).round() as usize;
        positions.push(t as f64 * step);
        intensities.push(field.patch_intensity_at(y, x, patch));
    }
    let peak = intensities.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Err(Error::Parameter("no peak: profile is identically zero".into()));
    }
    for v in &mut intensities {
        *v /= peak;
    }
    let fit = fit_profile_waist(&positions, &intensities)?;
    let floor = 10f64.powf(floor_db / 10.0);
    for v in &mut intensities {
        *v = v.max(floor);
    }
    Ok(CrosstalkProfile {
        positions,
        intensities,
        waist: fit.waist,
        waist_residual_rms: fit.residual_rms,
        waist_flagged: fit.flagged,
        floor_db,
        plane: field.plane,
    })
}

fn fit_profile_waist(positions: &[f64], intensities: &[f64]) -> Result<WaistFit> {
    waist_fit(positions, intensities)
}

/// Relative intensity crosstalk at a displacement from the spot center, in
/// dB. `location` is in units of the fitted waist; intensity is linearly
/// interpolated between profile samples.
pub fn relative_crosstalk(profile: &CrosstalkProfile, location: f64) -> Result<f64> {
    let x = location * profile.waist;
    let (lo, hi) = profile.extent();
    if x < lo || x > hi {
        return Err(Error::Parameter(format!(
            "location {location} w ({x:.3e} m) outside profile extent [{lo:.3e}, {hi:.3e}]"
        )));
    }
    // positions are sorted ascending by construction.
    let idx = profile.positions.partition_point(|&p| p <= x);
    let value = if idx == 0 {
        profile.intensities[0]
    } else if idx >= profile.positions.len() {
        *profile.intensities.last().unwrap()
    } else {
        let x0 = profile.positions[idx - 1];
        let x1 = profile.positions[idx];
        let y0 = profile.intensities[idx - 1];
        let y1 = profile.intensities[idx];
        if x1 > x0 {
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        } else {
            y0
        }
    };
    Ok(10.0 * value.log10())
}

/// Fitted waist of a profile (meters). Errors when the central lobe holds
/// fewer than 5 samples; flags non-Gaussian lobes via `waist_flagged`.
pub fn fit_waist(profile: &CrosstalkProfile) -> Result<WaistFit> {
    waist_fit(&profile.positions, &profile.intensities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use num_complex::Complex64;

    fn gaussian_spot(n: usize, pitch: f64, w: f64, center_off: (i64, i64)) -> ComplexField {
        let samples = Array2::from_shape_fn((n, n), |(i, j)| {
            let y = (i as i64 - (n / 2) as i64 - center_off.0) as f64 * pitch;
            let x = (j as i64 - (n / 2) as i64 - center_off.1) as f64 * pitch;
            Complex64::new((-(x * x + y * y) / (w * w)).exp(), 0.0)
        });
        ComplexField::new(samples, pitch, pitch, Plane::Ip1).unwrap()
    }

    #[test]
    fn gaussian_profile_matches_model_to_three_waists() {
        let w = 9e-6;
        let f = gaussian_spot(256, 1e-6, w, (0, 0));
        // patch = 1 so the analytic profile is exact.
        let p = extract_profile(&f, 0.0, 1, -200.0).unwrap();
        for (x, y) in p.positions.iter().zip(&p.intensities) {
            if x.abs() <= 3.0 * w {
                let model = (-2.0 * x * x / (w * w)).exp();
                assert!((y - model).abs() < 1e-4, "x {x} y {y} model {model}");
            }
        }
        assert!((p.waist - w).abs() / w < 0.005);
    }

    #[test]
    fn floor_clamps_reported_values() {
        let f = gaussian_spot(128, 1e-6, 5e-6, (0, 0));
        let p = extract_profile(&f, 0.0, 3, -60.0).unwrap();
        assert!(p.intensities.iter().all(|&v| v >= 1e-6));
        // Applying the floor twice changes nothing.
        let again: Vec<f64> = p.intensities.iter().map(|v| v.max(1e-6)).collect();
        assert_eq!(again, p.intensities);
    }

    #[test]
    fn mirrored_axis_gives_mirrored_profile() {
        let f = gaussian_spot(128, 1e-6, 5e-6, (0, 7));
        let a = extract_profile(&f, 0.0, 3, -200.0).unwrap();
        let b = extract_profile(&f, std::f64::consts::PI, 3, -200.0).unwrap();
        let rev: Vec<f64> = b.intensities.iter().rev().cloned().collect();
        assert_eq!(a.intensities, rev);
    }

    #[test]
    fn peak_normalization_is_exact_and_scale_invariant() {
        let f = gaussian_spot(128, 1e-6, 5e-6, (3, -2));
        let p = extract_profile(&f, 0.0, 3, -200.0).unwrap();
        assert_eq!(p.intensities.iter().cloned().fold(0.0f64, f64::max), 1.0);
        let scaled = f.clone().scaled(Complex64::new(17.0, 3.0));
        let q = extract_profile(&scaled, 0.0, 3, -200.0).unwrap();
        for (a, b) in p.intensities.iter().zip(&q.intensities) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn crosstalk_values_match_definition() {
        let w = 9e-6;
        let f = gaussian_spot(512, 1e-6, w, (0, 0));
        let mut p = extract_profile(&f, 0.0, 1, -200.0).unwrap();
        assert!((relative_crosstalk(&p, 0.0).unwrap() - 0.0).abs() < 1e-9);
        // Plant the paper-style values directly.
        let i4 = p
            .positions
            .iter()
            .position(|&x| (x - 4.0 * p.waist).abs() < 0.6e-6)
            .unwrap();
        p.intensities[i4] = 5.5e-5;
        let x4 = p.positions[i4] / p.waist;
        let db = relative_crosstalk(&p, x4).unwrap();
        assert!((db - (-42.6)).abs() < 0.05, "got {db}");
        p.intensities[i4] = 1e-5;
        assert!((relative_crosstalk(&p, x4).unwrap() + 50.0).abs() < 1e-9);
        assert!(relative_crosstalk(&p, 1e6).is_err());
    }

    #[test]
    fn interpolation_hits_sample_nodes_exactly() {
        let f = gaussian_spot(128, 1e-6, 6e-6, (0, 0));
        let p = extract_profile(&f, 0.0, 3, -80.0).unwrap();
        for (x, y) in p.positions.iter().zip(&p.intensities) {
            let db = relative_crosstalk(&p, x / p.waist).unwrap();
            assert!((db - 10.0 * y.log10()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_field_has_no_peak() {
        let f = ComplexField::new(
            Array2::from_elem((16, 16), Complex64::new(0.0, 0.0)),
            1e-6,
            1e-6,
            Plane::Ip1,
        )
        .unwrap();
        assert!(extract_profile(&f, 0.0, 3, -60.0).is_err());
    }
}

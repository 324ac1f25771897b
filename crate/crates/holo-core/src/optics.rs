//! Light propagation: illumination synthesis, binary-mask application, lens
//! Fourier transforms, Fourier-plane stops and the two-lens image relay.
//!
//! Transform convention: the optical Fourier transform of a lens of focal
//! length f maps an input sampled at pitch p to an output sampled at
//! q = lambda f / (N p) per axis, with kernel exp(-2*pi*i u.x / (lambda f))
//! and prefactor p_x p_y / (i lambda f). A transmission component
//! exp(+2*pi*i x_a.x / (lambda f)) therefore lands at image position +x_a,
//! and total power is conserved exactly (Parseval). Grid centers are the
//! optical axis; dimensions must be even.

use std::sync::Mutex;

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::{Arc, OnceLock};

use crate::aberration::AberrationMap;
use crate::config::OpticalConfig;
use crate::error::{Error, Result};
use crate::field::{ComplexField, Plane};
use crate::pattern::DmdPattern;

/// Direction of the lens transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Which device region a mask application refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Fp1,
    Ip1,
}

/// Shape of a Fourier-plane stop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ApertureShape {
    Circular,
    Square,
}

/// Centered Fourier-plane stop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aperture {
    pub radius: f64,
    pub shape: ApertureShape,
}

impl Aperture {
    pub fn circular(radius: f64) -> Aperture {
        Aperture { radius, shape: ApertureShape::Circular }
    }
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(len: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
    planner().lock().unwrap().plan_fft(len, dir)
}

/// In-place unnormalized 2-D FFT, rows then columns, rows in parallel.
fn fft2_inplace(a: &mut Array2<Complex64>, dir: FftDirection) {
    let (rows, cols) = a.dim();
    let fft_cols = plan(cols, dir);
    a.axis_iter_mut(Axis(0))
        .into_par_iter()
        .for_each_init(
            || vec![Complex64::default(); fft_cols.get_inplace_scratch_len()],
            |scratch, mut row| {
                fft_cols.process_with_scratch(row.as_slice_mut().unwrap(), scratch);
            },
        );
    // Explicit standard-layout transpose so each lane is contiguous.
    let mut t = Array2::zeros((cols, rows));
    t.assign(&a.t());
    let fft_rows = plan(rows, dir);
    t.axis_iter_mut(Axis(0))
        .into_par_iter()
        .for_each_init(
            || vec![Complex64::default(); fft_rows.get_inplace_scratch_len()],
            |scratch, mut col| {
                fft_rows.process_with_scratch(col.as_slice_mut().unwrap(), scratch);
            },
        );
    a.assign(&t.t());
}

/// Cyclic half-shift along both axes (fftshift == ifftshift for even dims).
fn half_shifted(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (rows, cols) = a.dim();
    let (hr, hc) = (rows / 2, cols / 2);
    Array2::from_shape_fn((rows, cols), |(i, j)| a[[(i + hr) % rows, (j + hc) % cols]])
}

/// Gaussian illumination of the FP1 region: unit peak amplitude, zero phase,
/// |E(x)| = exp(-|x|^2 / w0^2) with w0 the configured waist.
pub fn gaussian_illumination(cfg: &OpticalConfig, plane_shape: (usize, usize)) -> Result<ComplexField> {
    if plane_shape != cfg.fp1_shape() {
        return Err(Error::Config(format!(
            "illumination shape {plane_shape:?} does not match FP1 region {:?}",
            cfg.fp1_shape()
        )));
    }
    let (rows, cols) = plane_shape;
    let p = cfg.cell_pitch();
    let w0 = cfg.illumination_waist;
    let samples = Array2::from_shape_fn((rows, cols), |(i, j)| {
        let y = (i as f64 - (rows / 2) as f64) * p;
        let x = (j as f64 - (cols / 2) as f64) * p;
        Complex64::new((-(x * x + y * y) / (w0 * w0)).exp(), 0.0)
    });
    ComplexField::new(samples, p, p, Plane::Fp1)
}

/// Apply a binary mirror mask to a field.
///
/// For `Region::Fp1` the field must be co-sampled with the FP1 block of the
/// pattern. For `Region::Ip1` the field is an image-plane field at arbitrary
/// pitch; every sample is multiplied by the state of the mirror cell its
/// physical position lands on (the IP1 mirror patch is centered on the
/// optical axis), and samples falling off the patch are blocked.
pub fn apply_mask(
    field: &ComplexField,
    pattern: &DmdPattern,
    region: Region,
    cfg: &OpticalConfig,
) -> Result<ComplexField> {
    pattern.check_geometry(cfg)?;
    match region {
        Region::Fp1 => {
            let fp1 = pattern.fp1();
            if field.dim() != fp1.dim() {
                return Err(Error::Shape(format!(
                    "field {:?} not co-sampled with FP1 region {:?}",
                    field.dim(),
                    fp1.dim()
                )));
            }
            let mut out = field.clone();
            Zip::from(&mut out.samples).and(&fp1).for_each(|s, &m| {
                if m == 0 {
                    *s = Complex64::new(0.0, 0.0);
                }
            });
            Ok(out)
        }
        Region::Ip1 => {
            let ip1 = pattern.ip1();
            let (mr, mc) = ip1.dim();
            let cp = cfg.cell_pitch();
            let mut out = field.clone();
            let (rows, cols) = out.dim();
            for i in 0..rows {
                for j in 0..cols {
                    let pos = out.position(i, j);
                    let mi = (pos[0] / cp + (mr / 2) as f64).floor();
                    let mj = (pos[1] / cp + (mc / 2) as f64).floor();
                    let on = mi >= 0.0
                        && mj >= 0.0
                        && (mi as usize) < mr
                        && (mj as usize) < mc
                        && ip1[[mi as usize, mj as usize]] == 1;
                    if !on {
                        out.samples[[i, j]] = Complex64::new(0.0, 0.0);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Multiply a field by the phase of an aberration map (co-sampled).
pub fn apply_phase(field: &ComplexField, aberration: &AberrationMap) -> Result<ComplexField> {
    if field.dim() != aberration.phase.dim() {
        return Err(Error::Shape(format!(
            "aberration grid {:?} not co-sampled with field {:?}",
            aberration.phase.dim(),
            field.dim()
        )));
    }
    let mut out = field.clone();
    Zip::from(&mut out.samples).and(&aberration.phase).for_each(|s, &p| {
        *s *= Complex64::from_polar(1.0, p);
    });
    Ok(out)
}

/// Optical Fourier transform with the focal length from `cfg`.
pub fn lens_fourier(field: &ComplexField, cfg: &OpticalConfig, direction: Direction) -> Result<ComplexField> {
    lens_transform(field, cfg.wavelength, cfg.focal_length, direction)
}

/// Optical Fourier transform with an explicit focal length.
///
/// The input grid center is taken as the optical axis; the output grid is
/// centered on the axis of the next plane.
pub fn lens_transform(
    field: &ComplexField,
    wavelength: f64,
    focal: f64,
    direction: Direction,
) -> Result<ComplexField> {
    let (rows, cols) = field.dim();
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::Shape(format!(
            "lens transform requires even dimensions, got {rows}x{cols}"
        )));
    }
    if !(wavelength > 0.0 && focal > 0.0) {
        return Err(Error::Parameter("wavelength and focal length must be positive".into()));
    }
    let lf = wavelength * focal;
    let mut work = half_shifted(&field.samples);
    let (fft_dir, plane, scale) = match direction {
        Direction::Forward => (
            FftDirection::Forward,
            field.plane.advanced(),
            Complex64::new(0.0, -1.0) * (field.pitch_x * field.pitch_y / lf),
        ),
        Direction::Inverse => (
            FftDirection::Inverse,
            field.plane.retreated(),
            Complex64::new(0.0, 1.0) * (field.pitch_x * field.pitch_y / lf),
        ),
    };
    fft2_inplace(&mut work, fft_dir);
    let mut samples = half_shifted(&work);
    samples.mapv_inplace(|v| v * scale);
    Ok(ComplexField {
        samples,
        pitch_y: lf / (rows as f64 * field.pitch_y),
        pitch_x: lf / (cols as f64 * field.pitch_x),
        plane,
        center: [0.0, 0.0],
    })
}

/// Zero the field outside a centered stop of the given radius.
pub fn fourier_aperture(field: &ComplexField, radius: f64) -> Result<ComplexField> {
    apply_aperture(field, &Aperture::circular(radius))
}

/// Zero the field outside a centered stop.
pub fn apply_aperture(field: &ComplexField, aperture: &Aperture) -> Result<ComplexField> {
    if !(aperture.radius > 0.0) {
        return Err(Error::Parameter(format!(
            "aperture radius must be positive, got {}",
            aperture.radius
        )));
    }
    let (rows, cols) = field.dim();
    let mut out = field.clone();
    let r = aperture.radius;
    for i in 0..rows {
        for j in 0..cols {
            let dy = (i as f64 - (rows / 2) as f64) * field.pitch_y;
            let dx = (j as f64 - (cols / 2) as f64) * field.pitch_x;
            let pass = match aperture.shape {
                ApertureShape::Circular => dy * dy + dx * dx <= r * r,
                ApertureShape::Square => dy.abs() <= r && dx.abs() <= r,
            };
            if !pass {
                out.samples[[i, j]] = Complex64::new(0.0, 0.0);
            }
        }
    }
    Ok(out)
}

/// Two-lens relay from IP1 to IP2: forward transform with the configured
/// focal length, optional stop and pupil-plane aberration, then a forward
/// transform with focal length scaled by the relay magnification. Output
/// coordinates are scaled by the magnification with a parity flip; the
/// absolute axis mapping is p -> -M p.
pub fn relay_image(
    field: &ComplexField,
    cfg: &OpticalConfig,
    aperture: Option<&Aperture>,
    aberration: Option<&AberrationMap>,
) -> Result<ComplexField> {
    let m = cfg.relay_magnification;
    let f1 = cfg.focal_length;
    let f2 = m * f1;
    let mut pupil = lens_transform(field, cfg.wavelength, f1, Direction::Forward)?;
    if let Some(ab) = aberration {
        pupil = apply_phase(&pupil, ab)?;
    }
    if let Some(ap) = aperture {
        pupil = apply_aperture(&pupil, ap)?;
    }
    let mut out = lens_transform(&pupil, cfg.wavelength, f2, Direction::Forward)?;
    out.plane = Plane::Ip2;
    out.center = [-m * field.center[0], -m * field.center[1]];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ComplexField;

    fn test_cfg() -> OpticalConfig {
        // Small geometry: FP1 region 64x64 cells.
        OpticalConfig {
            dmd_rows: 128,
            dmd_cols: 160,
            fp1_cols: 128,
            ip1_cols: 32,
            superpixel: 2,
            illumination_waist: 100e-6,
            ..OpticalConfig::default()
        }
    }

    fn uniform_field(n: usize, pitch: f64) -> ComplexField {
        ComplexField::new(
            Array2::from_elem((n, n), Complex64::new(1.0, 0.0)),
            pitch,
            pitch,
            Plane::Fp1,
        )
        .unwrap()
    }

    #[test]
    fn gaussian_peak_and_waist_values() {
        let cfg = test_cfg();
        let f = gaussian_illumination(&cfg, cfg.fp1_shape()).unwrap();
        let (r, c) = f.dim();
        assert_eq!(f.samples[[r / 2, c / 2]], Complex64::new(1.0, 0.0));
        // Sample one waist from center along x.
        let off = (cfg.illumination_waist / cfg.cell_pitch()).round() as usize;
        let a = f.samples[[r / 2, c / 2 + off]].re;
        let x = off as f64 * cfg.cell_pitch();
        let expect = (-(x * x) / (cfg.illumination_waist * cfg.illumination_waist)).exp();
        assert!((a - expect).abs() < 1e-12);
    }

    #[test]
    fn gaussian_shape_mismatch_is_config_error() {
        let cfg = test_cfg();
        assert!(gaussian_illumination(&cfg, (32, 32)).is_err());
    }

    #[test]
    fn dc_input_focuses_to_center_sample() {
        let f = uniform_field(64, 1e-5);
        let cfg = test_cfg();
        let out = lens_fourier(&f, &cfg, Direction::Forward).unwrap();
        assert_eq!(out.argmax_intensity(), (32, 32));
        assert_eq!(out.plane, Plane::Ip1);
        // Power conservation.
        let rel = (out.power() - f.power()).abs() / f.power();
        assert!(rel < 1e-10, "relative power error {rel}");
    }

    #[test]
    fn forward_then_inverse_recovers_input() {
        let n = 64;
        let pitch = 1e-5;
        let mut f = uniform_field(n, pitch);
        // Structured input.
        for ((i, j), v) in f.samples.indexed_iter_mut() {
            *v = Complex64::new((i as f64 * 0.1).sin() + 1.5, (j as f64 * 0.2).cos());
        }
        let cfg = test_cfg();
        let fwd = lens_fourier(&f, &cfg, Direction::Forward).unwrap();
        let back = lens_fourier(&fwd, &cfg, Direction::Inverse).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in f.samples.iter().zip(back.samples.iter()) {
            num += (a - b).norm_sqr();
            den += a.norm_sqr();
        }
        assert!((num / den).sqrt() < 1e-10);
        assert!((back.pitch_x - pitch).abs() < 1e-18);
    }

    #[test]
    fn odd_dimensions_rejected() {
        let f = ComplexField::new(
            Array2::from_elem((63, 64), Complex64::new(1.0, 0.0)),
            1e-5,
            1e-5,
            Plane::Fp1,
        )
        .unwrap();
        assert!(lens_fourier(&f, &test_cfg(), Direction::Forward).is_err());
    }

    #[test]
    fn mask_identity_and_null() {
        let cfg = test_cfg();
        let f = gaussian_illumination(&cfg, cfg.fp1_shape()).unwrap();
        let on = DmdPattern::all_on(&cfg);
        let off = DmdPattern::dark(&cfg);
        let fo = apply_mask(&f, &on, Region::Fp1, &cfg).unwrap();
        assert_eq!(fo.samples, f.samples);
        let fz = apply_mask(&f, &off, Region::Fp1, &cfg).unwrap();
        assert_eq!(fz.power(), 0.0);
    }

    #[test]
    fn checkerboard_halves_uniform_power() {
        let cfg = test_cfg();
        let (r, c) = cfg.fp1_shape();
        let f = ComplexField::new(
            Array2::from_elem((r, c), Complex64::new(1.0, 0.0)),
            cfg.cell_pitch(),
            cfg.cell_pitch(),
            Plane::Fp1,
        )
        .unwrap();
        let mut pat = DmdPattern::dark(&cfg);
        let mut fp1 = pat.fp1().to_owned();
        for ((i, j), m) in fp1.indexed_iter_mut() {
            *m = ((i + j) % 2) as u8;
        }
        pat.set_fp1(&fp1).unwrap();
        let masked = apply_mask(&f, &pat, Region::Fp1, &cfg).unwrap();
        assert!((masked.power() - f.power() / 2.0).abs() < 1e-18);
    }

    #[test]
    fn mask_is_idempotent() {
        let cfg = test_cfg();
        let f = gaussian_illumination(&cfg, cfg.fp1_shape()).unwrap();
        let mut pat = DmdPattern::dark(&cfg);
        let mut fp1 = pat.fp1().to_owned();
        for ((i, j), m) in fp1.indexed_iter_mut() {
            *m = ((i * 31 + j * 17) % 3 == 0) as u8;
        }
        pat.set_fp1(&fp1).unwrap();
        let once = apply_mask(&f, &pat, Region::Fp1, &cfg).unwrap();
        let twice = apply_mask(&once, &pat, Region::Fp1, &cfg).unwrap();
        assert_eq!(once.samples, twice.samples);
    }

    #[test]
    fn aperture_open_and_closed_limits() {
        let f = uniform_field(32, 1e-5);
        let open = fourier_aperture(&f, 1.0).unwrap();
        assert_eq!(open.samples, f.samples);
        let tiny = fourier_aperture(&f, 1e-9).unwrap();
        // Only the exact center sample survives (distance 0).
        assert!((tiny.power() - f.pixel_area()).abs() < 1e-22);
        assert!(fourier_aperture(&f, 0.0).is_err());
    }

    #[test]
    fn relay_open_aperture_is_rescaled_flip() {
        let cfg = test_cfg();
        let mut f = uniform_field(64, 2e-6);
        f.plane = Plane::Ip1;
        for ((i, j), v) in f.samples.indexed_iter_mut() {
            *v = Complex64::new(((i * 7 + j) % 5) as f64, ((i + 2 * j) % 3) as f64);
        }
        let out = relay_image(&f, &cfg, None, None).unwrap();
        assert_eq!(out.plane, Plane::Ip2);
        let m = cfg.relay_magnification;
        assert!((out.pitch_x - m * f.pitch_x).abs() < 1e-18);
        // Intensity pattern is the parity-flipped input scaled by 1/m in
        // amplitude (power conservation over the smaller area).
        let (rows, cols) = f.dim();
        let mut max_err: f64 = 0.0;
        for i in 1..rows {
            for j in 1..cols {
                let want = f.samples[[rows - i, cols - j]].norm_sqr() / (m * m);
                let got = out.samples[[i, j]].norm_sqr();
                max_err = max_err.max((want - got).abs() / want.max(1.0));
            }
        }
        assert!(max_err < 1e-6, "relay mismatch {max_err}");
    }
}

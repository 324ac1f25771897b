//! Binary-amplitude hologram synthesis.
//!
//! The primary addressing hologram is an iteratively refined carrier grating
//! covering the FP1 region; secondary holograms are small windowed gratings
//! of the form
//!
//!   F_s(x) = eta * |rect(x/l, y/m) / E_in(x)| * (A_s/2)
//!            * (cos(2 pi x_a.x / (lambda f) + Phi_s - Phi_in(x)) + 1)
//!
//! multiplexed into the primary to steer a weak auxiliary beam onto a chosen
//! image-plane site. Continuous maps in [0, 1] become mirror states through
//! per-pixel Bernoulli sampling, so the expected transmission equals the map.
//!
//! Conventions: grating frequency vectors are stored as the image-plane
//! landing position x_a (meters); the +1 diffraction order of the carrier
//! cos(2 pi x_a.x/(lambda f) + Phi) arrives at +x_a carrying phase +Phi.
//! eta is fixed by the window envelope at A_s = 1, so the first-order
//! amplitude stays linear in A_s.

use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::aberration::AberrationMap;
use crate::config::OpticalConfig;
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::optics::{lens_transform, Direction};
use crate::pattern::DmdPattern;
use num_complex::Complex64;

/// One carrier grating: image-plane landing point, amplitude and phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GratingSpec {
    /// Image-plane position (y, x) in meters where the +1 order lands.
    pub x_a: [f64; 2],
    /// Carrier amplitude A_s in [0, 1].
    pub amplitude: f64,
    /// Carrier phase Phi_s in radians, stored reduced to [0, 2 pi).
    pub phase: f64,
}

impl GratingSpec {
    pub fn new(x_a: [f64; 2], amplitude: f64, phase: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&amplitude) {
            return Err(Error::Parameter(format!(
                "grating amplitude must lie in [0, 1], got {amplitude}"
            )));
        }
        Ok(GratingSpec { x_a, amplitude, phase: reduce_phase(phase) })
    }
}

/// Reduce an angle to [0, 2 pi).
pub fn reduce_phase(phi: f64) -> f64 {
    let p = phi % TAU;
    if p < 0.0 {
        p + TAU
    } else {
        p
    }
}

/// Increment the carrier phase of a grating. Equivalent to displacing the
/// grating laterally by delta_phase / (2 pi) periods.
pub fn shift_grating(spec: &GratingSpec, delta_phase: f64) -> GratingSpec {
    GratingSpec {
        x_a: spec.x_a,
        amplitude: spec.amplitude,
        phase: reduce_phase(spec.phase + delta_phase),
    }
}

/// Rectangular window of a secondary hologram, in physical mirror pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// (row, col) of the window corner in mirror pixels, FP1 frame.
    pub origin_px: [usize; 2],
    /// Width l along x (columns), mirror pixels.
    pub width_px: usize,
    /// Height m along y (rows), mirror pixels.
    pub height_px: usize,
}

impl WindowSpec {
    /// Window rectangle in simulation cells; requires superpixel alignment
    /// and containment in the FP1 region.
    pub fn cells(&self, cfg: &OpticalConfig) -> Result<WindowCells> {
        let sp = cfg.superpixel;
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::Parameter("window must be at least 1x1 pixels".into()));
        }
        for (name, v) in [
            ("origin row", self.origin_px[0]),
            ("origin col", self.origin_px[1]),
            ("width", self.width_px),
            ("height", self.height_px),
        ] {
            if v % sp != 0 {
                return Err(Error::Parameter(format!(
                    "window {name} = {v} is not aligned to the superpixel grid ({sp})"
                )));
            }
        }
        let (fr, fc) = cfg.fp1_shape();
        let r0 = self.origin_px[0] / sp;
        let c0 = self.origin_px[1] / sp;
        let h = self.height_px / sp;
        let w = self.width_px / sp;
        if r0 + h > fr || c0 + w > fc {
            return Err(Error::Parameter(format!(
                "window {}x{} at ({}, {}) cells leaves the FP1 region {fr}x{fc}",
                h, w, r0, c0
            )));
        }
        Ok(WindowCells { r0, c0, rows: h, cols: w })
    }

    pub fn overlaps(&self, other: &WindowSpec) -> bool {
        let a_r1 = self.origin_px[0] + self.height_px;
        let a_c1 = self.origin_px[1] + self.width_px;
        let b_r1 = other.origin_px[0] + other.height_px;
        let b_c1 = other.origin_px[1] + other.width_px;
        self.origin_px[0] < b_r1
            && other.origin_px[0] < a_r1
            && self.origin_px[1] < b_c1
            && other.origin_px[1] < a_c1
    }
}

/// Window rectangle on the simulation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowCells {
    pub r0: usize,
    pub c0: usize,
    pub rows: usize,
    pub cols: usize,
}

/// A complete secondary hologram: grating, window, target bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondaryHologramSpec {
    pub grating: GratingSpec,
    pub window: WindowSpec,
    /// Displacement of the suppressed site from the addressed spot, in units
    /// of the image-plane waist, along the addressing axis.
    pub target_site: f64,
    /// Holograms sharing a group id share the same window pixels.
    pub overlay_group: usize,
}

/// Target of the primary addressing hologram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddressingTarget {
    /// Image-plane position (y, x) of the addressed spot, meters.
    pub x0: [f64; 2],
    /// Requested 1/e^2 intensity radius of the spot, meters.
    pub waist_request: f64,
}

impl AddressingTarget {
    /// Check the target lies in the simulated image field of view.
    pub fn validate(&self, cfg: &OpticalConfig) -> Result<()> {
        let half = cfg.lambda_f() / (2.0 * cfg.cell_pitch());
        if self.x0[0].abs() >= half || self.x0[1].abs() >= half {
            return Err(Error::Parameter(format!(
                "target {:?} outside image field of view (half-extent {half:.3e} m)",
                self.x0
            )));
        }
        if !(self.waist_request > 0.0) {
            return Err(Error::Parameter("waist_request must be positive".into()));
        }
        Ok(())
    }
}

/// Continuous secondary-hologram map over its window.
#[derive(Clone, Debug)]
pub struct SecondaryMap {
    pub values: Array2<f64>,
    pub cells: WindowCells,
    /// Normalization factor that pins the map to [0, 1] at A_s = 1.
    pub eta: f64,
    /// Fraction of window cells where |E_in| sat below the amplitude floor.
    pub floored_fraction: f64,
}

impl SecondaryMap {
    /// True when the illumination was too dim over more than 10% of the
    /// window for faithful equalization.
    pub fn poorly_illuminated(&self) -> bool {
        self.floored_fraction > 0.10
    }
}

/// Physical (y, x) position of an FP1 simulation cell.
fn fp1_cell_position(cfg: &OpticalConfig, i: usize, j: usize) -> [f64; 2] {
    let (rows, cols) = cfg.fp1_shape();
    let p = cfg.cell_pitch();
    [
        (i as f64 - (rows / 2) as f64) * p,
        (j as f64 - (cols / 2) as f64) * p,
    ]
}

/// Evaluate the continuous secondary hologram of Eq.-type
/// `eta |rect/E_in| (A_s/2)(cos(2 pi x_a.x/(lambda f) + Phi_s - Phi_in) + 1)`
/// over the window.
pub fn secondary_continuous(
    spec: &SecondaryHologramSpec,
    illum: &ComplexField,
    aberration: &AberrationMap,
    cfg: &OpticalConfig,
) -> Result<SecondaryMap> {
    if illum.dim() != cfg.fp1_shape() {
        return Err(Error::Shape("illumination not co-sampled with FP1 region".into()));
    }
    if aberration.phase.dim() != illum.dim() {
        return Err(Error::Shape("aberration map not co-sampled with FP1 region".into()));
    }
    let cells = spec.window.cells(cfg)?;
    let lf = cfg.lambda_f();
    let win = illum
        .samples
        .slice(s![cells.r0..cells.r0 + cells.rows, cells.c0..cells.c0 + cells.cols]);
    let max_amp = win.iter().map(|a| a.norm()).fold(0.0f64, f64::max);
    if max_amp <= 0.0 {
        return Err(Error::Parameter("illumination vanishes over the window".into()));
    }
    let floor = cfg.amplitude_floor * max_amp;
    let mut floored = 0usize;
    let mut g = Array2::zeros((cells.rows, cells.cols));
    for ((i, j), gv) in g.indexed_iter_mut() {
        let amp = win[[i, j]].norm();
        if amp < floor {
            floored += 1;
        }
        *gv = 1.0 / amp.max(floor);
    }
    // Largest scalar keeping the full-swing (A_s = 1) map within [0, 1].
    let eta = 1.0 / g.iter().cloned().fold(0.0f64, f64::max);
    let a_s = spec.grating.amplitude;
    let mut values = Array2::zeros((cells.rows, cells.cols));
    for ((i, j), v) in values.indexed_iter_mut() {
        let pos = fp1_cell_position(cfg, cells.r0 + i, cells.c0 + j);
        let phi_in = aberration.phase[[cells.r0 + i, cells.c0 + j]];
        let theta =
            TAU * (spec.grating.x_a[0] * pos[0] + spec.grating.x_a[1] * pos[1]) / lf
                + spec.grating.phase
                - phi_in;
        *v = (eta * g[[i, j]] * (a_s / 2.0) * (theta.cos() + 1.0)).clamp(0.0, 1.0);
    }
    Ok(SecondaryMap {
        values,
        cells,
        eta,
        floored_fraction: floored as f64 / (cells.rows * cells.cols) as f64,
    })
}

/// Bernoulli-sample a continuous [0, 1] map into mirror states: each pixel is
/// ON with probability equal to the map value. Deterministic in the seed.
pub fn random_binarize(continuous: &Array2<f64>, rng_seed: u64) -> Result<Array2<u8>> {
    if continuous.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Parameter("binarization input must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    Ok(continuous.mapv(|p| {
        let u: f64 = rng.gen();
        (u < p) as u8
    }))
}

/// Derive a sub-seed from a base seed and salts (splitmix64 steps), so
/// binarization of each window is independent of iteration order.
pub fn mix_seed(seed: u64, salts: &[u64]) -> u64 {
    let mut z = seed;
    for &s in salts.iter().chain([0x9E37_79B9_7F4A_7C15u64].iter()) {
        z = z.wrapping_add(s).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Multiplex secondary holograms into a primary pattern.
///
/// Outside all windows the output equals the primary exactly. Inside each
/// window the primary content is replaced by the binarized, clamped sum of
/// the (at most two) overlaid continuous maps of that overlay group.
pub fn multiplex(
    primary: &DmdPattern,
    secondaries: &[SecondaryHologramSpec],
    illum: &ComplexField,
    aberration: &AberrationMap,
    cfg: &OpticalConfig,
    rng_seed: u64,
) -> Result<DmdPattern> {
    primary.check_geometry(cfg)?;
    let mut groups: Vec<(usize, Vec<&SecondaryHologramSpec>)> = Vec::new();
    for spec in secondaries {
        match groups.iter_mut().find(|(g, _)| *g == spec.overlay_group) {
            Some((_, members)) => members.push(spec),
            None => groups.push((spec.overlay_group, vec![spec])),
        }
    }
    groups.sort_by_key(|(g, _)| *g);
    for (g, members) in &groups {
        if members.len() > 2 {
            return Err(Error::RuleViolation(format!(
                "overlay group {g} holds {} secondary holograms; at most 2 may share pixels",
                members.len()
            )));
        }
        if members.len() == 2 && members[0].window != members[1].window {
            return Err(Error::RuleViolation(format!(
                "overlay group {g} members declare different windows"
            )));
        }
    }
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            if groups[a].1[0].window.overlaps(&groups[b].1[0].window) {
                return Err(Error::RuleViolation(format!(
                    "windows of overlay groups {} and {} overlap; stack them instead",
                    groups[a].0, groups[b].0
                )));
            }
        }
    }
    let mut out = primary.clone();
    for (_, members) in &groups {
        let mut sum: Option<SecondaryMap> = None;
        for spec in members {
            let map = secondary_continuous(spec, illum, aberration, cfg)?;
            sum = Some(match sum {
                None => map,
                Some(mut acc) => {
                    acc.values += &map.values;
                    acc
                }
            });
        }
        let mut acc = sum.expect("group has at least one member");
        acc.values.mapv_inplace(|v| v.clamp(0.0, 1.0));
        let sub_seed = mix_seed(rng_seed, &[acc.cells.r0 as u64, acc.cells.c0 as u64]);
        let binary = random_binarize(&acc.values, sub_seed)?;
        out.mirrors
            .slice_mut(s![
                acc.cells.r0..acc.cells.r0 + acc.cells.rows,
                acc.cells.c0..acc.cells.c0 + acc.cells.cols
            ])
            .assign(&binary);
    }
    Ok(out)
}

/// Ideal 50% duty binary grating whose +1 order lands at `x_a`; threshold,
/// not Bernoulli, so it realizes the classic 1/pi^2 per-order efficiency.
/// Used as the efficiency reference for the iterative hologram.
pub fn square_grating(cfg: &OpticalConfig, x_a: [f64; 2]) -> DmdPattern {
    let (rows, cols) = cfg.fp1_shape();
    let lf = cfg.lambda_f();
    let mut pat = DmdPattern::all_on(cfg);
    let mut fp1 = Array2::zeros((rows, cols));
    for ((i, j), m) in fp1.indexed_iter_mut() {
        let pos = fp1_cell_position(cfg, i, j);
        let theta = TAU * (x_a[0] * pos[0] + x_a[1] * pos[1]) / lf;
        *m = (theta.cos() >= 0.0) as u8;
    }
    pat.set_fp1(&fp1).unwrap();
    pat
}

/// Options of the iterative primary-hologram synthesis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IftaOptions {
    /// Carrier contrast gain: values above 1 drive the map toward a square
    /// grating where the desired amplitude is large, recovering most of the
    /// ideal binary-grating efficiency after Bernoulli sampling.
    pub contrast: f64,
    /// Signal-window radius around the target, in units of waist_request.
    pub signal_window_waists: f64,
}

impl Default for IftaOptions {
    fn default() -> Self {
        IftaOptions { contrast: 2.5, signal_window_waists: 4.0 }
    }
}

/// Iterative synthesis of the primary binary hologram.
///
/// Alternates between the image plane (amplitude constrained to the target
/// Gaussian inside the signal window, free outside) and the aperture plane,
/// where the back-propagated field, divided by the floored aberrated
/// illumination (so the result compensates -Phi_in and equalizes 1/|E_in|),
/// is re-encoded as a carrier map in [0, 1]. The final iterate is Bernoulli
/// binarized. Deterministic in `rng_seed`.
pub fn ifta_primary(
    target: &AddressingTarget,
    illum: &ComplexField,
    aberration: &AberrationMap,
    iterations: usize,
    rng_seed: u64,
    cfg: &OpticalConfig,
    opts: &IftaOptions,
) -> Result<DmdPattern> {
    target.validate(cfg)?;
    if iterations == 0 {
        return Err(Error::Parameter("ifta requires at least one iteration".into()));
    }
    if illum.dim() != cfg.fp1_shape() {
        return Err(Error::Shape("illumination not co-sampled with FP1 region".into()));
    }
    if aberration.phase.dim() != illum.dim() {
        return Err(Error::Shape("aberration map not co-sampled with FP1 region".into()));
    }
    let peak_illum = illum.samples.iter().map(|a| a.norm()).fold(0.0f64, f64::max);
    if peak_illum <= 0.0 {
        return Err(Error::Parameter("illumination must be nonzero".into()));
    }
    let (rows, cols) = cfg.fp1_shape();
    let lf = cfg.lambda_f();
    let p = cfg.cell_pitch();
    let floor = cfg.amplitude_floor * peak_illum;

    // Aperture-plane waist conjugate to the requested spot.
    let w_ap = lf / (std::f64::consts::PI * target.waist_request);
    // Desired aperture field: Gaussian envelope with the target carrier.
    let mut desired = Array2::from_elem((rows, cols), Complex64::new(0.0, 0.0));
    for ((i, j), v) in desired.indexed_iter_mut() {
        let pos = fp1_cell_position(cfg, i, j);
        let theta = TAU * (target.x0[0] * pos[0] + target.x0[1] * pos[1]) / lf;
        let env = (-(pos[0] * pos[0] + pos[1] * pos[1]) / (w_ap * w_ap)).exp();
        *v = Complex64::from_polar(env, theta);
    }

    let encode = |desired: &Array2<Complex64>| -> Array2<f64> {
        // tau = desired / (E_in e^{i Phi_in}), with |E_in| floored.
        let mut tau = Array2::from_elem((rows, cols), Complex64::new(0.0, 0.0));
        for ((i, j), t) in tau.indexed_iter_mut() {
            let e = illum.samples[[i, j]];
            let amp = e.norm().max(floor);
            let phase = aberration.phase[[i, j]];
            *t = desired[[i, j]] * Complex64::from_polar(1.0 / amp, -phase);
        }
        let max_tau = tau.iter().map(|t| t.norm()).fold(0.0f64, f64::max);
        let eta = if max_tau > 0.0 { 1.0 / max_tau } else { 1.0 };
        Array2::from_shape_fn((rows, cols), |(i, j)| {
            let t = tau[[i, j]];
            (0.5 * (1.0 + opts.contrast * eta * t.norm() * t.arg().cos())).clamp(0.0, 1.0)
        })
    };

    let mut map = encode(&desired);
    let pad = cfg.pad_target((rows, cols));
    let sw = opts.signal_window_waists * target.waist_request;

    for _ in 0..iterations {
        // Forward: expected transmission times the aberrated illumination.
        let mut aperture = illum.clone();
        for ((i, j), v) in aperture.samples.indexed_iter_mut() {
            let phase = aberration.phase[[i, j]];
            *v *= Complex64::from_polar(map[[i, j]], phase);
        }
        let embedded = aperture.embedded(pad)?;
        let image = lens_transform(&embedded, cfg.wavelength, cfg.focal_length, Direction::Forward)?;

        // Image-plane constraint: inside the signal window, impose the target
        // Gaussian amplitude (least-squares matched scale), keep phase.
        let (ir, ic) = image.dim();
        let mut constrained = image.clone();
        let mut num = 0.0;
        let mut den = 0.0;
        let mut win: Vec<(usize, usize, f64)> = Vec::new();
        for i in 0..ir {
            for j in 0..ic {
                let pos = constrained.position(i, j);
                let dy = pos[0] - target.x0[0];
                let dx = pos[1] - target.x0[1];
                let r2 = dy * dy + dx * dx;
                if r2 <= sw * sw {
                    let t = (-r2 / (target.waist_request * target.waist_request)).exp();
                    num += image.samples[[i, j]].norm() * t;
                    den += t * t;
                    win.push((i, j, t));
                }
            }
        }
        let scale = if den > 0.0 { num / den } else { 1.0 };
        for (i, j, t) in win {
            let cur = constrained.samples[[i, j]];
            let mag = cur.norm();
            constrained.samples[[i, j]] = if mag > 0.0 {
                cur / mag * (scale * t)
            } else {
                Complex64::new(scale * t, 0.0)
            };
        }

        // Back to the aperture plane; keep the FP1 block.
        let back = lens_transform(&constrained, cfg.wavelength, cfg.focal_length, Direction::Inverse)?;
        let off_r = pad / 2 - rows / 2;
        let off_c = pad / 2 - cols / 2;
        let block = back
            .samples
            .slice(s![off_r..off_r + rows, off_c..off_c + cols])
            .to_owned();
        map = encode(&block);
    }

    let binary = random_binarize(&map, mix_seed(rng_seed, &[0xF17A]))?;
    let mut pat = DmdPattern::all_on(cfg);
    pat.set_fp1(&binary)?;
    let _ = p;
    Ok(pat)
}

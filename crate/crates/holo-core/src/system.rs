//! Simulation closures the calibration protocols drive.
//!
//! An [`AddressingSystem`] exposes intensity and field probes at image-plane
//! positions for a given set of secondary holograms; the optimizer never sees
//! the optics underneath. Two implementations cover the hardware scenarios:
//! [`SinglePassSystem`] probes the first image plane, [`DoublePassSystem`]
//! probes IP2 behind the pupil and relay. Test suites substitute analytic
//! models through the same trait.

use num_complex::Complex64;

use crate::aberration::AberrationMap;
use crate::config::OpticalConfig;
use crate::doublepass::{propagate_double_pass, propagate_first_pass, DoublePassParams, PupilSpec};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::hologram::{multiplex, AddressingTarget, SecondaryHologramSpec};
use crate::metrics::{extract_profile, CrosstalkProfile};
use crate::pattern::DmdPattern;

/// FP1 layout information the optimizer needs to stack windows.
#[derive(Clone, Copy, Debug)]
pub struct WindowHome {
    /// FP1 region size in simulation cells.
    pub fp1_rows: usize,
    pub fp1_cols: usize,
    pub superpixel: usize,
    /// Cell of maximum illumination amplitude; windows stack around it.
    pub center_cell: [usize; 2],
}

/// A probe-able addressing scenario with the primary hologram fixed.
pub trait AddressingSystem: Sync {
    /// Patch-averaged intensity at an image-plane position, with the given
    /// secondary holograms multiplexed into the primary.
    fn probe_intensity(&self, secondaries: &[SecondaryHologramSpec], probe: [f64; 2]) -> Result<f64>;

    /// Complex amplitude at the sample nearest the position.
    fn probe_field(&self, secondaries: &[SecondaryHologramSpec], probe: [f64; 2])
        -> Result<Complex64>;

    /// Patch-averaged intensity at the addressed-spot peak.
    fn peak_intensity(&self, secondaries: &[SecondaryHologramSpec]) -> Result<f64>;

    /// Image-plane position of a site displaced from the addressed spot by
    /// `site_waists` waist units along the addressing axis.
    fn site_position(&self, site_waists: f64) -> [f64; 2];

    /// Fitted waist of the baseline spot in this system's image plane.
    fn waist(&self) -> f64;

    /// Window-stacking geometry; None for systems without a Fourier plane
    /// (analytic mocks).
    fn window_home(&self) -> Option<WindowHome> {
        None
    }
}

fn beam_center_cell(illum: &ComplexField) -> [usize; 2] {
    let (i, j) = illum.argmax_intensity();
    [i, j]
}

/// Single-pass scenario: FP1 hologram observed at the first image plane.
pub struct SinglePassSystem {
    pub cfg: OpticalConfig,
    pub illum: ComplexField,
    /// Map the holograms compensate (the characterized phase).
    pub compensated: AberrationMap,
    /// Map actually applied to the train.
    pub train: AberrationMap,
    pub primary: DmdPattern,
    pub target: AddressingTarget,
    pub seed: u64,
    pub patch: usize,
    spot: [f64; 2],
    waist: f64,
}

impl SinglePassSystem {
    pub fn new(
        cfg: OpticalConfig,
        illum: ComplexField,
        compensated: AberrationMap,
        train: AberrationMap,
        primary: DmdPattern,
        target: AddressingTarget,
        seed: u64,
        patch: usize,
    ) -> Result<Self> {
        let mut sys = SinglePassSystem {
            cfg,
            illum,
            compensated,
            train,
            primary,
            target,
            seed,
            patch,
            spot: [0.0, 0.0],
            waist: 0.0,
        };
        let field = sys.image_field(&[])?;
        let (pi, pj) = field.argmax_intensity();
        sys.spot = field.position(pi, pj);
        let profile = extract_profile(&field, 0.0, patch, sys.cfg.detector_floor_db)?;
        sys.waist = profile.waist;
        Ok(sys)
    }

    /// Image-plane field with the given secondaries multiplexed in.
    pub fn image_field(&self, secondaries: &[SecondaryHologramSpec]) -> Result<ComplexField> {
        let pattern = multiplex(
            &self.primary,
            secondaries,
            &self.illum,
            &self.compensated,
            &self.cfg,
            self.seed,
        )?;
        propagate_first_pass(&self.cfg, &pattern, &self.illum, &self.train)
    }

    pub fn profile(&self, secondaries: &[SecondaryHologramSpec]) -> Result<CrosstalkProfile> {
        let field = self.image_field(secondaries)?;
        extract_profile(&field, 0.0, self.patch, self.cfg.detector_floor_db)
    }

    pub fn spot_position(&self) -> [f64; 2] {
        self.spot
    }
}

impl AddressingSystem for SinglePassSystem {
    fn probe_intensity(&self, secondaries: &[SecondaryHologramSpec], probe: [f64; 2]) -> Result<f64> {
        let field = self.image_field(secondaries)?;
        field.patch_intensity(probe, self.patch)
    }

    fn probe_field(&self, secondaries: &[SecondaryHologramSpec], probe: [f64; 2]) -> Result<Complex64> {
        let field = self.image_field(secondaries)?;
        let (i, j) = field
            .nearest_index(probe)
            .ok_or_else(|| Error::Parameter(format!("probe {probe:?} outside field")))?;
        Ok(field.samples[[i, j]])
    }

    fn peak_intensity(&self, secondaries: &[SecondaryHologramSpec]) -> Result<f64> {
        let field = self.image_field(secondaries)?;
        let (i, j) = field.argmax_intensity();
        Ok(field.patch_intensity_at(i, j, self.patch))
    }

    fn site_position(&self, site_waists: f64) -> [f64; 2] {
        [self.spot[0], self.spot[1] + site_waists * self.waist]
    }

    fn waist(&self) -> f64 {
        self.waist
    }

    fn window_home(&self) -> Option<WindowHome> {
        let (r, c) = self.cfg.fp1_shape();
        Some(WindowHome {
            fp1_rows: r,
            fp1_cols: c,
            superpixel: self.cfg.superpixel,
            center_cell: beam_center_cell(&self.illum),
        })
    }
}

/// Double-pass scenario: FP1 hologram, IP1 pupil, relay, observed at IP2.
///
/// Site displacements are defined at IP1 (where the holograms steer light);
/// the relay's parity flip maps a site at `+a w` to `-a w'` around the IP2
/// spot, which `site_position` accounts for.
pub struct DoublePassSystem {
    pub cfg: OpticalConfig,
    pub illum: ComplexField,
    pub compensated: AberrationMap,
    pub train: AberrationMap,
    pub relay_aberration: Option<AberrationMap>,
    pub primary: DmdPattern,
    pub target: AddressingTarget,
    pub pupil: Option<PupilSpec>,
    pub stray_floor: Option<f64>,
    pub seed: u64,
    pub patch: usize,
    spot: [f64; 2],
    waist: f64,
}

impl DoublePassSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cfg: OpticalConfig,
        illum: ComplexField,
        compensated: AberrationMap,
        train: AberrationMap,
        relay_aberration: Option<AberrationMap>,
        primary: DmdPattern,
        target: AddressingTarget,
        pupil: Option<PupilSpec>,
        stray_floor: Option<f64>,
        seed: u64,
        patch: usize,
    ) -> Result<Self> {
        let mut sys = DoublePassSystem {
            cfg,
            illum,
            compensated,
            train,
            relay_aberration,
            primary,
            target,
            pupil,
            stray_floor,
            seed,
            patch,
            spot: [0.0, 0.0],
            waist: 0.0,
        };
        let field = sys.image_field(&[])?;
        let (pi, pj) = field.argmax_intensity();
        sys.spot = field.position(pi, pj);
        let profile = extract_profile(&field, 0.0, patch, sys.cfg.detector_floor_db)?;
        sys.waist = profile.waist;
        Ok(sys)
    }

    pub fn params(&self) -> DoublePassParams<'_> {
        DoublePassParams {
            cfg: &self.cfg,
            illum: &self.illum,
            train_aberration: &self.train,
            relay_aberration: self.relay_aberration.as_ref(),
            pupil: self.pupil.as_ref(),
            stray_floor: self.stray_floor,
            crop_center: self.target.x0,
            seed: self.seed,
            patch: self.patch,
        }
    }

    pub fn multiplexed(&self, secondaries: &[SecondaryHologramSpec]) -> Result<DmdPattern> {
        multiplex(&self.primary, secondaries, &self.illum, &self.compensated, &self.cfg, self.seed)
    }

    /// IP2 field with the given secondaries multiplexed in.
    pub fn image_field(&self, secondaries: &[SecondaryHologramSpec]) -> Result<ComplexField> {
        let pattern = self.multiplexed(secondaries)?;
        propagate_double_pass(&self.params(), &pattern)
    }

    /// Intermediate image-plane field (before the pupil), full padded grid.
    pub fn ip1_field(&self, secondaries: &[SecondaryHologramSpec]) -> Result<ComplexField> {
        let pattern = self.multiplexed(secondaries)?;
        propagate_first_pass(&self.cfg, &pattern, &self.illum, &self.train)
    }

    pub fn profile(&self, secondaries: &[SecondaryHologramSpec]) -> Result<CrosstalkProfile> {
        let field = self.image_field(secondaries)?;
        extract_profile(&field, 0.0, self.patch, self.cfg.detector_floor_db)
    }

    pub fn spot_position(&self) -> [f64; 2] {
        self.spot
    }

    /// Replace the pupil and refresh the cached spot and waist.
    pub fn with_pupil(mut self, pupil: Option<PupilSpec>) -> Result<Self> {
        self.pupil = pupil;
        let field = self.image_field(&[])?;
        let (pi, pj) = field.argmax_intensity();
        self.spot = field.position(pi, pj);
        let profile = extract_profile(&field, 0.0, self.patch, self.cfg.detector_floor_db)?;
        self.waist = profile.waist;
        Ok(self)
    }
}

impl AddressingSystem for DoublePassSystem {
    fn probe_intensity(&self, secondaries: &[SecondaryHologramSpec], probe: [f64; 2]) -> Result<f64> {
        let field = self.image_field(secondaries)?;
        field.patch_intensity(probe, self.patch)
    }

    fn probe_field(&self, secondaries: &[SecondaryHologramSpec], probe: [f64; 2]) -> Result<Complex64> {
        let field = self.image_field(secondaries)?;
        let (i, j) = field
            .nearest_index(probe)
            .ok_or_else(|| Error::Parameter(format!("probe {probe:?} outside field")))?;
        Ok(field.samples[[i, j]])
    }

    fn peak_intensity(&self, secondaries: &[SecondaryHologramSpec]) -> Result<f64> {
        let field = self.image_field(secondaries)?;
        let (i, j) = field.argmax_intensity();
        Ok(field.patch_intensity_at(i, j, self.patch))
    }

    fn site_position(&self, site_waists: f64) -> [f64; 2] {
        // Parity flip of the two-transform relay.
        [self.spot[0], self.spot[1] - site_waists * self.waist]
    }

    fn waist(&self) -> f64 {
        self.waist
    }

    fn window_home(&self) -> Option<WindowHome> {
        let (r, c) = self.cfg.fp1_shape();
        Some(WindowHome {
            fp1_rows: r,
            fp1_cols: c,
            superpixel: self.cfg.superpixel,
            center_cell: beam_center_cell(&self.illum),
        })
    }
}

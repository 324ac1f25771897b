use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and illumination parameters of the optical train.
///
/// All lengths are in meters. The device is split along its columns into a
/// Fourier-plane region (`fp1_cols` mirror columns, carries the hologram) and
/// an image-plane region (`ip1_cols`, acts as the programmable pupil in the
/// second pass). Simulations run on a superpixel grid: `superpixel` physical
/// mirrors per simulation cell along each axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticalConfig {
    /// Vacuum wavelength.
    pub wavelength: f64,
    /// Focal length of the transform lens between FP1 and IP1.
    pub focal_length: f64,
    /// Mirror pitch of the device.
    pub dmd_pitch: f64,
    pub dmd_rows: usize,
    pub dmd_cols: usize,
    /// Columns assigned to the Fourier-plane region.
    pub fp1_cols: usize,
    /// Columns assigned to the intermediate image-plane region.
    pub ip1_cols: usize,
    /// 1/e amplitude radius of the collimated illumination Gaussian.
    pub illumination_waist: f64,
    /// Magnification of the IP1 -> IP2 relay (demagnifying when < 1).
    pub relay_magnification: f64,
    /// Simulation downsampling: physical mirrors per grid cell, per axis.
    pub superpixel: usize,
    /// Detector noise floor applied in reported profiles, dB relative to peak.
    pub detector_floor_db: f64,
    /// Fields are zero-padded to `next_pow2(max_dim * pad_factor)` squares
    /// before a lens transform.
    pub pad_factor: f64,
    /// Amplitude floor for 1/|E_in| equalization, as a fraction of the window
    /// maximum.
    pub amplitude_floor: f64,
    /// Radius of the relay Fourier stop in units of the mirror-grid
    /// diffraction-order spacing at the relay pupil.
    pub as2_radius_orders: f64,
    /// Side length (samples) of the centered window kept from the IP1 field
    /// before the second pass; 0 keeps the full grid.
    pub ip1_crop: usize,
}

impl Default for OpticalConfig {
    /// Full-resolution geometry of the physical device.
    fn default() -> Self {
        OpticalConfig {
            wavelength: 370e-9,
            focal_length: 0.150,
            dmd_pitch: 7.6e-6,
            dmd_rows: 1600,
            dmd_cols: 2560,
            fp1_cols: 2060,
            ip1_cols: 500,
            illumination_waist: 10e-3,
            relay_magnification: 0.6,
            superpixel: 4,
            detector_floor_db: -60.0,
            pad_factor: 2.0,
            amplitude_floor: 0.05,
            as2_radius_orders: 1.5,
            ip1_crop: 1024,
        }
    }
}

impl OpticalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("focal_length", self.focal_length),
            ("dmd_pitch", self.dmd_pitch),
            ("illumination_waist", self.illumination_waist),
            ("relay_magnification", self.relay_magnification),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.fp1_cols + self.ip1_cols != self.dmd_cols {
            return Err(Error::Config(format!(
                "fp1_cols + ip1_cols must equal dmd_cols ({} + {} != {})",
                self.fp1_cols, self.ip1_cols, self.dmd_cols
            )));
        }
        if self.superpixel == 0 {
            return Err(Error::Config("superpixel must be >= 1".into()));
        }
        // The partition must fall on a superpixel boundary, so the split
        // column is representable on the simulation grid.
        for (name, v) in [
            ("dmd_rows", self.dmd_rows),
            ("dmd_cols", self.dmd_cols),
            ("fp1_cols", self.fp1_cols),
            ("ip1_cols", self.ip1_cols),
        ] {
            if v == 0 || v % self.superpixel != 0 {
                return Err(Error::Config(format!(
                    "superpixel {} must divide {name} = {v} exactly",
                    self.superpixel
                )));
            }
        }
        if !(self.pad_factor >= 1.0) {
            return Err(Error::Config("pad_factor must be >= 1".into()));
        }
        if !(self.amplitude_floor > 0.0 && self.amplitude_floor < 1.0) {
            return Err(Error::Config("amplitude_floor must lie in (0, 1)".into()));
        }
        if !(self.detector_floor_db < 0.0) {
            return Err(Error::Config("detector_floor_db must be negative".into()));
        }
        Ok(())
    }

    /// Physical pitch of one simulation cell.
    pub fn cell_pitch(&self) -> f64 {
        self.dmd_pitch * self.superpixel as f64
    }

    /// Simulation grid shape (rows, cols) of the full device.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.dmd_rows / self.superpixel, self.dmd_cols / self.superpixel)
    }

    /// Simulation grid shape of the FP1 region.
    pub fn fp1_shape(&self) -> (usize, usize) {
        (self.dmd_rows / self.superpixel, self.fp1_cols / self.superpixel)
    }

    /// Simulation grid shape of the IP1 region.
    pub fn ip1_shape(&self) -> (usize, usize) {
        (self.dmd_rows / self.superpixel, self.ip1_cols / self.superpixel)
    }

    /// Partition column on the simulation grid.
    pub fn partition_cell(&self) -> usize {
        self.fp1_cols / self.superpixel
    }

    /// Padded square side for lens transforms of a field with the given shape.
    pub fn pad_target(&self, shape: (usize, usize)) -> usize {
        let m = shape.0.max(shape.1);
        let want = ((m as f64) * self.pad_factor).ceil() as usize;
        want.next_power_of_two()
    }

    /// lambda * f, the scale factor of the lens Fourier transform.
    pub fn lambda_f(&self) -> f64 {
        self.wavelength * self.focal_length
    }

    /// Default radius of the relay Fourier stop (AS2): passes the low
    /// diffraction orders of the simulated mirror grid at IP1.
    pub fn as2_radius(&self) -> f64 {
        let order_spacing = self.wavelength * self.focal_length / self.cell_pitch();
        self.as2_radius_orders * order_spacing
    }

    /// Detector floor as a linear intensity ratio.
    pub fn detector_floor_linear(&self) -> f64 {
        10f64.powf(self.detector_floor_db / 10.0)
    }
}

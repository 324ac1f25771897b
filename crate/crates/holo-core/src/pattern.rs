use ndarray::{s, Array2, ArrayView2};

use crate::config::OpticalConfig;
use crate::error::{Error, Result};

/// Binary mirror-state matrix covering the full device at simulation
/// resolution, split at `partition_cell` into the FP1 columns (hologram)
/// and the IP1 columns (programmable pupil).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DmdPattern {
    /// 1 = mirror ON, 0 = OFF.
    pub mirrors: Array2<u8>,
    /// First column belonging to the IP1 region.
    pub partition_cell: usize,
}

impl DmdPattern {
    pub fn new(mirrors: Array2<u8>, partition_cell: usize) -> Result<Self> {
        let p = DmdPattern { mirrors, partition_cell };
        p.validate()?;
        Ok(p)
    }

    /// All mirrors OFF, shaped for `cfg`.
    pub fn dark(cfg: &OpticalConfig) -> Self {
        DmdPattern {
            mirrors: Array2::zeros(cfg.grid_shape()),
            partition_cell: cfg.partition_cell(),
        }
    }

    /// All mirrors ON, shaped for `cfg`.
    pub fn all_on(cfg: &OpticalConfig) -> Self {
        DmdPattern {
            mirrors: Array2::ones(cfg.grid_shape()),
            partition_cell: cfg.partition_cell(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (r, c) = self.mirrors.dim();
        if r == 0 || c == 0 {
            return Err(Error::Shape("pattern must be non-empty".into()));
        }
        if self.partition_cell == 0 || self.partition_cell > c {
            return Err(Error::Shape(format!(
                "partition column {} outside pattern width {c}",
                self.partition_cell
            )));
        }
        if self.mirrors.iter().any(|&m| m > 1) {
            return Err(Error::Parameter("pattern entries must be 0 or 1".into()));
        }
        Ok(())
    }

    /// Check the pattern matches the simulation grid of `cfg`.
    pub fn check_geometry(&self, cfg: &OpticalConfig) -> Result<()> {
        if self.mirrors.dim() != cfg.grid_shape() || self.partition_cell != cfg.partition_cell() {
            return Err(Error::Shape(format!(
                "pattern {:?} (split {}) does not match config grid {:?} (split {})",
                self.mirrors.dim(),
                self.partition_cell,
                cfg.grid_shape(),
                cfg.partition_cell()
            )));
        }
        Ok(())
    }

    pub fn fp1(&self) -> ArrayView2<'_, u8> {
        self.mirrors.slice(s![.., ..self.partition_cell])
    }

    pub fn ip1(&self) -> ArrayView2<'_, u8> {
        self.mirrors.slice(s![.., self.partition_cell..])
    }

    /// Replace the FP1 region contents.
    pub fn set_fp1(&mut self, fp1: &Array2<u8>) -> Result<()> {
        let want = (self.mirrors.nrows(), self.partition_cell);
        if fp1.dim() != want {
            return Err(Error::Shape(format!(
                "fp1 block {:?} does not match region {:?}",
                fp1.dim(),
                want
            )));
        }
        self.mirrors.slice_mut(s![.., ..self.partition_cell]).assign(fp1);
        Ok(())
    }

    /// Count of ON mirrors.
    pub fn on_count(&self) -> usize {
        self.mirrors.iter().filter(|&&m| m == 1).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_partition_the_device() {
        let cfg = OpticalConfig { superpixel: 4, ..OpticalConfig::default() };
        let p = DmdPattern::all_on(&cfg);
        assert_eq!(p.fp1().dim(), cfg.fp1_shape());
        assert_eq!(p.ip1().dim(), cfg.ip1_shape());
        assert_eq!(p.fp1().ncols() + p.ip1().ncols(), p.mirrors.ncols());
    }

    #[test]
    fn non_binary_rejected() {
        let mut m = Array2::<u8>::zeros((4, 4));
        m[[1, 1]] = 2;
        assert!(DmdPattern::new(m, 2).is_err());
    }
}

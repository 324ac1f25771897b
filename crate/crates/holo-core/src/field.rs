use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optical plane a sampled field lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    Fp1,
    Ip1,
    Fp2,
    Ip2,
    Custom,
}

impl Plane {
    /// Plane reached by one more lens transform.
    pub fn advanced(self) -> Plane {
        match self {
            Plane::Fp1 => Plane::Ip1,
            Plane::Ip1 => Plane::Fp2,
            Plane::Fp2 => Plane::Ip2,
            Plane::Ip2 => Plane::Custom,
            Plane::Custom => Plane::Custom,
        }
    }

    /// Plane reached by undoing one lens transform.
    pub fn retreated(self) -> Plane {
        match self {
            Plane::Ip1 => Plane::Fp1,
            Plane::Fp2 => Plane::Ip1,
            Plane::Ip2 => Plane::Fp2,
            _ => Plane::Custom,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Plane::Fp1 => "fp1",
            Plane::Ip1 => "ip1",
            Plane::Fp2 => "fp2",
            Plane::Ip2 => "ip2",
            Plane::Custom => "custom",
        }
    }

    pub fn from_label(s: &str) -> Result<Plane> {
        match s {
            "fp1" => Ok(Plane::Fp1),
            "ip1" => Ok(Plane::Ip1),
            "fp2" => Ok(Plane::Fp2),
            "ip2" => Ok(Plane::Ip2),
            "custom" => Ok(Plane::Custom),
            other => Err(Error::Format(format!("unknown plane label {other:?}"))),
        }
    }
}

/// Sampled 2-D complex optical amplitude.
///
/// Index convention: `samples[[row, col]]` with row along y and col along x.
/// The grid center sample sits at index `(rows/2, cols/2)` and at physical
/// position `center`; sample `(i, j)` is at
/// `center + ((i - rows/2) * pitch_y, (j - cols/2) * pitch_x)`.
#[derive(Clone, Debug)]
pub struct ComplexField {
    pub samples: Array2<Complex64>,
    /// Meters per sample along y (rows).
    pub pitch_y: f64,
    /// Meters per sample along x (cols).
    pub pitch_x: f64,
    pub plane: Plane,
    /// Physical (y, x) position of the grid center sample.
    pub center: [f64; 2],
}

impl ComplexField {
    pub fn new(samples: Array2<Complex64>, pitch_y: f64, pitch_x: f64, plane: Plane) -> Result<Self> {
        let field = ComplexField { samples, pitch_y, pitch_x, plane, center: [0.0, 0.0] };
        field.validate()?;
        Ok(field)
    }

    pub fn validate(&self) -> Result<()> {
        let (r, c) = self.dim();
        if r < 2 || c < 2 {
            return Err(Error::Shape(format!("field must be at least 2x2, got {r}x{c}")));
        }
        if !(self.pitch_y > 0.0) || !(self.pitch_x > 0.0) {
            return Err(Error::Parameter("field pitch must be positive".into()));
        }
        let p = self.power();
        if !p.is_finite() {
            return Err(Error::Parameter("field power must be finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> (usize, usize) {
        self.samples.dim()
    }

    /// Pixel area in m^2.
    pub fn pixel_area(&self) -> f64 {
        self.pitch_y * self.pitch_x
    }

    /// Total power: sum |amplitude|^2 times pixel area.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.pixel_area()
    }

    /// Physical (y, x) position of sample (i, j).
    pub fn position(&self, i: usize, j: usize) -> [f64; 2] {
        let (r, c) = self.dim();
        [
            self.center[0] + (i as f64 - (r / 2) as f64) * self.pitch_y,
            self.center[1] + (j as f64 - (c / 2) as f64) * self.pitch_x,
        ]
    }

    /// Index of the sample nearest to physical position (y, x).
    /// Returns None when the position falls outside the grid.
    pub fn nearest_index(&self, pos: [f64; 2]) -> Option<(usize, usize)> {
        let (r, c) = self.dim();
        let fi = (pos[0] - self.center[0]) / self.pitch_y + (r / 2) as f64;
        let fj = (pos[1] - self.center[1]) / self.pitch_x + (c / 2) as f64;
        let i = fi.round();
        let j = fj.round();
        if i < 0.0 || j < 0.0 || i >= r as f64 || j >= c as f64 {
            return None;
        }
        Some((i as usize, j as usize))
    }

    /// Intensity |E|^2 at a sample.
    pub fn intensity_at(&self, i: usize, j: usize) -> f64 {
        self.samples[[i, j]].norm_sqr()
    }

    /// Mean intensity over a patch x patch block centered on the sample
    /// nearest to `pos`. The block is clipped at the grid edges.
    pub fn patch_intensity(&self, pos: [f64; 2], patch: usize) -> Result<f64> {
        let (i, j) = self
            .nearest_index(pos)
            .ok_or_else(|| Error::Parameter(format!("probe position {pos:?} outside field")))?;
        Ok(self.patch_intensity_at(i, j, patch))
    }

    /// Mean intensity over a patch x patch block centered on sample (i, j).
    pub fn patch_intensity_at(&self, i: usize, j: usize, patch: usize) -> f64 {
        let (r, c) = self.dim();
        let half = patch / 2;
        let i0 = i.saturating_sub(half);
        let j0 = j.saturating_sub(half);
        let i1 = (i + half + 1).min(r);
        let j1 = (j + half + 1).min(c);
        let mut acc = 0.0;
        let mut n = 0usize;
        for ii in i0..i1 {
            for jj in j0..j1 {
                acc += self.samples[[ii, jj]].norm_sqr();
                n += 1;
            }
        }
        acc / n as f64
    }

    /// Index of the global intensity maximum (first occurrence in row-major
    /// order on exact ties).
    pub fn argmax_intensity(&self) -> (usize, usize) {
        let mut best = (0usize, 0usize);
        let mut best_v = f64::NEG_INFINITY;
        for ((i, j), a) in self.samples.indexed_iter() {
            let v = a.norm_sqr();
            if v > best_v {
                best_v = v;
                best = (i, j);
            }
        }
        best
    }

    /// Embed into a centered n x n zero square, preserving pitch and center.
    pub fn embedded(&self, n: usize) -> Result<ComplexField> {
        let (r, c) = self.dim();
        if n < r || n < c {
            return Err(Error::Shape(format!(
                "cannot embed {r}x{c} field into {n}x{n} square"
            )));
        }
        let mut out = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
        // Align grid centers so physical positions are preserved.
        let off_r = n / 2 - r / 2;
        let off_c = n / 2 - c / 2;
        for i in 0..r {
            for j in 0..c {
                out[[off_r + i, off_c + j]] = self.samples[[i, j]];
            }
        }
        Ok(ComplexField {
            samples: out,
            pitch_y: self.pitch_y,
            pitch_x: self.pitch_x,
            plane: self.plane,
            center: self.center,
        })
    }

    /// Extract a centered n x n window whose grid center lands on the sample
    /// nearest to physical position `at`. The window must fit in the grid.
    pub fn cropped(&self, n: usize, at: [f64; 2]) -> Result<ComplexField> {
        let (r, c) = self.dim();
        if n > r || n > c {
            return Err(Error::Shape(format!(
                "crop window {n} exceeds field dims {r}x{c}"
            )));
        }
        let (ci, cj) = self
            .nearest_index(at)
            .ok_or_else(|| Error::Parameter(format!("crop center {at:?} outside field")))?;
        let half = n / 2;
        if ci < half || cj < half || ci - half + n > r || cj - half + n > c {
            return Err(Error::Shape(format!(
                "crop window {n} around ({ci}, {cj}) leaves the grid"
            )));
        }
        let i0 = ci - half;
        let j0 = cj - half;
        let out = self.samples.slice(ndarray::s![i0..i0 + n, j0..j0 + n]).to_owned();
        let center = self.position(ci, cj);
        Ok(ComplexField {
            samples: out,
            pitch_y: self.pitch_y,
            pitch_x: self.pitch_x,
            plane: self.plane,
            center,
        })
    }

    /// Multiply every sample by a scalar.
    pub fn scaled(mut self, s: Complex64) -> ComplexField {
        self.samples.mapv_inplace(|a| a * s);
        self
    }
}

/// Round up to the next power of two (identity on powers of two).
pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize) -> ComplexField {
        ComplexField::new(
            Array2::from_elem((n, n), Complex64::new(1.0, 0.0)),
            1e-6,
            1e-6,
            Plane::Fp1,
        )
        .unwrap()
    }

    #[test]
    fn power_counts_pixel_area() {
        let f = uniform(8);
        assert!((f.power() - 64.0 * 1e-12).abs() < 1e-24);
    }

    #[test]
    fn embed_preserves_center_sample() {
        let mut f = uniform(8);
        f.samples[[4, 4]] = Complex64::new(2.0, 0.0);
        let e = f.embedded(16).unwrap();
        assert_eq!(e.samples[[8, 8]], Complex64::new(2.0, 0.0));
        assert_eq!(e.position(8, 8), f.position(4, 4));
    }

    #[test]
    fn crop_tracks_absolute_position() {
        let mut f = uniform(16);
        f.samples[[10, 12]] = Complex64::new(3.0, 0.0);
        let at = f.position(10, 12);
        let c = f.cropped(4, at).unwrap();
        assert_eq!(c.samples[[2, 2]], Complex64::new(3.0, 0.0));
        assert_eq!(c.center, at);
        assert_eq!(c.position(2, 2), at);
    }

    #[test]
    fn nearest_index_round_trip() {
        let f = uniform(9);
        for i in 0..9 {
            for j in 0..9 {
                let p = f.position(i, j);
                assert_eq!(f.nearest_index(p), Some((i, j)));
            }
        }
        assert_eq!(f.nearest_index([1.0, 0.0]), None);
    }

    #[test]
    fn degenerate_grid_rejected() {
        let a = Array2::from_elem((1, 4), Complex64::new(0.0, 0.0));
        assert!(ComplexField::new(a, 1e-6, 1e-6, Plane::Fp1).is_err());
    }
}

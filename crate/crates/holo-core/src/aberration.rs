//! Synthetic wavefront aberrations.
//!
//! The optical train is aberrated with a pupil-plane phase map built from a
//! seeded sum of Zernike polynomials. Maps are normalized so their rms phase,
//! weighted by a Gaussian intensity profile of the illuminating beam, equals
//! a requested value. Hologram synthesis consumes a map as the "characterized"
//! phase it compensates; the train may carry a different (e.g. characterized
//! plus residual) map, which is what leaves a realistic crosstalk baseline.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pupil-plane phase map in radians, co-sampled with the field it applies to.
#[derive(Clone, Debug)]
pub struct AberrationMap {
    pub phase: Array2<f64>,
    pub description: String,
}

impl AberrationMap {
    pub fn zero(shape: (usize, usize)) -> AberrationMap {
        AberrationMap { phase: Array2::zeros(shape), description: "flat".into() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::Parameter("aberration phase must be finite".into()));
        }
        Ok(())
    }

    /// Map with every phase value negated (the compensation phase).
    pub fn negated(&self) -> AberrationMap {
        AberrationMap {
            phase: self.phase.mapv(|p| -p),
            description: format!("-({})", self.description),
        }
    }

    /// Sum of two co-sampled maps.
    pub fn plus(&self, other: &AberrationMap) -> Result<AberrationMap> {
        if self.phase.dim() != other.phase.dim() {
            return Err(Error::Shape("aberration maps are not co-sampled".into()));
        }
        Ok(AberrationMap {
            phase: &self.phase + &other.phase,
            description: format!("{} + {}", self.description, other.description),
        })
    }

    /// Scale all phase values.
    pub fn scaled(&self, s: f64) -> AberrationMap {
        AberrationMap {
            phase: self.phase.mapv(|p| p * s),
            description: format!("{} x {s:.4}", self.description),
        }
    }

    /// Intensity-weighted rms of the phase (piston removed), with Gaussian
    /// weight exp(-2 r^2 / w^2) centered on the grid.
    pub fn weighted_rms(&self, pitch: f64, waist: f64) -> f64 {
        let (rows, cols) = self.phase.dim();
        let mut sw = 0.0;
        let mut swp = 0.0;
        let mut swp2 = 0.0;
        for ((i, j), &p) in self.phase.indexed_iter() {
            let y = (i as f64 - (rows / 2) as f64) * pitch;
            let x = (j as f64 - (cols / 2) as f64) * pitch;
            let w = (-2.0 * (x * x + y * y) / (waist * waist)).exp();
            sw += w;
            swp += w * p;
            swp2 += w * p * p;
        }
        let mean = swp / sw;
        (swp2 / sw - mean * mean).max(0.0).sqrt()
    }
}

/// Zernike term selection for a synthetic map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermSet {
    /// Astigmatism, coma, trefoil, spherical and their cousins: radial
    /// orders 2..=4.
    LowOrder,
    /// Radial orders 2..=6; wings reach several spot waists.
    MidOrder,
    /// Radial orders 2..=8 with 1/n^2 weighting; used for the relay pupil.
    HighOrder,
}

impl TermSet {
    fn orders(self) -> std::ops::RangeInclusive<u32> {
        match self {
            TermSet::LowOrder => 2..=4,
            TermSet::MidOrder => 2..=6,
            TermSet::HighOrder => 2..=8,
        }
    }
}

/// Recipe for a seeded synthetic aberration map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AberrationRecipe {
    /// Target rms in waves (1 wave = 2 pi radians).
    pub rms_waves: f64,
    pub terms: TermSet,
    /// Unit-disk radius for the polynomials, in units of the weighting waist.
    pub norm_radius_factor: f64,
}

impl Default for AberrationRecipe {
    fn default() -> Self {
        AberrationRecipe { rms_waves: 1.0 / 8.0, terms: TermSet::LowOrder, norm_radius_factor: 2.0 }
    }
}

/// Radial Zernike polynomial R_n^m(rho) for 0 <= m <= n, n - m even.
fn zernike_radial(n: u32, m: u32, rho: f64) -> f64 {
    let mut sum = 0.0;
    let kmax = (n - m) / 2;
    for k in 0..=kmax {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let num = factorial(n - k);
        let den = factorial(k) * factorial((n + m) / 2 - k) * factorial((n - m) / 2 - k);
        sum += sign * num / den * rho.powi((n - 2 * k) as i32);
    }
    sum
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|v| v as f64).product::<f64>().max(1.0)
}

/// Zernike polynomial Z_n^m with OSA sign convention; negative m is the sine
/// branch. `rho` may exceed 1 (the polynomial continues smoothly).
pub fn zernike(n: u32, m: i32, rho: f64, theta: f64) -> f64 {
    let ma = m.unsigned_abs();
    let r = zernike_radial(n, ma, rho);
    if m >= 0 {
        r * (ma as f64 * theta).cos()
    } else {
        r * (ma as f64 * theta).sin()
    }
}

/// Build a seeded synthetic map on a grid.
///
/// `pitch` is the grid pitch and `waist` the 1/e amplitude radius of the beam
/// that weights the rms normalization. Coefficients are Gaussian with weight
/// 1/n^2 per radial order; tilt and piston are excluded. The map is scaled so
/// `weighted_rms` (against intensity weight, i.e. 1/e^2 radius = waist)
/// equals `rms_waves * 2 pi`. Deterministic in `seed`.
pub fn synthetic_aberration(
    shape: (usize, usize),
    pitch: f64,
    waist: f64,
    recipe: &AberrationRecipe,
    seed: u64,
) -> AberrationMap {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut terms: Vec<(u32, i32, f64)> = Vec::new();
    for n in recipe.terms.orders() {
        for m in (-(n as i32)..=n as i32).step_by(2) {
            if n >= 2 {
                let amp: f64 = rng.gen_range(-1.0..1.0);
                terms.push((n, m, amp / (n as f64 * n as f64)));
            }
        }
    }
    let r_norm = recipe.norm_radius_factor * waist;
    let (rows, cols) = shape;
    let mut phase = Array2::zeros(shape);
    for ((i, j), p) in phase.indexed_iter_mut() {
        let y = (i as f64 - (rows / 2) as f64) * pitch;
        let x = (j as f64 - (cols / 2) as f64) * pitch;
        let rho = (x * x + y * y).sqrt() / r_norm;
        let theta = y.atan2(x);
        let mut v = 0.0;
        for &(n, m, a) in &terms {
            v += a * zernike(n, m, rho, theta);
        }
        *p = v;
    }
    let mut map = AberrationMap {
        phase,
        description: format!("synthetic {:?} seed {seed}", recipe.terms),
    };
    let rms = map.weighted_rms(pitch, waist);
    let target = recipe.rms_waves * std::f64::consts::TAU;
    if rms > 0.0 {
        map.phase.mapv_inplace(|p| p * target / rms);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_polynomials_match_tables() {
        // R_2^0 = 2 rho^2 - 1, R_3^1 = 3 rho^3 - 2 rho, R_4^0 = 6r^4 - 6r^2 + 1
        for &rho in &[0.0, 0.3, 0.7, 1.0] {
            assert!((zernike_radial(2, 0, rho) - (2.0 * rho * rho - 1.0)).abs() < 1e-12);
            assert!(
                (zernike_radial(3, 1, rho) - (3.0 * rho.powi(3) - 2.0 * rho)).abs() < 1e-12
            );
            assert!(
                (zernike_radial(4, 0, rho) - (6.0 * rho.powi(4) - 6.0 * rho * rho + 1.0)).abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn synthetic_map_hits_requested_rms() {
        let recipe = AberrationRecipe::default();
        let map = synthetic_aberration((128, 128), 1e-5, 3e-4, &recipe, 7);
        let rms = map.weighted_rms(1e-5, 3e-4);
        let target = recipe.rms_waves * std::f64::consts::TAU;
        assert!((rms - target).abs() / target < 1e-9);
    }

    #[test]
    fn synthetic_map_is_deterministic() {
        let recipe = AberrationRecipe::default();
        let a = synthetic_aberration((64, 64), 1e-5, 3e-4, &recipe, 42);
        let b = synthetic_aberration((64, 64), 1e-5, 3e-4, &recipe, 42);
        assert_eq!(a.phase, b.phase);
        let c = synthetic_aberration((64, 64), 1e-5, 3e-4, &recipe, 43);
        assert_ne!(a.phase, c.phase);
    }
}

//! Scalar Fourier-optics simulation of holographic beam addressing with a
//! binary-amplitude device used in double pass: hologram region in the
//! Fourier plane, programmable pupil in an intermediate image plane.
//!
//! The crate covers the full pipeline: illumination and propagation
//! ([`optics`]), hologram synthesis and Fourier-plane multiplexing
//! ([`hologram`]), scan-and-fit crosstalk optimization ([`calibrate`]),
//! the double-pass train with image-plane filtering ([`doublepass`]),
//! crosstalk metrics ([`metrics`]) and deterministic file formats ([`io`],
//! [`runconfig`]).

pub mod aberration;
pub mod calibrate;
pub mod config;
pub mod doublepass;
pub mod error;
pub mod field;
pub mod fit;
pub mod hologram;
pub mod io;
pub mod metrics;
pub mod optics;
pub mod pattern;
pub mod presets;
pub mod runconfig;
pub mod system;
pub mod tables;

pub use config::OpticalConfig;
pub use error::{Error, Result};
pub use field::{ComplexField, Plane};
pub use pattern::DmdPattern;

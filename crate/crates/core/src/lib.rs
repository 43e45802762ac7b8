//! Calibrated ensembles for binary segmentation.
//!
//! Members are trained with a range of foreground loss weights so their
//! decisions nest from sensitive to precise. Per-member coefficients are then
//! fit so that, for every pattern of member decisions, the summed coefficients
//! match the observed foreground rate. The resulting heatmap approximates the
//! per-voxel classification probability.
//!
//! ```
//! use calens::calibration::{solve_coefficients, PatternHistogram};
//!
//! let mut h = PatternHistogram::new(2).unwrap();
//! h.add(0b11, 10, 9).unwrap(); // both members say foreground
//! h.add(0b01, 10, 4).unwrap(); // only the sensitive member does
//! h.add(0b10, 10, 1).unwrap();
//! let c = solve_coefficients(&h).unwrap();
//! assert!((c.a[0] - 0.533333).abs() < 1e-5);
//! ```

pub mod calibration;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod losses;
pub mod models;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{BinaryMask, Heatmap, OneHotLabel, SampleGrid, SoftPrediction};

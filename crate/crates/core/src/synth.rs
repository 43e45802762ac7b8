//! Synthetic datasets with a known per-voxel classification probability.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`), a counter-based
//! stream cipher whose output is identical on every platform, seeded with
//! `seed_from_u64(seed)`. Normal draws use `rand_distr::StandardNormal`.
//! Draw order for both generators is documented on the functions below and
//! is part of the output contract.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::{BinaryMask, Heatmap, SampleGrid};

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// P(x in class 1) for equal-weight unit-variance Gaussians centred at -1 and +1.
///
/// The density ratio p1 / (p0 + p1) simplifies to 1 / (1 + exp(-2x)).
pub fn analytic_probability(x: f64) -> f64 {
    sigmoid(2.0 * x)
}

/// Same as [`analytic_probability`] with a class-1 prior other than 1/2.
pub fn analytic_probability_with_prior(x: f64, prior: f64) -> f64 {
    if prior <= 0.0 {
        return 0.0;
    }
    if prior >= 1.0 {
        return 1.0;
    }
    sigmoid(2.0 * x + logit(prior))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian1DDataset {
    pub xs: Vec<f64>,
    pub labels: Vec<u8>,
    pub seed: u64,
}

impl Gaussian1DDataset {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn grid(&self) -> SampleGrid {
        SampleGrid::linear(self.xs.len()).expect("dataset is nonempty")
    }

    pub fn mask(&self) -> BinaryMask {
        BinaryMask::new(self.grid(), self.labels.clone()).expect("labels are binary")
    }

    pub fn analytic_heatmap(&self) -> Heatmap {
        let values = self.xs.iter().map(|&x| analytic_probability(x)).collect();
        Heatmap::new(self.grid(), values).expect("probabilities lie in [0, 1]")
    }
}

/// Draws `n` samples. Per sample: one `u32` decides the label (low bit),
/// then one standard normal shifts to mean -1 or +1.
pub fn generate_gaussian1d(n: usize, seed: u64) -> Result<Gaussian1DDataset> {
    if n < 2 {
        return Err(Error::InvalidCount(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let mut rng = rng(seed);
    let mut xs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = (rng.random::<u32>() & 1) as u8;
        let z: f64 = rng.sample(StandardNormal);
        let mean = if label == 1 { 1.0 } else { -1.0 };
        xs.push(mean + z);
        labels.push(label);
    }
    Ok(Gaussian1DDataset { xs, labels, seed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob2DDataset {
    pub grid: SampleGrid,
    pub images: Vec<Vec<f64>>,
    pub ground_truth: Vec<BinaryMask>,
    /// Foreground fraction of each image, the class prior behind
    /// [`Blob2DDataset::analytic_heatmap`].
    pub priors: Vec<f64>,
    pub seed: u64,
}

impl Blob2DDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn analytic_heatmap(&self, image: usize) -> Heatmap {
        let prior = self.priors[image];
        let values = self.images[image]
            .iter()
            .map(|&t| analytic_probability_with_prior(t, prior))
            .collect();
        Heatmap::new(self.grid.clone(), values).expect("probabilities lie in [0, 1]")
    }

    pub fn mean_foreground_fraction(&self) -> f64 {
        self.priors.iter().sum::<f64>() / self.priors.len().max(1) as f64
    }
}

/// Images with one axis-aligned elliptic foreground blob each.
///
/// Per image the draws are: centre row, centre column (uniform over the inner
/// half of the grid), row radius, column radius (uniform in
/// `[extent/8, extent/4]`), then one standard normal per pixel in row-major
/// order. Pixel intensities are that draw shifted to +1 (foreground) or -1.
pub fn generate_blob2d(num_images: usize, grid: &SampleGrid, seed: u64) -> Result<Blob2DDataset> {
    if grid.ndim() != 2 || grid.shape().iter().any(|&e| e < 8) {
        return Err(Error::InvalidGrid(format!(
            "blob images need a 2D grid with extents >= 8, got {:?}",
            grid.shape()
        )));
    }
    if num_images == 0 {
        return Err(Error::InvalidCount("need at least one image".into()));
    }
    let (rows, cols) = (grid.shape()[0], grid.shape()[1]);
    let (h, w) = (rows as f64, cols as f64);
    let mut rng = rng(seed);

    let mut images = Vec::with_capacity(num_images);
    let mut ground_truth = Vec::with_capacity(num_images);
    let mut priors = Vec::with_capacity(num_images);
    for _ in 0..num_images {
        let cy = rng.random_range(h / 4.0..=3.0 * h / 4.0);
        let cx = rng.random_range(w / 4.0..=3.0 * w / 4.0);
        let ry = rng.random_range(h / 8.0..=h / 4.0);
        let rx = rng.random_range(w / 8.0..=w / 4.0);

        let mut mask = Vec::with_capacity(grid.voxel_count());
        let mut image = Vec::with_capacity(grid.voxel_count());
        for r in 0..rows {
            for c in 0..cols {
                let dy = (r as f64 + 0.5 - cy) / ry;
                let dx = (c as f64 + 0.5 - cx) / rx;
                let fg = dy * dy + dx * dx <= 1.0;
                let z: f64 = rng.sample(StandardNormal);
                image.push(if fg { 1.0 + z } else { -1.0 + z });
                mask.push(u8::from(fg));
            }
        }
        let mask = BinaryMask::new(grid.clone(), mask)?;
        priors.push(mask.count_ones() as f64 / grid.voxel_count() as f64);
        ground_truth.push(mask);
        images.push(image);
    }
    Ok(Blob2DDataset {
        grid: grid.clone(),
        images,
        ground_truth,
        priors,
        seed,
    })
}

//! Shared voxel containers.
//!
//! All arrays are flat and row-major over a [`SampleGrid`]. Masks and labels
//! are stored as `u8`, probabilities as `f64`. Every type is immutable once
//! constructed.

use crate::error::{Error, Result};

/// Extents of a 1D, 2D or 3D sample grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleGrid {
    shape: Vec<usize>,
    voxel_count: usize,
}

impl SampleGrid {
    pub fn new(shape: &[usize]) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::InvalidGrid(format!(
                "expected 1 to 3 dimensions, got {}",
                shape.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::InvalidGrid(format!("zero extent in {shape:?}")));
        }
        let voxel_count = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| Error::InvalidGrid(format!("{shape:?} overflows")))?;
        Ok(Self {
            shape: shape.to_vec(),
            voxel_count,
        })
    }

    /// 1D grid of `n` samples.
    pub fn linear(n: usize) -> Result<Self> {
        Self::new(&[n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn voxel_count(&self) -> usize {
        self.voxel_count
    }
}

/// Anything that lives on a sample grid.
pub trait OnGrid {
    fn grid(&self) -> &SampleGrid;
}

/// Succeeds iff both operands share the same grid shape.
pub fn validate_pair(a: &impl OnGrid, b: &impl OnGrid) -> Result<()> {
    check_grids(a.grid(), b.grid())
}

pub(crate) fn check_grids(a: &SampleGrid, b: &SampleGrid) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::GridMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        })
    }
}

fn check_len(grid: &SampleGrid, len: usize) -> Result<()> {
    if grid.voxel_count() != len {
        return Err(Error::LengthMismatch {
            expected: grid.voxel_count(),
            actual: len,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    grid: SampleGrid,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(grid: SampleGrid, values: Vec<u8>) -> Result<Self> {
        check_len(&grid, values.len())?;
        if let Some(pos) = values.iter().position(|&v| v > 1) {
            return Err(Error::InvalidValue(format!(
                "mask value {} at voxel {pos} is not 0 or 1",
                values[pos]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_bools(grid: SampleGrid, values: impl IntoIterator<Item = bool>) -> Result<Self> {
        Self::new(grid, values.into_iter().map(u8::from).collect())
    }

    pub fn zeros(grid: SampleGrid) -> Self {
        let values = vec![0; grid.voxel_count()];
        Self { grid, values }
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn into_values(self) -> Vec<u8> {
        self.values
    }

    /// Lossless conversion to a heatmap with values in {0, 1}.
    pub fn to_heatmap(&self) -> Heatmap {
        Heatmap {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f64::from(v)).collect(),
        }
    }
}

impl OnGrid for BinaryMask {
    fn grid(&self) -> &SampleGrid {
        &self.grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    grid: SampleGrid,
    values: Vec<f64>,
}

impl Heatmap {
    /// Rejects values outside [0, 1] and NaN.
    pub fn new(grid: SampleGrid, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, values.len())?;
        if let Some(pos) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidValue(format!(
                "heatmap value {} at voxel {pos} outside [0, 1]",
                values[pos]
            )));
        }
        Ok(Self { grid, values })
    }

    /// Clips every value into [0, 1] and returns the number of clipped voxels.
    pub fn clipped(grid: SampleGrid, mut values: Vec<f64>) -> Result<(Self, usize)> {
        check_len(&grid, values.len())?;
        let mut clipped = 0;
        for v in values.iter_mut() {
            if v.is_nan() {
                return Err(Error::InvalidValue("NaN heatmap value".into()));
            }
            if *v < 0.0 || *v > 1.0 {
                *v = v.clamp(0.0, 1.0);
                clipped += 1;
            }
        }
        Ok((Self { grid, values }, clipped))
    }

    pub fn constant(grid: SampleGrid, value: f64) -> Result<Self> {
        let values = vec![value; grid.voxel_count()];
        Self::new(grid, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Converts to a mask when every value is exactly 0 or 1.
    pub fn to_mask(&self) -> Result<BinaryMask> {
        let values = self
            .values
            .iter()
            .map(|&v| {
                if v == 0.0 {
                    Ok(0)
                } else if v == 1.0 {
                    Ok(1)
                } else {
                    Err(Error::InvalidValue(format!(
                        "heatmap value {v} is not binary"
                    )))
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(BinaryMask {
            grid: self.grid.clone(),
            values,
        })
    }
}

impl OnGrid for Heatmap {
    fn grid(&self) -> &SampleGrid {
        &self.grid
    }
}

/// Per-voxel one-hot labels over `num_classes` channels (background is channel 0).
///
/// Values are stored voxel-major: `values[i * num_classes + c]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotLabel {
    grid: SampleGrid,
    num_classes: usize,
    values: Vec<u8>,
}

impl OneHotLabel {
    pub fn new(grid: SampleGrid, num_classes: usize, values: Vec<u8>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidCount(format!(
                "need background plus at least one class, got {num_classes} channels"
            )));
        }
        check_len(&grid, values.len() / num_classes)?;
        if !values.len().is_multiple_of(num_classes) {
            return Err(Error::LengthMismatch {
                expected: grid.voxel_count() * num_classes,
                actual: values.len(),
            });
        }
        for (i, voxel) in values.chunks_exact(num_classes).enumerate() {
            let ones = voxel.iter().filter(|&&v| v == 1).count();
            if ones != 1 || voxel.iter().any(|&v| v > 1) {
                return Err(Error::InvalidValue(format!("voxel {i} is not one-hot")));
            }
        }
        Ok(Self {
            grid,
            num_classes,
            values,
        })
    }

    /// Builds labels from per-voxel class indices.
    pub fn from_classes(grid: SampleGrid, num_classes: usize, classes: &[u8]) -> Result<Self> {
        check_len(&grid, classes.len())?;
        let mut values = vec![0u8; classes.len() * num_classes];
        for (i, &c) in classes.iter().enumerate() {
            if usize::from(c) >= num_classes {
                return Err(Error::InvalidValue(format!(
                    "class {c} at voxel {i} out of range for {num_classes} channels"
                )));
            }
            values[i * num_classes + usize::from(c)] = 1;
        }
        Self::new(grid, num_classes, values)
    }

    /// Two-channel labels whose foreground channel is `mask`.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        let values = mask.values().iter().flat_map(|&v| [1 - v, v]).collect();
        Self {
            grid: mask.grid().clone(),
            num_classes: 2,
            values,
        }
    }

    /// The class-1 channel; only defined for a single foreground class.
    pub fn to_mask(&self) -> Result<BinaryMask> {
        if self.num_classes != 2 {
            return Err(Error::ClassCountMismatch {
                left: self.num_classes,
                right: 2,
            });
        }
        let values = self.values.chunks_exact(2).map(|v| v[1]).collect();
        BinaryMask::new(self.grid.clone(), values)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }
}

impl OnGrid for OneHotLabel {
    fn grid(&self) -> &SampleGrid {
        &self.grid
    }
}

/// Per-voxel class probabilities, same layout as [`OneHotLabel`].
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPrediction {
    grid: SampleGrid,
    num_classes: usize,
    values: Vec<f64>,
}

impl SoftPrediction {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(grid: SampleGrid, num_classes: usize, values: Vec<f64>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidCount(format!(
                "need background plus at least one class, got {num_classes} channels"
            )));
        }
        if values.len() != grid.voxel_count() * num_classes {
            return Err(Error::LengthMismatch {
                expected: grid.voxel_count() * num_classes,
                actual: values.len(),
            });
        }
        for (i, voxel) in values.chunks_exact(num_classes).enumerate() {
            if voxel.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidValue(format!(
                    "voxel {i} has a probability outside [0, 1]"
                )));
            }
            let sum: f64 = voxel.iter().sum();
            if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
                return Err(Error::InvalidValue(format!("voxel {i} sums to {sum}")));
            }
        }
        Ok(Self {
            grid,
            num_classes,
            values,
        })
    }

    /// Two-channel prediction from foreground probabilities.
    pub fn from_foreground(grid: SampleGrid, foreground: &[f64]) -> Result<Self> {
        check_len(&grid, foreground.len())?;
        let values = foreground.iter().flat_map(|&p| [1.0 - p, p]).collect();
        Self::new(grid, 2, values)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl OnGrid for SoftPrediction {
    fn grid(&self) -> &SampleGrid {
        &self.grid
    }
}

//! Dataset directory layout.
//!
//! ```text
//! <root>/images/<stem>.calb       float64 features
//! <root>/gt/<stem>.calb           uint8 ground truth
//! <root>/prob/<stem>.calb         float64 analytic probability (synthetic data)
//! <root>/preds/<w_k>/<stem>.calb  uint8 member predictions, one dir per weight
//! ```
//!
//! Files are matched across directories by stem.

use std::fs;
use std::path::{Path, PathBuf};

use super::container::{read_array, write_array, Array};
use crate::error::{Error, Result};
use crate::types::{BinaryMask, Heatmap, SampleGrid};

pub const EXTENSION: &str = "calb";

pub fn stem_name(index: usize) -> String {
    format!("{index:06}")
}

/// Directory name for loss weight `w`, e.g. `+3`, `-0.5`.
pub fn weight_dir_name(w: f64) -> String {
    format!("{w:+}")
}

pub fn array_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.{EXTENSION}"))
}

/// Sorted stems of the `.calb` files in `dir`.
pub fn list_stems(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(EXTENSION) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

pub fn check_same_stems(a: &[String], a_dir: &Path, b: &[String], b_dir: &Path) -> Result<()> {
    if a == b {
        return Ok(());
    }
    let missing = a
        .iter()
        .find(|s| !b.contains(s))
        .map(|s| format!("{s} in {} but not {}", a_dir.display(), b_dir.display()))
        .or_else(|| {
            b.iter()
                .find(|s| !a.contains(s))
                .map(|s| format!("{s} in {} but not {}", b_dir.display(), a_dir.display()))
        })
        .unwrap_or_else(|| "stem lists differ".into());
    Err(Error::Layout(missing))
}

pub fn read_masks(dir: &Path) -> Result<Vec<(String, BinaryMask)>> {
    list_stems(dir)?
        .into_iter()
        .map(|stem| {
            let m = read_array(&array_path(dir, &stem))?.to_mask()?;
            Ok((stem, m))
        })
        .collect()
}

pub fn read_heatmaps(dir: &Path) -> Result<Vec<(String, Heatmap)>> {
    list_stems(dir)?
        .into_iter()
        .map(|stem| {
            let h = read_array(&array_path(dir, &stem))?.to_heatmap()?;
            Ok((stem, h))
        })
        .collect()
}

pub struct FeatureImage {
    pub stem: String,
    pub grid: SampleGrid,
    pub values: Vec<f64>,
}

pub fn read_features(dir: &Path) -> Result<Vec<FeatureImage>> {
    list_stems(dir)?
        .into_iter()
        .map(|stem| {
            let a = read_array(&array_path(dir, &stem))?;
            let values = a.f64_values()?.to_vec();
            Ok(FeatureImage {
                stem,
                grid: a.grid().clone(),
                values,
            })
        })
        .collect()
}

pub fn write_mask(dir: &Path, stem: &str, mask: &BinaryMask) -> Result<()> {
    write_array(&array_path(dir, stem), &Array::from(mask))
}

pub fn write_heatmap(dir: &Path, stem: &str, h: &Heatmap) -> Result<()> {
    write_array(&array_path(dir, stem), &Array::from(h))
}

/// Subdirectories of `preds` named by loss weight, highest weight first.
pub fn read_weight_dirs(preds: &Path) -> Result<Vec<(f64, PathBuf)>> {
    let entries = fs::read_dir(preds).map_err(|e| Error::io(preds, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(preds, e))?.path();
        if !path.is_dir() {
            continue;
        }
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        let w: f64 = name.parse().map_err(|_| {
            Error::Layout(format!(
                "prediction directory {name:?} is not a loss weight"
            ))
        })?;
        dirs.push((w, path));
    }
    if dirs.is_empty() {
        return Err(Error::Layout(format!(
            "no weight directories in {}",
            preds.display()
        )));
    }
    dirs.sort_by(|a, b| b.0.total_cmp(&a.0));
    if dirs.windows(2).any(|p| p[0].0 == p[1].0) {
        return Err(Error::Layout("duplicate loss weight directories".into()));
    }
    Ok(dirs)
}

/// Member predictions read from a `preds/` tree.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberMasks {
    /// Loss weights, highest first; member `k` has weight `weights[k]`.
    pub weights: Vec<f64>,
    pub stems: Vec<String>,
    /// `masks[image][member]`.
    pub masks: Vec<Vec<BinaryMask>>,
}

pub fn read_member_masks(preds: &Path) -> Result<MemberMasks> {
    let dirs = read_weight_dirs(preds)?;
    let first_stems = list_stems(&dirs[0].1)?;
    let mut per_image: Vec<Vec<BinaryMask>> =
        vec![Vec::with_capacity(dirs.len()); first_stems.len()];
    for (_, dir) in &dirs {
        let masks = read_masks(dir)?;
        let stems: Vec<String> = masks.iter().map(|(s, _)| s.clone()).collect();
        check_same_stems(&first_stems, &dirs[0].1, &stems, dir)?;
        for (slot, (_, m)) in per_image.iter_mut().zip(masks) {
            slot.push(m);
        }
    }
    Ok(MemberMasks {
        weights: dirs.iter().map(|d| d.0).collect(),
        stems: first_stems,
        masks: per_image,
    })
}

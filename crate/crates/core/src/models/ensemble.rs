use std::ops::Range;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, train_member, ModelKind, ToyModel, TrainerConfig};
use crate::calibration::{self, count_patterns, CalibrationCoefficients, SolveOptions, MAX_MODELS};
use crate::error::{Error, Result};
use crate::synth::{rng, Blob2DDataset, Gaussian1DDataset};
use crate::types::{BinaryMask, Heatmap, SampleGrid};

/// Flat training voxels grouped into cross-validation units.
///
/// A unit is the smallest block a fold can hold: one sample for 1D data, one
/// image for segmentation data.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSet {
    features: Vec<f64>,
    labels: Vec<u8>,
    units: Vec<Range<usize>>,
}

impl VoxelSet {
    /// `units` must tile `0..features.len()` in order.
    pub fn new(features: Vec<f64>, labels: Vec<u8>, units: Vec<Range<usize>>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: features.len(),
                actual: labels.len(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidValue("labels must be 0 or 1".into()));
        }
        let mut next = 0;
        for u in &units {
            if u.start != next || u.end <= u.start {
                return Err(Error::InvalidValue(format!("unit {u:?} breaks the tiling")));
            }
            next = u.end;
        }
        if next != features.len() {
            return Err(Error::InvalidValue("units do not cover every voxel".into()));
        }
        Ok(Self {
            features,
            labels,
            units,
        })
    }

    /// Every voxel is its own unit.
    pub fn per_voxel(features: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        let units = (0..features.len()).map(|i| i..i + 1).collect();
        Self::new(features, labels, units)
    }

    /// One unit per image.
    pub fn from_images(images: &[Vec<f64>], masks: &[BinaryMask]) -> Result<Self> {
        if images.len() != masks.len() {
            return Err(Error::LengthMismatch {
                expected: images.len(),
                actual: masks.len(),
            });
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut units = Vec::with_capacity(images.len());
        for (img, mask) in images.iter().zip(masks) {
            if img.len() != mask.len() {
                return Err(Error::LengthMismatch {
                    expected: mask.len(),
                    actual: img.len(),
                });
            }
            let start = features.len();
            features.extend_from_slice(img);
            labels.extend_from_slice(mask.values());
            units.push(start..features.len());
        }
        Self::new(features, labels, units)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    pub fn unit(&self, u: usize) -> Range<usize> {
        self.units[u].clone()
    }

    /// Linear grid over all voxels in storage order.
    pub fn grid(&self) -> Result<SampleGrid> {
        SampleGrid::linear(self.len())
    }

    pub fn ground_truth(&self) -> Result<BinaryMask> {
        BinaryMask::new(self.grid()?, self.labels.clone())
    }

    fn gather(&self, units: &[usize]) -> (Vec<f64>, Vec<u8>) {
        let mut f = Vec::new();
        let mut l = Vec::new();
        for &u in units {
            let r = self.unit(u);
            f.extend_from_slice(&self.features[r.clone()]);
            l.extend_from_slice(&self.labels[r]);
        }
        (f, l)
    }
}

impl TryFrom<&Gaussian1DDataset> for VoxelSet {
    type Error = Error;

    fn try_from(d: &Gaussian1DDataset) -> Result<Self> {
        VoxelSet::per_voxel(d.xs.clone(), d.labels.clone())
    }
}

impl TryFrom<&Blob2DDataset> for VoxelSet {
    type Error = Error;

    fn try_from(d: &Blob2DDataset) -> Result<Self> {
        VoxelSet::from_images(&d.images, &d.ground_truth)
    }
}

/// Assignment of units to folds: shuffle by seed, then contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldLayout {
    folds: usize,
    fold_of_unit: Vec<usize>,
}

impl FoldLayout {
    pub fn new(num_units: usize, folds: usize, seed: u64) -> Result<Self> {
        if folds < 2 {
            return Err(Error::InvalidCount(format!(
                "need at least 2 folds, got {folds}"
            )));
        }
        if num_units < folds {
            return Err(Error::TooFewSamples {
                samples: num_units,
                folds,
            });
        }
        let mut order: Vec<usize> = (0..num_units).collect();
        order.shuffle(&mut rng(seed));
        let mut fold_of_unit = vec![0; num_units];
        let base = num_units / folds;
        let extra = num_units % folds;
        let mut pos = 0;
        for f in 0..folds {
            let size = base + usize::from(f < extra);
            for &u in &order[pos..pos + size] {
                fold_of_unit[u] = f;
            }
            pos += size;
        }
        Ok(Self {
            folds,
            fold_of_unit,
        })
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn fold_of(&self, unit: usize) -> usize {
        self.fold_of_unit[unit]
    }

    pub fn held_out(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_unit.len())
            .filter(|&u| self.fold_of_unit[u] == fold)
            .collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_unit.len())
            .filter(|&u| self.fold_of_unit[u] != fold)
            .collect()
    }
}

/// Out-of-fold predictions for every voxel of a [`VoxelSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValPrediction {
    /// Flat over the dataset, storage order.
    pub mask: BinaryMask,
    pub layout: FoldLayout,
    /// One model per fold, trained without that fold's units.
    pub models: Vec<ToyModel>,
}

struct FoldJob {
    model: ToyModel,
    held_out: Vec<usize>,
}

fn run_fold(
    data: &VoxelSet,
    layout: &FoldLayout,
    fold: usize,
    kind: ModelKind,
    w: f64,
    seed: u64,
    hp: &TrainerConfig,
) -> Result<FoldJob> {
    let (f, l) = data.gather(&layout.training(fold));
    let model = train_member(&f, &l, kind, w, derive_seed(seed, fold as u64), hp)?;
    Ok(FoldJob {
        model,
        held_out: layout.held_out(fold),
    })
}

fn assemble_cv(
    data: &VoxelSet,
    layout: FoldLayout,
    jobs: Vec<FoldJob>,
) -> Result<CrossValPrediction> {
    let mut mask = vec![0u8; data.len()];
    let mut models = Vec::with_capacity(jobs.len());
    for job in jobs {
        for &u in &job.held_out {
            for i in data.unit(u) {
                mask[i] = u8::from(job.model.foreground_probability(data.features[i]) > 0.5);
            }
        }
        models.push(job.model);
    }
    Ok(CrossValPrediction {
        mask: BinaryMask::new(data.grid()?, mask)?,
        layout,
        models,
    })
}

pub fn cross_val_predict(
    data: &VoxelSet,
    kind: ModelKind,
    w: f64,
    folds: usize,
    seed: u64,
    hp: &TrainerConfig,
) -> Result<CrossValPrediction> {
    let layout = FoldLayout::new(data.num_units(), folds, seed)?;
    let jobs = (0..folds)
        .into_par_iter()
        .map(|f| run_fold(data, &layout, f, kind, w, seed, hp))
        .collect::<Result<Vec<_>>>()?;
    assemble_cv(data, layout, jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSpec {
    /// Weight with the best mean Dice; members sit at `w_dsc - k`.
    pub w_dsc: f64,
    pub offsets: Vec<i32>,
    pub folds: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub trainer: TrainerConfig,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            w_dsc: 0.0,
            offsets: (-3..=3).collect(),
            folds: 5,
            seed: 0,
            model: ModelKind::Logistic,
            trainer: TrainerConfig::default(),
        }
    }
}

impl EnsembleSpec {
    pub fn weights(&self) -> Vec<f64> {
        self.offsets
            .iter()
            .map(|&k| self.w_dsc - f64::from(k))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!(
                "folds must be at least 2, got {}",
                self.folds
            )));
        }
        if self.offsets.is_empty() || self.offsets.len() > MAX_MODELS {
            return Err(Error::Config(format!(
                "need 1 to {MAX_MODELS} weight offsets, got {}",
                self.offsets.len()
            )));
        }
        let w = self.weights();
        let increasing = w.windows(2).all(|p| p[0] < p[1]);
        let decreasing = w.windows(2).all(|p| p[0] > p[1]);
        if !(increasing || decreasing) {
            return Err(Error::Config(
                "loss weights must be strictly monotone".into(),
            ));
        }
        if !self.w_dsc.is_finite() {
            return Err(Error::Config("w_dsc must be finite".into()));
        }
        self.trainer.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedEnsemble {
    pub weights: Vec<f64>,
    /// `members[k][f]`: weight `k`, fold `f`.
    pub members: Vec<Vec<ToyModel>>,
    /// Out-of-fold masks over the training set, one per weight.
    pub cv_masks: Vec<BinaryMask>,
    pub layout: FoldLayout,
}

impl CalibratedEnsemble {
    pub fn model_count(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    /// Per-weight masks on new data: fold models' foreground probabilities
    /// are averaged, then thresholded at 0.5.
    pub fn predict_masks(&self, grid: &SampleGrid, features: &[f64]) -> Result<Vec<BinaryMask>> {
        if features.len() != grid.voxel_count() {
            return Err(Error::GridMismatch {
                left: grid.shape().to_vec(),
                right: vec![features.len()],
            });
        }
        self.members
            .iter()
            .map(|folds| {
                let n = folds.len() as f64;
                BinaryMask::from_bools(
                    grid.clone(),
                    features.iter().map(|&x| {
                        let p: f64 = folds.iter().map(|m| m.foreground_probability(x)).sum();
                        p / n > 0.5
                    }),
                )
            })
            .collect()
    }

    /// Pattern histogram of the out-of-fold masks against `truth`, solved.
    pub fn fit_coefficients(
        &self,
        truth: &BinaryMask,
        options: SolveOptions,
    ) -> Result<CalibrationCoefficients> {
        let hist = count_patterns(&self.cv_masks, truth)?;
        calibration::solve_coefficients_with(&hist, options)
    }
}

/// One full cross-validation per loss weight. All weights share the fold
/// partition and per-fold initialisation seeds.
pub fn train_calibrated_ensemble(
    data: &VoxelSet,
    spec: &EnsembleSpec,
) -> Result<CalibratedEnsemble> {
    spec.validate()?;
    let layout = FoldLayout::new(data.num_units(), spec.folds, spec.seed)?;
    let weights = spec.weights();
    let jobs: Vec<(usize, usize)> = (0..weights.len())
        .flat_map(|k| (0..spec.folds).map(move |f| (k, f)))
        .collect();
    let mut results = jobs
        .par_iter()
        .map(|&(k, f)| {
            run_fold(
                data,
                &layout,
                f,
                spec.model,
                weights[k],
                spec.seed,
                &spec.trainer,
            )
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter();

    let mut members = Vec::with_capacity(weights.len());
    let mut cv_masks = Vec::with_capacity(weights.len());
    for _ in &weights {
        let fold_jobs: Vec<FoldJob> = results.by_ref().take(spec.folds).collect();
        let cv = assemble_cv(data, layout.clone(), fold_jobs)?;
        cv_masks.push(cv.mask);
        members.push(cv.models);
    }
    Ok(CalibratedEnsemble {
        weights,
        members,
        cv_masks,
        layout,
    })
}

/// Identical models that differ only in their seed, each trained on all data.
pub fn uncalibrated_ensemble(
    data: &VoxelSet,
    kind: ModelKind,
    w: f64,
    seeds: &[u64],
    hp: &TrainerConfig,
) -> Result<Vec<ToyModel>> {
    seeds
        .par_iter()
        .map(|&s| train_member(data.features(), data.labels(), kind, w, s, hp))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropoutSpec {
    pub drop_probability: f64,
    pub passes: usize,
}

impl Default for DropoutSpec {
    fn default() -> Self {
        Self {
            drop_probability: 0.1,
            passes: 7,
        }
    }
}

impl DropoutSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.drop_probability > 0.0 && self.drop_probability < 1.0) {
            return Err(Error::Config("drop_probability must lie in (0, 1)".into()));
        }
        if self.passes == 0 {
            return Err(Error::Config("passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Binary masks of `passes` stochastic forward passes with dropout active.
pub fn dropout_pass_masks(
    model: &ToyModel,
    grid: &SampleGrid,
    features: &[f64],
    spec: &DropoutSpec,
    seed: u64,
) -> Result<Vec<BinaryMask>> {
    if !matches!(model.kind, ModelKind::Mlp { .. }) {
        return Err(Error::UnsupportedModelKind(model.kind.name()));
    }
    spec.validate()?;
    if features.len() != grid.voxel_count() {
        return Err(Error::GridMismatch {
            left: grid.shape().to_vec(),
            right: vec![features.len()],
        });
    }
    (0..spec.passes)
        .map(|pass| {
            let mut rng = rng(derive_seed(seed, pass as u64));
            let values = features
                .iter()
                .map(|&x| {
                    model
                        .dropout_probability(x, spec.drop_probability, &mut rng)
                        .map(|p| u8::from(p > 0.5))
                })
                .collect::<Result<Vec<u8>>>()?;
            BinaryMask::new(grid.clone(), values)
        })
        .collect()
}

/// Pixelwise mean of the dropout passes.
pub fn dropout_heatmap(
    model: &ToyModel,
    grid: &SampleGrid,
    features: &[f64],
    spec: &DropoutSpec,
    seed: u64,
) -> Result<Heatmap> {
    let masks = dropout_pass_masks(model, grid, features, spec, seed)?;
    calibration::mean_heatmap(&masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_gaussian1d;

    fn quick() -> TrainerConfig {
        TrainerConfig {
            epochs: 60,
            ..Default::default()
        }
    }

    #[test]
    fn fold_layout_partitions() {
        let layout = FoldLayout::new(10, 5, 3).unwrap();
        let mut seen = [0; 10];
        for f in 0..5 {
            let held = layout.held_out(f);
            assert_eq!(held.len(), 2);
            assert_eq!(layout.training(f).len(), 8);
            for u in held {
                seen[u] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));

        let other = FoldLayout::new(10, 5, 4).unwrap();
        assert_ne!(layout, other);
        assert!(matches!(
            FoldLayout::new(3, 5, 0),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(FoldLayout::new(10, 1, 0).is_err());
    }

    #[test]
    fn two_samples_two_folds() {
        let data = VoxelSet::per_voxel(vec![-1.0, 1.0], vec![0, 1]).unwrap();
        let cv = cross_val_predict(&data, ModelKind::Threshold1d, 0.0, 2, 0, &quick()).unwrap();
        assert_eq!(cv.models.len(), 2);
        assert_eq!(cv.mask.len(), 2);
    }

    #[test]
    fn cv_never_sees_its_own_sample() {
        // A lone positive far into negative territory. A threshold model that
        // saw it would place its cut left of it; out-of-fold it must miss.
        let mut xs: Vec<f64> = (0..40).map(|i| -2.0 + i as f64 * 0.1).collect();
        let mut labels: Vec<u8> = xs.iter().map(|&x| u8::from(x > 0.0)).collect();
        xs.push(-5.0);
        labels.push(1);
        let data = VoxelSet::per_voxel(xs, labels).unwrap();
        let cv = cross_val_predict(&data, ModelKind::Threshold1d, -20.0, 4, 1, &quick()).unwrap();
        let full = train_member(
            data.features(),
            data.labels(),
            ModelKind::Threshold1d,
            -20.0,
            0,
            &quick(),
        )
        .unwrap();
        assert_eq!(
            full.foreground_probability(-5.0),
            1.0,
            "memorises the outlier"
        );
        assert_eq!(cv.mask.values()[40], 0);
    }

    #[test]
    fn ensemble_counts_and_shared_layout() {
        let d = generate_gaussian1d(200, 1).unwrap();
        let data = VoxelSet::try_from(&d).unwrap();
        let spec = EnsembleSpec {
            trainer: quick(),
            ..Default::default()
        };
        let e = train_calibrated_ensemble(&data, &spec).unwrap();
        assert_eq!(e.model_count(), 35);
        assert_eq!(e.cv_masks.len(), 7);
        assert_eq!(e.weights, vec![3.0, 2.0, 1.0, 0.0, -1.0, -2.0, -3.0]);
        let single =
            cross_val_predict(&data, spec.model, 1.0, 5, spec.seed, &spec.trainer).unwrap();
        assert_eq!(single.layout, e.layout);
        assert_eq!(single.mask, e.cv_masks[2]);
    }

    #[test]
    fn spec_validation() {
        let spec = EnsembleSpec {
            folds: 1,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
        let spec = EnsembleSpec {
            offsets: vec![0, 2, 1],
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn uncalibrated_is_deterministic() {
        let d = generate_gaussian1d(200, 2).unwrap();
        let data = VoxelSet::try_from(&d).unwrap();
        let seeds: Vec<u64> = (0..7).collect();
        let a = uncalibrated_ensemble(&data, ModelKind::Logistic, 0.0, &seeds, &quick()).unwrap();
        let b = uncalibrated_ensemble(&data, ModelKind::Logistic, 0.0, &seeds, &quick()).unwrap();
        assert_eq!(a.len(), 7);
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_heatmap_value_grid() {
        let d = generate_gaussian1d(300, 3).unwrap();
        let data = VoxelSet::try_from(&d).unwrap();
        let m = train_member(
            data.features(),
            data.labels(),
            ModelKind::DEFAULT_MLP,
            0.0,
            1,
            &quick(),
        )
        .unwrap();
        let grid = d.grid();
        let spec = DropoutSpec::default();
        let h = dropout_heatmap(&m, &grid, &d.xs, &spec, 5).unwrap();
        for &v in h.values() {
            let k = v * 7.0;
            assert!((k - k.round()).abs() < 1e-12);
        }
        let one = DropoutSpec {
            passes: 1,
            ..spec.clone()
        };
        let h = dropout_heatmap(&m, &grid, &d.xs, &one, 5).unwrap();
        assert!(h.to_mask().is_ok());

        let tiny = DropoutSpec {
            drop_probability: 1e-12,
            passes: 7,
        };
        let h = dropout_heatmap(&m, &grid, &d.xs, &tiny, 5).unwrap();
        assert!(h.to_mask().is_ok());

        let logistic = ToyModel::new(ModelKind::Logistic, vec![1.0, 0.0], 0.0, 0).unwrap();
        assert!(matches!(
            dropout_heatmap(&logistic, &grid, &d.xs, &spec, 0),
            Err(Error::UnsupportedModelKind(_))
        ));
    }
}

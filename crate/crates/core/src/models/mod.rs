//! Desk-scale binary classifiers trained under the weighted loss family.
//!
//! All models map one scalar feature per voxel to a foreground probability.
//! A two-class softmax over logits `(0, z)` is the sigmoid of `z`, so every
//! model is parameterised by its foreground logit.

mod ensemble;
mod train;

pub use ensemble::{
    cross_val_predict, dropout_heatmap, dropout_pass_masks, train_calibrated_ensemble,
    uncalibrated_ensemble, CalibratedEnsemble, CrossValPrediction, DropoutSpec, EnsembleSpec,
    FoldLayout, VoxelSet,
};
pub use train::{train_member, TrainerConfig};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::sigmoid;
use crate::types::{BinaryMask, SampleGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ModelKind {
    /// Hard step at a learned threshold.
    Threshold1d,
    /// `sigmoid(a x + b)`.
    Logistic,
    /// One tanh hidden layer of the given width.
    Mlp { hidden: usize },
}

impl ModelKind {
    pub const DEFAULT_MLP: ModelKind = ModelKind::Mlp { hidden: 16 };

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Threshold1d => "threshold1d",
            ModelKind::Logistic => "logistic",
            ModelKind::Mlp { .. } => "mlp",
        }
    }

    pub fn num_params(&self) -> usize {
        match *self {
            ModelKind::Threshold1d => 1,
            ModelKind::Logistic => 2,
            ModelKind::Mlp { hidden } => 3 * hidden + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub kind: ModelKind,
    pub params: Vec<f64>,
    pub loss_weight: f64,
    pub seed: u64,
}

impl ToyModel {
    pub fn new(kind: ModelKind, params: Vec<f64>, loss_weight: f64, seed: u64) -> Result<Self> {
        if params.len() != kind.num_params() {
            return Err(Error::LengthMismatch {
                expected: kind.num_params(),
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidValue("non-finite model parameter".into()));
        }
        Ok(Self {
            kind,
            params,
            loss_weight,
            seed,
        })
    }

    pub fn threshold(t: f64) -> Self {
        Self {
            kind: ModelKind::Threshold1d,
            params: vec![t],
            loss_weight: 0.0,
            seed: 0,
        }
    }

    pub fn foreground_probability(&self, x: f64) -> f64 {
        match self.kind {
            ModelKind::Threshold1d => {
                if x > self.params[0] {
                    1.0
                } else {
                    0.0
                }
            }
            ModelKind::Logistic => sigmoid(self.params[0] * x + self.params[1]),
            ModelKind::Mlp { hidden } => sigmoid(mlp_logit(&self.params, hidden, x, None)),
        }
    }

    pub fn predict_proba(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .map(|&x| self.foreground_probability(x))
            .collect()
    }

    /// Foreground iff the foreground probability exceeds 0.5; ties go to
    /// background.
    pub fn predict_mask(&self, grid: &SampleGrid, features: &[f64]) -> Result<BinaryMask> {
        if features.len() != grid.voxel_count() {
            return Err(Error::GridMismatch {
                left: grid.shape().to_vec(),
                right: vec![features.len()],
            });
        }
        BinaryMask::from_bools(
            grid.clone(),
            features
                .iter()
                .map(|&x| self.foreground_probability(x) > 0.5),
        )
    }

    /// Feature value where the decision flips from background to foreground.
    ///
    /// Exact for threshold and logistic models; for MLPs the first upward
    /// crossing on a fine grid over [-6, 6].
    pub fn decision_threshold(&self) -> Option<f64> {
        match self.kind {
            ModelKind::Threshold1d => Some(self.params[0]),
            ModelKind::Logistic => {
                let (a, b) = (self.params[0], self.params[1]);
                (a != 0.0).then(|| -b / a)
            }
            ModelKind::Mlp { .. } => {
                let steps = 12_000;
                let xs = (0..=steps).map(|k| -6.0 + 12.0 * k as f64 / steps as f64);
                let mut prev: Option<(f64, bool)> = None;
                for x in xs {
                    let fg = self.foreground_probability(x) > 0.5;
                    if let Some((px, pfg)) = prev {
                        if fg && !pfg {
                            return Some(0.5 * (px + x));
                        }
                    }
                    prev = Some((x, fg));
                }
                None
            }
        }
    }

    /// One stochastic forward pass with hidden units dropped at rate `p`.
    pub(crate) fn dropout_probability(&self, x: f64, p: f64, rng: &mut impl Rng) -> Result<f64> {
        let ModelKind::Mlp { hidden } = self.kind else {
            return Err(Error::UnsupportedModelKind(self.kind.name()));
        };
        let keep = dropout_keep(hidden, p, rng);
        Ok(sigmoid(mlp_logit(
            &self.params,
            hidden,
            x,
            Some((&keep, p)),
        )))
    }
}

pub(crate) fn dropout_keep(hidden: usize, p: f64, rng: &mut impl Rng) -> Vec<bool> {
    (0..hidden).map(|_| rng.random::<f64>() >= p).collect()
}

/// Parameter layout: `[w1; H], [b1; H], [v; H], c`.
pub(crate) fn mlp_logit(
    params: &[f64],
    hidden: usize,
    x: f64,
    dropout: Option<(&[bool], f64)>,
) -> f64 {
    mlp_forward(params, hidden, x, dropout, |_, _| {})
}

/// [`mlp_logit`], also handing each hidden activation (before dropout) to `sink`.
pub(crate) fn mlp_forward(
    params: &[f64],
    hidden: usize,
    x: f64,
    dropout: Option<(&[bool], f64)>,
    mut sink: impl FnMut(usize, f64),
) -> f64 {
    let (w1, rest) = params.split_at(hidden);
    let (b1, rest) = rest.split_at(hidden);
    let (v, c) = rest.split_at(hidden);
    let mut z = c[0];
    for j in 0..hidden {
        let a = (w1[j] * x + b1[j]).tanh();
        sink(j, a);
        let scale = match dropout {
            Some((keep, p)) => {
                if keep[j] {
                    1.0 / (1.0 - p)
                } else {
                    0.0
                }
            }
            None => 1.0,
        };
        z += v[j] * a * scale;
    }
    z
}

/// Deterministic seed derivation for sub-jobs (SplitMix64 finaliser).
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(index))
}

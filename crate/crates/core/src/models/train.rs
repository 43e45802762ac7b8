use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{mlp_forward, mlp_logit, ModelKind, ToyModel};
use crate::error::{Error, Result};
use crate::losses;
use crate::synth::{rng, sigmoid};

/// Parameters beyond this magnitude count as divergence: a saturated sigmoid
/// has zero gradient, so runaway steps would otherwise freeze silently.
const MAX_PARAM: f64 = 1e8;

/// Full-batch gradient descent with Nesterov momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Tversky smoothing.
    pub smoothing: f64,
    /// Hidden-unit drop probability during MLP training.
    pub dropout: Option<f64>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.1,
            momentum: 0.9,
            smoothing: losses::DEFAULT_SMOOTHING,
            dropout: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(Error::Config("smoothing must be positive".into()));
        }
        if let Some(p) = self.dropout {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config("dropout must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

/// Trains one ensemble member on scalar features by minimising the combined
/// weighted loss with foreground weight `w`.
///
/// Threshold models have no useful gradient, so their loss is minimised
/// exactly over all cut points between distinct feature values.
pub fn train_member(
    features: &[f64],
    labels: &[u8],
    kind: ModelKind,
    w: f64,
    seed: u64,
    hp: &TrainerConfig,
) -> Result<ToyModel> {
    if features.is_empty() {
        return Err(Error::InvalidCount(
            "cannot train on an empty dataset".into(),
        ));
    }
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            actual: labels.len(),
        });
    }
    if !w.is_finite() {
        return Err(Error::InvalidValue(format!("loss weight {w}")));
    }
    hp.validate()?;
    let params = match kind {
        ModelKind::Threshold1d => vec![fit_threshold(features, labels, w, hp.smoothing)],
        ModelKind::Logistic | ModelKind::Mlp { .. } => {
            gradient_descent(features, labels, kind, w, seed, hp)?
        }
    };
    ToyModel::new(kind, params, w, seed)
}

fn init_params(kind: ModelKind, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };
    match kind {
        ModelKind::Threshold1d => vec![0.0],
        ModelKind::Logistic => vec![0.1 * normal(), 0.1 * normal()],
        ModelKind::Mlp { hidden } => {
            let scale = 1.0 / (hidden as f64).sqrt();
            let mut p = Vec::with_capacity(3 * hidden + 1);
            p.extend((0..hidden).map(|_| normal()));
            p.extend((0..hidden).map(|_| normal()));
            p.extend((0..hidden).map(|_| scale * normal()));
            p.push(0.0);
            p
        }
    }
}

fn gradient_descent(
    features: &[f64],
    labels: &[u8],
    kind: ModelKind,
    w: f64,
    seed: u64,
    hp: &TrainerConfig,
) -> Result<Vec<f64>> {
    let n = features.len();
    let mut params = init_params(kind, seed);
    let mut velocity = vec![0.0; params.len()];
    let mut lookahead = params.clone();
    let mut p1 = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut grad = vec![0.0; params.len()];
    // separate stream so dropout draws do not perturb initialisation
    let mut dropout_rng = rng(super::derive_seed(seed, 0xD0));
    let dropout = match kind {
        ModelKind::Mlp { .. } => hp.dropout,
        _ => None,
    };
    let width = match kind {
        ModelKind::Mlp { hidden } if dropout.is_some() => hidden,
        _ => 0,
    };
    // Keep flags for every (voxel, hidden unit), redrawn each epoch.
    let mut keeps = vec![true; n * width];
    let hidden = match kind {
        ModelKind::Mlp { hidden } => hidden,
        _ => 0,
    };
    // Hidden activations from the forward pass, reused by the backward pass.
    let mut acts = vec![0.0; n * hidden];

    for epoch in 0..hp.epochs {
        for ((la, p), v) in lookahead.iter_mut().zip(&params).zip(&velocity) {
            *la = p + hp.momentum * v;
        }

        if let Some(pdrop) = dropout {
            keeps
                .iter_mut()
                .for_each(|k| *k = dropout_rng.random::<f64>() >= pdrop);
        }
        for (i, &x) in features.iter().enumerate() {
            let drop = dropout.map(|p| (&keeps[i * width..(i + 1) * width], p));
            let z = match kind {
                ModelKind::Mlp { hidden } => {
                    let a = &mut acts[i * hidden..(i + 1) * hidden];
                    mlp_forward(&lookahead, hidden, x, drop, |j, v| a[j] = v)
                }
                _ => logit(&lookahead, kind, x, drop),
            };
            p1[i] = sigmoid(z);
        }
        let loss = binary_logit_grad(labels, &p1, w, hp.smoothing, &mut dz);
        if !loss.is_finite() {
            return Err(Error::DivergedTraining { epoch, loss });
        }

        grad.iter_mut().for_each(|g| *g = 0.0);
        for (i, &x) in features.iter().enumerate() {
            if dz[i] == 0.0 {
                continue;
            }
            accumulate_logit_grad(
                &lookahead,
                kind,
                x,
                &acts[i * hidden..(i + 1) * hidden],
                dropout.map(|p| (&keeps[i * width..(i + 1) * width], p)),
                dz[i],
                &mut grad,
            );
        }

        for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = hp.momentum * *v - hp.learning_rate * g;
            *p += *v;
        }
        if params
            .iter()
            .any(|p| !p.is_finite() || p.abs() >= MAX_PARAM)
        {
            return Err(Error::DivergedTraining {
                epoch,
                loss: f64::NAN,
            });
        }
    }
    Ok(params)
}

/// Two-class combined loss at foreground probabilities `p1`, writing the
/// derivative with respect to each voxel's logit into `dz`.
///
/// Equal to [`raw::combined`] on `(1 - p1, p1)` chained through the sigmoid,
/// fused into two passes without per-voxel division.
pub(crate) fn binary_logit_grad(
    labels: &[u8],
    p1: &[f64],
    w: f64,
    eps: f64,
    dz: &mut [f64],
) -> f64 {
    let n = p1.len() as f64;
    let fg_weight = (-w).exp();
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    let mut log_sum = 0.0;
    for (&y, &p) in labels.iter().zip(p1) {
        if y == 1 {
            tp += p;
            fn_ += 1.0 - p;
            log_sum += fg_weight * p.clamp(losses::PROB_CLAMP, 1.0).ln();
        } else {
            fp += p;
            log_sum += (1.0 - p).clamp(losses::PROB_CLAMP, 1.0).ln();
        }
    }
    let (alpha, beta) = losses::tversky_weights(w);
    let num = tp + eps;
    let den = tp + alpha * fp + beta * fn_ + eps;
    let den2 = den * den;
    let d_pos = (den - num * (1.0 - beta)) / den2;
    let d_neg = -num * alpha / den2;
    for ((&y, &p), d) in labels.iter().zip(p1).zip(dz.iter_mut()) {
        let q = 1.0 - p;
        *d = if y == 1 {
            let ce = if p > losses::PROB_CLAMP {
                -fg_weight * q / n
            } else {
                0.0
            };
            ce - d_pos * p * q
        } else {
            let ce = if q > losses::PROB_CLAMP { p / n } else { 0.0 };
            ce - d_neg * p * q
        };
    }
    -log_sum / n + 1.0 - num / den
}

fn logit(params: &[f64], kind: ModelKind, x: f64, dropout: Option<(&[bool], f64)>) -> f64 {
    match kind {
        ModelKind::Logistic => params[0] * x + params[1],
        ModelKind::Mlp { hidden } => mlp_logit(params, hidden, x, dropout),
        ModelKind::Threshold1d => unreachable!("threshold models are fit by scanning"),
    }
}

/// Adds `dz * d logit / d params` to `grad`. `acts` holds the MLP hidden
/// activations at `x` (empty for other kinds).
fn accumulate_logit_grad(
    params: &[f64],
    kind: ModelKind,
    x: f64,
    acts: &[f64],
    dropout: Option<(&[bool], f64)>,
    dz: f64,
    grad: &mut [f64],
) {
    match kind {
        ModelKind::Logistic => {
            grad[0] += dz * x;
            grad[1] += dz;
        }
        ModelKind::Mlp { hidden } => {
            let h = hidden;
            for j in 0..h {
                let scale = match dropout {
                    Some((keep, p)) => {
                        if keep[j] {
                            1.0 / (1.0 - p)
                        } else {
                            continue;
                        }
                    }
                    None => 1.0,
                };
                let a = acts[j];
                let v = params[2 * h + j];
                let da = dz * v * scale * (1.0 - a * a);
                grad[j] += da * x;
                grad[h + j] += da;
                grad[2 * h + j] += dz * a * scale;
            }
            grad[3 * h] += dz;
        }
        ModelKind::Threshold1d => unreachable!("threshold models are fit by scanning"),
    }
}

/// Loss of a hard classifier given its confusion counts, matching
/// [`raw::combined`] evaluated on 0/1 probabilities.
pub(crate) fn hard_loss(tp: f64, fp: f64, fn_: f64, n: f64, w: f64, eps: f64) -> f64 {
    let miss = -losses::PROB_CLAMP.ln();
    let ce = (fn_ * (-w).exp() * miss + fp * miss) / n;
    let (alpha, beta) = losses::tversky_weights(w);
    let tv = 1.0 - (tp + eps) / (tp + alpha * fp + beta * fn_ + eps);
    ce + tv
}

fn fit_threshold(features: &[f64], labels: &[u8], w: f64, eps: f64) -> f64 {
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| features[a].total_cmp(&features[b]));
    let n = features.len() as f64;
    let positives = labels.iter().filter(|&&l| l == 1).count() as f64;
    let negatives = n - positives;

    // Start with everything foreground, then move sorted points to background.
    let mut tp = positives;
    let mut fp = negatives;
    let mut best_loss = hard_loss(tp, fp, 0.0, n, w, eps);
    let mut best_t = features[order[0]] - 1.0;
    let mut k = 0;
    while k < order.len() {
        let value = features[order[k]];
        while k < order.len() && features[order[k]] == value {
            if labels[order[k]] == 1 {
                tp -= 1.0;
            } else {
                fp -= 1.0;
            }
            k += 1;
        }
        let loss = hard_loss(tp, fp, positives - tp, n, w, eps);
        if loss < best_loss {
            best_loss = loss;
            best_t = if k < order.len() {
                0.5 * (value + features[order[k]])
            } else {
                value + 1.0
            };
        }
    }
    best_t
}

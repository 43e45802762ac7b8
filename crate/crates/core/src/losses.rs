//! Sensitivity/precision weighted loss family.
//!
//! `L_w = L_ce_w + L_tv_w`, where the cross-entropy term scales the log
//! likelihood of foreground class `c` by `exp(-w_c)` and the overlap term is
//! one minus a Tversky index with false-positive weight `sigmoid(w_c)` and
//! false-negative weight `sigmoid(-w_c)`. Negative weights favour
//! sensitivity, positive weights favour precision, and `w = 0` gives plain
//! cross-entropy plus soft Dice.
//!
//! Gradients are with respect to the probability entries, laid out like
//! [`SoftPrediction::values`]. Reductions run in fixed voxel order.

use crate::error::{Error, Result};
use crate::synth::sigmoid;
use crate::types::{check_grids, OnGrid, OneHotLabel, SoftPrediction};

/// Lower clamp applied to probabilities inside the logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

/// Default additive smoothing of the Tversky numerator and denominator.
pub const DEFAULT_SMOOTHING: f64 = 1.0;

/// One weight per foreground class.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights(Vec<f64>);

impl LossWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidCount("need at least one class weight".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "non-finite loss weight in {weights:?}"
            )));
        }
        Ok(Self(weights))
    }

    /// The same weight for every one of `classes` foreground classes.
    pub fn uniform(classes: usize, w: f64) -> Result<Self> {
        Self::new(vec![w; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }
}

/// `(sigmoid(w), sigmoid(-w))`, the false-positive and false-negative weights.
pub fn tversky_weights(w: f64) -> (f64, f64) {
    (sigmoid(w), sigmoid(-w))
}

/// Soft confusion counts for one class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConfusionTotals {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub tn: f64,
}

impl ConfusionTotals {
    pub fn new(tp: f64, fp: f64, fn_: f64, tn: f64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    /// Totals of channel `class` from flat label/probability arrays.
    pub fn from_soft(y: &[u8], p: &[f64], num_classes: usize, class: usize) -> Self {
        let mut t = Self::default();
        for (yv, pv) in y.chunks_exact(num_classes).zip(p.chunks_exact(num_classes)) {
            let yc = f64::from(yv[class]);
            let pc = pv[class];
            t.tp += yc * pc;
            t.fp += (1.0 - yc) * pc;
            t.fn_ += yc * (1.0 - pc);
            t.tn += (1.0 - yc) * (1.0 - pc);
        }
        t
    }

    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `(TP + eps) / (TP + sigmoid(w) FP + sigmoid(-w) FN + eps)`.
    pub fn tversky_index(&self, w: f64, eps: f64) -> f64 {
        let (alpha, beta) = tversky_weights(w);
        (self.tp + eps) / (self.tp + alpha * self.fp + beta * self.fn_ + eps)
    }
}

/// Loss value with its gradient with respect to every probability entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn check_inputs(y: &OneHotLabel, p: &SoftPrediction, w: &LossWeights) -> Result<()> {
    check_grids(y.grid(), p.grid())?;
    if y.num_classes() != p.num_classes() {
        return Err(Error::ClassCountMismatch {
            left: y.num_classes(),
            right: p.num_classes(),
        });
    }
    if w.num_classes() + 1 != y.num_classes() {
        return Err(Error::ClassCountMismatch {
            left: w.num_classes() + 1,
            right: y.num_classes(),
        });
    }
    Ok(())
}

fn check_smoothing(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!(
            "smoothing must be positive, got {eps}"
        )))
    }
}

pub fn weighted_cross_entropy(
    y: &OneHotLabel,
    p: &SoftPrediction,
    w: &LossWeights,
) -> Result<LossOutput> {
    check_inputs(y, p, w)?;
    Ok(raw::cross_entropy(
        y.values(),
        p.values(),
        y.num_classes(),
        w.as_slice(),
    ))
}

pub fn weighted_tversky_loss(
    y: &OneHotLabel,
    p: &SoftPrediction,
    w: &LossWeights,
    eps: f64,
) -> Result<LossOutput> {
    check_inputs(y, p, w)?;
    check_smoothing(eps)?;
    Ok(raw::tversky(
        y.values(),
        p.values(),
        y.num_classes(),
        w.as_slice(),
        eps,
    ))
}

pub fn combined_loss(
    y: &OneHotLabel,
    p: &SoftPrediction,
    w: &LossWeights,
    eps: f64,
) -> Result<LossOutput> {
    check_inputs(y, p, w)?;
    check_smoothing(eps)?;
    Ok(raw::combined(
        y.values(),
        p.values(),
        y.num_classes(),
        w.as_slice(),
        eps,
    ))
}

/// Unvalidated slice-level kernels.
///
/// These accept probability vectors that do not sum to one, which is what
/// finite-difference checks and the trainers need. Callers guarantee
/// `y.len() == p.len()`, `len % num_classes == 0` and
/// `w.len() == num_classes - 1`.
pub mod raw {
    use super::{ConfusionTotals, LossOutput, PROB_CLAMP};

    pub fn cross_entropy(y: &[u8], p: &[f64], num_classes: usize, w: &[f64]) -> LossOutput {
        debug_assert_eq!(y.len(), p.len());
        debug_assert_eq!(w.len() + 1, num_classes);
        let n = (y.len() / num_classes) as f64;
        let class_weight: Vec<f64> = std::iter::once(1.0)
            .chain(w.iter().map(|wc| (-wc).exp()))
            .collect();

        let mut sum = 0.0;
        let mut grad = vec![0.0; p.len()];
        for (i, (yv, pv)) in y
            .chunks_exact(num_classes)
            .zip(p.chunks_exact(num_classes))
            .enumerate()
        {
            for c in 0..num_classes {
                if yv[c] == 0 {
                    continue;
                }
                let pc = pv[c].clamp(PROB_CLAMP, 1.0);
                sum += class_weight[c] * pc.ln();
                if pv[c] > PROB_CLAMP {
                    grad[i * num_classes + c] = -class_weight[c] / (pc * n);
                }
            }
        }
        LossOutput {
            loss: -sum / n,
            grad,
        }
    }

    pub fn tversky(y: &[u8], p: &[f64], num_classes: usize, w: &[f64], eps: f64) -> LossOutput {
        debug_assert_eq!(y.len(), p.len());
        debug_assert_eq!(w.len() + 1, num_classes);
        let fg_classes = (num_classes - 1) as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; p.len()];
        for (k, &wc) in w.iter().enumerate() {
            let c = k + 1;
            let t = ConfusionTotals::from_soft(y, p, num_classes, c);
            let (alpha, beta) = super::tversky_weights(wc);
            let num = t.tp + eps;
            let den = t.tp + alpha * t.fp + beta * t.fn_ + eps;
            loss += 1.0 - num / den;

            // d index / d p = (dnum * den - num * dden) / den^2, with
            // dnum = y, dden = y + alpha (1 - y) - beta y.
            let den2 = den * den;
            let d_pos = (den - num * (1.0 - beta)) / den2;
            let d_neg = -num * alpha / den2;
            for (yv, g) in y
                .chunks_exact(num_classes)
                .zip(grad.chunks_exact_mut(num_classes))
            {
                let d_index = if yv[c] == 1 { d_pos } else { d_neg };
                g[c] = -d_index / fg_classes;
            }
        }
        LossOutput {
            loss: loss / fg_classes,
            grad,
        }
    }

    pub fn combined(y: &[u8], p: &[f64], num_classes: usize, w: &[f64], eps: f64) -> LossOutput {
        let ce = cross_entropy(y, p, num_classes, w);
        let tv = tversky(y, p, num_classes, w, eps);
        LossOutput {
            loss: ce.loss + tv.loss,
            grad: ce.grad.iter().zip(&tv.grad).map(|(a, b)| a + b).collect(),
        }
    }
}

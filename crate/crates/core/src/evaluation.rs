//! Measurements on heatmaps and masks.
//!
//! Reductions are sequential in voxel order so results do not depend on
//! thread scheduling.

use crate::error::{Error, Result};
use crate::types::{check_grids, BinaryMask, Heatmap, OnGrid, SampleGrid};

/// Number of evaluation points of a calibration curve: 0, 0.01, ..., 1.
pub const CURVE_POINTS: usize = 101;

/// A point is valid when its kernel weight reaches this fraction of the
/// total voxel count.
pub const WEIGHT_FLOOR_FRACTION: f64 = 1e-3;

pub const DEFAULT_BANDWIDTH: f64 = 0.05;

pub const DEFAULT_BINS: usize = 10;

/// DSC in percent; two empty masks agree perfectly (100).
pub fn dsc(s: &BinaryMask, p: &BinaryMask) -> Result<f64> {
    check_grids(s.grid(), p.grid())?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&sv, &pv) in s.values().iter().zip(p.values()) {
        match (sv, pv) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            _ => {}
        }
    }
    Ok(dsc_from_counts(tp as f64, fp as f64, fn_ as f64))
}

fn dsc_from_counts(tp: f64, fp: f64, fn_: f64) -> f64 {
    let den = 2.0 * tp + fp + fn_;
    if den == 0.0 {
        100.0
    } else {
        100.0 * 2.0 * tp / den
    }
}

/// DSC with the reference replaced by the heatmap's expected counts.
pub fn estimated_dsc(h: &Heatmap, p: &BinaryMask) -> Result<f64> {
    check_grids(h.grid(), p.grid())?;
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&hv, &pv) in h.values().iter().zip(p.values()) {
        let pv = f64::from(pv);
        tp += hv * pv;
        fp += (1.0 - hv) * pv;
        fn_ += hv * (1.0 - pv);
    }
    Ok(dsc_from_counts(tp, fp, fn_))
}

/// Kernel-smoothed foreground rate as a function of predicted probability.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    pub eval_points: Vec<f64>,
    /// NaN where the point is invalid.
    pub observed_fg_rate: Vec<f64>,
    pub effective_weight: Vec<f64>,
    pub valid: Vec<bool>,
    pub bandwidth: f64,
}

impl CalibrationCurve {
    /// Largest |observed - t| over valid points.
    pub fn max_deviation(&self) -> f64 {
        self.eval_points
            .iter()
            .zip(&self.observed_fg_rate)
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|((t, o), _)| (o - t).abs())
            .fold(0.0, f64::max)
    }

    pub fn valid_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.eval_points
            .iter()
            .zip(&self.observed_fg_rate)
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|((&t, &o), _)| (t, o))
    }
}

pub fn eval_points() -> Vec<f64> {
    (0..CURVE_POINTS)
        .map(|k| k as f64 / (CURVE_POINTS - 1) as f64)
        .collect()
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if bandwidth > 0.0 && bandwidth <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(bandwidth))
    }
}

/// Nadaraya-Watson estimate with the triangular kernel `max(0, 1 - |u|)`.
fn parzen_curve(h: &[f64], target: &[f64], bandwidth: f64) -> CalibrationCurve {
    let points = eval_points();
    let steps = (CURVE_POINTS - 1) as f64;
    let mut weight = vec![0.0; CURVE_POINTS];
    let mut weighted = vec![0.0; CURVE_POINTS];
    for (&hv, &g) in h.iter().zip(target) {
        let lo = ((hv - bandwidth) * steps).floor().max(0.0) as usize;
        let hi = (((hv + bandwidth) * steps).ceil() as usize).min(CURVE_POINTS - 1);
        for k in lo..=hi {
            let kv = 1.0 - ((hv - points[k]) / bandwidth).abs();
            if kv > 0.0 {
                weight[k] += kv;
                weighted[k] += kv * g;
            }
        }
    }
    let floor = WEIGHT_FLOOR_FRACTION * h.len() as f64;
    let valid: Vec<bool> = weight.iter().map(|&w| w > 0.0 && w >= floor).collect();
    let observed = weight
        .iter()
        .zip(&weighted)
        .zip(&valid)
        .map(|((&w, &s), &v)| if v { s / w } else { f64::NAN })
        .collect();
    CalibrationCurve {
        eval_points: points,
        observed_fg_rate: observed,
        effective_weight: weight,
        valid,
        bandwidth,
    }
}

fn mask_as_f64(mask: &BinaryMask) -> Vec<f64> {
    mask.values().iter().map(|&v| f64::from(v)).collect()
}

pub fn calibration_curve(h: &Heatmap, gt: &BinaryMask, bandwidth: f64) -> Result<CalibrationCurve> {
    check_grids(h.grid(), gt.grid())?;
    check_bandwidth(bandwidth)?;
    Ok(parzen_curve(h.values(), &mask_as_f64(gt), bandwidth))
}

/// Equal-width-bin ECE of `h` against targets in [0, 1] (binary labels or
/// reference probabilities).
pub fn ece_from_slices(h: &[f64], target: &[f64], bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidCount(format!(
            "need at least 2 bins, got {bins}"
        )));
    }
    if h.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: h.len(),
            actual: target.len(),
        });
    }
    if h.is_empty() {
        return Ok(0.0);
    }
    let mut count = vec![0usize; bins];
    let mut sum_h = vec![0.0; bins];
    let mut sum_t = vec![0.0; bins];
    for (&hv, &t) in h.iter().zip(target) {
        let b = ((hv * bins as f64).floor() as usize).min(bins - 1);
        count[b] += 1;
        sum_h[b] += hv;
        sum_t[b] += t;
    }
    let n = h.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let c = count[b] as f64;
            (c / n) * (sum_h[b] / c - sum_t[b] / c).abs()
        })
        .sum())
}

pub fn expected_calibration_error(h: &Heatmap, gt: &BinaryMask, bins: usize) -> Result<f64> {
    check_grids(h.grid(), gt.grid())?;
    ece_from_slices(h.values(), &mask_as_f64(gt), bins)
}

/// ECE against a reference probability map instead of binary labels.
pub fn expected_calibration_error_against(
    h: &Heatmap,
    reference: &Heatmap,
    bins: usize,
) -> Result<f64> {
    check_grids(h.grid(), reference.grid())?;
    ece_from_slices(h.values(), reference.values(), bins)
}

fn check_all(masks: &[BinaryMask], gt: &BinaryMask) -> Result<()> {
    if masks.is_empty() {
        return Err(Error::InvalidCount("need at least one mask".into()));
    }
    masks
        .iter()
        .try_for_each(|m| check_grids(m.grid(), gt.grid()))
}

pub fn mask_union(masks: &[BinaryMask]) -> Result<BinaryMask> {
    combine(masks, |a, b| a | b)
}

pub fn mask_intersection(masks: &[BinaryMask]) -> Result<BinaryMask> {
    combine(masks, |a, b| a & b)
}

fn combine(masks: &[BinaryMask], op: impl Fn(u8, u8) -> u8) -> Result<BinaryMask> {
    let Some(first) = masks.first() else {
        return Err(Error::InvalidCount("need at least one mask".into()));
    };
    let mut values = first.values().to_vec();
    for m in &masks[1..] {
        check_grids(first.grid(), m.grid())?;
        for (v, &o) in values.iter_mut().zip(m.values()) {
            *v = op(*v, o);
        }
    }
    BinaryMask::new(first.grid().clone(), values)
}

fn overlap(a: &BinaryMask, b: &BinaryMask) -> usize {
    a.values()
        .iter()
        .zip(b.values())
        .filter(|(&x, &y)| x == 1 && y == 1)
        .count()
}

/// Percent of `gt` covered by `mask`.
pub fn sensitivity(mask: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_grids(mask.grid(), gt.grid())?;
    let positives = gt.count_ones();
    if positives == 0 {
        return Err(Error::EmptyReference("ground truth is empty"));
    }
    Ok(100.0 * overlap(mask, gt) as f64 / positives as f64)
}

/// Percent of `mask` inside `gt`.
pub fn precision(mask: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_grids(mask.grid(), gt.grid())?;
    let predicted = mask.count_ones();
    if predicted == 0 {
        return Err(Error::EmptyReference("prediction is empty"));
    }
    Ok(100.0 * overlap(mask, gt) as f64 / predicted as f64)
}

pub fn union_sensitivity(masks: &[BinaryMask], gt: &BinaryMask) -> Result<f64> {
    check_all(masks, gt)?;
    sensitivity(&mask_union(masks)?, gt)
}

pub fn intersection_precision(masks: &[BinaryMask], gt: &BinaryMask) -> Result<f64> {
    check_all(masks, gt)?;
    let inter = mask_intersection(masks)?;
    if inter.count_ones() == 0 {
        return Err(Error::EmptyReference("intersection is empty"));
    }
    precision(&inter, gt)
}

/// Ground-truth and prediction foreground rates, both conditioned on `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrevalenceCurves {
    pub gt: CalibrationCurve,
    pub pred: CalibrationCurve,
}

pub fn prevalence_consistency(
    h: &Heatmap,
    pred: &BinaryMask,
    gt: &BinaryMask,
    bandwidth: f64,
) -> Result<PrevalenceCurves> {
    check_grids(h.grid(), pred.grid())?;
    check_grids(h.grid(), gt.grid())?;
    check_bandwidth(bandwidth)?;
    Ok(PrevalenceCurves {
        gt: parzen_curve(h.values(), &mask_as_f64(gt), bandwidth),
        pred: parzen_curve(h.values(), &mask_as_f64(pred), bandwidth),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Linear interpolation between order statistics at `(n - 1) q`.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(Quartiles {
        q1: quantile(&sorted, 0.25)?,
        median: quantile(&sorted, 0.5)?,
        q3: quantile(&sorted, 0.75)?,
    })
}

/// Heatmap values where an annotator disagrees with the ground truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlagReport {
    /// At voxels annotated foreground but background in truth.
    pub fp_probabilities: Vec<f64>,
    /// At voxels annotated background but foreground in truth.
    pub fn_probabilities: Vec<f64>,
    pub fp_quartiles: Option<Quartiles>,
    pub fn_quartiles: Option<Quartiles>,
}

impl FlagReport {
    pub fn is_empty(&self) -> bool {
        self.fp_probabilities.is_empty() && self.fn_probabilities.is_empty()
    }

    /// Concatenates per-image reports and recomputes quartiles.
    pub fn merged(reports: &[FlagReport]) -> FlagReport {
        let fp: Vec<f64> = reports
            .iter()
            .flat_map(|r| r.fp_probabilities.iter().copied())
            .collect();
        let fn_: Vec<f64> = reports
            .iter()
            .flat_map(|r| r.fn_probabilities.iter().copied())
            .collect();
        FlagReport {
            fp_quartiles: quartiles(&fp),
            fn_quartiles: quartiles(&fn_),
            fp_probabilities: fp,
            fn_probabilities: fn_,
        }
    }
}

pub fn flag_disagreements(
    h: &Heatmap,
    annotation: &BinaryMask,
    gt: &BinaryMask,
) -> Result<FlagReport> {
    check_grids(h.grid(), annotation.grid())?;
    check_grids(h.grid(), gt.grid())?;
    let mut fp = Vec::new();
    let mut fn_ = Vec::new();
    for ((&hv, &a), &g) in h.values().iter().zip(annotation.values()).zip(gt.values()) {
        match (a, g) {
            (1, 0) => fp.push(hv),
            (0, 1) => fn_.push(hv),
            _ => {}
        }
    }
    Ok(FlagReport {
        fp_quartiles: quartiles(&fp),
        fn_quartiles: quartiles(&fn_),
        fp_probabilities: fp,
        fn_probabilities: fn_,
    })
}

/// Joins per-image heatmaps into one linear heatmap, in order.
pub fn concat_heatmaps(maps: &[Heatmap]) -> Result<Heatmap> {
    let values: Vec<f64> = maps
        .iter()
        .flat_map(|h| h.values().iter().copied())
        .collect();
    Heatmap::new(SampleGrid::linear(values.len())?, values)
}

/// Joins per-image masks into one linear mask, in order.
pub fn concat_masks(masks: &[BinaryMask]) -> Result<BinaryMask> {
    let values: Vec<u8> = masks
        .iter()
        .flat_map(|m| m.values().iter().copied())
        .collect();
    BinaryMask::new(SampleGrid::linear(values.len())?, values)
}

//! Ensemble calibration from binary member outputs.
//!
//! Every voxel is summarised by its *pattern*: the vector of all members'
//! binary decisions, packed into a `u32` with bit `k` holding member `k`.
//! [`count_patterns`] tallies voxels and ground-truth foreground per pattern,
//! [`solve_coefficients`] finds member coefficients `a` such that `a . b`
//! matches the foreground rate of each pattern `b` in the count-weighted
//! least-squares sense, and [`compose_heatmap`] evaluates `h = sum_k a_k s_k`.
//!
//! The all-zero pattern is left out of the system: its row would read
//! `0 = foreground rate`, which no coefficient vector can change. Its rate is
//! reported separately as a residual false-negative risk.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{check_grids, BinaryMask, Heatmap, OnGrid};

pub const MAX_MODELS: usize = 20;

/// Packed member decisions at one voxel; bit `k` is member `k`.
pub type Pattern = u32;

pub fn pattern_from_bits(bits: &[u8]) -> Pattern {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (k, &b)| acc | (Pattern::from(b & 1) << k))
}

pub fn pattern_bits(pattern: Pattern, n_models: usize) -> Vec<u8> {
    (0..n_models).map(|k| ((pattern >> k) & 1) as u8).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PatternCounts {
    pub voxels: u64,
    pub foreground: u64,
}

impl PatternCounts {
    pub fn foreground_rate(&self) -> f64 {
        self.foreground as f64 / self.voxels as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternHistogram {
    n_models: usize,
    entries: BTreeMap<Pattern, PatternCounts>,
}

impl PatternHistogram {
    pub fn new(n_models: usize) -> Result<Self> {
        if n_models == 0 {
            return Err(Error::InvalidCount("need at least one model".into()));
        }
        if n_models > MAX_MODELS {
            return Err(Error::TooManyModels(n_models));
        }
        Ok(Self {
            n_models,
            entries: BTreeMap::new(),
        })
    }

    /// Adds `voxels` observations of `pattern`, `foreground` of them positive.
    pub fn add(&mut self, pattern: Pattern, voxels: u64, foreground: u64) -> Result<()> {
        if u64::from(pattern) >> self.n_models != 0 {
            return Err(Error::InvalidValue(format!(
                "pattern {pattern:#b} has bits beyond {} models",
                self.n_models
            )));
        }
        if foreground > voxels {
            return Err(Error::InvalidValue(format!(
                "foreground count {foreground} exceeds voxel count {voxels}"
            )));
        }
        if voxels == 0 {
            return Ok(());
        }
        let e = self.entries.entry(pattern).or_default();
        e.voxels += voxels;
        e.foreground += foreground;
        Ok(())
    }

    pub fn merge(&mut self, other: &PatternHistogram) -> Result<()> {
        if other.n_models != self.n_models {
            return Err(Error::LengthMismatch {
                expected: self.n_models,
                actual: other.n_models,
            });
        }
        for (&b, c) in &other.entries {
            let e = self.entries.entry(b).or_default();
            e.voxels += c.voxels;
            e.foreground += c.foreground;
        }
        Ok(())
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn get(&self, pattern: Pattern) -> Option<PatternCounts> {
        self.entries.get(&pattern).copied()
    }

    /// Observed patterns in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (Pattern, PatternCounts)> + '_ {
        self.entries.iter().map(|(&b, &c)| (b, c))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_voxels(&self) -> u64 {
        self.entries.values().map(|c| c.voxels).sum()
    }
}

/// Pattern histogram of one image: `members[k]` is model `k`'s mask.
pub fn count_patterns(members: &[BinaryMask], gt: &BinaryMask) -> Result<PatternHistogram> {
    let mut hist = PatternHistogram::new(members.len())?;
    for m in members {
        check_grids(m.grid(), gt.grid())?;
    }
    let mut patterns: BTreeMap<Pattern, PatternCounts> = BTreeMap::new();
    for (i, &g) in gt.values().iter().enumerate() {
        let b = members
            .iter()
            .enumerate()
            .fold(0, |acc, (k, m)| acc | (Pattern::from(m.values()[i]) << k));
        let e = patterns.entry(b).or_default();
        e.voxels += 1;
        e.foreground += u64::from(g);
    }
    hist.entries = patterns;
    Ok(hist)
}

/// Histogram over many images, `members[image][model]`, merged in parallel.
pub fn count_patterns_images(
    members: &[Vec<BinaryMask>],
    gt: &[BinaryMask],
) -> Result<PatternHistogram> {
    if members.len() != gt.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            actual: members.len(),
        });
    }
    let n_models = members.first().map_or(0, Vec::len);
    if members.iter().any(|m| m.len() != n_models) {
        return Err(Error::InvalidCount(
            "images disagree on the number of models".into(),
        ));
    }
    let empty = PatternHistogram::new(n_models)?;
    members
        .par_iter()
        .zip(gt.par_iter())
        .map(|(m, g)| count_patterns(m, g))
        .try_reduce(
            || empty.clone(),
            |mut a, b| {
                a.merge(&b)?;
                Ok(a)
            },
        )
}

/// Row weighting of the calibration system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowWeighting {
    /// Each pattern weighted by its voxel count (voxelwise least squares).
    #[default]
    Count,
    /// Every observed pattern weighted equally.
    PatternEqual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveOptions {
    pub weighting: RowWeighting,
    /// Constrain coefficients to be nonnegative (Lawson-Hanson active set).
    pub nonnegative: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCoefficients {
    pub a: Vec<f64>,
    /// Square root of the weighted mean squared residual over the rows used.
    pub residual_norm: f64,
    /// Observed patterns left out of the system (only ever the zero pattern).
    pub dropped_patterns: Vec<Pattern>,
    /// Foreground rate among voxels no member marked; 0 when unobserved.
    pub zero_pattern_fg_rate: f64,
    pub zero_pattern_voxels: u64,
    /// Numerical rank of the normal matrix.
    pub rank: usize,
    /// The normal matrix was singular and the minimum-norm solution was taken.
    pub rank_deficient: bool,
    pub options: SolveOptions,
}

impl CalibrationCoefficients {
    pub fn n_models(&self) -> usize {
        self.a.len()
    }

    /// `a . b` for a packed pattern, summed in member order.
    pub fn value_of(&self, pattern: Pattern) -> f64 {
        pattern_value(&self.a, pattern)
    }
}

pub(crate) fn pattern_value(a: &[f64], pattern: Pattern) -> f64 {
    a.iter()
        .enumerate()
        .filter(|(k, _)| (pattern >> k) & 1 == 1)
        .fold(0.0, |acc, (_, &ak)| acc + ak)
}

pub fn solve_coefficients(hist: &PatternHistogram) -> Result<CalibrationCoefficients> {
    solve_coefficients_with(hist, SolveOptions::default())
}

pub fn solve_coefficients_with(
    hist: &PatternHistogram,
    options: SolveOptions,
) -> Result<CalibrationCoefficients> {
    let n = hist.n_models();
    let zero = hist.get(0);
    let rows: Vec<(Pattern, PatternCounts)> = hist.iter().filter(|&(b, _)| b != 0).collect();
    if rows.is_empty() {
        return Err(Error::DegenerateSystem(
            "no voxel was marked by any member".into(),
        ));
    }

    // Weights are normalised from integer counts so that scaling every count
    // by a constant reproduces the same floating-point system.
    let total: u64 = match options.weighting {
        RowWeighting::Count => rows.iter().map(|(_, c)| c.voxels).sum(),
        RowWeighting::PatternEqual => rows.len() as u64,
    };
    let weights: Vec<f64> = rows
        .iter()
        .map(|(_, c)| match options.weighting {
            RowWeighting::Count => c.voxels as f64 / total as f64,
            RowWeighting::PatternEqual => 1.0 / total as f64,
        })
        .collect();

    let mut normal = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for ((b, c), &omega) in rows.iter().zip(&weights) {
        let rate = c.foreground_rate();
        for j in 0..n {
            if (b >> j) & 1 == 0 {
                continue;
            }
            rhs[j] += omega * rate;
            for k in 0..n {
                if (b >> k) & 1 == 1 {
                    normal[j * n + k] += omega;
                }
            }
        }
    }

    let rank = numerical_rank(&normal, n);
    let (a, rank_deficient) = if options.nonnegative {
        (nnls(&normal, &rhs, n), rank < n)
    } else {
        match cholesky_solve(&normal, &rhs, n) {
            Some(a) => (a, false),
            None => (min_norm_solve(&normal, &rhs, n), true),
        }
    };
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSystem("solution is not finite".into()));
    }

    let residual_norm = rows
        .iter()
        .zip(&weights)
        .map(|((b, c), &omega)| {
            let r = pattern_value(&a, *b) - c.foreground_rate();
            omega * r * r
        })
        .sum::<f64>()
        .sqrt();

    Ok(CalibrationCoefficients {
        a,
        residual_norm,
        dropped_patterns: zero.map(|_| vec![0]).unwrap_or_default(),
        zero_pattern_fg_rate: zero.map_or(0.0, |c| c.foreground_rate()),
        zero_pattern_voxels: zero.map_or(0, |c| c.voxels),
        rank,
        rank_deficient,
        options,
    })
}

fn rank_tolerance(matrix: &[f64], n: usize) -> f64 {
    let max_diag = (0..n).map(|i| matrix[i * n + i]).fold(0.0, f64::max);
    max_diag * n as f64 * 1e-12
}

/// Solves `M x = r` for symmetric positive definite `M` (row-major).
/// Returns `None` when a pivot falls below the rank tolerance.
fn cholesky_solve(matrix: &[f64], rhs: &[f64], n: usize) -> Option<Vec<f64>> {
    let tol = rank_tolerance(matrix, n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = matrix[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= tol {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns eigenvalues and column-major eigenvectors (`vecs[k * n + i]` is
/// component `i` of vector `k`).
fn symmetric_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    // transpose so each eigenvector is contiguous
    let mut vecs = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            vecs[k * n + i] = v[i * n + k];
        }
    }
    (values, vecs)
}

fn eigen_cutoff(values: &[f64], n: usize) -> f64 {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    max * n as f64 * 1e-10
}

fn numerical_rank(matrix: &[f64], n: usize) -> usize {
    let (values, _) = symmetric_eigen(matrix, n);
    let cutoff = eigen_cutoff(&values, n);
    values.iter().filter(|&&v| v > cutoff).count()
}

/// Minimum-norm least-squares solution of `M x = r` via the pseudo-inverse.
fn min_norm_solve(matrix: &[f64], rhs: &[f64], n: usize) -> Vec<f64> {
    let (values, vecs) = symmetric_eigen(matrix, n);
    let cutoff = eigen_cutoff(&values, n);
    let mut x = vec![0.0; n];
    for k in 0..n {
        if values[k] <= cutoff {
            continue;
        }
        let u = &vecs[k * n..(k + 1) * n];
        let proj: f64 = u.iter().zip(rhs).map(|(a, b)| a * b).sum::<f64>() / values[k];
        for i in 0..n {
            x[i] += proj * u[i];
        }
    }
    x
}

fn solve_subsystem(matrix: &[f64], rhs: &[f64], n: usize, passive: &[usize]) -> Vec<f64> {
    let m = passive.len();
    let mut sub = vec![0.0; m * m];
    let mut sub_rhs = vec![0.0; m];
    for (i, &pi) in passive.iter().enumerate() {
        sub_rhs[i] = rhs[pi];
        for (j, &pj) in passive.iter().enumerate() {
            sub[i * m + j] = matrix[pi * n + pj];
        }
    }
    let z = cholesky_solve(&sub, &sub_rhs, m).unwrap_or_else(|| min_norm_solve(&sub, &sub_rhs, m));
    let mut full = vec![0.0; n];
    for (i, &pi) in passive.iter().enumerate() {
        full[pi] = z[i];
    }
    full
}

/// Lawson-Hanson active set on the normal equations:
/// minimise `x' M x / 2 - r' x` subject to `x >= 0`.
fn nnls(matrix: &[f64], rhs: &[f64], n: usize) -> Vec<f64> {
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let tol = 1e-12 * scale;
    let mut x = vec![0.0; n];
    let mut passive: Vec<usize> = Vec::new();
    for _outer in 0..(3 * n + 10) {
        let grad: Vec<f64> = (0..n)
            .map(|i| rhs[i] - (0..n).map(|j| matrix[i * n + j] * x[j]).sum::<f64>())
            .collect();
        let candidate = (0..n)
            .filter(|i| !passive.contains(i))
            .filter(|&i| grad[i] > tol)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = candidate else { break };
        passive.push(j);
        passive.sort_unstable();
        loop {
            let z = solve_subsystem(matrix, rhs, n, &passive);
            if passive.iter().all(|&i| z[i] > 0.0) {
                x = z;
                break;
            }
            let alpha = passive
                .iter()
                .filter(|&&i| z[i] <= 0.0)
                .map(|&i| x[i] / (x[i] - z[i]))
                .fold(f64::INFINITY, f64::min);
            for i in 0..n {
                x[i] += alpha * (z[i] - x[i]);
            }
            passive.retain(|&i| x[i] > tol);
            for (i, xi) in x.iter_mut().enumerate() {
                if !passive.contains(&i) {
                    *xi = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
    }
    x
}

/// Heatmap together with the number of voxels clipped into [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedHeatmap {
    pub heatmap: Heatmap,
    pub clipped: usize,
}

/// `h = sum_k a_k s_k`, clipped to [0, 1].
pub fn compose_heatmap(members: &[BinaryMask], a: &[f64]) -> Result<ComposedHeatmap> {
    let Some(first) = members.first() else {
        return Err(Error::InvalidCount("need at least one member mask".into()));
    };
    if a.len() != members.len() {
        return Err(Error::LengthMismatch {
            expected: members.len(),
            actual: a.len(),
        });
    }
    for m in &members[1..] {
        check_grids(first.grid(), m.grid())?;
    }
    let raw = unclipped_values(members, a);
    let (heatmap, clipped) = Heatmap::clipped(first.grid().clone(), raw)?;
    Ok(ComposedHeatmap { heatmap, clipped })
}

/// Per-voxel `a . b` in member order, before clipping.
pub fn unclipped_values(members: &[BinaryMask], a: &[f64]) -> Vec<f64> {
    let len = members.first().map_or(0, BinaryMask::len);
    (0..len)
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| {
            members.iter().zip(a).fold(
                0.0,
                |acc, (m, &ak)| if m.values()[i] == 1 { acc + ak } else { acc },
            )
        })
        .collect()
}

/// Pixelwise mean of the member masks.
pub fn mean_heatmap(members: &[BinaryMask]) -> Result<Heatmap> {
    let Some(first) = members.first() else {
        return Err(Error::InvalidCount("need at least one member mask".into()));
    };
    for m in &members[1..] {
        check_grids(first.grid(), m.grid())?;
    }
    let n = members.len() as f64;
    let values = (0..first.len())
        .map(|i| {
            let ones: u32 = members.iter().map(|m| u32::from(m.values()[i])).sum();
            f64::from(ones) / n
        })
        .collect();
    Heatmap::new(first.grid().clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SampleGrid;

    fn hand_histogram() -> PatternHistogram {
        let mut h = PatternHistogram::new(2).unwrap();
        h.add(pattern_from_bits(&[1, 1]), 10, 9).unwrap();
        h.add(pattern_from_bits(&[1, 0]), 10, 4).unwrap();
        h.add(pattern_from_bits(&[0, 1]), 10, 1).unwrap();
        h.add(pattern_from_bits(&[0, 0]), 10, 0).unwrap();
        h
    }

    #[test]
    fn count_patterns_hand_example() {
        let grid = SampleGrid::linear(4).unwrap();
        let m0 = BinaryMask::new(grid.clone(), vec![1, 1, 0, 0]).unwrap();
        let m1 = BinaryMask::new(grid.clone(), vec![1, 0, 1, 0]).unwrap();
        let gt = BinaryMask::new(grid, vec![1, 0, 0, 0]).unwrap();
        let h = count_patterns(&[m0, m1], &gt).unwrap();
        let c = |bits: &[u8]| h.get(pattern_from_bits(bits)).unwrap();
        assert_eq!(
            c(&[1, 1]),
            PatternCounts {
                voxels: 1,
                foreground: 1
            }
        );
        assert_eq!(
            c(&[1, 0]),
            PatternCounts {
                voxels: 1,
                foreground: 0
            }
        );
        assert_eq!(
            c(&[0, 1]),
            PatternCounts {
                voxels: 1,
                foreground: 0
            }
        );
        assert_eq!(
            c(&[0, 0]),
            PatternCounts {
                voxels: 1,
                foreground: 0
            }
        );
        assert_eq!(h.total_voxels(), 4);
    }

    #[test]
    fn count_patterns_errors() {
        let grid = SampleGrid::linear(4).unwrap();
        let gt = BinaryMask::zeros(grid.clone());
        let other = BinaryMask::zeros(SampleGrid::linear(5).unwrap());
        assert!(matches!(
            count_patterns(&[other], &gt),
            Err(Error::GridMismatch { .. })
        ));
        let many = vec![BinaryMask::zeros(grid); 21];
        assert!(matches!(
            count_patterns(&many, &gt),
            Err(Error::TooManyModels(21))
        ));
    }

    #[test]
    fn solve_hand_example() {
        let c = solve_coefficients(&hand_histogram()).unwrap();
        assert!((c.a[0] - 1.6 / 3.0).abs() < 1e-12);
        assert!((c.a[1] - 0.7 / 3.0).abs() < 1e-12);
        assert_eq!(c.dropped_patterns, vec![0]);
        assert_eq!(c.zero_pattern_fg_rate, 0.0);
        assert!(!c.rank_deficient);
        assert_eq!(c.rank, 2);
    }

    #[test]
    fn single_model() {
        let mut h = PatternHistogram::new(1).unwrap();
        h.add(1, 100, 80).unwrap();
        let c = solve_coefficients(&h).unwrap();
        assert!((c.a[0] - 0.8).abs() < 1e-15);
        assert!(c.residual_norm < 1e-15);
    }

    #[test]
    fn identical_members_take_min_norm() {
        let mut h = PatternHistogram::new(2).unwrap();
        h.add(0b11, 50, 30).unwrap();
        h.add(0b00, 50, 5).unwrap();
        let c = solve_coefficients(&h).unwrap();
        assert!(c.rank_deficient);
        assert_eq!(c.rank, 1);
        assert!((c.a[0] - 0.3).abs() < 1e-12 && (c.a[1] - 0.3).abs() < 1e-12);
        assert!((c.zero_pattern_fg_rate - 0.1).abs() < 1e-15);
    }

    #[test]
    fn all_zero_histogram_is_degenerate() {
        let mut h = PatternHistogram::new(3).unwrap();
        h.add(0, 10, 2).unwrap();
        assert!(matches!(
            solve_coefficients(&h),
            Err(Error::DegenerateSystem(_))
        ));
    }

    #[test]
    fn nonnegative_option_clamps() {
        // Unconstrained optimum has a negative second coefficient.
        let mut h = PatternHistogram::new(2).unwrap();
        h.add(0b01, 100, 90).unwrap();
        h.add(0b11, 100, 60).unwrap();
        let free = solve_coefficients(&h).unwrap();
        assert!(free.a[1] < 0.0);
        let opts = SolveOptions {
            nonnegative: true,
            ..Default::default()
        };
        let c = solve_coefficients_with(&h, opts).unwrap();
        assert!(c.a.iter().all(|&v| v >= 0.0));
        assert_eq!(c.a[1], 0.0);
        assert!((c.a[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn pattern_equal_weighting_differs() {
        let mut h = PatternHistogram::new(2).unwrap();
        h.add(0b11, 1000, 900).unwrap();
        h.add(0b01, 10, 4).unwrap();
        h.add(0b10, 10, 1).unwrap();
        let count = solve_coefficients(&h).unwrap();
        let equal = solve_coefficients_with(
            &h,
            SolveOptions {
                weighting: RowWeighting::PatternEqual,
                nonnegative: false,
            },
        )
        .unwrap();
        // three equations, two unknowns: (a0+a1=.9, a0=.4, a1=.1) is inconsistent
        assert!((count.a[0] + count.a[1] - 0.9).abs() < 0.01);
        assert!((equal.a[0] + equal.a[1] - 0.9).abs() > 0.05);
    }

    #[test]
    fn compose_examples() {
        let grid = SampleGrid::linear(4).unwrap();
        let m0 = BinaryMask::new(grid.clone(), vec![1, 1, 0, 0]).unwrap();
        let m1 = BinaryMask::new(grid.clone(), vec![1, 0, 1, 0]).unwrap();
        let a = [1.6 / 3.0, 0.7 / 3.0];
        let h = compose_heatmap(&[m0.clone(), m1.clone()], &a).unwrap();
        assert!((h.heatmap.values()[0] - 0.766667).abs() < 1e-6);
        assert_eq!(h.heatmap.values()[3], 0.0);
        assert_eq!(h.clipped, 0);

        let over = compose_heatmap(&[m0.clone(), m1.clone()], &[0.8, 0.7]).unwrap();
        assert_eq!(over.clipped, 1);
        assert_eq!(over.heatmap.values()[0], 1.0);

        assert!(matches!(
            compose_heatmap(&[m0.clone(), m1.clone()], &[0.5]),
            Err(Error::LengthMismatch { .. })
        ));
        let short = BinaryMask::zeros(SampleGrid::linear(3).unwrap());
        assert!(compose_heatmap(&[m0, short], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn mean_heatmap_examples() {
        let grid = SampleGrid::new(&[2, 2]).unwrap();
        let m = BinaryMask::new(grid.clone(), vec![1, 0, 1, 1]).unwrap();
        assert_eq!(
            mean_heatmap(&[m.clone(), m.clone(), m.clone()]).unwrap(),
            m.to_heatmap()
        );
        let comp = BinaryMask::new(grid, vec![0, 1, 0, 0]).unwrap();
        let h = mean_heatmap(&[m, comp]).unwrap();
        assert!(h.values().iter().all(|&v| v == 0.5));
    }
}

//! Report files written by `evaluate`, per heatmap source `NAME`:
//!
//! ```text
//! curve_NAME.csv          calibration curve against the ground truth
//! dsc_NAME.csv            true and estimated DSC per image
//! prevalence_NAME.csv     ground-truth and prediction prevalence vs heatmap value
//! flags_NAME.csv          heatmap values at annotation disagreements (with --annotation)
//! flag_quartiles_NAME.csv
//! ```
//!
//! plus `summary.csv` (one row per source) and `set_metrics.csv` (with
//! `--members`).

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::{
    calibration_curve, concat_heatmaps, concat_masks, dsc, estimated_dsc,
    expected_calibration_error, expected_calibration_error_against, flag_disagreements,
    mask_intersection, mask_union, precision, prevalence_consistency, sensitivity, FlagReport,
};
use crate::io::layout::{
    check_same_stems, read_heatmaps, read_masks, read_member_masks, MemberMasks,
};
use crate::io::report::{curve_table, flag_table, prevalence_table, quartile_table};
use crate::io::{Cell, Table};
use crate::types::{check_grids, BinaryMask, Heatmap, OnGrid};

pub(super) struct Args {
    pub heatmaps: Vec<(String, PathBuf)>,
    pub gt: PathBuf,
    pub pred: Option<PathBuf>,
    pub annotation: Option<PathBuf>,
    pub members: Vec<(String, PathBuf)>,
    pub reference_prob: Option<PathBuf>,
    pub report: PathBuf,
    pub bandwidth: f64,
    pub bins: usize,
}

fn matched<T: OnGrid>(
    items: Vec<(String, T)>,
    dir: &Path,
    stems: &[String],
    gt_dir: &Path,
    gt: &[BinaryMask],
) -> Result<Vec<T>> {
    let item_stems: Vec<String> = items.iter().map(|i| i.0.clone()).collect();
    check_same_stems(stems, gt_dir, &item_stems, dir)?;
    let items: Vec<T> = items.into_iter().map(|i| i.1).collect();
    for (item, g) in items.iter().zip(gt) {
        check_grids(g.grid(), item.grid())?;
    }
    Ok(items)
}

/// Metrics undefined on an empty reference set are reported as NaN.
fn or_nan(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::EmptyReference(_)) => Ok(f64::NAN),
        other => other,
    }
}

fn threshold(h: &Heatmap) -> Result<BinaryMask> {
    BinaryMask::from_bools(h.grid().clone(), h.values().iter().map(|&v| v > 0.5))
}

pub(super) fn run(args: &Args) -> Result<()> {
    let names: std::collections::BTreeSet<&str> =
        args.heatmaps.iter().map(|h| h.0.as_str()).collect();
    if names.len() != args.heatmaps.len() {
        return Err(Error::Config("heatmap source names must be unique".into()));
    }
    let gt_named = read_masks(&args.gt)?;
    let stems: Vec<String> = gt_named.iter().map(|g| g.0.clone()).collect();
    let gt: Vec<BinaryMask> = gt_named.into_iter().map(|g| g.1).collect();
    let gt_all = concat_masks(&gt)?;

    let load_masks = |dir: &Path| -> Result<Vec<BinaryMask>> {
        matched(read_masks(dir)?, dir, &stems, &args.gt, &gt)
    };
    let pred = args.pred.as_deref().map(load_masks).transpose()?;
    let annotation = args.annotation.as_deref().map(load_masks).transpose()?;
    let reference = match &args.reference_prob {
        Some(dir) => Some(concat_heatmaps(&matched(
            read_heatmaps(dir)?,
            dir,
            &stems,
            &args.gt,
            &gt,
        )?)?),
        None => None,
    };

    let mut summary = Table::new(&[
        "source",
        "ece",
        "ece_vs_reference",
        "max_curve_deviation",
        "valid_curve_points",
        "mean_dsc",
        "mean_estimated_dsc",
        "mean_abs_dsc_error",
    ]);
    for (name, dir) in &args.heatmaps {
        let maps = matched(read_heatmaps(dir)?, dir, &stems, &args.gt, &gt)?;
        let h_all = concat_heatmaps(&maps)?;

        let curve = calibration_curve(&h_all, &gt_all, args.bandwidth)?;
        curve_table(&curve).write(&args.report.join(format!("curve_{name}.csv")))?;
        let ece = expected_calibration_error(&h_all, &gt_all, args.bins)?;
        let ece_ref = match &reference {
            Some(r) => expected_calibration_error_against(&h_all, r, args.bins)?,
            None => f64::NAN,
        };

        let preds = match &pred {
            Some(p) => p.clone(),
            None => maps.iter().map(threshold).collect::<Result<Vec<_>>>()?,
        };
        let mut dsc_table = Table::new(&["stem", "dsc", "estimated_dsc", "abs_error"]);
        let (mut sum_true, mut sum_est, mut sum_err) = (0.0, 0.0, 0.0);
        for ((stem, (h, p)), g) in stems.iter().zip(maps.iter().zip(&preds)).zip(&gt) {
            let t = dsc(g, p)?;
            let e = estimated_dsc(h, p)?;
            sum_true += t;
            sum_est += e;
            sum_err += (t - e).abs();
            dsc_table.push(vec![
                stem.clone().into(),
                t.into(),
                e.into(),
                (t - e).abs().into(),
            ]);
        }
        dsc_table.write(&args.report.join(format!("dsc_{name}.csv")))?;
        let n = stems.len() as f64;

        let prevalence =
            prevalence_consistency(&h_all, &concat_masks(&preds)?, &gt_all, args.bandwidth)?;
        prevalence_table(&prevalence).write(&args.report.join(format!("prevalence_{name}.csv")))?;

        if let Some(ann) = &annotation {
            let reports = maps
                .iter()
                .zip(ann)
                .zip(&gt)
                .map(|((h, a), g)| flag_disagreements(h, a, g))
                .collect::<Result<Vec<_>>>()?;
            let merged = FlagReport::merged(&reports);
            flag_table(&merged).write(&args.report.join(format!("flags_{name}.csv")))?;
            quartile_table(&merged)
                .write(&args.report.join(format!("flag_quartiles_{name}.csv")))?;
        }

        summary.push(vec![
            name.clone().into(),
            ece.into(),
            ece_ref.into(),
            curve.max_deviation().into(),
            curve.valid.iter().filter(|&&v| v).count().into(),
            (sum_true / n).into(),
            (sum_est / n).into(),
            (sum_err / n).into(),
        ]);
    }
    summary.write(&args.report.join("summary.csv"))?;

    if !args.members.is_empty() {
        let mut sets = Table::new(&["source", "member", "sensitivity", "precision"]);
        for (name, dir) in &args.members {
            let MemberMasks {
                weights,
                stems: member_stems,
                masks: per_image,
            } = read_member_masks(dir)?;
            check_same_stems(&stems, &args.gt, &member_stems, dir)?;
            for (ms, g) in per_image.iter().zip(&gt) {
                for m in ms {
                    check_grids(g.grid(), m.grid())?;
                }
            }
            let mut row = |label: String, masks: Vec<BinaryMask>| -> Result<()> {
                let all = concat_masks(&masks)?;
                sets.push(vec![
                    name.clone().into(),
                    Cell::Text(label),
                    or_nan(sensitivity(&all, &gt_all))?.into(),
                    or_nan(precision(&all, &gt_all))?.into(),
                ]);
                Ok(())
            };
            for (k, w) in weights.iter().enumerate() {
                row(
                    format!("{w:+}"),
                    per_image.iter().map(|m| m[k].clone()).collect(),
                )?;
            }
            row(
                "union".into(),
                per_image
                    .iter()
                    .map(|m| mask_union(m))
                    .collect::<Result<_>>()?,
            )?;
            row(
                "intersection".into(),
                per_image
                    .iter()
                    .map(|m| mask_intersection(m))
                    .collect::<Result<_>>()?,
            )?;
        }
        sets.write(&args.report.join("set_metrics.csv"))?;
    }
    println!(
        "wrote reports for {} heatmap sources to {}",
        args.heatmaps.len(),
        args.report.display()
    );
    Ok(())
}

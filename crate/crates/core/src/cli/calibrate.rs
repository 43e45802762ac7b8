use std::fs;
use std::path::PathBuf;

use super::{EXIT_DEGENERATE, EXIT_OK};
use crate::calibration::{
    compose_heatmap, count_patterns_images, solve_coefficients_with, RowWeighting, SolveOptions,
};
use crate::error::{Error, Result};
use crate::io::layout::{
    check_same_stems, read_masks, read_member_masks, write_heatmap, MemberMasks,
};
use crate::io::report::format_coefficients;

pub(super) struct Args {
    pub preds: PathBuf,
    pub gt: PathBuf,
    pub out: PathBuf,
    /// `(member prediction tree, heatmap output directory)`.
    pub apply: Option<(PathBuf, PathBuf)>,
    pub nonnegative: bool,
    pub pattern_equal: bool,
}

pub(super) fn run(args: &Args) -> Result<i32> {
    let MemberMasks {
        weights,
        stems,
        masks: members,
    } = read_member_masks(&args.preds)?;
    let gt = read_masks(&args.gt)?;
    let gt_stems: Vec<String> = gt.iter().map(|g| g.0.clone()).collect();
    check_same_stems(&stems, &args.preds, &gt_stems, &args.gt)?;
    let gt: Vec<_> = gt.into_iter().map(|g| g.1).collect();

    let hist = count_patterns_images(&members, &gt)?;
    let options = SolveOptions {
        weighting: if args.pattern_equal {
            RowWeighting::PatternEqual
        } else {
            RowWeighting::Count
        },
        nonnegative: args.nonnegative,
    };
    let coeffs = solve_coefficients_with(&hist, options)?;

    // Dry-run compose on the fitting data to report how often clipping bites.
    let mut clipped = 0;
    for m in &members {
        clipped += compose_heatmap(m, &coeffs.a)?.clipped;
    }
    if let Some(parent) = args.out.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let record = format_coefficients(&weights, &coeffs, Some(clipped));
    fs::write(&args.out, &record).map_err(|e| Error::io(&args.out, e))?;
    print!("{record}");

    if let Some((apply, heatmap_out)) = &args.apply {
        let target = read_member_masks(apply)?;
        if target.weights != weights {
            return Err(Error::Layout(format!(
                "weights in {} ({:?}) differ from the fitted weights ({weights:?})",
                apply.display(),
                target.weights
            )));
        }
        let mut applied_clips = 0;
        for (stem, m) in target.stems.iter().zip(&target.masks) {
            let composed = compose_heatmap(m, &coeffs.a)?;
            applied_clips += composed.clipped;
            write_heatmap(heatmap_out, stem, &composed.heatmap)?;
        }
        println!("applied_heatmaps = {}", target.stems.len());
        println!("applied_clipped_voxels = {applied_clips}");
    }

    if coeffs.rank_deficient {
        eprintln!(
            "warning: calibration system is rank deficient (rank {} of {}); wrote the minimum-norm solution",
            coeffs.rank,
            coeffs.n_models()
        );
        return Ok(EXIT_DEGENERATE);
    }
    Ok(EXIT_OK)
}

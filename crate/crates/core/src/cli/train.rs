//! Output tree of `train`, under the configured output directory:
//!
//! ```text
//! train/preds/<w>/<stem>.calb       out-of-fold member masks on the training split
//! test/preds/<w>/<stem>.calb        member masks on the test split
//! test/uncalibrated/<seed>/...      seed-ensemble member masks
//! test/majority/<stem>.calb         seed-ensemble majority vote
//! heatmaps/uncalibrated/...         seed-ensemble pixelwise mean
//! heatmaps/dropout/...              mean over dropout passes
//! models/...                        parameter vectors (float64 arrays)
//! manifest.csv                      one row per calibrated member
//! baselines.csv                     one row per baseline model
//! ```

use std::path::Path;

use crate::error::Result;
use crate::io::layout::{
    check_same_stems, read_features, read_masks, weight_dir_name, write_heatmap, write_mask,
};
use crate::io::{write_array, Array, ArrayData, Cell, RunConfig, Table, UnitMode};
use crate::models::{
    dropout_heatmap, train_calibrated_ensemble, train_member, uncalibrated_ensemble, ToyModel,
    VoxelSet,
};
use crate::types::{BinaryMask, Heatmap, OnGrid, SampleGrid};

pub(super) struct Split {
    pub stems: Vec<String>,
    pub grids: Vec<SampleGrid>,
    pub features: Vec<Vec<f64>>,
    pub gt: Vec<BinaryMask>,
}

pub(super) fn load_split(root: &Path) -> Result<Split> {
    let images_dir = root.join("images");
    let gt_dir = root.join("gt");
    let images = read_features(&images_dir)?;
    let gt = read_masks(&gt_dir)?;
    let image_stems: Vec<String> = images.iter().map(|i| i.stem.clone()).collect();
    let gt_stems: Vec<String> = gt.iter().map(|g| g.0.clone()).collect();
    check_same_stems(&image_stems, &images_dir, &gt_stems, &gt_dir)?;
    let mut split = Split {
        stems: image_stems,
        grids: Vec::new(),
        features: Vec::new(),
        gt: Vec::new(),
    };
    for (img, (_, mask)) in images.into_iter().zip(gt) {
        crate::types::check_grids(&img.grid, mask.grid())?;
        split.grids.push(img.grid);
        split.features.push(img.values);
        split.gt.push(mask);
    }
    Ok(split)
}

fn voxel_set(split: &Split, units: UnitMode) -> Result<VoxelSet> {
    match units {
        UnitMode::Image => VoxelSet::from_images(&split.features, &split.gt),
        UnitMode::Voxel => VoxelSet::per_voxel(
            split.features.concat(),
            split
                .gt
                .iter()
                .flat_map(|m| m.values().iter().copied())
                .collect(),
        ),
    }
}

/// Cuts a flat mask over the whole split back into per-image masks.
fn unflatten(split: &Split, flat: &BinaryMask) -> Result<Vec<BinaryMask>> {
    let mut start = 0;
    split
        .grids
        .iter()
        .map(|g| {
            let end = start + g.voxel_count();
            let m = BinaryMask::new(g.clone(), flat.values()[start..end].to_vec());
            start = end;
            m
        })
        .collect()
}

fn write_params(path: &Path, model: &ToyModel) -> Result<()> {
    let grid = SampleGrid::linear(model.params.len())?;
    write_array(
        path,
        &Array::new(grid, ArrayData::F64(model.params.clone()))?,
    )
}

fn write_masks(dir: &Path, stems: &[String], masks: &[BinaryMask]) -> Result<()> {
    stems
        .iter()
        .zip(masks)
        .try_for_each(|(s, m)| write_mask(dir, s, m))
}

fn write_heatmaps(dir: &Path, stems: &[String], maps: &[Heatmap]) -> Result<()> {
    stems
        .iter()
        .zip(maps)
        .try_for_each(|(s, h)| write_heatmap(dir, s, h))
}

pub(super) fn run(config: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let out = &cfg.output;
    let train = load_split(&cfg.data.train)?;
    let test = load_split(&cfg.data.test)?;
    let data = voxel_set(&train, cfg.data.units)?;
    let spec = &cfg.ensemble;

    let ensemble = train_calibrated_ensemble(&data, spec)?;
    let mut manifest = Table::new(&["weight", "fold", "seed", "model", "params"]);
    for (k, &w) in ensemble.weights.iter().enumerate() {
        let wname = weight_dir_name(w);
        let cv = unflatten(&train, &ensemble.cv_masks[k])?;
        write_masks(&out.join("train/preds").join(&wname), &train.stems, &cv)?;
        for (f, model) in ensemble.members[k].iter().enumerate() {
            let rel = format!("models/calibrated/{wname}/fold{f}.calb");
            write_params(&out.join(&rel), model)?;
            manifest.push(vec![
                Cell::Num(w),
                f.into(),
                Cell::Text(model.seed.to_string()),
                model.kind.name().into(),
                rel.into(),
            ]);
        }
    }
    manifest.write(&out.join("manifest.csv"))?;

    // Test-split member masks, transposed to one directory per weight.
    let mut per_weight: Vec<Vec<BinaryMask>> = vec![Vec::new(); ensemble.weights.len()];
    for (g, x) in test.grids.iter().zip(&test.features) {
        for (k, m) in ensemble.predict_masks(g, x)?.into_iter().enumerate() {
            per_weight[k].push(m);
        }
    }
    for (&w, masks) in ensemble.weights.iter().zip(&per_weight) {
        write_masks(
            &out.join("test/preds").join(weight_dir_name(w)),
            &test.stems,
            masks,
        )?;
    }

    let mut baselines = Table::new(&["role", "seed", "model", "params"]);
    let seeds = &cfg.baselines.seeds;
    let models =
        uncalibrated_ensemble(&data, cfg.baselines.model, spec.w_dsc, seeds, &spec.trainer)?;
    let mut seed_masks: Vec<Vec<BinaryMask>> = vec![Vec::new(); test.stems.len()];
    for (model, seed) in models.iter().zip(seeds) {
        let rel = format!("models/uncalibrated/seed{seed}.calb");
        write_params(&out.join(&rel), model)?;
        baselines.push(vec![
            "uncalibrated".into(),
            Cell::Text(seed.to_string()),
            model.kind.name().into(),
            rel.into(),
        ]);
        let masks = test
            .grids
            .iter()
            .zip(&test.features)
            .map(|(g, x)| model.predict_mask(g, x))
            .collect::<Result<Vec<_>>>()?;
        write_masks(
            &out.join("test/uncalibrated").join(seed.to_string()),
            &test.stems,
            &masks,
        )?;
        for (slot, m) in seed_masks.iter_mut().zip(masks) {
            slot.push(m);
        }
    }
    let means = seed_masks
        .iter()
        .map(|m| crate::calibration::mean_heatmap(m))
        .collect::<Result<Vec<_>>>()?;
    write_heatmaps(&out.join("heatmaps/uncalibrated"), &test.stems, &means)?;
    let majority = means
        .iter()
        .map(|h| BinaryMask::from_bools(h.grid().clone(), h.values().iter().map(|&v| v > 0.5)))
        .collect::<Result<Vec<_>>>()?;
    write_masks(&out.join("test/majority"), &test.stems, &majority)?;

    let dropout = &cfg.baselines.dropout;
    let mut hp = spec.trainer.clone();
    hp.dropout = Some(dropout.drop_probability);
    let net = train_member(
        data.features(),
        data.labels(),
        cfg.baselines.dropout_model,
        spec.w_dsc,
        cfg.baselines.dropout_seed,
        &hp,
    )?;
    write_params(&out.join("models/dropout.calb"), &net)?;
    baselines.push(vec![
        "dropout".into(),
        Cell::Text(cfg.baselines.dropout_seed.to_string()),
        net.kind.name().into(),
        "models/dropout.calb".into(),
    ]);
    let dropout_maps = test
        .grids
        .iter()
        .zip(&test.features)
        .enumerate()
        .map(|(i, (g, x))| {
            let seed = crate::models::derive_seed(cfg.baselines.dropout_seed, i as u64);
            dropout_heatmap(&net, g, x, dropout, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    write_heatmaps(&out.join("heatmaps/dropout"), &test.stems, &dropout_maps)?;
    baselines.write(&out.join("baselines.csv"))?;

    println!(
        "calibrated members={} ({} weights x {} folds), uncalibrated members={}, dropout passes={}",
        ensemble.model_count(),
        ensemble.weights.len(),
        spec.folds,
        models.len(),
        dropout.passes
    );
    println!(
        "training voxels={} test images={}",
        data.len(),
        test.stems.len()
    );
    Ok(())
}

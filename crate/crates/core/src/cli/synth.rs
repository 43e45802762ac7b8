use std::path::Path;

use super::Task;
use crate::error::{Error, Result};
use crate::io::layout::{stem_name, write_heatmap, write_mask};
use crate::io::{write_array, Array, ArrayData};
use crate::synth::{generate_blob2d, generate_gaussian1d};
use crate::types::{BinaryMask, Heatmap, SampleGrid};

struct Writer<'a> {
    out: &'a Path,
    images: usize,
    voxels: usize,
    foreground: usize,
}

impl Writer<'_> {
    fn image(
        &mut self,
        grid: &SampleGrid,
        features: &[f64],
        gt: &BinaryMask,
        prob: &Heatmap,
    ) -> Result<()> {
        let stem = stem_name(self.images);
        let path = crate::io::layout::array_path(&self.out.join("images"), &stem);
        write_array(
            &path,
            &Array::new(grid.clone(), ArrayData::F64(features.to_vec()))?,
        )?;
        write_mask(&self.out.join("gt"), &stem, gt)?;
        write_heatmap(&self.out.join("prob"), &stem, prob)?;
        self.images += 1;
        self.voxels += gt.len();
        self.foreground += gt.count_ones();
        Ok(())
    }
}

pub(super) fn run(task: Task, n: usize, seed: u64, out: &Path, size: usize) -> Result<()> {
    let mut w = Writer {
        out,
        images: 0,
        voxels: 0,
        foreground: 0,
    };
    match task {
        Task::Gaussian1d => {
            let d = generate_gaussian1d(n, seed)?;
            w.image(&d.grid(), &d.xs, &d.mask(), &d.analytic_heatmap())?;
        }
        Task::Blob2d => {
            if n == 0 {
                return Err(Error::InvalidCount("--n must be positive".into()));
            }
            let grid = SampleGrid::new(&[size, size])?;
            let d = generate_blob2d(n, &grid, seed)?;
            for i in 0..d.len() {
                w.image(
                    &grid,
                    &d.images[i],
                    &d.ground_truth[i],
                    &d.analytic_heatmap(i),
                )?;
            }
        }
    }
    println!(
        "images={} voxels={} foreground={} prevalence={}",
        w.images,
        w.voxels,
        w.foreground,
        crate::io::format_sig6(w.foreground as f64 / w.voxels as f64)
    );
    Ok(())
}

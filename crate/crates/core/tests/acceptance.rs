//! Acceptance suite. Each test prints one `ACCEPTANCE <n> PASS|FAIL` line to
//! stderr (uncaptured) and then asserts. Tests hold a shared lock so that
//! runtime bounds measure one criterion at a time.
//!
//! Oracles are written independently of the library: reference losses from
//! their textbook formulas, least squares through nalgebra's SVD.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use calens::calibration::{
    compose_heatmap, mean_heatmap, pattern_bits, solve_coefficients, PatternHistogram, SolveOptions,
};
use calens::evaluation::{
    calibration_curve, dsc, estimated_dsc, expected_calibration_error_against, mask_intersection,
    mask_union, sensitivity, union_sensitivity,
};
use calens::io::{Array, ArrayData};
use calens::losses::raw;
use calens::models::{
    dropout_heatmap, train_calibrated_ensemble, train_member, uncalibrated_ensemble, DropoutSpec,
    EnsembleSpec, ModelKind, TrainerConfig, VoxelSet,
};
use calens::synth::{generate_blob2d, generate_gaussian1d};
use calens::{BinaryMask, Error, Heatmap, SampleGrid};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "ACCEPTANCE {n} {verdict}: {title} -- {detail}"
    );
}

fn serial() -> std::sync::MutexGuard<'static, ()> {
    static LOCK: std::sync::Mutex<()> = std::sync::Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- 1: losses

struct LossFixture {
    classes: usize,
    y: Vec<u8>,
    p: Vec<f64>,
}

fn loss_fixture(r: &mut ChaCha8Rng) -> LossFixture {
    let classes = r.random_range(2..=4);
    let voxels = r.random_range(3..=24);
    let mut y = vec![0u8; voxels * classes];
    let mut p = vec![0.0; voxels * classes];
    for i in 0..voxels {
        y[i * classes + r.random_range(0..classes)] = 1;
        let raw: Vec<f64> = (0..classes).map(|_| r.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        for c in 0..classes {
            p[i * classes + c] = raw[c] / s;
        }
    }
    LossFixture { classes, y, p }
}

fn max_rel_fd_error(f: impl Fn(&[f64]) -> f64, grad: &[f64], p: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = 1e-6 * p[j].max(1e-3);
        q[j] = p[j] + h;
        let up = f(&q);
        q[j] = p[j] - h;
        let down = f(&q);
        q[j] = p[j];
        let fd = (up - down) / (2.0 * h);
        let err = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}

fn reference_cross_entropy(f: &LossFixture) -> f64 {
    let n = f.y.len() / f.classes;
    let mut s = 0.0;
    for i in 0..f.y.len() {
        if f.y[i] == 1 {
            s -= f.p[i].ln();
        }
    }
    s / n as f64
}

/// Mean over foreground classes of `1 - (2 TP + s) / (2 TP + FP + FN + s)`.
fn reference_soft_dice(f: &LossFixture, smoothing: f64) -> f64 {
    let mut total = 0.0;
    for c in 1..f.classes {
        let (mut inter, mut sum_p, mut sum_y) = (0.0, 0.0, 0.0);
        for i in (c..f.y.len()).step_by(f.classes) {
            let (y, p) = (f64::from(f.y[i]), f.p[i]);
            inter += y * p;
            sum_p += p;
            sum_y += y;
        }
        total += 1.0 - (2.0 * inter + smoothing) / (sum_p + sum_y + smoothing);
    }
    total / (f.classes - 1) as f64
}

#[test]
fn criterion_1_loss_gradients_and_references() {
    let _guard = serial();
    let start = Instant::now();
    let eps = calens::losses::DEFAULT_SMOOTHING;
    let mut r = rng(1);
    let mut worst_grad: f64 = 0.0;
    let mut worst_ref: f64 = 0.0;
    for _ in 0..50 {
        let f = loss_fixture(&mut r);
        for w in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let ws = vec![w; f.classes - 1];
            let ce = raw::cross_entropy(&f.y, &f.p, f.classes, &ws);
            let tv = raw::tversky(&f.y, &f.p, f.classes, &ws, eps);
            let both = raw::combined(&f.y, &f.p, f.classes, &ws, eps);
            worst_grad = worst_grad
                .max(max_rel_fd_error(
                    |q| raw::cross_entropy(&f.y, q, f.classes, &ws).loss,
                    &ce.grad,
                    &f.p,
                ))
                .max(max_rel_fd_error(
                    |q| raw::tversky(&f.y, q, f.classes, &ws, eps).loss,
                    &tv.grad,
                    &f.p,
                ))
                .max(max_rel_fd_error(
                    |q| raw::combined(&f.y, q, f.classes, &ws, eps).loss,
                    &both.grad,
                    &f.p,
                ));
            if w == 0.0 {
                worst_ref = worst_ref
                    .max((ce.loss - reference_cross_entropy(&f)).abs())
                    .max((tv.loss - reference_soft_dice(&f, 2.0 * eps)).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_grad < 1e-4 && worst_ref < 1e-10 && secs < 10.0;
    report(
        1,
        "loss gradients and w=0 references",
        pass,
        &format!("max rel FD error {worst_grad:.2e} (< 1e-4), max reference gap {worst_ref:.2e} (< 1e-10), {secs:.2}s (< 10s)"),
    );
    assert!(pass);
}

// ----------------------------------------------------------- 2: calibration

/// Count-weighted least squares over observed nonzero patterns via SVD.
fn oracle_solve(h: &PatternHistogram) -> Vec<f64> {
    let n = h.n_models();
    let rows: Vec<_> = h.iter().filter(|(p, _)| *p != 0).collect();
    let mut a = DMatrix::<f64>::zeros(rows.len(), n);
    let mut b = DVector::<f64>::zeros(rows.len());
    for (r, (pattern, counts)) in rows.iter().enumerate() {
        let sw = (counts.voxels as f64).sqrt();
        for (k, bit) in pattern_bits(*pattern, n).into_iter().enumerate() {
            a[(r, k)] = sw * f64::from(bit);
        }
        b[r] = sw * counts.foreground as f64 / counts.voxels as f64;
    }
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-12).unwrap().iter().copied().collect()
}

fn hand_fixture() -> PatternHistogram {
    let mut h = PatternHistogram::new(2).unwrap();
    h.add(0b11, 10, 9).unwrap();
    h.add(0b01, 10, 4).unwrap();
    h.add(0b10, 10, 1).unwrap();
    h
}

#[test]
fn criterion_2_calibration_solve() {
    let _guard = serial();
    let h = hand_fixture();
    let c = solve_coefficients(&h).unwrap();
    let oracle = oracle_solve(&h);
    let hand_gap =
        c.a.iter()
            .zip(&oracle)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
    let printed_gap = (c.a[0] - 0.53333).abs().max((c.a[1] - 0.23333).abs());

    // Planted coefficients on a grid of 1/64 with every pattern observed, so
    // every foreground count is an exact integer.
    let mut r = rng(2);
    let mut planted_gap: f64 = 0.0;
    let mut scaling_exact = true;
    for trial in 0..40 {
        let n = 1 + trial % 8;
        let denom = 64 * n as u64;
        let a_num: Vec<u64> = (0..n).map(|_| r.random_range(0..=64)).collect();
        let mut hist = PatternHistogram::new(n).unwrap();
        let mut scaled = PatternHistogram::new(n).unwrap();
        for pattern in 1u32..(1 << n) {
            let fg_num: u64 = (0..n)
                .filter(|k| pattern >> k & 1 == 1)
                .map(|k| a_num[k])
                .sum();
            let mult = r.random_range(1..=5);
            let voxels = denom * mult;
            hist.add(pattern, voxels, fg_num * mult).unwrap();
            scaled
                .add(pattern, voxels * 13, fg_num * mult * 13)
                .unwrap();
        }
        let got = solve_coefficients(&hist).unwrap();
        for (got_k, num) in got.a.iter().zip(&a_num) {
            planted_gap = planted_gap.max((got_k - *num as f64 / denom as f64).abs());
        }
        let again = solve_coefficients(&scaled).unwrap();
        scaling_exact &= got
            .a
            .iter()
            .zip(&again.a)
            .all(|(x, y)| x.to_bits() == y.to_bits());
    }
    let hand_scaled = {
        let mut s = PatternHistogram::new(2).unwrap();
        for (p, c) in h.iter() {
            s.add(p, c.voxels * 1000, c.foreground * 1000).unwrap();
        }
        solve_coefficients(&s).unwrap()
    };
    scaling_exact &= hand_scaled.a == c.a;

    let pass = hand_gap < 1e-9 && printed_gap < 5e-6 && planted_gap < 1e-10 && scaling_exact;
    report(
        2,
        "calibration solve",
        pass,
        &format!(
            "hand a = ({:.6}, {:.6}), oracle gap {hand_gap:.1e} (< 1e-9); planted recovery {planted_gap:.1e} (< 1e-10); count scaling bit-exact: {scaling_exact}",
            c.a[0], c.a[1]
        ),
    );
    assert!(pass);
}

// ------------------------------------------------------ 3: gaussian1d claim

struct RunEce {
    calibrated: f64,
    uncalibrated: f64,
    dropout: f64,
}

fn gaussian_run(run: u64) -> RunEce {
    let train = generate_gaussian1d(10_000, 1000 + run).unwrap();
    let test = generate_gaussian1d(10_000, 2000 + run).unwrap();
    let data = VoxelSet::try_from(&train).unwrap();
    let grid = test.grid();
    let truth = test.analytic_heatmap();
    let spec = EnsembleSpec {
        seed: run,
        ..Default::default()
    };

    let ensemble = train_calibrated_ensemble(&data, &spec).unwrap();
    let coeffs = ensemble
        .fit_coefficients(&data.ground_truth().unwrap(), SolveOptions::default())
        .unwrap();
    let members = ensemble.predict_masks(&grid, &test.xs).unwrap();
    let calibrated = compose_heatmap(&members, &coeffs.a).unwrap().heatmap;

    let seeds: Vec<u64> = (0..7).map(|s| 100 * run + s).collect();
    let models =
        uncalibrated_ensemble(&data, ModelKind::Logistic, 0.0, &seeds, &spec.trainer).unwrap();
    let masks: Vec<BinaryMask> = models
        .iter()
        .map(|m| m.predict_mask(&grid, &test.xs).unwrap())
        .collect();
    let uncalibrated = mean_heatmap(&masks).unwrap();

    let dropout = DropoutSpec::default();
    let hp = TrainerConfig {
        dropout: Some(dropout.drop_probability),
        ..Default::default()
    };
    let net = train_member(
        data.features(),
        data.labels(),
        ModelKind::DEFAULT_MLP,
        0.0,
        run,
        &hp,
    )
    .unwrap();
    let dropout_map = dropout_heatmap(&net, &grid, &test.xs, &dropout, run).unwrap();

    let ece = |h: &Heatmap| expected_calibration_error_against(h, &truth, 10).unwrap();
    RunEce {
        calibrated: ece(&calibrated),
        uncalibrated: ece(&uncalibrated),
        dropout: ece(&dropout_map),
    }
}

#[test]
fn criterion_3_calibrated_ensemble_beats_baselines() {
    let _guard = serial();
    let start = Instant::now();
    let runs: Vec<RunEce> = (0..5).map(gaussian_run).collect();
    let secs = start.elapsed().as_secs_f64();
    let mean = runs.iter().map(|r| r.calibrated).sum::<f64>() / runs.len() as f64;
    let wins = runs
        .iter()
        .filter(|r| r.calibrated < r.uncalibrated && r.calibrated < r.dropout)
        .count();
    let per_run: Vec<String> = runs
        .iter()
        .map(|r| format!("{:.4}/{:.4}/{:.4}", r.calibrated, r.uncalibrated, r.dropout))
        .collect();
    let pass = mean < 0.05 && wins >= 4 && secs < 120.0;
    report(
        3,
        "gaussian1d calibrated vs uncalibrated vs dropout ECE",
        pass,
        &format!(
            "mean calibrated ECE {mean:.4} (< 0.05), wins {wins}/5 (>= 4), {secs:.1}s (< 120s); per run cal/uncal/dropout: {}",
            per_run.join(" ")
        ),
    );
    assert!(pass);
}

// -------------------------------------------------------- 4: curve estimator

#[test]
fn criterion_4_planted_probability_curve() {
    let _guard = serial();
    let mut r = rng(4);
    let n = 100_000;
    let grid = SampleGrid::linear(n).unwrap();
    let probs: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let gt =
        BinaryMask::from_bools(grid.clone(), probs.iter().map(|&p| r.random::<f64>() < p)).unwrap();
    let h = Heatmap::new(grid, probs).unwrap();
    let curve = calibration_curve(&h, &gt, calens::evaluation::DEFAULT_BANDWIDTH).unwrap();
    let dev = curve.max_deviation();
    let valid = curve.valid.iter().filter(|&&v| v).count();
    let pass = dev < 0.03 && valid > 0;
    report(
        4,
        "calibration curve on planted probabilities",
        pass,
        &format!("max deviation {dev:.4} (< 0.03) over {valid} valid points"),
    );
    assert!(pass);
}

// ------------------------------------------------------------ 5: DSC estimate

fn random_mask(r: &mut ChaCha8Rng, grid: &SampleGrid, density: f64) -> BinaryMask {
    BinaryMask::from_bools(
        grid.clone(),
        (0..grid.voxel_count()).map(|_| r.random::<f64>() < density),
    )
    .unwrap()
}

struct BlobRun {
    calibrated_err: f64,
    uncalibrated_err: f64,
    union_sens: f64,
    best_member_sens: f64,
    sets_ok: bool,
}

fn blob_run(run: u64) -> BlobRun {
    let grid = SampleGrid::new(&[32, 32]).unwrap();
    let train = generate_blob2d(40, &grid, 3000 + run).unwrap();
    let test = generate_blob2d(20, &grid, 4000 + run).unwrap();
    let data = VoxelSet::try_from(&train).unwrap();
    let spec = EnsembleSpec {
        seed: run,
        ..Default::default()
    };
    let ensemble = train_calibrated_ensemble(&data, &spec).unwrap();
    let coeffs = ensemble
        .fit_coefficients(&data.ground_truth().unwrap(), SolveOptions::default())
        .unwrap();
    let seeds: Vec<u64> = (0..7).map(|s| 100 * run + s).collect();
    let models =
        uncalibrated_ensemble(&data, ModelKind::Logistic, 0.0, &seeds, &spec.trainer).unwrap();

    let (mut cal_err, mut uncal_err) = (0.0, 0.0);
    let mut sets_ok = true;
    let mut all_members: Vec<Vec<u8>> = vec![Vec::new(); ensemble.weights.len()];
    let mut all_gt = Vec::new();
    for i in 0..test.len() {
        let x = &test.images[i];
        let gt = &test.ground_truth[i];
        let members = ensemble.predict_masks(&grid, x).unwrap();
        let calibrated = compose_heatmap(&members, &coeffs.a).unwrap().heatmap;
        let seed_masks: Vec<BinaryMask> = models
            .iter()
            .map(|m| m.predict_mask(&grid, x).unwrap())
            .collect();
        let uncalibrated = mean_heatmap(&seed_masks).unwrap();
        let pred =
            BinaryMask::from_bools(grid.clone(), uncalibrated.values().iter().map(|&v| v > 0.5))
                .unwrap();
        let truth = dsc(gt, &pred).unwrap();
        cal_err += (estimated_dsc(&calibrated, &pred).unwrap() - truth).abs();
        uncal_err += (estimated_dsc(&uncalibrated, &pred).unwrap() - truth).abs();

        let u = mask_union(&members).unwrap();
        let n = mask_intersection(&members).unwrap();
        for m in &members {
            for j in 0..m.len() {
                sets_ok &= u.values()[j] >= m.values()[j] && n.values()[j] <= m.values()[j];
            }
        }
        for (k, m) in members.iter().enumerate() {
            all_members[k].extend_from_slice(m.values());
        }
        all_gt.extend_from_slice(gt.values());
    }
    let flat = SampleGrid::linear(all_gt.len()).unwrap();
    let gt_all = BinaryMask::new(flat.clone(), all_gt).unwrap();
    let member_masks: Vec<BinaryMask> = all_members
        .into_iter()
        .map(|v| BinaryMask::new(flat.clone(), v).unwrap())
        .collect();
    let union_sens = union_sensitivity(&member_masks, &gt_all).unwrap();
    let best_member_sens = member_masks
        .iter()
        .map(|m| sensitivity(m, &gt_all).unwrap())
        .fold(0.0, f64::max);
    BlobRun {
        calibrated_err: cal_err / test.len() as f64,
        uncalibrated_err: uncal_err / test.len() as f64,
        union_sens,
        best_member_sens,
        sets_ok,
    }
}

fn blob_runs() -> &'static [BlobRun] {
    static RUNS: std::sync::OnceLock<Vec<BlobRun>> = std::sync::OnceLock::new();
    RUNS.get_or_init(|| (0..5).map(blob_run).collect())
}

#[test]
fn criterion_5_dsc_estimation() {
    let _guard = serial();
    let mut r = rng(5);
    let mut exact = true;
    for _ in 0..100 {
        let shape = [r.random_range(1..12), r.random_range(1..12)];
        let grid = SampleGrid::new(&shape).unwrap();
        let density = r.random::<f64>();
        let s = random_mask(&mut r, &grid, density);
        let density = r.random::<f64>();
        let p = random_mask(&mut r, &grid, density);
        exact &= estimated_dsc(&s.to_heatmap(), &p).unwrap() == dsc(&s, &p).unwrap();
    }
    let runs = blob_runs();
    let wins = runs
        .iter()
        .filter(|b| b.calibrated_err < b.uncalibrated_err)
        .count();
    let per_run: Vec<String> = runs
        .iter()
        .map(|b| format!("{:.2}/{:.2}", b.calibrated_err, b.uncalibrated_err))
        .collect();
    let pass = exact && wins >= 4;
    report(
        5,
        "DSC estimation",
        pass,
        &format!(
            "binary heatmaps exact on 100 pairs: {exact}; blob2d mean |est - true| DSC calibrated < uncalibrated in {wins}/5 (>= 4): {}",
            per_run.join(" ")
        ),
    );
    assert!(pass);
}

// ------------------------------------------------------------ 6: set metrics

#[test]
fn criterion_6_union_and_intersection() {
    let _guard = serial();
    let mut r = rng(6);
    let mut fixtures_ok = true;
    for _ in 0..200 {
        let grid = SampleGrid::linear(r.random_range(1..50)).unwrap();
        let members: Vec<BinaryMask> = (0..r.random_range(1..8))
            .map(|_| {
                let density = r.random::<f64>();
                random_mask(&mut r, &grid, density)
            })
            .collect();
        let u = mask_union(&members).unwrap();
        let n = mask_intersection(&members).unwrap();
        for m in &members {
            for j in 0..m.len() {
                fixtures_ok &= u.values()[j] >= m.values()[j] && n.values()[j] <= m.values()[j];
            }
        }
    }
    let runs = blob_runs();
    let blob_sets_ok = runs.iter().all(|b| b.sets_ok);
    let dominates = runs.iter().all(|b| b.union_sens >= b.best_member_sens);
    let strict = runs
        .iter()
        .filter(|b| b.union_sens > b.best_member_sens)
        .count();
    let detail: Vec<String> = runs
        .iter()
        .map(|b| format!("{:.4}>={:.4}", b.union_sens, b.best_member_sens))
        .collect();
    let pass = fixtures_ok && blob_sets_ok && dominates;
    report(
        6,
        "union/intersection set properties",
        pass,
        &format!(
            "random fixtures: {fixtures_ok}; blob2d members: {blob_sets_ok}; union sensitivity >= every member in all runs: {dominates} ({strict}/5 strictly) [{}]",
            detail.join(" ")
        ),
    );
    assert!(pass);
}

// --------------------------------------------------------------------- 7: io

#[test]
fn criterion_7_container_round_trips_and_fuzz() {
    let _guard = serial();
    let mut r = rng(7);
    let mut identical = 0;
    for _ in 0..1000 {
        let ndim = r.random_range(1..=3);
        let shape: Vec<usize> = (0..ndim).map(|_| r.random_range(1..9)).collect();
        let grid = SampleGrid::new(&shape).unwrap();
        let count = grid.voxel_count();
        let data = if r.random::<bool>() {
            ArrayData::U8((0..count).map(|_| r.random_range(0..=1)).collect())
        } else {
            ArrayData::F64(
                (0..count)
                    .map(|_| f64::from_bits(r.random::<u64>()))
                    .collect(),
            )
        };
        let bytes = Array::new(grid, data).unwrap().encode();
        if Array::decode(&bytes).unwrap().encode() == bytes {
            identical += 1;
        }
    }

    let base = Array::new(
        SampleGrid::new(&[4, 5]).unwrap(),
        ArrayData::F64(vec![0.25; 20]),
    )
    .unwrap()
    .encode();
    let mut cases = 0;
    let mut rejected = 0;
    let mut check = |bytes: &[u8], ok: fn(&Error) -> bool| {
        cases += 1;
        if matches!(Array::decode(bytes), Err(ref e) if ok(e)) {
            rejected += 1;
        }
    };
    for i in 0..4 {
        for v in 0..=255u8 {
            if v != base[i] {
                let mut b = base.clone();
                b[i] = v;
                check(&b, |e| matches!(e, Error::CorruptHeader(_)));
            }
        }
    }
    for v in (0..=255u8).filter(|&v| v != 1) {
        let mut b = base.clone();
        b[4] = v;
        check(&b, |e| matches!(e, Error::UnsupportedVersion(_)));
    }
    for v in 2..=255u8 {
        let mut b = base.clone();
        b[5] = v;
        check(&b, |e| matches!(e, Error::CorruptHeader(_)));
    }
    for v in [0u8, 4, 5, 255] {
        let mut b = base.clone();
        b[6] = v;
        check(&b, |e| matches!(e, Error::CorruptHeader(_)));
    }
    for len in 0..15 {
        check(&base[..len], |e| matches!(e, Error::CorruptHeader(_)));
    }
    for len in 15..base.len() {
        check(&base[..len], |e| matches!(e, Error::LengthMismatch { .. }));
    }
    let mut long = base.clone();
    long.push(0);
    check(&long, |e| matches!(e, Error::LengthMismatch { .. }));
    let mut grown = base.clone();
    grown[7] = 5;
    check(&grown, |e| matches!(e, Error::LengthMismatch { .. }));
    let mut zero = base.clone();
    zero[11..15].copy_from_slice(&[0, 0, 0, 0]);
    check(&zero, |e| matches!(e, Error::CorruptHeader(_)));

    let pass = identical == 1000 && rejected == cases;
    report(
        7,
        "container round trips and header fuzzing",
        pass,
        &format!("{identical}/1000 byte-identical round trips; {rejected}/{cases} corrupt inputs rejected with the expected error"),
    );
    assert!(pass);
}

// ------------------------------------------------------------ 8: determinism

fn calens(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_calens"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn pipeline(root: &Path) -> Vec<(String, Vec<u8>)> {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let ok = |out: std::process::Output| {
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    ok(calens(&[
        "synth",
        "--task",
        "gaussian1d",
        "--n",
        "2000",
        "--seed",
        "1",
        "--out",
        &s(&root.join("train")),
    ]));
    ok(calens(&[
        "synth",
        "--task",
        "gaussian1d",
        "--n",
        "2000",
        "--seed",
        "2",
        "--out",
        &s(&root.join("test")),
    ]));
    let config = "output = \"run\"\n[data]\ntrain = \"train\"\ntest = \"test\"\nunits = \"voxel\"\n[ensemble.trainer]\nepochs = 200\n";
    std::fs::write(root.join("run.toml"), config).unwrap();
    ok(calens(&[
        "--threads",
        "3",
        "train",
        "--config",
        &s(&root.join("run.toml")),
    ]));
    let run = root.join("run");
    ok(calens(&[
        "calibrate",
        "--preds",
        &s(&run.join("train/preds")),
        "--gt",
        &s(&root.join("train/gt")),
        "--out",
        &s(&run.join("coeffs.txt")),
        "--apply",
        &s(&run.join("test/preds")),
        "--heatmap-out",
        &s(&run.join("heatmaps/calibrated")),
    ]));
    let report = run.join("report");
    ok(calens(&[
        "evaluate",
        "--heatmaps",
        &format!("calibrated={}", s(&run.join("heatmaps/calibrated"))),
        "--heatmaps",
        &format!("uncalibrated={}", s(&run.join("heatmaps/uncalibrated"))),
        "--heatmaps",
        &format!("dropout={}", s(&run.join("heatmaps/dropout"))),
        "--gt",
        &s(&root.join("test/gt")),
        "--pred",
        &s(&run.join("test/majority")),
        "--members",
        &format!("calibrated={}", s(&run.join("test/preds"))),
        "--reference-prob",
        &s(&root.join("test/prob")),
        "--report",
        &s(&report),
    ]));
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&report)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    for extra in ["coeffs.txt", "manifest.csv", "baselines.csv"] {
        files.push((extra.into(), std::fs::read(run.join(extra)).unwrap()));
    }
    files.sort();
    files
}

#[test]
fn criterion_8_pipeline_determinism() {
    let _guard = serial();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    let same = first == second;
    let pass = same && first.len() >= 10;
    report(
        8,
        "synth -> train -> calibrate -> evaluate determinism",
        pass,
        &format!(
            "{} report files compared, byte-identical: {same}",
            first.len()
        ),
    );
    assert!(pass);
}

//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! run with `cargo test --test acceptance -- --nocapture` to see them.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;

use common::*;
use neurodecode::datastore::{average_repeats, read_matrix, rows_for_split, split_rows, write_matrix, Manifest, Split};
use neurodecode::imagemetrics::{
    frechet_distance, nway_accuracy, ssim, EmbeddingSet, GaussianMoments, GrayImage, NwayOptions, SsimParams,
};
use neurodecode::pipeline::{
    evaluate, EmbeddingPair, EmbeddingSource, ImagePair, ImageSource, MetricStatus, Pipeline, PipelineConfig,
    CaptionSource, CAPTION_LABELS, IMAGE_LABELS, PREDICTION_FILE,
};
use neurodecode::renorm::compute_stats;
use neurodecode::ridge::{cross_validate_alpha, kfold_indices, AlphaGrid, RidgePath};
use neurodecode::synth::{closed_loop_score, generate, SynthData, SynthSpec, CONFIG_FILE, TEST_LATENTS_FILE};
use neurodecode::textmetrics::{meteor, meteor_parts, write_captions, CaptionRecord, CaptionSet, TokenSeq};

const BRANCH: &str = "caption_features";

fn report(name: &str, ok: bool, detail: impl std::fmt::Display) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name} failed: {detail}");
}

fn cli(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_neurodecode"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "neurodecode {args:?} exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// synth → fit → predict through the binary; returns the dataset dir.
fn cli_closed_loop(root: &Path, spec: &Path) -> PathBuf {
    let data = root.join("data");
    cli(&["synth", "--spec", p(spec), "--out", p(&data)]);
    let cfg = data.join(CONFIG_FILE);
    cli(&["fit", "--config", p(&cfg)]);
    cli(&["predict", "--config", p(&cfg)]);
    data
}

fn averaged_train(data: &SynthData) -> (DMatrix<f64>, DMatrix<f64>) {
    let (avg, stimuli) = average_repeats(&data.trials, &data.manifest).unwrap();
    let (train_x, _) = split_rows(&avg, &stimuli).unwrap();
    let train_y = data.latents.select_rows(rows_for_split(&stimuli, Split::Train).iter());
    (train_x, train_y)
}

#[test]
fn closed_loop_recovery() {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let data = cli_closed_loop(tmp.path(), Path::new(FIXTURE));
    let elapsed = start.elapsed();

    let decoded = read_matrix(data.join("out").join(BRANCH).join(PREDICTION_FILE)).unwrap();
    let truth = read_matrix(data.join(TEST_LATENTS_FILE)).unwrap();
    let score = closed_loop_score(&decoded, &truth).unwrap();
    report(
        "closed loop",
        score.mean >= 0.9 && elapsed < Duration::from_secs(60),
        format!("mean test r = {:.4} (>= 0.9) in {:.1}s (< 60s)", score.mean, elapsed.as_secs_f64()),
    );
}

#[test]
fn noiseless_recovery() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        noise_sigma: 0.0,
        ..closed_loop_spec()
    };
    let data = generate(&spec).unwrap();
    let cfg_path = data.write(tmp.path()).unwrap();
    let mut cfg = PipelineConfig::load(&cfg_path).unwrap();
    cfg.alpha_grid = AlphaGrid::new(vec![1e-8]).unwrap();

    let outcome = Pipeline::new(cfg).unwrap().run_branch(BRANCH).unwrap();
    let pred = outcome.prediction.unwrap();
    let truth = read_matrix(tmp.path().join(TEST_LATENTS_FILE)).unwrap();
    let err = rel_frobenius(&pred, &truth);
    report("noiseless recovery", err < 1e-4, format!("relative Frobenius error {err:.3e} (< 1e-4)"));
}

#[test]
fn ridge_matches_normal_equations() {
    let mut rng = rng(7);
    let grid = AlphaGrid::default();
    let mut worst = 0.0f64;
    let mut monotone = true;
    let mut underdetermined = 0;
    for _ in 0..50 {
        let n = rng.random_range(5..60);
        let p = rng.random_range(2..80);
        let d = rng.random_range(1..6);
        underdetermined += usize::from(n < p);
        let x = gaussian(&mut rng, n, p) * 10.0;
        let y = gaussian(&mut rng, n, d);
        let path = RidgePath::new(&x, &y, true).unwrap();
        let mut alphas = vec![rng.random_range(0.1..10.0)];
        alphas.extend_from_slice(grid.candidates());
        for &alpha in &alphas {
            let model = path.solve(alpha).unwrap();
            let (w, b) = ridge_normal_equations(&x, &y, alpha, true);
            worst = worst.max(rel_frobenius(&model.weights, &w));
            let x_new = gaussian(&mut rng, 4, p);
            let ours = model.predict(&x_new).unwrap();
            worst = worst.max(rel_frobenius(&ours, &predict(&x_new, &w, &b)));
        }
        let norms: Vec<f64> = grid.candidates().iter().map(|&a| path.weights(a).unwrap().norm()).collect();
        monotone &= norms.windows(2).all(|w| w[1] <= w[0]);
    }
    report(
        "ridge oracle",
        worst < 1e-6 && monotone && underdetermined > 0,
        format!("worst relative error {worst:.2e} (< 1e-6), shrinkage monotone: {monotone}, {underdetermined} instances with samples < voxels"),
    );
}

#[test]
fn cv_selection() {
    let grid = AlphaGrid::default();
    let has_50k = grid.candidates().contains(&5e4);
    let smallest = grid.candidates()[0];
    let k = 5;
    let seed = 3;

    let mut chosen = Vec::new();
    let mut oracle_ok = true;
    let mut worst = 0.0f64;
    let noiseless = SynthSpec {
        noise_sigma: 0.0,
        ..closed_loop_spec()
    };
    let noisy = SynthSpec::read(CV_NOISY_FIXTURE).unwrap();
    assert_eq!(noisy.noise_sigma, 1.0);
    for spec in [noiseless, noisy] {
        let data = generate(&spec).unwrap();
        let (x, y) = averaged_train(&data);
        let outcome = cross_validate_alpha(&x, &y, &grid, k, seed, true).unwrap();
        let folds = kfold_indices(x.nrows(), k, seed).unwrap();
        let expected = cv_scores(&x, &y, &folds, grid.candidates());
        for (a, b) in outcome.scores.iter().zip(&expected) {
            worst = worst.max((a - b).abs() / b.abs());
        }
        let best = expected
            .iter()
            .enumerate()
            .fold(0, |best, (i, &s)| if s >= expected[best] { i } else { best });
        oracle_ok &= grid.candidates()[best] == outcome.best_alpha;
        chosen.push(outcome.best_alpha);
    }
    let ok = has_50k && chosen[0] == smallest && chosen[1] > smallest && oracle_ok && worst < 1e-6;
    report(
        "cv behaviour",
        ok,
        format!(
            "noiseless alpha {} (want {smallest}), noise 1.0 alpha {} (want > {smallest}), oracle agrees: {oracle_ok}, worst score error {worst:.1e}, grid has 5e4: {has_50k}",
            chosen[0], chosen[1]
        ),
    );
}

#[test]
fn renormalization_matches_train_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(&closed_loop_spec()).unwrap();
    let cfg_path = data.write(tmp.path()).unwrap();
    let pipeline = Pipeline::new(PipelineConfig::load(&cfg_path).unwrap()).unwrap();
    let fitted = pipeline.fit_branch(BRANCH).unwrap();
    let prep = pipeline.prepared().unwrap();

    let raw = fitted.model.predict(&prep.train_x).unwrap();
    let renormed = neurodecode::pipeline::renormalize_train_only(&raw, &fitted.pred_stats, &fitted.target_stats).unwrap();
    let got = compute_stats(&renormed).unwrap();
    let target = &fitted.target_stats;
    let mut worst = 0.0f64;
    for j in 0..target.dims() {
        worst = worst.max((got.mean[j] - target.mean[j]).abs() / target.mean[j].abs().max(target.std[j]));
        worst = worst.max((got.std[j] - target.std[j]).abs() / target.std[j]);
    }
    let mut ranks = true;
    for j in 0..raw.ncols() {
        let order = |m: &DMatrix<f64>| {
            let mut idx: Vec<usize> = (0..m.nrows()).collect();
            idx.sort_by(|&a, &b| m[(a, j)].total_cmp(&m[(b, j)]));
            idx
        };
        ranks &= order(&raw) == order(&renormed);
    }
    report(
        "renormalization",
        worst < 1e-6 && ranks,
        format!("worst relative stat error {worst:.2e} (< 1e-6), rank order preserved: {ranks}"),
    );
}

fn random_caption(rng: &mut impl Rng, vocab: &[&str]) -> String {
    let len = rng.random_range(1..12);
    (0..len).map(|_| vocab[rng.random_range(0..vocab.len())]).collect::<Vec<_>>().join(" ")
}

#[test]
fn meteor_table_and_monotonicity() {
    let mut worst = 0.0f64;
    let mut counts = true;
    for (h, r, m, ch, expected) in METEOR_TABLE {
        let parts = meteor_parts(&TokenSeq::tokenize(h), &TokenSeq::tokenize(r)).unwrap();
        counts &= parts.matches == m && parts.chunks == ch;
        worst = worst.max((parts.score - expected).abs());
    }

    let vocab = ["a", "the", "dog", "cat", "man", "on", "in", "red", "sits", "runs", "grass", "street"];
    let mut rng = rng(99);
    let mut monotone = true;
    for _ in 0..100 {
        let hyp = random_caption(&mut rng, &vocab);
        let refs: Vec<String> = (0..rng.random_range(1..5)).map(|_| random_caption(&mut rng, &vocab)).collect();
        let mut prev = 0.0;
        for k in 1..=refs.len() {
            let r: Vec<&str> = refs[..k].iter().map(String::as_str).collect();
            let s = meteor(&CaptionSet::from_text(&hyp, &r).unwrap()).unwrap();
            monotone &= s >= prev;
            prev = s;
        }
    }
    report(
        "meteor",
        worst < 1e-9 && counts && monotone,
        format!("worst table error {worst:.1e} (< 1e-9), counts match: {counts}, multi-reference monotone: {monotone}"),
    );
}

#[test]
fn image_metric_closed_forms() {
    let mut rng = rng(5);
    let params = SsimParams::default();

    let pixels: Vec<f64> = (0..24 * 24).map(|_| rng.random_range(0.0..255.0)).collect();
    let a = GrayImage::new(24, 24, pixels, 255.0).unwrap();
    let self_err = (ssim(&a, &a, &params).unwrap() - 1.0).abs();

    let zero = GrayImage::new(16, 16, vec![0.0; 256], 255.0).unwrap();
    let full = GrayImage::new(16, 16, vec![255.0; 256], 255.0).unwrap();
    let const_err = (ssim(&zero, &full, &params).unwrap() - 1e-4 / (1.0 + 1e-4)).abs();

    let mut frechet_err = 0.0f64;
    for _ in 0..100 {
        let (m1, m2) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let (s1, s2): (f64, f64) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
        let g = |m: f64, s: f64| GaussianMoments {
            mean: nalgebra::DVector::from_element(1, m),
            cov: DMatrix::from_element(1, 1, s * s),
        };
        let got = frechet_distance(&g(m1, s1), &g(m2, s2)).unwrap();
        frechet_err = frechet_err.max((got - frechet_1d(m1, s1, m2, s2)).abs());
    }

    let mut exact = true;
    for n in 2..=50 {
        let pred = gaussian(&mut rng, n, 6);
        let truth = &pred * 0.3 + gaussian(&mut rng, n, 6);
        let ours = nway_accuracy(
            &EmbeddingSet::unlabeled(pred.clone()).unwrap(),
            &EmbeddingSet::unlabeled(truth.clone()).unwrap(),
            &NwayOptions::default(),
        )
        .unwrap();
        exact &= ours == two_way_brute_force(&pred, &truth);
    }

    let null = nway_accuracy(
        &EmbeddingSet::unlabeled(gaussian(&mut rng, 200, 16)).unwrap(),
        &EmbeddingSet::unlabeled(gaussian(&mut rng, 200, 16)).unwrap(),
        &NwayOptions::default(),
    )
    .unwrap();

    let ok = self_err < 1e-12 && const_err < 1e-9 && frechet_err < 1e-9 && exact && (null - 0.5).abs() <= 0.05;
    report(
        "image closed forms",
        ok,
        format!(
            "ssim(a,a) err {self_err:.1e}, constant pair err {const_err:.1e}, 1-D Frechet err {frechet_err:.1e}, 2-way exact: {exact}, null 2-way {null:.4}"
        ),
    );
}

/// Adds caption, embedding and image evaluation inputs derived from the
/// predictions so every table row has something to compute.
fn configure_evaluation(dir: &Path) -> PathBuf {
    let cfg_path = dir.join(CONFIG_FILE);
    let mut cfg = PipelineConfig::load(&cfg_path).unwrap();
    let pred = format!("out/{BRANCH}/{PREDICTION_FILE}");
    let pair = || EmbeddingPair {
        pred: EmbeddingSource::Path(pred.clone().into()),
        truth: EmbeddingSource::Path(TEST_LATENTS_FILE.into()),
    };

    let truth = read_matrix(dir.join(TEST_LATENTS_FILE)).unwrap();
    let ids: Vec<String> = Manifest::read(dir.join("manifest.json"))
        .unwrap()
        .filter_split(Split::Test)
        .stimulus_ids()
        .into_iter()
        .map(str::to_string)
        .collect();
    let words = ["dog", "cat", "grass", "street", "red", "blue"];
    let caption = |row: usize, shift: usize| CaptionRecord {
        stimulus_id: ids[row].clone(),
        text: (0..truth.ncols().min(6))
            .map(|j| words[(usize::from(truth[(row, j)] > 0.0) * 3 + j + shift) % words.len()])
            .collect::<Vec<_>>()
            .join(" "),
    };
    let hyps: Vec<CaptionRecord> = (0..ids.len()).map(|i| caption(i, 0)).collect();
    let refs: Vec<CaptionRecord> = (0..ids.len()).map(|i| caption(i, i % 2)).collect();
    write_captions(&hyps, dir.join("captions_pred.json")).unwrap();
    write_captions(&refs, dir.join("captions_ref.json")).unwrap();
    let captions = CaptionSource {
        hypotheses: "captions_pred.json".into(),
        references: vec!["captions_ref.json".into()],
    };

    // latents rescaled to 0..1 and viewed as 4×5 images
    let to_image = |m: &DMatrix<f64>| m.map(|v| 1.0 / (1.0 + (-v).exp()));
    write_matrix(&to_image(&truth), dir.join("images_true.f32m")).unwrap();
    let image = |file: &str| ImageSource::Matrix {
        matrix: file.into(),
        height: 4,
        width: 5,
        dynamic_range: 1.0,
        channels: 1,
    };

    let e = &mut cfg.evaluation;
    e.meteor_image_vs_human = Some(captions.clone());
    e.meteor_brain_vs_image = Some(captions);
    e.sentence_brain_vs_image = Some(pair());
    e.clip_brain_vs_image = Some(pair());
    e.alexnet_2 = Some(pair());
    e.clip = Some(pair());
    e.fid = Some(pair());
    e.images = Some(ImagePair {
        pred: image("images_true.f32m"),
        truth: image("images_true.f32m"),
    });
    cfg.write(&cfg_path).unwrap();
    cfg_path
}

fn full_run(root: &Path) -> (Vec<u8>, Vec<u8>) {
    let data = cli_closed_loop(root, Path::new(FIXTURE));
    let cfg = configure_evaluation(&data);
    let out = root.join("report.json");
    cli(&["evaluate", "--config", p(&cfg), "--out", p(&out)]);
    (
        fs::read(data.join("out").join(BRANCH).join(PREDICTION_FILE)).unwrap(),
        fs::read(out).unwrap(),
    )
}

#[test]
fn seeded_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (pred_a, report_a) = full_run(a.path());
    let (pred_b, report_b) = full_run(b.path());
    let same_pred = pred_a == pred_b;
    let same_report = report_a == report_b;
    report(
        "determinism",
        same_pred && same_report,
        format!("predicted features identical: {same_pred}, reports identical: {same_report}"),
    );
}

#[test]
fn report_lists_every_row() {
    let tmp = tempfile::tempdir().unwrap();
    let data = cli_closed_loop(tmp.path(), Path::new(FIXTURE));
    let cfg = PipelineConfig::load(configure_evaluation(&data)).unwrap();
    let rep = evaluate(&cfg).unwrap();

    let mut missing = Vec::new();
    let mut malformed = Vec::new();
    for label in CAPTION_LABELS.iter().chain(IMAGE_LABELS.iter()) {
        match rep.get(label) {
            None => missing.push(*label),
            Some(m) => {
                let well_formed = match m.status {
                    MetricStatus::Ok => m.value.is_some_and(f64::is_finite),
                    MetricStatus::Skipped => m.value.is_none() && m.reason.is_some(),
                };
                if !well_formed {
                    malformed.push(*label);
                }
            }
        }
    }
    let populated = rep.metrics.iter().filter(|m| m.status == MetricStatus::Ok).count();
    report(
        "report shape",
        missing.is_empty() && malformed.is_empty() && rep.metrics.len() == 13,
        format!("{} rows ({populated} populated), missing {missing:?}, malformed {malformed:?}", rep.metrics.len()),
    );
}

//! End-to-end acceptance run. Each criterion prints one PASS or FAIL line
//! to stderr, uncaptured; the test fails if any criterion does.

mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::Rng;

use llnet::baselines::{clahe, gamma_adjust, hist_equalize, ClaheParams};
use llnet::corpus::{
    add_gaussian_noise, gamma_darken, sample_corruption, save_image, Corruption, CorruptionSpec, Dataset, Image,
};
use llnet::metrics::{psnr, ssim};
use llnet::nn::{evaluate, gradients, Activation, DenseLayer, LossConfig, Network, Objective};
use llnet::reconstruct::{enhance_image, reassemble, tile, PatchModel};
use llnet::rng::seeded;
use llnet::ssda::Model;
use llnet_cli::*;

#[derive(Default)]
struct Report {
    failed: Vec<String>,
}

impl Report {
    fn check(&mut self, name: &str, ok: bool, detail: impl std::fmt::Display) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        let _ = writeln!(std::io::stderr(), "{verdict} {name}: {detail}");
        if !ok {
            self.failed.push(name.to_string());
        }
    }

    fn info(&self, name: &str, detail: impl std::fmt::Display) {
        let _ = writeln!(std::io::stderr(), "INFO {name}: {detail}");
    }
}

type Params = Vec<(Array2<f64>, Array1<f64>)>;

fn build(params: &Params) -> Network {
    Network::new(
        params
            .iter()
            .map(|(w, b)| DenseLayer::new(w.clone(), b.clone(), Activation::Sigmoid).unwrap())
            .collect(),
    )
    .unwrap()
}

/// Worst relative error between back-propagated gradients and central
/// differences of the loss.
fn worst_gradient_error(objective: &Objective, dims: &[usize], seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let mut params: Params = dims
        .windows(2)
        .map(|d| {
            (
                Array2::from_shape_simple_fn((d[1], d[0]), || rng.random_range(-1.0..1.0)),
                Array1::from_shape_simple_fn(d[1], || rng.random_range(-0.5..0.5)),
            )
        })
        .collect();
    let x = Array2::from_shape_simple_fn((6, dims[0]), || rng.random_range(0.0..1.0));
    let y = Array2::from_shape_simple_fn((6, *dims.last().unwrap()), || rng.random_range(0.0..1.0));
    let (_, grads) = gradients(objective, &build(&params), x.view(), y.view()).unwrap();
    let loss_at = |params: &Params| evaluate(objective, &build(params), x.view(), y.view()).unwrap().total();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let (rows, cols) = params[k].0.dim();
        for i in 0..rows {
            for j in 0..=cols {
                let (analytic, orig) = if j < cols {
                    (grads.weights[k][[i, j]], params[k].0[[i, j]])
                } else {
                    (grads.biases[k][i], params[k].1[i])
                };
                let set = |params: &mut Params, v: f64| {
                    if j < cols {
                        params[k].0[[i, j]] = v;
                    } else {
                        params[k].1[i] = v;
                    }
                };
                set(&mut params, orig + h);
                let up = loss_at(&params);
                set(&mut params, orig - h);
                let down = loss_at(&params);
                set(&mut params, orig);
                let numeric = (up - down) / (2.0 * h);
                worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3));
            }
        }
    }
    worst
}

fn criterion_gradients(report: &mut Report) {
    let start = Instant::now();
    let mut rng = seeded(2024);
    let mut worst: f64 = 0.0;
    for n in 0..20u64 {
        let mut dim = || rng.random_range(2..=8usize);
        let da = [dim(), dim(), dim()];
        let cfg = LossConfig { lambda: 0.01, beta: 0.2, rho: 0.1 };
        worst = worst.max(worst_gradient_error(&Objective::Da(cfg), &da, n));
        let ssda: Vec<usize> = if n % 2 == 0 { vec![dim(), dim(), dim()] } else { vec![dim(), dim(), dim(), dim(), dim()] };
        worst = worst.max(worst_gradient_error(&Objective::Ssda { lambda: 0.01 }, &ssda, n + 100));
    }
    let elapsed = start.elapsed();
    report.check(
        "1 gradients",
        worst <= 1e-5 && elapsed < Duration::from_secs(60),
        format!("20 networks x 2 losses, worst relative error {worst:.2e}, {:.1} s", elapsed.as_secs_f64()),
    );
}

/// SSIM evaluated window by window with explicit 11x11 weights.
fn ssim_oracle(a: &Image, b: &Image) -> f64 {
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let (c1, c2) = (0.0001, 0.0009);
    let mut total = 0.0;
    let mut windows = 0;
    for r in 0..=a.height() - 11 {
        for c in 0..=a.width() - 11 {
            let cells = || (0..11).flat_map(|i| (0..11).map(move |j| (i, j)));
            let weight = |i: usize, j: usize| g[i] * g[j] / norm;
            let mean = |img: &Image| cells().map(|(i, j)| weight(i, j) * img.get(r + i, c + j)).sum::<f64>();
            let (mx, my) = (mean(a), mean(b));
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for (i, j) in cells() {
                let (dx, dy) = (a.get(r + i, c + j) - mx, b.get(r + i, c + j) - my);
                vx += weight(i, j) * dx * dx;
                vy += weight(i, j) * dy * dy;
                cov += weight(i, j) * dx * dy;
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            windows += 1;
        }
    }
    total / windows as f64
}

fn criterion_oracles(report: &mut Report) {
    let mut rng = seeded(77);
    let mut ssim_err: f64 = 0.0;
    for _ in 0..5 {
        let a = Image::from_fn(16, 16, |_, _| rng.random_range(0.0..1.0));
        let b = Image::from_fn(16, 16, |r, c| (a.get(r, c) + rng.random_range(-0.3..0.3)).clamp(0.0, 1.0));
        ssim_err = ssim_err.max((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs());
    }
    let mut tile_err: f64 = 0.0;
    for _ in 0..10 {
        let (w, h) = (rng.random_range(17..70), rng.random_range(17..70));
        let img = Image::from_fn(w, h, |_, _| rng.random_range(0.0..1.0));
        let side = rng.random_range(1..=17);
        let stride = (rng.random_range(1..=side), rng.random_range(1..=side));
        let back = reassemble(&tile(&img, side, stride).unwrap(), w, h).unwrap();
        for (x, y) in img.pixels().iter().zip(back.pixels()) {
            tile_err = tile_err.max((x - y).abs());
        }
    }
    report.check(
        "2 oracles",
        ssim_err <= 1e-10 && tile_err <= 1e-12,
        format!("SSIM vs brute force {ssim_err:.1e} on 5 pairs, tile/reassemble {tile_err:.1e} on 10 images"),
    );
}

fn draw_corruptions() -> Vec<Corruption> {
    let mut rng = seeded(31);
    let spec = CorruptionSpec::default();
    (0..100_000).map(|_| sample_corruption(&spec, &mut rng)).collect()
}

fn criterion_corruption(report: &mut Report) -> Vec<Corruption> {
    let start = Instant::now();
    let draws = draw_corruptions();
    let n = draws.len() as f64;
    let mean_gamma = draws.iter().map(|c| c.gamma).sum::<f64>() / n;
    let mean_var = draws.iter().map(|c| c.sigma * c.sigma).sum::<f64>() / n;
    let expected_var = (25.0f64 / 255.0).powi(2) / 2.0;
    let (eg, ev) = ((mean_gamma - 3.5).abs() / 3.5, (mean_var - expected_var).abs() / expected_var);
    let elapsed = start.elapsed();
    report.check(
        "3 corruption statistics",
        eg <= 0.01 && ev <= 0.02 && elapsed < Duration::from_secs(10),
        format!(
            "mean gamma {mean_gamma:.4} ({:.2}% off), mean sigma^2 {mean_var:.6} ({:.2}% off), {:.2} s",
            eg * 100.0,
            ev * 100.0,
            elapsed.as_secs_f64()
        ),
    );
    draws
}

fn criterion_gamma(report: &mut Report) {
    let mut rng = seeded(5);
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let img = if k < 5 {
            common::synthetic_image(300 + k, 48, 40)
        } else {
            Image::from_fn(33, 29, |_, _| rng.random_range(0.0..1.0))
        };
        let back = gamma_adjust(&gamma_darken(&img, 3.0).unwrap(), 1.0 / 3.0).unwrap();
        for (x, y) in img.pixels().iter().zip(back.pixels()) {
            worst = worst.max((x - y).abs());
        }
    }
    report.check("4 gamma inversion", worst <= 1e-9, format!("max error {worst:.1e} over 10 images"));
}

fn desk_config(images: Vec<PathBuf>) -> Config {
    Config {
        images,
        patches_per_image: 500,
        seed: 7,
        pretrain: vec!["10@0.1".into(), "10@0.1".into(), "10@0.01".into()],
        finetune: "50@0.1,*@0.01".into(),
        max_open_epochs: 400,
        ..Config::default()
    }
}

struct DeskRun {
    dataset: PathBuf,
    summary: TrainSummary,
    elapsed: Duration,
}

fn desk_run(config: &Config, dir: &Path) -> DeskRun {
    let start = Instant::now();
    let dataset = dir.join("train.llds");
    cmd_dataset(&DatasetArgs { config: config.clone(), out: dataset.clone() }, &mut std::io::sink()).unwrap();
    let args = TrainArgs {
        config: config.clone(),
        mode: TrainMode::Llnet,
        dataset: Some(dataset.clone()),
        dark_dataset: None,
        noisy_dataset: None,
        out: dir.join("llnet.ssda"),
        log: None,
    };
    let summary = cmd_train(&args, &mut std::io::sink()).unwrap();
    DeskRun { dataset, summary, elapsed: start.elapsed() }
}

fn held_out() -> (Image, Image) {
    let clean = common::synthetic_image(999, 128, 128);
    let input = add_gaussian_noise(&gamma_darken(&clean, 3.0).unwrap(), 25.0 / 255.0, 5).unwrap();
    (clean, input)
}

fn scores(clean: &Image, img: &Image) -> (f64, f64) {
    (psnr(clean, img, 1.0).unwrap(), ssim(clean, img).unwrap())
}

fn criterion_llnet(report: &mut Report, run: &DeskRun) -> f64 {
    let (clean, input) = held_out();
    let enhanced = enhance_image(&run.summary.model, &input, (3, 3)).unwrap();
    let (p_in, s_in) = scores(&clean, &input);
    let (p, s) = scores(&clean, &enhanced);
    let (p_he, s_he) = scores(&clean, &hist_equalize(&input, 256).unwrap());
    let (p_cl, s_cl) = scores(&clean, &clahe(&input, &ClaheParams::default()).unwrap());
    let finetune = &run.summary.stages[0].finetune;
    report.info(
        "5 desk-scale run",
        format!(
            "10,000 pairs, {} finetune epochs, {:.0} s; input {p_in:.2} dB / {s_in:.3}, LLNet {p:.2} dB / {s:.3}, HE {p_he:.2} dB / {s_he:.3}, CLAHE {p_cl:.2} dB / {s_cl:.3}",
            finetune.epochs.len(),
            run.elapsed.as_secs_f64()
        ),
    );
    report.check(
        "5 runtime",
        run.elapsed <= Duration::from_secs(3600),
        format!("{:.0} s", run.elapsed.as_secs_f64()),
    );
    report.check(
        "5 finetuning lowers validation loss",
        finetune.final_valid_loss() < finetune.initial_valid_loss,
        format!("{:.4} -> {:.4}", finetune.initial_valid_loss, finetune.final_valid_loss()),
    );
    report.check("5a PSNR gain", p >= p_in + 3.0, format!("{:+.2} dB", p - p_in));
    report.check("5b SSIM gain", s >= s_in + 0.1, format!("{:+.3}", s - s_in));
    report.check(
        "5c beats HE and CLAHE",
        p > p_he && p > p_cl && s > s_he && s > s_cl,
        format!("PSNR {p:.2} vs {p_he:.2} / {p_cl:.2}, SSIM {s:.3} vs {s_he:.3} / {s_cl:.3}"),
    );
    p
}

fn criterion_sllnet(report: &mut Report, config: &Config, run: &DeskRun, dir: &Path, llnet_psnr: f64) {
    // half the epochs per stage, so both stages together match the LLNet run
    let half = Config {
        pretrain: vec!["5@0.1".into(), "5@0.1".into(), "5@0.01".into()],
        finetune: "25@0.1,*@0.01".into(),
        ..config.clone()
    };
    let dark = dir.join("dark.llds");
    let noisy = dir.join("noisy.llds");
    for (mode, path) in [("dark_only", &dark), ("noise_only", &noisy)] {
        let config = Config { corruption: mode.into(), ..half.clone() };
        cmd_dataset(&DatasetArgs { config, out: path.clone() }, &mut std::io::sink()).unwrap();
    }
    let args = TrainArgs {
        config: half,
        mode: TrainMode::Sllnet,
        dataset: None,
        dark_dataset: Some(dark),
        noisy_dataset: Some(noisy),
        out: dir.join("sllnet.ssda"),
        log: None,
    };
    let summary = cmd_train(&args, &mut std::io::sink()).unwrap();
    let Model::Staged(staged) = &summary.model else { panic!("expected a staged model") };

    let (vx, vy) = Dataset::load(&run.dataset).unwrap().valid_matrices();
    let mse = |m: &dyn PatchModel| (&m.infer_batch(vx.view()).unwrap() - &vy).mapv(|d| d * d).mean().unwrap();
    let (both, contrast) = (mse(staged), mse(staged.contrast()));
    report.check(
        "6 staged beats contrast stage",
        both < contrast,
        format!(
            "validation MSE staged {both:.5}, contrast alone {contrast:.5}, denoise alone {:.5}, {:.0} s",
            mse(staged.denoise()),
            summary.elapsed.as_secs_f64()
        ),
    );
    let (clean, input) = held_out();
    let p = psnr(&clean, &enhance_image(&summary.model, &input, (3, 3)).unwrap(), 1.0).unwrap();
    report.info("6 parity", format!("S-LLNet {p:.2} dB vs LLNet {llnet_psnr:.2} dB ({:+.2} dB)", p - llnet_psnr));
}

fn criterion_sweep(report: &mut Report, run: &DeskRun, dir: &Path) {
    let (clean, input) = held_out();
    let (reference, noisy) = (dir.join("clean.png"), dir.join("input.png"));
    save_image(&clean, &reference).unwrap();
    save_image(&input, &noisy).unwrap();
    let csv = dir.join("sweep.csv");
    let args = SweepArgs {
        model: dir.join("llnet.ssda"),
        input: noisy,
        reference,
        strides: vec![3, 17],
        scales: vec![1.0, 0.75, 0.5, 0.375],
        csv: Some(csv.clone()),
    };
    let rows = cmd_sweep(&args, &mut std::io::sink()).unwrap();
    assert_eq!(run.summary.model.first_stage().patch_side(), 17);
    let mut sizes: Vec<f64> = rows.iter().map(|r| r.r).collect();
    sizes.dedup();
    let lines = std::fs::read_to_string(&csv).unwrap().lines().count();
    let best_p = rows.iter().find(|r| r.best_psnr);
    let best_s = rows.iter().find(|r| r.best_ssim);
    let describe = |r: Option<&SweepRow>| {
        r.map_or("none".to_string(), |r| format!("r={:.4} stride {} ({:.2} dB, {:.3})", r.r, r.stride, r.psnr, r.ssim))
    };
    report.check(
        "7 patch-size sweep",
        sizes.len() >= 4 && lines == rows.len() + 1 && best_p.is_some() && best_s.is_some(),
        format!("{} sizes, {} rows; PSNR best {}; SSIM best {}", sizes.len(), rows.len(), describe(best_p), describe(best_s)),
    );
}

fn criterion_determinism(report: &mut Report, draws: &[Corruption], config: &Config, first: &DeskRun, dir: &Path) {
    let again = desk_run(config, dir);
    let same_draws = draws == draw_corruptions().as_slice();
    let same_data = std::fs::read(&first.dataset).unwrap() == std::fs::read(&again.dataset).unwrap();
    let same_log = std::fs::read(&first.summary.log).unwrap() == std::fs::read(&again.summary.log).unwrap();
    report.check(
        "8 determinism",
        same_draws && same_data && same_log,
        format!("corruption draws {same_draws}, dataset bytes {same_data}, training log bytes {same_log}"),
    );
}

#[test]
fn acceptance() {
    let mut report = Report::default();
    criterion_gradients(&mut report);
    criterion_oracles(&mut report);
    let draws = criterion_corruption(&mut report);
    criterion_gamma(&mut report);

    let work = tempfile::tempdir().unwrap();
    let (first, second) = (work.path().join("a"), work.path().join("b"));
    std::fs::create_dir_all(&first).unwrap();
    std::fs::create_dir_all(&second).unwrap();
    let config = desk_config(common::write_images(work.path(), 20, 100, 96, 96));
    let run = desk_run(&config, &first);
    let llnet_psnr = criterion_llnet(&mut report, &run);
    criterion_sllnet(&mut report, &config, &run, &first, llnet_psnr);
    criterion_sweep(&mut report, &run, &first);
    criterion_determinism(&mut report, &draws, &config, &run, &second);

    assert!(report.failed.is_empty(), "failed criteria: {}", report.failed.join(", "));
}

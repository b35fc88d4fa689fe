//! Subcommands of the `llnet` tool. Each command reports progress to a
//! caller-supplied writer and returns a summary, so the binary and the tests
//! drive exactly the same code.

pub mod config;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};

use llnet::baselines::{self, ClaheParams};
use llnet::corpus::{self, fingerprint, generate_dataset, Dataset, Image};
use llnet::metrics;
use llnet::nn::{DenseLayer, Pairs, TrainHistory};
use llnet::reconstruct::{enhance_image, relative_patch_size, PatchModel};
use llnet::ssda::{
    self, build_llnet, build_sllnet, LlnetBuild, Model, ModelRole, TrainPhase, TrainingMeta,
};
use llnet::write_atomic;

pub use config::Config;

/// Bad invocation or missing input file; the binary exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for usage errors, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        2
    } else {
        1
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn load_image_arg(path: &Path, what: &str) -> Result<Image> {
    require_file(path, what)?;
    Ok(corpus::load_image(path)?)
}

fn load_model_arg(path: &Path) -> Result<Model> {
    require_file(path, "model file")?;
    ssda::load_model(path).with_context(|| format!("loading model {}", path.display()))
}

/// Quotes a CSV field when it contains a comma, quote or newline.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------- dataset

#[derive(Debug, Clone)]
pub struct DatasetArgs {
    pub config: Config,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub pairs: usize,
    pub train: usize,
    pub valid: usize,
    pub fingerprint: u64,
}

pub fn cmd_dataset(args: &DatasetArgs, out: &mut dyn Write) -> Result<DatasetSummary> {
    let cfg = &args.config;
    if cfg.images.is_empty() {
        return Err(usage("no source images given (config key `images` or positional arguments)"));
    }
    let spec = cfg.corruption_spec()?;
    let mut images = Vec::with_capacity(cfg.images.len());
    let mut failures = Vec::new();
    let mut missing = false;
    for path in &cfg.images {
        if !path.is_file() {
            missing = true;
            failures.push(format!("  {}: file not found", path.display()));
            continue;
        }
        match corpus::load_image(path) {
            Ok(img) => images.push(img),
            Err(e) => failures.push(format!("  {}: {e}", path.display())),
        }
    }
    if !failures.is_empty() {
        let msg = format!("could not load {} image(s):\n{}", failures.len(), failures.join("\n"));
        return Err(if missing { usage(msg) } else { anyhow!(msg) });
    }
    let dataset = generate_dataset(&images, cfg.patches_per_image, cfg.patch_side, &spec, cfg.seed)?;
    let bytes = dataset.encode();
    write_atomic(&args.out, &bytes).with_context(|| format!("writing {}", args.out.display()))?;
    let summary = DatasetSummary {
        pairs: dataset.len(),
        train: dataset.train.len(),
        valid: dataset.valid.len(),
        fingerprint: fingerprint(&bytes),
    };
    writeln!(
        out,
        "wrote {}: {} pairs from {} images ({} train / {} validation, mode {})",
        args.out.display(),
        summary.pairs,
        images.len(),
        summary.train,
        summary.valid,
        spec.mode
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Llnet,
    Sllnet,
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub config: Config,
    pub mode: TrainMode,
    /// Dark and noisy pairs, for `Llnet`.
    pub dataset: Option<PathBuf>,
    /// Darkened-only pairs, for `Sllnet`.
    pub dark_dataset: Option<PathBuf>,
    /// Noisy-only pairs, for `Sllnet`.
    pub noisy_dataset: Option<PathBuf>,
    pub out: PathBuf,
    /// Defaults to `<out>.log.csv`.
    pub log: Option<PathBuf>,
}

impl TrainArgs {
    pub fn log_path(&self) -> PathBuf {
        self.log.clone().unwrap_or_else(|| {
            let mut p = self.out.clone().into_os_string();
            p.push(".log.csv");
            PathBuf::from(p)
        })
    }
}

pub const TRAIN_LOG_HEADER: &str = "epoch,phase,train_loss,valid_loss,learning_rate";

#[derive(Debug, Clone)]
pub struct StageSummary {
    pub role: ModelRole,
    pub pretrain: Vec<TrainHistory>,
    pub finetune: TrainHistory,
}

impl From<&LlnetBuild> for StageSummary {
    fn from(b: &LlnetBuild) -> Self {
        Self {
            role: b.model.role(),
            pretrain: b.pretrain.clone(),
            finetune: b.finetune.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub model: Model,
    pub stages: Vec<StageSummary>,
    pub log: PathBuf,
    pub elapsed: Duration,
}

fn load_dataset(path: &Path, patch_side: usize) -> Result<(Dataset, Vec<u8>)> {
    require_file(path, "dataset file")?;
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let ds = Dataset::decode(&bytes).with_context(|| format!("decoding {}", path.display()))?;
    if ds.patch_side != patch_side {
        bail!(
            "{} holds {}x{} patches but the configuration expects {}x{}",
            path.display(),
            ds.patch_side,
            ds.patch_side,
            patch_side,
            patch_side
        );
    }
    if ds.train.is_empty() || ds.valid.is_empty() {
        bail!("{} needs at least one training and one validation pair", path.display());
    }
    Ok((ds, bytes))
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<TrainSummary> {
    let cfg = args.config.ssda_config()?;
    let paths: Vec<&PathBuf> = match args.mode {
        TrainMode::Llnet => match &args.dataset {
            Some(p) => vec![p],
            None => return Err(usage("--mode llnet needs --dataset")),
        },
        TrainMode::Sllnet => match (&args.dark_dataset, &args.noisy_dataset) {
            (Some(d), Some(n)) => vec![d, n],
            _ => return Err(usage("--mode sllnet needs both --dark-dataset and --noisy-dataset")),
        },
    };
    let mut sets = Vec::with_capacity(paths.len());
    let mut all_bytes = Vec::new();
    for p in &paths {
        let (ds, bytes) = load_dataset(p, cfg.patch_side)?;
        all_bytes.extend_from_slice(&bytes);
        sets.push(ds);
    }
    let meta = TrainingMeta {
        seed: args.config.seed,
        corpus_fingerprint: fingerprint(&all_bytes),
        notes: String::new(),
    };
    let matrices: Vec<_> = sets
        .iter()
        .map(|ds| (ds.train_matrices(), ds.valid_matrices()))
        .collect();
    let pairs: Vec<(Pairs<'_>, Pairs<'_>)> = matrices
        .iter()
        .map(|((tx, ty), (vx, vy))| Ok((Pairs::new(tx.view(), ty.view())?, Pairs::new(vx.view(), vy.view())?)))
        .collect::<Result<_>>()?;

    let log_path = args.log_path();
    let mut rows = vec![TRAIN_LOG_HEADER.to_string()];
    let mut last_phase = None;
    let start = Instant::now();
    let mut observer = |phase: &TrainPhase, rec: &llnet::nn::EpochRecord| {
        rows.push(format!(
            "{},{},{},{},{}",
            rec.epoch, phase, rec.train_loss, rec.valid_loss, rec.learning_rate
        ));
        if last_phase != Some(*phase) {
            last_phase = Some(*phase);
            let _ = writeln!(out, "{phase} ...");
        }
    };
    let result = match args.mode {
        TrainMode::Llnet => build_llnet(pairs[0].0, pairs[0].1, &cfg, ModelRole::Integrated, meta, &mut observer)
            .map(|b| (Model::Single(b.model.clone()), vec![StageSummary::from(&b)])),
        TrainMode::Sllnet => build_sllnet(pairs[0], pairs[1], &cfg, meta, &mut observer).map(|b| {
            let stages = vec![StageSummary::from(&b.contrast), StageSummary::from(&b.denoise)];
            (Model::Staged(b.into_model()), stages)
        }),
    };
    let elapsed = start.elapsed();
    let mut log = rows.join("\n");
    log.push('\n');
    write_atomic(&log_path, log.as_bytes()).with_context(|| format!("writing {}", log_path.display()))?;
    let (model, stages) =
        result.with_context(|| format!("training failed; epoch log kept at {}", log_path.display()))?;

    ssda::save_model(&model, &args.out)?;
    for s in &stages {
        writeln!(
            out,
            "{}: finetune validation loss {:.6} -> {:.6} over {} epochs{}",
            s.role.name(),
            s.finetune.initial_valid_loss,
            s.finetune.final_valid_loss(),
            s.finetune.epochs.len(),
            if s.finetune.stopped_early { " (stopping rule)" } else { "" }
        )?;
    }
    writeln!(
        out,
        "wrote {} and {} in {:.1} s",
        args.out.display(),
        log_path.display(),
        elapsed.as_secs_f64()
    )?;
    Ok(TrainSummary {
        model,
        stages,
        log: log_path,
        elapsed,
    })
}

// ---------------------------------------------------------------- enhance

/// Row and column stride, written `N` or `ROWS,COLS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stride(pub usize, pub usize);

impl std::str::FromStr for Stride {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad stride {s:?}"));
        match s.split_once(',') {
            Some((r, c)) => Ok(Stride(num(r)?, num(c)?)),
            None => {
                let n = num(s)?;
                Ok(Stride(n, n))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnhanceArgs {
    pub model: PathBuf,
    pub input: PathBuf,
    pub output: PathBuf,
    pub stride: Stride,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceSummary {
    pub width: usize,
    pub height: usize,
    pub relative_patch_size: f64,
    pub elapsed: Duration,
}

pub fn cmd_enhance(args: &EnhanceArgs, out: &mut dyn Write) -> Result<EnhanceSummary> {
    let model = load_model_arg(&args.model)?;
    let img = load_image_arg(&args.input, "input image")?;
    let side = model.patch_side();
    let start = Instant::now();
    let enhanced = enhance_image(&model, &img, (args.stride.0, args.stride.1))?;
    let elapsed = start.elapsed();
    corpus::save_image(&enhanced, &args.output)?;
    let r = relative_patch_size(side, side, img.width(), img.height())?;
    writeln!(
        out,
        "enhanced {}x{} in {:.3} s, relative patch size r = {:.5}; wrote {}",
        img.width(),
        img.height(),
        elapsed.as_secs_f64(),
        r,
        args.output.display()
    )?;
    Ok(EnhanceSummary {
        width: img.width(),
        height: img.height(),
        relative_patch_size: r,
        elapsed,
    })
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub reference: PathBuf,
    pub candidates: Vec<PathBuf>,
    pub csv: Option<PathBuf>,
}

pub const METRICS_CSV_HEADER: &str = "name,psnr_db,ssim";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    /// `(PSNR dB, SSIM)` or why this candidate could not be scored.
    pub result: Result<(f64, f64), String>,
}

fn score(reference: &Image, path: &Path) -> Result<(f64, f64), String> {
    if !path.is_file() {
        return Err("file not found".into());
    }
    let img = corpus::load_image(path).map_err(|e| e.to_string())?;
    let psnr = metrics::psnr(reference, &img, 1.0).map_err(|e| e.to_string())?;
    let ssim = metrics::ssim(reference, &img).map_err(|e| e.to_string())?;
    Ok((psnr, ssim))
}

/// Scores every candidate against the reference. Candidates that fail are
/// reported and skipped; the command still fails at the end if any did.
pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<Vec<EvalRow>> {
    if args.candidates.is_empty() {
        return Err(usage("no candidate images given"));
    }
    let reference = load_image_arg(&args.reference, "reference image")?;
    let rows: Vec<EvalRow> = args
        .candidates
        .iter()
        .map(|p| EvalRow {
            name: p.display().to_string(),
            result: score(&reference, p),
        })
        .collect();

    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    writeln!(out, "{:<width$}  {:>10}  {:>6}", "name", "PSNR (dB)", "SSIM")?;
    let mut csv = vec![METRICS_CSV_HEADER.to_string()];
    for row in &rows {
        match &row.result {
            Ok((p, s)) => {
                writeln!(out, "{:<width$}  {:>10.2}  {:>6.3}", row.name, p, s)?;
                csv.push(format!("{},{},{}", csv_field(&row.name), p, s));
            }
            Err(e) => writeln!(out, "{:<width$}  error: {e}", row.name)?,
        }
    }
    if let Some(path) = &args.csv {
        let mut text = csv.join("\n");
        text.push('\n');
        write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    }
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    if failed > 0 {
        bail!("{failed} of {} candidates could not be evaluated", rows.len());
    }
    Ok(rows)
}

// ---------------------------------------------------------------- baseline

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    He,
    Clahe,
    Ga,
}

#[derive(Debug, Clone)]
pub struct BaselineArgs {
    pub method: BaselineMethod,
    pub input: PathBuf,
    pub output: PathBuf,
    pub gamma: f64,
    pub clahe: ClaheParams,
}

pub fn cmd_baseline(args: &BaselineArgs, out: &mut dyn Write) -> Result<()> {
    let img = load_image_arg(&args.input, "input image")?;
    let result = match args.method {
        BaselineMethod::He => baselines::hist_equalize(&img, args.clahe.bins)?,
        BaselineMethod::Clahe => baselines::clahe(&img, &args.clahe)?,
        BaselineMethod::Ga => baselines::gamma_adjust(&img, args.gamma)?,
    };
    corpus::save_image(&result, &args.output)?;
    writeln!(out, "wrote {}", args.output.display())?;
    Ok(())
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub model: PathBuf,
    pub input: PathBuf,
    pub reference: PathBuf,
    pub strides: Vec<usize>,
    /// Image rescale factors; each changes the relative patch size.
    pub scales: Vec<f64>,
    pub csv: Option<PathBuf>,
}

pub const SWEEP_CSV_HEADER: &str = "r,scale,stride,width,height,psnr_db,ssim,best";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub r: f64,
    pub scale: f64,
    pub stride: usize,
    pub width: usize,
    pub height: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub best_psnr: bool,
    pub best_ssim: bool,
}

impl SweepRow {
    fn best_label(&self) -> &'static str {
        match (self.best_psnr, self.best_ssim) {
            (true, true) => "psnr+ssim",
            (true, false) => "psnr",
            (false, true) => "ssim",
            (false, false) => "",
        }
    }
}

/// First index holding the largest value.
fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Enhances the input at every (scale, stride) combination and scores it
/// against the equally rescaled reference. Rows come back sorted by `r`.
pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<Vec<SweepRow>> {
    if args.strides.is_empty() || args.scales.is_empty() {
        return Err(usage("sweep needs at least one stride and one scale"));
    }
    let model = load_model_arg(&args.model)?;
    let input = load_image_arg(&args.input, "input image")?;
    let reference = load_image_arg(&args.reference, "reference image")?;
    if (input.width(), input.height()) != (reference.width(), reference.height()) {
        bail!(
            "input is {}x{} but reference is {}x{}",
            input.width(),
            input.height(),
            reference.width(),
            reference.height()
        );
    }
    let side = model.patch_side();
    let mut rows = Vec::new();
    for &scale in &args.scales {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(usage(format!("scale must be positive, got {scale}")));
        }
        let w = (input.width() as f64 * scale).round() as usize;
        let h = (input.height() as f64 * scale).round() as usize;
        if w < side.max(metrics::SSIM_WINDOW) || h < side.max(metrics::SSIM_WINDOW) {
            bail!("scale {scale} shrinks the image to {w}x{h}, below the {side}x{side} patch");
        }
        let (x, y) = if scale == 1.0 {
            (input.clone(), reference.clone())
        } else {
            (input.resize_bilinear(w, h), reference.resize_bilinear(w, h))
        };
        let r = relative_patch_size(side, side, w, h)?;
        for &stride in &args.strides {
            let enhanced = enhance_image(&model, &x, (stride, stride))?;
            rows.push(SweepRow {
                r,
                scale,
                stride,
                width: w,
                height: h,
                psnr: metrics::psnr(&y, &enhanced, 1.0)?,
                ssim: metrics::ssim(&y, &enhanced)?,
                best_psnr: false,
                best_ssim: false,
            });
        }
    }
    rows.sort_by(|a, b| a.r.total_cmp(&b.r).then(a.stride.cmp(&b.stride)));
    if let Some(i) = argmax(rows.iter().map(|r| r.psnr)) {
        rows[i].best_psnr = true;
    }
    if let Some(i) = argmax(rows.iter().map(|r| r.ssim)) {
        rows[i].best_ssim = true;
    }

    writeln!(out, "{:>8}  {:>6}  {:>6}  {:>9}  {:>10}  {:>6}  best", "r", "scale", "stride", "size", "PSNR (dB)", "SSIM")?;
    let mut csv = vec![SWEEP_CSV_HEADER.to_string()];
    for row in &rows {
        writeln!(
            out,
            "{:>8.5}  {:>6}  {:>6}  {:>9}  {:>10.2}  {:>6.3}  {}",
            row.r,
            row.scale,
            row.stride,
            format!("{}x{}", row.width, row.height),
            row.psnr,
            row.ssim,
            row.best_label()
        )?;
        csv.push(format!(
            "{},{},{},{},{},{},{},{}",
            row.r, row.scale, row.stride, row.width, row.height, row.psnr, row.ssim, row.best_label()
        ));
    }
    let pick_psnr: fn(&SweepRow) -> bool = |r| r.best_psnr;
    let pick_ssim: fn(&SweepRow) -> bool = |r| r.best_ssim;
    for (label, pick) in [("PSNR", pick_psnr), ("SSIM", pick_ssim)] {
        if let Some(row) = rows.iter().find(|r| pick(r)) {
            writeln!(out, "best {label}: r = {:.5} (scale {}, stride {})", row.r, row.scale, row.stride)?;
        }
    }
    if let Some(path) = &args.csv {
        let mut text = csv.join("\n");
        text.push('\n');
        write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(rows)
}

// ---------------------------------------------------------------- visualize

#[derive(Debug, Clone)]
pub struct VisualizeArgs {
    pub model: PathBuf,
    pub layer: usize,
    /// For two-stage models; defaults to the contrast stage.
    pub stage: Option<ModelRole>,
    pub output: PathBuf,
}

/// Every unit's incoming weights as a min-max normalized square tile, laid
/// out on a ceil-square grid with 1-pixel separators. A constant weight
/// vector becomes a uniform 0.5 tile.
pub fn weight_mosaic(layer: &DenseLayer) -> Result<Image> {
    let fan_in = layer.in_dim();
    let side = (fan_in as f64).sqrt().round() as usize;
    if side * side != fan_in {
        bail!("layer has {fan_in} inputs, which do not form a square tile");
    }
    let units = layer.out_dim();
    let cols = (units as f64).sqrt().ceil() as usize;
    let rows = units.div_ceil(cols);
    let cell = side + 1;
    let (width, height) = (cols * cell + 1, rows * cell + 1);
    let mut pixels = vec![0.0; width * height];
    for (u, w) in layer.weights().rows().into_iter().enumerate() {
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (r0, c0) = ((u / cols) * cell + 1, (u % cols) * cell + 1);
        for (k, &v) in w.iter().enumerate() {
            let norm = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            pixels[(r0 + k / side) * width + c0 + k % side] = norm;
        }
    }
    Ok(Image::new(width, height, pixels)?)
}

pub fn cmd_visualize_weights(args: &VisualizeArgs, out: &mut dyn Write) -> Result<(usize, usize)> {
    let model = load_model_arg(&args.model)?;
    let stage = match (&model, args.stage) {
        (Model::Single(m), None) => m,
        (Model::Single(_), Some(role)) => {
            return Err(usage(format!("--stage {} given for a single-stage model", role.name())))
        }
        (Model::Staged(s), None | Some(ModelRole::ContrastStage)) => s.contrast(),
        (Model::Staged(s), Some(ModelRole::DenoiseStage)) => s.denoise(),
        (Model::Staged(_), Some(ModelRole::Integrated)) => {
            return Err(usage("--stage must be contrast or denoise"))
        }
    };
    let layers = stage.network().layers();
    let layer = layers.get(args.layer).ok_or_else(|| {
        usage(format!(
            "layer index {} out of range; the model has {} layers",
            args.layer,
            layers.len()
        ))
    })?;
    let mosaic = weight_mosaic(layer)?;
    corpus::save_image(&mosaic, &args.output)?;
    writeln!(
        out,
        "wrote {} ({}x{}, {} units)",
        args.output.display(),
        mosaic.width(),
        mosaic.height(),
        layer.out_dim()
    )?;
    Ok((mosaic.width(), mosaic.height()))
}

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use toposeg::grid::{binarize, load_image, save_image, save_labels_png};
use toposeg::loss::{gradient_check, total_loss};
use toposeg::metrics::{evaluate, BettiErrorParams, MetricReport};
use toposeg::numfmt::{round_sig, sig9};
use toposeg::persistence::{betti_curve, betti_numbers, write_diagram_csv, Dims};
use toposeg::preprocess::{preprocess_pipeline, PreprocessConfig};
use toposeg::train::{load_dataset, synth_dataset, train_samples, AdamConfig, SynthKind, TrainConfig};
use toposeg::{compute_persistence, FiltrationKind, GrayImage};

/// Topological segmentation toolkit.
#[derive(Parser)]
#[command(name = "toposeg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Persistence diagram of an image as CSV.
    Persist(PersistArgs),
    /// Betti numbers of a binarized image, or a Betti curve.
    Betti(BettiArgs),
    /// BCE, topological and total loss of a likelihood map against a mask.
    Loss(LossArgs),
    /// Finite-difference check of the topological gradient.
    Gradcheck(GradcheckArgs),
    /// Topological preprocessing of an input image.
    Preprocess(PreprocessArgs),
    /// Pixel and Betti-error metrics of a prediction.
    Metrics(MetricsArgs),
    /// Train the small segmenter on a dataset directory.
    Train(TrainArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PersistArgs {
    image: PathBuf,
    #[arg(long, default_value = "sublevel")]
    filtration: FiltrationKind,
    /// Death value given to the essential class; `none` keeps it infinite.
    #[arg(long, default_value = "1.0")]
    cap: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BettiArgs {
    image: PathBuf,
    /// Foreground is `value >= threshold`.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Comma-separated ascending thresholds; prints a curve as CSV.
    #[arg(long, value_delimiter = ',')]
    curve: Option<Vec<f64>>,
    #[arg(long, default_value = "sublevel")]
    filtration: FiltrationKind,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = toposeg::loss::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value = "0,1")]
    dims: Dims,
    #[arg(long, default_value = "superlevel")]
    filtration: FiltrationKind,
    /// Writes d(total)/df as CSV `x,y,value`.
    #[arg(long)]
    grad_out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    size: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value = "0,1")]
    dims: Dims,
    #[arg(long, default_value = "superlevel")]
    filtration: FiltrationKind,
    /// Likelihood map to check instead of a random one.
    #[arg(long, requires = "gt")]
    pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    gt: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// 16-bit PNG of component labels.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    smooth: usize,
    #[arg(long, default_value_t = 2)]
    border: usize,
    /// `sublevel` for dark objects, `superlevel` for bright ones.
    #[arg(long, default_value = "sublevel")]
    filtration: FiltrationKind,
    #[arg(long)]
    invert_input: bool,
    #[arg(long, default_value_t = 1)]
    min_components: usize,
}

#[derive(Args)]
struct BettiOpts {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    patch: usize,
    #[arg(long = "n-patches", default_value_t = 100)]
    n_patches: usize,
    #[arg(long, default_value_t = 0.5)]
    bin_threshold: f64,
}

impl BettiOpts {
    fn params(&self) -> BettiErrorParams {
        BettiErrorParams {
            patch: self.patch,
            n_patches: self.n_patches,
            seed: self.seed,
            bin_threshold: self.bin_threshold,
        }
    }
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[command(flatten)]
    betti: BettiOpts,
    /// CSV header and row instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of `NNN_img.png` / `NNN_mask.png` pairs.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    patch: usize,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = toposeg::loss::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value = "0,1")]
    dims: Dims,
    #[arg(long, default_value = "superlevel")]
    filtration: FiltrationKind,
    #[arg(long, default_value_t = 0)]
    warmup_epochs: usize,
    #[arg(long, default_value_t = 64)]
    betti_patch: usize,
    #[arg(long, default_value_t = 100)]
    betti_n_patches: usize,
    /// Seed of the validation Betti patches; defaults to `--seed`.
    #[arg(long)]
    betti_seed: Option<u64>,
    /// History CSV; stdout when omitted.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    kind: SynthKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<toposeg::Error> for Failure {
    fn from(e: toposeg::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn usage(cond: bool, msg: impl Into<String>) -> CmdResult {
    if cond {
        Ok(())
    } else {
        Err(Failure::Usage(msg.into()))
    }
}

/// Rounds every float in `v` to 9 significant digits.
fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap_or(f64::NAN), 9);
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn print_json(v: Value) -> CmdResult {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &round_json(v)).map_err(|e| Failure::Runtime(e.into()))?;
    writeln!(out)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Writes to `path`, or stdout when it is `None`.
fn with_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CmdResult {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            body(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = io::stdout().lock();
            body(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn parse_cap(s: &str) -> Result<Option<f64>, Failure> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(c) if c.is_finite() => Ok(Some(c)),
        _ => Err(Failure::Usage(format!("invalid --cap '{s}' (a number or 'none')"))),
    }
}

fn check_unit(name: &str, v: f64) -> CmdResult {
    usage((0.0..=1.0).contains(&v), format!("--{name} must lie in [0, 1], got {v}"))
}

fn cmd_persist(a: PersistArgs) -> CmdResult {
    let cap = parse_cap(&a.cap)?;
    let img = load_image(&a.image)?;
    let diagram = compute_persistence(&img, a.filtration, cap)?;
    with_output(a.out.as_deref(), |w| write_diagram_csv(&diagram, w))
}

fn cmd_betti(a: BettiArgs) -> CmdResult {
    check_unit("threshold", a.threshold)?;
    if let Some(ts) = &a.curve {
        usage(!ts.is_empty(), "--curve needs at least one threshold")?;
        usage(ts.windows(2).all(|w| w[0] <= w[1]), "--curve thresholds must be ascending")?;
    }
    let img = load_image(&a.image)?;
    match a.curve {
        Some(ts) => {
            let curve = betti_curve(&img, a.filtration, &ts)?;
            with_output(None, |w| {
                writeln!(w, "threshold,beta0,beta1")?;
                for (t, b) in ts.iter().zip(&curve) {
                    writeln!(w, "{},{},{}", sig9(*t), b.beta0, b.beta1)?;
                }
                Ok(())
            })
        }
        None => {
            let b = betti_numbers(&binarize(&img, a.threshold));
            print_json(json!({ "beta0": b.beta0, "beta1": b.beta1, "threshold": a.threshold }))
        }
    }
}

fn cmd_loss(a: LossArgs) -> CmdResult {
    usage(a.lambda >= 0.0 && a.lambda.is_finite(), format!("--lambda must be nonnegative, got {}", a.lambda))?;
    let f = load_image(&a.pred)?;
    let g = binarize(&load_image(&a.gt)?, 0.5).to_gray();
    let r = total_loss(&f, &g, a.lambda, a.dims, a.filtration)?;
    if let Some(path) = &a.grad_out {
        let mut w = create(path)?;
        writeln!(w, "x,y,value")?;
        for y in 0..r.grad_f.height() {
            for x in 0..r.grad_f.width() {
                writeln!(w, "{x},{y},{}", sig9(r.grad_f.get(x, y)))?;
            }
        }
        w.flush()?;
    }
    print_json(json!({
        "bce": r.bce,
        "topo": r.topo,
        "lambda": r.lambda,
        "total": r.total,
        "n_pairs_dim0": r.matching.n_pairs(0),
        "n_pairs_dim1": r.matching.n_pairs(1),
    }))
}

fn cmd_gradcheck(a: GradcheckArgs) -> CmdResult {
    usage(a.size >= 2, "--size must be at least 2")?;
    usage(a.step > 0.0 && a.step < 0.1, format!("--step must lie in (0, 0.1), got {}", a.step))?;
    let (f, g) = match (&a.pred, &a.gt) {
        (Some(p), Some(q)) => (load_image(p)?, binarize(&load_image(q)?, 0.5).to_gray()),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let f = GrayImage::from_fn(a.size, a.size, |_, _| rng.random_range(0.05..0.95));
            let g = GrayImage::from_fn(a.size, a.size, |_, _| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
            (f, g)
        }
    };
    let c = gradient_check(&f, &g, a.dims, a.filtration, a.step)?;
    print_json(json!({
        "max_rel_dev": c.max_rel_dev,
        "n_checked": c.n_checked,
        "n_skipped": c.n_skipped,
        "step": a.step,
        "seed": a.seed,
    }))
}

fn cmd_preprocess(a: PreprocessArgs) -> CmdResult {
    let cfg = PreprocessConfig {
        smooth_k: a.smooth,
        border_d: a.border,
        filtration: a.filtration,
        invert_input: a.invert_input,
        min_components: a.min_components,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let img = load_image(&a.image)?;
    let out = preprocess_pipeline(&img, &cfg)?;
    let clamped = out.image.map(|v| v.clamp(0.0, 1.0));
    save_image(&clamped, &a.out)?;
    if let Some(path) = &a.labels {
        let l = &out.labeling;
        save_labels_png(l.width, l.height, &l.labels, path)?;
    }
    let dropped: Vec<Value> = out
        .labeling
        .dropped
        .iter()
        .map(|p| json!({ "birth": p.birth, "death": p.death, "x": p.birth_pixel.x, "y": p.birth_pixel.y }))
        .collect();
    let threshold = if out.selection.threshold.is_finite() {
        json!(out.selection.threshold)
    } else {
        Value::Null
    };
    print_json(json!({
        "threshold": threshold,
        "n_significant": out.selection.n_significant,
        "n_components": out.labeling.n_components,
        "dropped_points": dropped,
    }))
}

fn metrics_params(b: &BettiOpts) -> Result<BettiErrorParams, Failure> {
    usage(b.patch >= 1, "--patch must be positive")?;
    usage(b.n_patches >= 1, "--n-patches must be positive")?;
    check_unit("bin-threshold", b.bin_threshold)?;
    Ok(b.params())
}

const METRICS_HEADER: &str = "accuracy,dice,completeness,correctness,quality,betti_error";

fn metrics_row(r: &MetricReport) -> String {
    [r.accuracy, r.dice, r.completeness, r.correctness, r.quality, r.betti_error]
        .map(sig9)
        .join(",")
}

fn cmd_metrics(a: MetricsArgs) -> CmdResult {
    let params = metrics_params(&a.betti)?;
    let pred = load_image(&a.pred)?;
    let gt = load_image(&a.gt)?;
    let r = evaluate(&pred, &gt, &params)?;
    if a.csv {
        with_output(None, |w| writeln!(w, "{METRICS_HEADER}\n{}", metrics_row(&r)))
    } else {
        print_json(serde_json::to_value(&r).map_err(|e| Failure::Runtime(e.into()))?)
    }
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let cfg = TrainConfig {
        patch: a.patch,
        batch: a.batch,
        epochs: a.epochs,
        adam: AdamConfig {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        },
        lambda: a.lambda,
        seed: a.seed,
        dims: a.dims,
        filtration: a.filtration,
        warmup_epochs: a.warmup_epochs,
        init_scale: 0.1,
        validation: BettiErrorParams {
            patch: a.betti_patch,
            n_patches: a.betti_n_patches,
            seed: a.betti_seed.unwrap_or(a.seed),
            bin_threshold: 0.5,
        },
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let samples = load_dataset(&a.data)?;
    let outcome = train_samples(&samples, &cfg, |r| {
        eprintln!(
            "epoch {:>4}  bce {:.5}  topo {:.4}  betti_error {:.3}  dice {:.4}",
            r.epoch, r.bce, r.topo, r.validation.betti_error, r.validation.dice
        );
    })?;
    with_output(a.history.as_deref(), |w| outcome.history.write_csv(w))?;
    if let Some(path) = &a.checkpoint {
        outcome.model.save(path)?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    usage(a.size >= 32, format!("--size must be at least 32, got {}", a.size))?;
    let counts = synth_dataset(a.kind, a.n, a.size, a.seed, &a.out)?;
    print_json(json!({
        "kind": match a.kind { SynthKind::Rings => "rings", SynthKind::Blobs => "blobs" },
        "n": a.n,
        "size": a.size,
        "seed": a.seed,
        "n_objects": counts,
    }))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Persist(a) => cmd_persist(a),
        Command::Betti(a) => cmd_betti(a),
        Command::Loss(a) => cmd_loss(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Train(a) => cmd_train(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

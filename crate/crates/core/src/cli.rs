//! Command-line frontend.
//!
//! Settings merge as defaults < `--config` file < `--set` pairs < dedicated
//! flags. Reports go to stdout as `key=value` lines; every output file is
//! written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::fuse::{fuse, FusionConfig};
use crate::imageio::{
    add_gaussian_noise, read_pgm_file, synth_multifocus, synthetic_scene, write_atomic, write_pgm_file, ImageBuffer,
};
use crate::learn::{sample_training_patches, train, AnalysisOperator, TrainConfig};
use crate::metrics::{psnr, q_abf, q_mi, MetricReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Patch sizes and noise levels covered by `sweep`.
pub const SWEEP_PATCH_SIZES: [usize; 5] = [5, 6, 7, 8, 9];
pub const SWEEP_SIGMAS: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    Usage(String),
    Internal(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(Error::NumericalFailure { .. }) => EXIT_NUMERICAL,
            CliError::Lib(_) | CliError::Usage(_) => EXIT_BAD_INPUT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Every tunable of a run, keyed by name.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub fusion: FusionConfig,
    /// Patch size was given explicitly rather than taken from the operator.
    pub patch_size_set: bool,
    pub h: usize,
    pub m: usize,
    pub patches: usize,
    pub sigma: f64,
    pub sigma_b: f64,
    pub split: Option<usize>,
    pub size: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub images: Option<PathBuf>,
    pub op: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            fusion: FusionConfig::default(),
            patch_size_set: false,
            h: 64,
            m: 49,
            patches: 10_000,
            sigma: 0.0,
            sigma_b: 2.0,
            split: None,
            size: 128,
            seed: 0,
            threads: None,
            images: None,
            op: None,
            out: None,
            out_dir: None,
            truth: None,
            inputs: Vec::new(),
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "lambda",
    "mu",
    "adaptive_mu",
    "relaxation",
    "max_admm_iters",
    "max_fos_iters",
    "admm_tol",
    "cosupport_tol",
    "rank_target",
    "sweeps",
    "seed",
    "h",
    "m",
    "patches",
    "epsilon",
    "lambda_local",
    "selection_lambda",
    "lambda_global",
    "patch_size",
    "overlap",
    "global_rounds",
    "sigma",
    "sigma_b",
    "split",
    "size",
    "threads",
    "images",
    "op",
    "out",
    "out_dir",
    "truth",
    "inputs",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad value for {key}: {value:?}")))
}

impl RunConfig {
    /// Sets one key. ADMM settings apply to both training and fusion.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        match key {
            "lambda" => self.train.lambda = parse(key, v)?,
            "mu" => {
                self.train.mu = parse(key, v)?;
                self.fusion.mu = self.train.mu;
            }
            "adaptive_mu" => {
                self.train.adaptive_mu = parse(key, v)?;
                self.fusion.adaptive_mu = self.train.adaptive_mu;
            }
            "relaxation" => {
                self.train.relaxation = parse(key, v)?;
                self.fusion.relaxation = self.train.relaxation;
            }
            "max_admm_iters" => {
                self.train.max_admm_iters = parse(key, v)?;
                self.fusion.max_admm_iters = self.train.max_admm_iters;
            }
            "max_fos_iters" => {
                self.train.max_fos_iters = parse(key, v)?;
                self.fusion.max_fos_iters = self.train.max_fos_iters;
            }
            "admm_tol" => {
                self.train.admm_tol = parse(key, v)?;
                self.fusion.admm_tol = self.train.admm_tol;
            }
            "cosupport_tol" => {
                self.train.cosupport_tol = parse(key, v)?;
                self.fusion.cosupport_tol = self.train.cosupport_tol;
            }
            "rank_target" => {
                self.train.rank_target = if v.is_empty() || v == "none" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "sweeps" => self.train.sweeps = parse(key, v)?,
            "seed" => {
                self.seed = parse(key, v)?;
                self.train.seed = self.seed;
            }
            "h" => self.h = parse(key, v)?,
            "m" => self.m = parse(key, v)?,
            "patches" => self.patches = parse(key, v)?,
            "epsilon" => self.fusion.epsilon = parse(key, v)?,
            "lambda_local" => self.fusion.lambda_local = parse(key, v)?,
            "selection_lambda" => self.fusion.selection_lambda = parse(key, v)?,
            "lambda_global" => self.fusion.lambda_global = parse(key, v)?,
            "patch_size" => {
                self.fusion.patch_size = parse(key, v)?;
                self.patch_size_set = true;
            }
            "overlap" => self.fusion.overlap = parse(key, v)?,
            "global_rounds" => self.fusion.global_rounds = parse(key, v)?,
            "sigma" => self.sigma = parse(key, v)?,
            "sigma_b" => self.sigma_b = parse(key, v)?,
            "split" => self.split = Some(parse(key, v)?),
            "size" => self.size = parse(key, v)?,
            "threads" => self.threads = Some(parse(key, v)?),
            "images" => self.images = Some(PathBuf::from(v)),
            "op" => self.op = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            "out_dir" => self.out_dir = Some(PathBuf::from(v)),
            "truth" => self.truth = Some(PathBuf::from(v)),
            "inputs" => {
                self.inputs = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            _ => return Err(usage(format!("unknown config key: {key}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key = value", lineno + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| usage(format!("config line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train.validate()?;
        self.fusion.validate()?;
        if self.h < self.m {
            return Err(usage(format!("need h >= m, got h={} m={}", self.h, self.m)));
        }
        if square_side(self.m).is_none() {
            return Err(usage(format!("m={} is not a square patch length", self.m)));
        }
        if self.patches == 0 {
            return Err(usage("patches must be >= 1"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() || !(self.sigma_b > 0.0) || !self.sigma_b.is_finite() {
            return Err(usage("need sigma >= 0 and sigma_b > 0"));
        }
        if self.size < 16 {
            return Err(usage(format!("size must be >= 16, got {}", self.size)));
        }
        if self.threads == Some(0) {
            return Err(usage("threads must be >= 1"));
        }
        Ok(())
    }
}

fn square_side(m: usize) -> Option<usize> {
    let n = (m as f64).sqrt().round() as usize;
    (n >= 1 && n * n == m).then_some(n)
}

/// Operator rows used for patch size `n`: the 64/49 redundancy of the
/// 7x7 setup, rounded up.
pub fn rows_for_patch_size(n: usize) -> usize {
    (n * n * 64).div_ceil(49)
}

#[derive(Parser, Debug)]
#[command(name = "cosfuse", version, about = "Cosparse analysis operator learning and multi-focus fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn an operator from the PGM images in a directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        h: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        patches: Option<usize>,
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Fuse K registered images with a learned operator.
    Fuse {
        #[command(flatten)]
        common: Common,
        inputs: Vec<PathBuf>,
        #[arg(long)]
        op: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add Gaussian noise of this std to every input first.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        winner_map: Option<PathBuf>,
        #[arg(long)]
        activity: Option<PathBuf>,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Write a ground truth and its half-blurred pair.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Use this image as ground truth instead of a generated scene.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        sigma_b: Option<f64>,
        #[arg(long)]
        split: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Print fusion metrics of F against sources A and B.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Patch size by noise level sweep on a synthetic pair, as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Training images; generated scenes are used when absent.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        patches: Option<usize>,
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long)]
        sigma_b: Option<f64>,
    },
}

fn build_config(common: &Common, flags: &[(&str, Option<String>)]) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(t) = common.threads {
        cfg.set("threads", &t.to_string())?;
    }
    if let Some(s) = common.seed {
        cfg.set("seed", &s.to_string())?;
    }
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn path_opt(v: &Option<PathBuf>) -> Option<String> {
    v.as_ref().map(|p| p.display().to_string())
}

fn required<'a>(v: &'a Option<PathBuf>, name: &str) -> CliResult<&'a Path> {
    v.as_deref().ok_or_else(|| usage(format!("missing required setting: {name}")))
}

/// Runs the CLI on explicit arguments, writing reports to `stdout`.
pub fn run_with<I, S>(args: I, stdout: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_BAD_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(report) => {
            if stdout.write_all(report.as_bytes()).is_err() {
                return EXIT_INTERNAL;
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os(), &mut std::io::stdout().lock())
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?
            .install(f),
    }
}

fn dispatch(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Train {
            common,
            images,
            out,
            h,
            m,
            patches,
            sweeps,
            lambda,
        } => {
            let cfg = build_config(
                &common,
                &[
                    ("images", path_opt(&images)),
                    ("out", path_opt(&out)),
                    ("h", opt(&h)),
                    ("m", opt(&m)),
                    ("patches", opt(&patches)),
                    ("sweeps", opt(&sweeps)),
                    ("lambda", opt(&lambda)),
                ],
            )?;
            with_threads(cfg.threads, || cmd_train(&cfg))
        }
        Command::Fuse {
            common,
            inputs,
            op,
            out,
            sigma,
            winner_map,
            activity,
            diagnostics,
        } => {
            let joined = (!inputs.is_empty()).then(|| {
                inputs
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            });
            let cfg = build_config(
                &common,
                &[
                    ("inputs", joined),
                    ("op", path_opt(&op)),
                    ("out", path_opt(&out)),
                    ("sigma", opt(&sigma)),
                ],
            )?;
            let extra = FuseOutputs {
                winner_map,
                activity,
                diagnostics,
            };
            with_threads(cfg.threads, || cmd_fuse(&cfg, &extra))
        }
        Command::Synth {
            common,
            out_dir,
            truth,
            size,
            sigma_b,
            split,
            sigma,
        } => {
            let cfg = build_config(
                &common,
                &[
                    ("out_dir", path_opt(&out_dir)),
                    ("truth", path_opt(&truth)),
                    ("size", opt(&size)),
                    ("sigma_b", opt(&sigma_b)),
                    ("split", opt(&split)),
                    ("sigma", opt(&sigma)),
                ],
            )?;
            cmd_synth(&cfg)
        }
        Command::Eval {
            common,
            a,
            b,
            fused,
            truth,
        } => {
            let cfg = build_config(&common, &[])?;
            with_threads(cfg.threads, || cmd_eval(&a, &b, &fused, truth.as_deref()))
        }
        Command::Sweep {
            common,
            out,
            images,
            truth,
            size,
            patches,
            sweeps,
            sigma_b,
        } => {
            let cfg = build_config(
                &common,
                &[
                    ("out", path_opt(&out)),
                    ("images", path_opt(&images)),
                    ("truth", path_opt(&truth)),
                    ("size", opt(&size)),
                    ("patches", opt(&patches)),
                    ("sweeps", opt(&sweeps)),
                    ("sigma_b", opt(&sigma_b)),
                ],
            )?;
            with_threads(cfg.threads, || cmd_sweep(&cfg))
        }
    }
}

/// The `.pgm` files of a directory in name order, or a single file.
pub fn load_images(path: &Path) -> CliResult<Vec<ImageBuffer>> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![read_pgm_file(path)?]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(usage(format!("{}: no .pgm images found", path.display())));
    }
    files.iter().map(|p| read_pgm_file(p).map_err(CliError::from)).collect()
}

fn train_operator(cfg: &RunConfig, images: &[ImageBuffer], h: usize, n: usize) -> CliResult<(AnalysisOperator, String)> {
    let y = sample_training_patches(images, n, cfg.patches, cfg.seed)?;
    let (op, report) = train(&y, &cfg.train, h)?;
    Ok((op, report.to_kv()))
}

fn cmd_train(cfg: &RunConfig) -> CliResult<String> {
    let images = load_images(required(&cfg.images, "images")?)?;
    let out = required(&cfg.out, "out")?;
    let n = square_side(cfg.m).ok_or_else(|| usage("m must be a square"))?;
    let (op, report) = train_operator(cfg, &images, cfg.h, n)?;
    write_atomic(out, op.to_text().as_bytes())?;
    Ok(format!("h={}\nm={}\npatches={}\n{report}", cfg.h, cfg.m, cfg.patches))
}

struct FuseOutputs {
    winner_map: Option<PathBuf>,
    activity: Option<PathBuf>,
    diagnostics: Option<PathBuf>,
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

/// Noise seed of input `k`, shared across noise levels.
pub fn noise_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add(k as u64)
}

fn fusion_config_for(cfg: &RunConfig, op: &AnalysisOperator) -> CliResult<FusionConfig> {
    let n = square_side(op.m()).ok_or_else(|| usage(format!("operator m={} is not a square", op.m())))?;
    if cfg.patch_size_set && cfg.fusion.patch_size != n {
        return Err(usage(format!(
            "patch_size={} does not match the operator's {n}x{n} patches",
            cfg.fusion.patch_size
        )));
    }
    let fc = FusionConfig {
        patch_size: n,
        ..cfg.fusion.clone()
    };
    fc.validate()?;
    Ok(fc)
}

fn cmd_fuse(cfg: &RunConfig, extra: &FuseOutputs) -> CliResult<String> {
    if cfg.inputs.is_empty() {
        return Err(usage("fuse needs at least one input image"));
    }
    let op_path = required(&cfg.op, "op")?;
    let out = required(&cfg.out, "out")?;
    let text = std::fs::read_to_string(op_path).map_err(|e| Error::io(op_path, e))?;
    let op = AnalysisOperator::from_text(&text)?;
    let mut images = Vec::with_capacity(cfg.inputs.len());
    for (k, p) in cfg.inputs.iter().enumerate() {
        let img = read_pgm_file(p)?;
        images.push(if cfg.sigma > 0.0 {
            add_gaussian_noise(&img, cfg.sigma, noise_seed(cfg.seed, k))?
        } else {
            img
        });
    }
    let fc = fusion_config_for(cfg, &op)?;
    let result = fuse(&images, &op, &fc)?;
    let winners = extra.winner_map.clone().unwrap_or_else(|| sibling(out, "winners.txt"));
    let acts = extra.activity.clone().unwrap_or_else(|| sibling(out, "activity.txt"));
    let diag = extra.diagnostics.clone().unwrap_or_else(|| sibling(out, "diag.txt"));
    let report = result.diagnostics.to_kv();
    write_pgm_file(out, &result.fused)?;
    write_atomic(&winners, result.winner_map.to_text().as_bytes())?;
    write_atomic(&acts, result.activity.to_text().as_bytes())?;
    write_atomic(&diag, report.as_bytes())?;
    Ok(report)
}

/// Ground truth for synth and sweep: the given file or a generated scene.
fn load_truth(cfg: &RunConfig) -> CliResult<ImageBuffer> {
    match &cfg.truth {
        Some(p) => Ok(read_pgm_file(p)?),
        None => Ok(synthetic_scene(cfg.size, cfg.size, cfg.seed)),
    }
}

fn cmd_synth(cfg: &RunConfig) -> CliResult<String> {
    let dir = required(&cfg.out_dir, "out_dir")?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let truth = load_truth(cfg)?;
    let split = cfg.split.unwrap_or(truth.width() / 2);
    let (mut i1, mut i2) = synth_multifocus(&truth, cfg.sigma_b, split)?;
    if cfg.sigma > 0.0 {
        i1 = add_gaussian_noise(&i1, cfg.sigma, noise_seed(cfg.seed, 0))?;
        i2 = add_gaussian_noise(&i2, cfg.sigma, noise_seed(cfg.seed, 1))?;
    }
    let paths = [dir.join("truth.pgm"), dir.join("i1.pgm"), dir.join("i2.pgm")];
    for (p, img) in paths.iter().zip([&truth, &i1, &i2]) {
        write_pgm_file(p, img)?;
    }
    let mut s = String::new();
    for (k, p) in ["truth", "i1", "i2"].iter().zip(&paths) {
        let _ = writeln!(s, "{k}={}", p.display());
    }
    let _ = writeln!(s, "split={split}");
    Ok(s)
}

fn cmd_eval(a: &Path, b: &Path, fused: &Path, truth: Option<&Path>) -> CliResult<String> {
    let (ia, ib, f) = (read_pgm_file(a)?, read_pgm_file(b)?, read_pgm_file(fused)?);
    let t = truth.map(read_pgm_file).transpose()?;
    Ok(MetricReport::evaluate(&ia, &ib, &f, t.as_ref())?.to_kv())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub sigma: f64,
    pub q_mi: f64,
    pub q_abf: f64,
    pub psnr: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("n,sigma,q_mi,q_abf,psnr\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.6},{:.6},{:.4}", r.n, r.sigma, r.q_mi, r.q_abf, r.psnr);
    }
    s
}

/// Parses the CSV written by [`sweep_csv`].
pub fn parse_sweep_csv(text: &str) -> CliResult<Vec<SweepRow>> {
    let mut lines = text.lines();
    if lines.next() != Some("n,sigma,q_mi,q_abf,psnr") {
        return Err(usage("sweep table header mismatch"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(usage(format!("bad sweep row: {l}")));
            }
            Ok(SweepRow {
                n: parse("n", f[0])?,
                sigma: parse("sigma", f[1])?,
                q_mi: parse("q_mi", f[2])?,
                q_abf: parse("q_abf", f[3])?,
                psnr: parse("psnr", f[4])?,
            })
        })
        .collect()
}

/// Training scenes used by `sweep` when no images are supplied; distinct
/// from the scene being fused.
pub fn default_training_scenes(size: usize, seed: u64) -> Vec<ImageBuffer> {
    (0..3)
        .map(|i| synthetic_scene(size, size, seed.wrapping_add(1000 + i)))
        .collect()
}

/// Trains one operator per patch size and fuses the noisy pair at every
/// noise level. Metrics compare against the clean pair and the truth.
pub fn run_sweep(cfg: &RunConfig, training: &[ImageBuffer], truth: &ImageBuffer) -> CliResult<Vec<SweepRow>> {
    let split = cfg.split.unwrap_or(truth.width() / 2);
    let (i1, i2) = synth_multifocus(truth, cfg.sigma_b, split)?;
    let mut rows = Vec::new();
    for &n in &SWEEP_PATCH_SIZES {
        let (op, _) = train_operator(cfg, training, rows_for_patch_size(n), n)?;
        let fc = FusionConfig {
            patch_size: n,
            ..cfg.fusion.clone()
        };
        for &sigma in &SWEEP_SIGMAS {
            let inputs = if sigma > 0.0 {
                vec![
                    add_gaussian_noise(&i1, sigma, noise_seed(cfg.seed, 0))?,
                    add_gaussian_noise(&i2, sigma, noise_seed(cfg.seed, 1))?,
                ]
            } else {
                vec![i1.clone(), i2.clone()]
            };
            let fused = fuse(&inputs, &op, &fc)?.fused;
            rows.push(SweepRow {
                n,
                sigma,
                q_mi: q_mi(&i1, &i2, &fused)?,
                q_abf: q_abf(&i1, &i2, &fused)?,
                psnr: psnr(&fused, truth)?,
            });
        }
    }
    Ok(rows)
}

fn cmd_sweep(cfg: &RunConfig) -> CliResult<String> {
    let out = required(&cfg.out, "out")?;
    let training = match &cfg.images {
        Some(p) => load_images(p)?,
        None => default_training_scenes(cfg.size, cfg.seed),
    };
    let truth = load_truth(cfg)?;
    let rows = run_sweep(cfg, &training, &truth)?;
    let csv = sweep_csv(&rows);
    write_atomic(out, csv.as_bytes())?;
    Ok(csv)
}

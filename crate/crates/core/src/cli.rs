//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{dataset_from_csv, dataset_to_csv, run_sweep, rate_fit_from_cells, sweep_model, Summary, SweepConfig};
use crate::model::Dataset;
use crate::numerics::{RngStream, Vector};
use crate::poly::{loss_poly, multi_step_output_polys, one_step_output_polys, EtaPoly, PolyLimits};
use crate::theory::{mp_third_moment_check_with, theory_report, MP_PROBES_PER_MATRIX};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "LRTRANSFER_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_INSUFFICIENT: i32 = 4;

/// Accepted range for the MP third-moment check.
pub const RMT_BAND: (f64, f64) = (4.5, 5.5);
/// Smallest width at which `rmt` judges PASS/FAIL.
pub const RMT_MIN_JUDGED_N: usize = 1024;

#[derive(Debug, Parser)]
#[command(name = "lrtransfer", version, about = "Learning-rate sweeps and limits for width-scaled MLPs")]
pub struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train over a learning-rate grid and write results.csv and summary.json.
    Sweep(SweepArgs),
    /// Closed-form infinite-width predictions for a dataset.
    Theory(TheoryArgs),
    /// Dump the output polynomials in the learning rate for one instance.
    Poly(PolyArgs),
    /// Monte-Carlo check of the MP third moment.
    Rmt(RmtArgs),
    /// Fit the argmin convergence rate of a sweep summary.
    Ratefit(RatefitArgs),
    /// Write a sweep's training set as CSV.
    Gendata(GendataArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConfigArgs {
    /// Flat TOML sweep config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value`, repeatable; list keys take comma-separated values.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<SweepConfig> {
        let text = match &self.config {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        SweepConfig::from_toml(&text, &self.overrides)
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Output directory (default: the config's `output`, else the output root).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing results.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Dataset CSV instead of the config's generator.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Depth (default: the config's).
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub steps: Vec<usize>,
    /// Use the first K training inputs as probes (default: all).
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long, default_value_t = 41)]
    pub curve_points: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PolyArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Width (default: the config's first).
    #[arg(long)]
    pub width: Option<usize>,
    /// Index into the config's seed list.
    #[arg(long, default_value_t = 0)]
    pub seed_index: usize,
    /// Number of GD steps.
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    /// Use the first K training inputs as probes.
    #[arg(long, default_value_t = 1)]
    pub probes: usize,
    /// Also expand the training loss.
    #[arg(long)]
    pub loss: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RmtArgs {
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Probe pairs per sampled matrix.
    #[arg(long, default_value_t = MP_PROBES_PER_MATRIX)]
    pub probes: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RatefitArgs {
    /// summary.json written by `sweep`.
    pub summary: PathBuf,
    /// Where to write the updated summary (default: in place).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GendataArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Write the full generated set rather than the training subsample.
    #[arg(long)]
    pub full: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Argument(_) => EXIT_CONFIG,
        Error::DegenerateData(_) => EXIT_DEGENERATE,
        Error::InsufficientInput(_) | Error::EmptyCell => EXIT_INSUFFICIENT,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Theory(a) => cmd_theory(&a),
        Command::Poly(a) => cmd_poly(&a),
        Command::Rmt(a) => cmd_rmt(&a),
        Command::Ratefit(a) => cmd_ratefit(&a),
        Command::Gendata(a) => cmd_gendata(&a),
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn out_dir(explicit: Option<&Path>, name: &str) -> Result<PathBuf> {
    let dir = explicit.map_or_else(|| out_root().join(name), Path::to_path_buf);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::config("<serialize>", e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg = a.cfg.load()?;
    let dir = match (&a.out, &cfg.output) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => out_root().join(&cfg.experiment),
    };
    let csv = dir.join("results.csv");
    let summary_path = dir.join("summary.json");
    if !a.force && (csv.exists() || summary_path.exists()) {
        return Err(Error::config(
            "output",
            format!("{} already holds results; pass --force to overwrite", dir.display()),
        ));
    }
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    let result = run_sweep(&cfg)?;
    crate::harness::write_records_csv(&csv, &result.records)?;
    let summary = result.summarize();
    summary.write(&summary_path)?;
    let overflow = result.overflow_count();
    let empty = summary.cells.iter().filter(|c| c.eta_opt.is_none()).count();
    println!("{} records, {} cells -> {}", result.records.len(), summary.cells.len(), dir.display());
    if overflow > 0 {
        eprintln!("warning: {overflow} losses overflowed, {empty} cells without a finite loss");
    }
    if let Some(fit) = &summary.rate_fit {
        println!("rate fit slope {:.4} over widths {:?}", fit.slope, fit.widths);
    }
    Ok(())
}

fn training_probes(data: &Dataset, k: usize) -> Vec<Vector> {
    (0..k.min(data.len())).map(|i| data.input(i)).collect()
}

#[derive(Serialize)]
struct Provenance<'a, A: Serialize> {
    args: &'a A,
    config: &'a SweepConfig,
}

pub fn cmd_theory(a: &TheoryArgs) -> Result<()> {
    let cfg = a.cfg.load()?;
    let data = match &a.data {
        Some(p) => dataset_from_csv(&std::fs::read_to_string(p)?)?,
        None => cfg.dataset()?,
    };
    let depth = a.depth.unwrap_or(cfg.depth);
    let probes = training_probes(&data, a.probes.unwrap_or(data.len()));
    let report = theory_report(&data, depth, &probes, &a.steps, a.curve_points)?;
    let dir = out_dir(a.out.as_deref(), "theory")?;
    std::fs::write(dir.join("config.toml"), to_toml(&Provenance { args: a, config: &cfg })?)?;
    write_json(&dir.join("theory.json"), &report)?;
    println!(
        "eta_star {} loss {} ({} samples, L = {depth})",
        report.eta_star_one_step, report.loss_at_eta_star, report.samples
    );
    Ok(())
}

#[derive(Serialize)]
struct PolyDump {
    param: String,
    width: usize,
    depth: usize,
    seed: u64,
    steps: usize,
    outputs: Vec<EtaPoly>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loss: Option<EtaPoly>,
}

pub fn cmd_poly(a: &PolyArgs) -> Result<()> {
    let cfg = a.cfg.load()?;
    let data = cfg.dataset()?;
    let param = cfg.param[0].clone();
    let width = a.width.unwrap_or(cfg.widths[0]);
    let model = sweep_model(&cfg, &param, width, a.seed_index)?;
    let k = if a.loss { data.len() } else { a.probes };
    let probes = training_probes(&data, k);
    let outputs = if a.steps == 1 {
        one_step_output_polys(&model, &data, &probes)?
    } else {
        multi_step_output_polys(&model, &data, &probes, a.steps, &PolyLimits::default())?
    };
    let loss = if a.loss { Some(loss_poly(&outputs, data.targets())?) } else { None };
    let outputs = outputs.into_iter().take(a.probes).collect();
    let dump = PolyDump {
        param,
        width,
        depth: cfg.depth,
        seed: cfg.seeds[a.seed_index],
        steps: a.steps,
        outputs,
        loss,
    };
    let dir = out_dir(a.out.as_deref(), "poly")?;
    std::fs::write(dir.join("config.toml"), to_toml(&Provenance { args: a, config: &cfg })?)?;
    write_json(&dir.join("poly.json"), &dump)?;
    for (i, p) in dump.outputs.iter().enumerate() {
        println!("probe {i}: {:?}", p.coeffs());
    }
    if let Some(l) = &dump.loss {
        println!("loss: {:?}", l.coeffs());
    }
    Ok(())
}

#[derive(Serialize)]
struct RmtReport {
    n: usize,
    trials: usize,
    probes: usize,
    seed: u64,
    mean: f64,
    std_err: Option<f64>,
    verdict: Option<bool>,
}

/// PASS/FAIL for the MP check, or `None` when the run is too small to judge.
pub fn rmt_verdict(n: usize, trials: usize, mean: f64) -> Option<bool> {
    (n >= RMT_MIN_JUDGED_N && trials >= 2).then(|| (RMT_BAND.0..=RMT_BAND.1).contains(&mean))
}

pub fn cmd_rmt(a: &RmtArgs) -> Result<()> {
    let mc = mp_third_moment_check_with(a.n, a.trials, a.probes, &RngStream::new(a.seed, 0))?;
    let verdict = rmt_verdict(a.n, a.trials, mc.mean);
    let std_err = mc.std_err.is_finite().then_some(mc.std_err);
    match std_err {
        Some(se) => println!("n = {} trials = {} mean = {:.6} std_err = {:.6}", a.n, a.trials, mc.mean, se),
        None => println!("n = {} trials = {} mean = {:.6} std_err = n/a", a.n, a.trials, mc.mean),
    }
    match verdict {
        Some(true) => println!("PASS (mean in [{}, {}])", RMT_BAND.0, RMT_BAND.1),
        Some(false) => println!("FAIL (mean outside [{}, {}])", RMT_BAND.0, RMT_BAND.1),
        None => println!("no verdict: needs n >= {RMT_MIN_JUDGED_N} and at least 2 trials"),
    }
    let dir = out_dir(a.out.as_deref(), "rmt")?;
    std::fs::write(dir.join("config.toml"), to_toml(a)?)?;
    write_json(
        &dir.join("rmt.json"),
        &RmtReport {
            n: a.n,
            trials: a.trials,
            probes: a.probes,
            seed: a.seed,
            mean: mc.mean,
            std_err,
            verdict,
        },
    )
}

pub fn cmd_ratefit(a: &RatefitArgs) -> Result<()> {
    let mut summary = Summary::read(&a.summary)?;
    let fit = rate_fit_from_cells(&summary.cells)?;
    let dropped = summary.cells.iter().filter(|c| c.eta_theory.is_some()).count() - fit.widths.len();
    println!("slope {} intercept {} widths {:?}", fit.slope, fit.intercept, fit.widths);
    if dropped > 0 {
        println!("{dropped} exact hits left out of the fit");
    }
    summary.rate_fit = Some(fit);
    let out = a.out.clone().unwrap_or_else(|| a.summary.clone());
    summary.write(&out)?;
    let prov = out.with_file_name("ratefit.toml");
    std::fs::write(prov, to_toml(a)?)?;
    Ok(())
}

pub fn cmd_gendata(a: &GendataArgs) -> Result<()> {
    let mut cfg = a.cfg.load()?;
    if a.full {
        cfg.subsample = cfg.data_size;
    }
    let data = cfg.dataset()?;
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&a.out, dataset_to_csv(&data))?;
    std::fs::write(a.out.with_extension("toml"), cfg.to_toml()?)?;
    println!("{} samples, d = {} -> {}", data.len(), data.input_dim(), a.out.display());
    Ok(())
}

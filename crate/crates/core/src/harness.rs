//! Synthetic data, learning-rate sweeps and their summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{init_model, Activation, Dataset, ModelState};
use crate::numerics::{job_stream_id, stats, Matrix, RngStream, StreamKey, Vector};
use crate::optimizer::{train_losses, AdamConfig, LinearNet};
use crate::parametrization::{preset, OptimizerKind};
use crate::theory::eta_star_one_step;

/// `ω ~ N(0, I/d)`, `x ~ N(0, I)`, `ε ~ N(0, noise_std²)`, `y = ωᵀx + ε`.
pub fn gen_linear_dataset(d: usize, count: usize, noise_std: f64, rng: &mut RngStream) -> Result<Dataset> {
    let (x, omega, z) = draw_linear(d, count, noise_std, rng)?;
    Ok(Dataset::new(x, z)?.with_ground_truth(omega))
}

/// As [`gen_linear_dataset`] with `y = Sign(ωᵀx + ε)` (`+1` at zero).
pub fn gen_sign_dataset(d: usize, count: usize, noise_std: f64, rng: &mut RngStream) -> Result<Dataset> {
    let (x, omega, z) = draw_linear(d, count, noise_std, rng)?;
    let y = Vector::from_vec(z.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect());
    Ok(Dataset::new(x, y)?.with_ground_truth(omega))
}

fn draw_linear(d: usize, count: usize, noise_std: f64, rng: &mut RngStream) -> Result<(Matrix, Vector, Vector)> {
    if d == 0 || count == 0 {
        return Err(Error::Argument("dataset needs d >= 1 and N >= 1".into()));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::Argument(format!("noise std must be >= 0, got {noise_std}")));
    }
    let omega = rng.gaussian_vector(d, (d as f64).powf(-0.5));
    let x = rng.gaussian_matrix(count, d, 1.0)?;
    let mut z = x.matvec(&omega)?;
    let noise = rng.gaussian_vector(count, noise_std);
    z.axpy(1.0, &noise)?;
    Ok((x, omega, z))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Linear,
    Sign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
    /// Frozen initial weights stored in `f32` (linear GD only).
    F32,
}

/// How `eta_min` / `eta_max` are read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaScale {
    Absolute,
    /// Multiples of the limiting one-step optimum of the sweep's dataset.
    Theory,
}

fn default_experiment() -> String {
    "sweep".into()
}

/// A learning-rate sweep. Every key is flat so that it can be overridden
/// with `key=value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_experiment")]
    pub experiment: String,
    pub param: Vec<String>,
    pub widths: Vec<usize>,
    pub depth: usize,
    pub input_dim: usize,
    pub data: DataKind,
    pub data_size: usize,
    pub noise_std: f64,
    /// Train on the first `subsample` points of the generated dataset.
    pub subsample: usize,
    pub data_seed: u64,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    /// Steps at which the loss is recorded; the longest sets the run length.
    pub steps: Vec<usize>,
    pub eta_min: f64,
    pub eta_max: f64,
    pub eta_points: usize,
    pub eta_scale: EtaScale,
    pub seeds: Vec<u64>,
    pub precision: Precision,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Output directory; the CLI falls back to its output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            experiment: default_experiment(),
            param: vec!["mup".into()],
            widths: vec![128, 256, 512, 1024, 2048, 4096],
            depth: 3,
            input_dim: 100,
            data: DataKind::Linear,
            data_size: 1000,
            noise_std: 0.1,
            subsample: 100,
            data_seed: 0,
            activation: Activation::Linear,
            optimizer: OptimizerKind::Gd,
            steps: vec![1],
            eta_min: 0.1,
            eta_max: 10.0,
            eta_points: 40,
            eta_scale: EtaScale::Theory,
            seeds: vec![0, 1, 2],
            precision: Precision::F64,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            output: None,
        }
    }
}

/// Log-spaced grid from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![min];
    }
    let (a, b) = (min.ln(), max.ln());
    (0..points)
        .map(|i| {
            if i == 0 {
                min
            } else if i == points - 1 {
                max
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

fn strictly_increasing<T: PartialOrd>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.param.is_empty() {
            return Err(Error::config("param", "at least one parametrization is required"));
        }
        for p in &self.param {
            preset(p).map_err(|e| Error::config("param", e.to_string()))?;
        }
        if self.widths.is_empty() || self.widths[0] == 0 || !strictly_increasing(&self.widths) {
            return Err(Error::config("widths", "must be non-empty, positive and strictly increasing"));
        }
        if self.depth == 0 {
            return Err(Error::config("depth", "must be >= 1"));
        }
        if self.input_dim == 0 {
            return Err(Error::config("input_dim", "must be >= 1"));
        }
        if self.data_size == 0 {
            return Err(Error::config("data_size", "must be >= 1"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::config("noise_std", "must be >= 0"));
        }
        if self.subsample == 0 || self.subsample > self.data_size {
            return Err(Error::config("subsample", "must lie in 1..=data_size"));
        }
        if self.steps.is_empty() {
            return Err(Error::config("steps", "at least one step is required"));
        }
        let mut sorted = self.steps.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.steps.len() {
            return Err(Error::config("steps", "duplicate step"));
        }
        if self.eta_points == 0 {
            return Err(Error::config("eta_points", "must be >= 1"));
        }
        if !(self.eta_min > 0.0) || !self.eta_min.is_finite() {
            return Err(Error::config("eta_min", "must be positive"));
        }
        if !(self.eta_max > self.eta_min) && self.eta_points > 1 || !self.eta_max.is_finite() {
            return Err(Error::config("eta_max", "must be finite and exceed eta_min"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.precision == Precision::F32
            && !(self.activation == Activation::Linear && self.optimizer == OptimizerKind::Gd)
        {
            return Err(Error::config("precision", "f32 is only available for linear networks trained with gd"));
        }
        for (key, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(key, "must lie in [0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("eps", "must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// The sweep's training set.
    pub fn dataset(&self) -> Result<Dataset> {
        let id = StreamKey::new("dataset").push_str(&self.experiment).finish();
        let mut rng = RngStream::new(self.data_seed, id);
        let full = match self.data {
            DataKind::Linear => gen_linear_dataset(self.input_dim, self.data_size, self.noise_std, &mut rng)?,
            DataKind::Sign => gen_sign_dataset(self.input_dim, self.data_size, self.noise_std, &mut rng)?,
        };
        if self.subsample < full.len() {
            full.head(self.subsample)
        } else {
            Ok(full)
        }
    }

    /// The learning-rate grid, resolving [`EtaScale::Theory`] against `data`.
    pub fn eta_grid(&self, data: &Dataset) -> Result<Vec<f64>> {
        let scale = match self.eta_scale {
            EtaScale::Absolute => 1.0,
            EtaScale::Theory => eta_star_one_step(data, self.depth)?,
        };
        Ok(log_grid(self.eta_min * scale, self.eta_max * scale, self.eta_points))
    }

    fn theory_applies(&self, param: &str) -> bool {
        param.eq_ignore_ascii_case("mup")
            && self.optimizer == OptimizerKind::Gd
            && self.activation == Activation::Linear
    }
}

/// Keys accepted in a sweep config file or override.
pub const SWEEP_KEYS: &[&str] = &[
    "experiment", "param", "widths", "depth", "input_dim", "data", "data_size", "noise_std",
    "subsample", "data_seed", "activation", "optimizer", "steps", "eta_min", "eta_max",
    "eta_points", "eta_scale", "seeds", "precision", "beta1", "beta2", "eps", "output",
];

/// Keys whose override value is a comma-separated list.
pub const LIST_KEYS: &[&str] = &["param", "widths", "steps", "seeds"];

fn scalar_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Parses `key=value`; list keys split on commas.
pub fn parse_override(text: &str, known: &[&str], lists: &[&str]) -> Result<(String, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::config(text, "override must look like key=value"))?;
    let key = key.trim();
    if !known.contains(&key) {
        return Err(Error::config(key, "unknown key"));
    }
    let value = if lists.contains(&key) {
        let raw = raw.trim().trim_start_matches('[').trim_end_matches(']');
        toml::Value::Array(raw.split(',').filter(|s| !s.trim().is_empty()).map(scalar_value).collect())
    } else {
        scalar_value(raw)
    };
    Ok((key.to_string(), value))
}

/// Builds a config from defaults, a flat TOML document and overrides, in
/// that order. Errors name the first offending key.
pub fn load_flat_config<T>(text: &str, overrides: &[String], known: &[&str], lists: &[&str]) -> Result<T>
where
    T: Default + Serialize + serde::de::DeserializeOwned,
{
    let user: toml::Table = toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
    let mut given: Vec<(String, toml::Value)> = Vec::new();
    for (k, v) in user {
        if !known.contains(&k.as_str()) {
            return Err(Error::config(k, "unknown key"));
        }
        given.push((k, v));
    }
    for o in overrides {
        given.push(parse_override(o, known, lists)?);
    }
    let base = toml::Table::try_from(T::default()).map_err(|e| Error::config("<default>", e.to_string()))?;
    for (k, v) in &given {
        let mut one = base.clone();
        one.insert(k.clone(), v.clone());
        if let Err(e) = one.try_into::<T>() {
            return Err(Error::config(k.clone(), e.to_string()));
        }
    }
    let mut all = base;
    for (k, v) in given {
        all.insert(k, v);
    }
    all.try_into::<T>().map_err(|e| Error::config("<file>", e.to_string()))
}

impl SweepConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let cfg: SweepConfig = load_flat_config(text, overrides, SWEEP_KEYS, LIST_KEYS)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<serialize>", e.to_string()))
    }
}

/// One training loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub param: String,
    pub width: usize,
    pub depth: usize,
    pub seed: u64,
    pub step: usize,
    pub eta: f64,
    pub train_loss: f64,
}

pub const CSV_HEADER: &str = "param,width,depth,seed,step,eta,train_loss";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub records: Vec<Record>,
    /// Limiting one-step optimum, when the dataset admits one.
    pub eta_theory: Option<f64>,
    pub theory_params: Vec<String>,
}

struct Job<'a> {
    param: &'a str,
    width: usize,
    seed_index: usize,
    seed: u64,
}

fn job_model(cfg: &SweepConfig, job: &Job<'_>) -> Result<ModelState> {
    sweep_model(cfg, job.param, job.width, job.seed_index)
}

/// The initialization a sweep uses for `(param, width, seeds[seed_index])`.
pub fn sweep_model(cfg: &SweepConfig, param: &str, width: usize, seed_index: usize) -> Result<ModelState> {
    let seed = *cfg
        .seeds
        .get(seed_index)
        .ok_or_else(|| Error::config("seeds", format!("no seed at index {seed_index}")))?;
    let p = preset(param)?;
    let stream = job_stream_id(&cfg.experiment, param, width, cfg.depth, seed_index as u64);
    let mut rng = RngStream::new(seed, stream);
    init_model(&p, width, cfg.depth, cfg.input_dim, cfg.activation, &mut rng)
}

/// Losses of every `η` in `etas`, at every step `0..=max_step`.
fn job_losses(cfg: &SweepConfig, model: ModelState, data: &Dataset, etas: &[f64], max_step: usize) -> Result<Vec<Vec<f64>>> {
    if cfg.activation == Activation::Linear && cfg.optimizer == OptimizerKind::Gd {
        match cfg.precision {
            Precision::F64 => {
                let net = LinearNet::from_model(model)?;
                etas.iter().map(|&eta| net.gd_losses(data, eta, max_step)).collect()
            }
            Precision::F32 => {
                let net = LinearNet::compact(&model)?;
                drop(model);
                etas.iter().map(|&eta| net.gd_losses(data, eta, max_step)).collect()
            }
        }
    } else {
        let adam = cfg.adam();
        etas.iter()
            .map(|&eta| train_losses(&model, data, cfg.optimizer, adam, eta, max_step))
            .collect()
    }
}

/// Runs every (parametrization, width, seed) job over the whole grid.
///
/// Jobs run on the current rayon pool; each job's initialization comes from
/// its own stream, so results do not depend on the pool size.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let data = cfg.dataset()?;
    let etas = cfg.eta_grid(&data)?;
    let eta_theory = eta_star_one_step(&data, cfg.depth).ok();
    run_sweep_on(cfg, &data, &etas, eta_theory)
}

/// [`run_sweep`] on an explicit dataset and grid.
pub fn run_sweep_on(cfg: &SweepConfig, data: &Dataset, etas: &[f64], eta_theory: Option<f64>) -> Result<SweepResult> {
    if data.input_dim() != cfg.input_dim {
        return Err(Error::config("input_dim", format!("dataset has dimension {}", data.input_dim())));
    }
    if etas.is_empty() || !strictly_increasing(etas) || etas[0] <= 0.0 {
        return Err(Error::config("eta_min", "grid must be positive and strictly increasing"));
    }
    let max_step = *cfg.steps.iter().max().expect("validated non-empty");
    let mut steps = cfg.steps.clone();
    steps.sort_unstable();
    let mut jobs = Vec::new();
    for p in &cfg.param {
        for &width in &cfg.widths {
            for (seed_index, &seed) in cfg.seeds.iter().enumerate() {
                jobs.push(Job {
                    param: p,
                    width,
                    seed_index,
                    seed,
                });
            }
        }
    }
    let per_job: Vec<Vec<Record>> = jobs
        .par_iter()
        .map(|job| {
            let model = job_model(cfg, job)?;
            let losses = job_losses(cfg, model, data, etas, max_step)?;
            log::debug!("done {} n={} seed={}", job.param, job.width, job.seed);
            let mut out = Vec::with_capacity(steps.len() * etas.len());
            for &step in &steps {
                for (eta, l) in etas.iter().zip(&losses) {
                    out.push(Record {
                        param: job.param.to_string(),
                        width: job.width,
                        depth: cfg.depth,
                        seed: job.seed,
                        step,
                        eta: *eta,
                        train_loss: l[step],
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let theory_params = cfg
        .param
        .iter()
        .filter(|p| cfg.theory_applies(p))
        .cloned()
        .collect();
    Ok(SweepResult {
        records: per_job.into_iter().flatten().collect(),
        eta_theory,
        theory_params,
    })
}

/// Grid point with the smallest finite loss; ties go to the smaller `η`.
pub fn argmin_lr(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = points.iter().copied().filter(|(_, l)| l.is_finite()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(f64, f64)> = None;
    for (eta, l) in sorted {
        if best.map_or(true, |(_, bl)| l < bl) {
            best = Some((eta, l));
        }
    }
    best.ok_or(Error::EmptyCell)
}

/// Sub-grid estimate of the argmin: vertex of the parabola through the grid
/// argmin and its two neighbours in `ln η`. Falls back to the grid point at
/// the grid edge, next to a non-finite loss, or on a non-convex triple.
pub fn argmin_lr_refined(points: &[(f64, f64)]) -> Result<f64> {
    let (eta, _) = argmin_lr(points)?;
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let i = sorted.iter().position(|p| p.0 == eta).ok_or(Error::EmptyCell)?;
    if i == 0 || i + 1 == sorted.len() {
        return Ok(eta);
    }
    let (x0, y0) = (sorted[i - 1].0.ln(), sorted[i - 1].1);
    let (x1, y1) = (sorted[i].0.ln(), sorted[i].1);
    let (x2, y2) = (sorted[i + 1].0.ln(), sorted[i + 1].1);
    if !(y0.is_finite() && y2.is_finite()) {
        return Ok(eta);
    }
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if den >= 0.0 {
        return Ok(eta);
    }
    Ok((x1 - 0.5 * num / den).clamp(x0, x2).exp())
}

/// Log-log fit of argmin deviations against width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub widths: Vec<usize>,
}

/// OLS of `ln |η̂_n - η∞|` on `ln n`; zero deviations are left out.
pub fn convergence_rate_fit(widths: &[usize], deviations: &[f64]) -> Result<RateFit> {
    if widths.len() != deviations.len() {
        return Err(Error::dims("convergence_rate_fit", widths.len(), deviations.len()));
    }
    let kept: Vec<(usize, f64)> = widths
        .iter()
        .zip(deviations)
        .filter(|(_, d)| **d > 0.0 && d.is_finite())
        .map(|(w, d)| (*w, *d))
        .collect();
    if kept.len() < 3 {
        return Err(Error::InsufficientInput(format!(
            "rate fit needs at least 3 positive deviations, got {}",
            kept.len()
        )));
    }
    let xs: Vec<f64> = kept.iter().map(|(w, _)| *w as f64).collect();
    let ys: Vec<f64> = kept.iter().map(|(_, d)| *d).collect();
    let fit = stats::loglog_fit(&xs, &ys)
        .ok_or_else(|| Error::InsufficientInput("rate fit needs at least two distinct widths".into()))?;
    Ok(RateFit {
        slope: fit.slope,
        intercept: fit.intercept,
        widths: kept.iter().map(|(w, _)| *w).collect(),
    })
}

/// Per-(parametrization, width, step) argmin summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub param: String,
    pub width: usize,
    pub depth: usize,
    pub step: usize,
    /// Lower median over seeds of the per-seed argmin.
    pub eta_opt: Option<f64>,
    /// Lower median over seeds of the per-seed minimum loss.
    pub loss_opt: Option<f64>,
    pub eta_theory: Option<f64>,
    pub n_overflow: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    pub rate_fit: Option<RateFit>,
}

type CellKey = (String, usize, usize);

impl SweepResult {
    /// Records grouped by (param, width, step) then seed, in first-seen order.
    fn cells(&self) -> Vec<(CellKey, Vec<(u64, Vec<(f64, f64)>)>)> {
        let mut order: Vec<CellKey> = Vec::new();
        let mut map: BTreeMap<CellKey, BTreeMap<u64, Vec<(f64, f64)>>> = BTreeMap::new();
        for r in &self.records {
            let key = (r.param.clone(), r.width, r.step);
            if !map.contains_key(&key) {
                order.push(key.clone());
            }
            map.entry(key)
                .or_default()
                .entry(r.seed)
                .or_default()
                .push((r.eta, r.train_loss));
        }
        order
            .into_iter()
            .map(|k| {
                let seeds = map.remove(&k).expect("present").into_iter().collect();
                (k, seeds)
            })
            .collect()
    }

    /// Per-seed argmins of one cell.
    pub fn seed_argmins(&self, param: &str, width: usize, step: usize) -> Vec<Result<(f64, f64)>> {
        self.seeds_points(param, width, step).iter().map(|pts| argmin_lr(pts)).collect()
    }

    /// `(η, loss)` points of one cell, one list per seed in seed order.
    pub fn seeds_points(&self, param: &str, width: usize, step: usize) -> Vec<Vec<(f64, f64)>> {
        let mut by_seed: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
        for r in self
            .records
            .iter()
            .filter(|r| r.param == param && r.width == width && r.step == step)
        {
            by_seed.entry(r.seed).or_default().push((r.eta, r.train_loss));
        }
        by_seed.into_values().collect()
    }

    pub fn summarize(&self) -> Summary {
        let mut cells = Vec::new();
        for ((param, width, step), seeds) in self.cells() {
            let depth = self
                .records
                .iter()
                .find(|r| r.param == param)
                .map_or(0, |r| r.depth);
            let mut etas = Vec::new();
            let mut losses = Vec::new();
            let mut n_overflow = 0;
            for (_, pts) in &seeds {
                n_overflow += pts.iter().filter(|(_, l)| !l.is_finite()).count();
                if let Ok((e, l)) = argmin_lr(pts) {
                    etas.push(e);
                    losses.push(l);
                }
            }
            let finite = |v: f64| if v.is_finite() { Some(v) } else { None };
            let theory = self.theory_params.iter().any(|p| p == &param) && step == 1;
            cells.push(CellSummary {
                eta_opt: finite(stats::lower_median(&etas)),
                loss_opt: finite(stats::lower_median(&losses)),
                eta_theory: if theory { self.eta_theory } else { None },
                param,
                width,
                depth,
                step,
                n_overflow,
            });
        }
        let rate_fit = rate_fit_from_cells(&cells).ok();
        Summary { cells, rate_fit }
    }

    pub fn overflow_count(&self) -> usize {
        self.records.iter().filter(|r| !r.train_loss.is_finite()).count()
    }
}

/// Rate fit over the cells that carry a theory reference.
pub fn rate_fit_from_cells(cells: &[CellSummary]) -> Result<RateFit> {
    let with_theory: Vec<&CellSummary> = cells
        .iter()
        .filter(|c| c.eta_theory.is_some() && c.eta_opt.is_some())
        .collect();
    if with_theory.len() < 3 {
        return Err(Error::InsufficientInput(format!(
            "need at least 3 widths with eta_theory, got {}",
            with_theory.len()
        )));
    }
    let widths: Vec<usize> = with_theory.iter().map(|c| c.width).collect();
    let dev: Vec<f64> = with_theory
        .iter()
        .map(|c| (c.eta_opt.unwrap() - c.eta_theory.unwrap()).abs())
        .collect();
    convergence_rate_fit(&widths, &dev)
}

/// Shortest round-trip decimal; infinities as `inf` / `-inf`.
pub fn fmt_float(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn records_to_csv(records: &[Record]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.param,
            r.width,
            r.depth,
            r.seed,
            r.step,
            fmt_float(r.eta),
            fmt_float(r.train_loss)
        );
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<Record>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::Argument(format!(
                "expected header `{CSV_HEADER}`, found `{}`",
                other.unwrap_or("")
            )))
        }
    }
    let bad = |i: usize, what: &str| Error::Argument(format!("line {}: bad {what}", i + 2));
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(i, "field count"));
            }
            Ok(Record {
                param: f[0].to_string(),
                width: f[1].parse().map_err(|_| bad(i, "width"))?,
                depth: f[2].parse().map_err(|_| bad(i, "depth"))?,
                seed: f[3].parse().map_err(|_| bad(i, "seed"))?,
                step: f[4].parse().map_err(|_| bad(i, "step"))?,
                eta: f[5].parse().map_err(|_| bad(i, "eta"))?,
                train_loss: f[6].parse().map_err(|_| bad(i, "train_loss"))?,
            })
        })
        .collect()
}

pub fn write_records_csv(path: &Path, records: &[Record]) -> Result<()> {
    std::fs::write(path, records_to_csv(records))?;
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<Record>> {
    records_from_csv(&std::fs::read_to_string(path)?)
}

impl Summary {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Dataset as CSV: `x1,…,xd,y` header, one sample per row.
pub fn dataset_to_csv(data: &Dataset) -> String {
    let d = data.input_dim();
    let mut out = String::new();
    for j in 1..=d {
        let _ = write!(out, "x{j},");
    }
    out.push_str("y\n");
    for i in 0..data.len() {
        for v in data.inputs().row(i) {
            out.push_str(&fmt_float(*v));
            out.push(',');
        }
        out.push_str(&fmt_float(data.targets()[i]));
        out.push('\n');
    }
    out
}

pub fn dataset_from_csv(text: &str) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with('x')) {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Argument(format!("line {}: not a number", i + 1)))?;
        if vals.len() < 2 {
            return Err(Error::Argument(format!("line {}: need at least one input and a target", i + 1)));
        }
        if *width.get_or_insert(vals.len()) != vals.len() {
            return Err(Error::Argument(format!("line {}: ragged row", i + 1)));
        }
        y.push(vals[vals.len() - 1]);
        rows.push(Vector::from_vec(vals[..vals.len() - 1].to_vec()));
    }
    if rows.is_empty() {
        return Err(Error::InsufficientInput("dataset file has no rows".into()));
    }
    Dataset::new(Matrix::from_rows(&rows)?, Vector::from_vec(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_targets_are_exact() {
        let d = gen_linear_dataset(5, 20, 0.0, &mut RngStream::new(1, 1)).unwrap();
        let omega = d.ground_truth().unwrap();
        for i in 0..20 {
            assert!((d.input(i).dot(omega).unwrap() - d.targets()[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_targets_have_the_expected_variance() {
        let d = gen_linear_dataset(100, 1000, 0.1, &mut RngStream::new(7, 3)).unwrap();
        let ey2 = d.targets().sq_norm() / 1000.0;
        assert!((ey2 - 1.01).abs() < 0.15 * 1.01, "{ey2}");
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_sign_dataset(10, 50, 0.1, &mut RngStream::new(3, 3)).unwrap();
        let b = gen_sign_dataset(10, 50, 0.1, &mut RngStream::new(3, 3)).unwrap();
        assert_eq!(a.targets(), b.targets());
        assert_eq!(a.inputs(), b.inputs());
    }

    #[test]
    fn sign_targets_are_balanced_labels() {
        let d = gen_sign_dataset(100, 1000, 0.1, &mut RngStream::new(5, 5)).unwrap();
        assert!(d.targets().iter().all(|&v| v == 1.0 || v == -1.0));
        let pos = d.targets().iter().filter(|&&v| v > 0.0).count() as f64 / 1000.0;
        assert!((0.4..=0.6).contains(&pos));
    }

    #[test]
    fn refined_argmin_recovers_a_log_parabola() {
        let grid = log_grid(0.1, 10.0, 15);
        let pts: Vec<(f64, f64)> = grid.iter().map(|&e| (e, (e.ln() - 0.7f64.ln()).powi(2) + 1.0)).collect();
        assert!((argmin_lr_refined(&pts).unwrap() - 0.7).abs() <= 1e-10);
        let edge: Vec<(f64, f64)> = grid.iter().map(|&e| (e, e)).collect();
        assert_eq!(argmin_lr_refined(&edge).unwrap(), 0.1);
    }

    #[test]
    fn argmin_rules() {
        let convex: Vec<(f64, f64)> = (1..10).map(|i| (i as f64, (i as f64 - 4.0).powi(2))).collect();
        assert_eq!(argmin_lr(&convex).unwrap(), (4.0, 0.0));
        assert_eq!(argmin_lr(&[(2.0, 1.0), (1.0, 1.0), (3.0, 2.0)]).unwrap(), (1.0, 1.0));
        assert_eq!(argmin_lr(&[(1.0, f64::INFINITY), (2.0, 3.0)]).unwrap(), (2.0, 3.0));
        assert!(matches!(argmin_lr(&[(1.0, f64::INFINITY)]), Err(Error::EmptyCell)));
    }

    #[test]
    fn rate_fit_on_exact_power_laws() {
        let w = [128usize, 256, 512, 1024];
        let half: Vec<f64> = w.iter().map(|&n| 2.0 * (n as f64).powf(-0.5)).collect();
        let fit = convergence_rate_fit(&w, &half).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-10);
        let one: Vec<f64> = w.iter().map(|&n| 3.0 / n as f64).collect();
        assert!((convergence_rate_fit(&w, &one).unwrap().slope + 1.0).abs() < 1e-10);
        let mut hit = half.clone();
        hit[1] = 0.0;
        let fit = convergence_rate_fit(&w, &hit).unwrap();
        assert_eq!(fit.widths, vec![128, 512, 1024]);
        assert!(convergence_rate_fit(&w[..2], &half[..2]).is_err());
    }

    #[test]
    fn grid_is_log_spaced_and_inclusive() {
        let g = log_grid(0.01, 100.0, 5);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[4], 100.0);
        assert!((g[2] - 1.0).abs() < 1e-12);
        assert!(strictly_increasing(&g));
    }

    #[test]
    fn csv_header_and_sentinel() {
        let r = Record {
            param: "sp".into(),
            width: 8,
            depth: 2,
            seed: 1,
            step: 1,
            eta: 0.1,
            train_loss: f64::INFINITY,
        };
        let s = records_to_csv(std::slice::from_ref(&r));
        assert_eq!(s, "param,width,depth,seed,step,eta,train_loss\nsp,8,2,1,1,0.1,inf\n");
        assert_eq!(records_from_csv(&s).unwrap(), vec![r]);
    }

    #[test]
    fn overrides_replace_lists_and_scalars() {
        let cfg = SweepConfig::from_toml(
            "depth = 2\nwidths = [8, 16]\n",
            &["widths=128,256".into(), "param=mup,sp".into(), "eta_min=0.5".into(), "data=sign".into()],
        )
        .unwrap();
        assert_eq!(cfg.widths, vec![128, 256]);
        assert_eq!(cfg.param, vec!["mup".to_string(), "sp".to_string()]);
        assert_eq!(cfg.depth, 2);
        assert_eq!(cfg.eta_min, 0.5);
        assert_eq!(cfg.data, DataKind::Sign);
    }

    #[test]
    fn config_errors_name_the_key() {
        let key = |r: Result<SweepConfig>| match r {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(key(SweepConfig::from_toml("widht = [1]", &[])), "widht");
        assert_eq!(key(SweepConfig::from_toml("", &["bogus=1".into()])), "bogus");
        assert_eq!(key(SweepConfig::from_toml("depth = \"three\"", &[])), "depth");
        assert_eq!(key(SweepConfig::from_toml("", &["optimizer=sgdm".into()])), "optimizer");
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = SweepConfig::from_toml("", &["seeds=4,5".into(), "output=/tmp/x".into()]).unwrap();
        let again = SweepConfig::from_toml(&cfg.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn validation_names_the_key() {
        let mut c = SweepConfig::default();
        c.widths = vec![256, 128];
        match c.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "widths"),
            other => panic!("{other:?}"),
        }
    }
}

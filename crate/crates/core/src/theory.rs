//! Infinite-width predictions for muP-trained deep linear networks.
//!
//! Everything here is a closed-form function of the normalized Gram matrix
//! `K`, the targets `y` and the depth `L`, plus two Monte-Carlo checks of the
//! random-matrix facts the limits rest on.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward_cache, gradients, init_model, Activation, Dataset, ModelState};
use crate::numerics::{gemm, stats, Matrix, RngStream, StreamKey, Trans, Vector};
use crate::optimizer::gd_step;
use crate::parametrization::{Layer, OptimizerKind, Parametrization};

fn check_depth(depth: usize) -> Result<()> {
    if depth == 0 {
        return Err(Error::Argument("depth must be >= 1".into()));
    }
    Ok(())
}

/// `(1/d) <x_i, x>` for every training input.
fn kernel_column(x: &Vector, data: &Dataset) -> Result<Vector> {
    if x.dim() != data.input_dim() {
        return Err(Error::dims("kernel column", data.input_dim(), x.dim()));
    }
    Ok(data.inputs().matvec(x)?.scaled(1.0 / data.input_dim() as f64))
}

/// Limiting one-step optimal learning rate `(m/L) yᵀKy / ‖Ky‖²`.
pub fn eta_star_one_step(data: &Dataset, depth: usize) -> Result<f64> {
    check_depth(depth)?;
    let ky = data.gram_times_targets();
    let y = data.targets();
    if ky.norm() <= 1e-12 * y.norm() || y.norm() == 0.0 {
        return Err(Error::DegenerateData(format!(
            "Ky vanishes (|Ky| = {:e}, |y| = {:e})",
            ky.norm(),
            y.norm()
        )));
    }
    let m = data.len() as f64;
    Ok(m / depth as f64 * y.dot(&ky)? / ky.sq_norm())
}

/// Limiting one-step loss `(1/2m) ‖-y + η (L/m) K y‖²`.
pub fn limiting_loss_one_step(eta: f64, data: &Dataset, depth: usize) -> f64 {
    let m = data.len() as f64;
    let mut r = data.gram_times_targets().scaled(eta * depth as f64 / m);
    r.axpy(-1.0, data.targets()).expect("m-vectors");
    r.sq_norm() / (2.0 * m)
}

/// Limit of the first one-step coefficient, `(L/m) Σ_i y_i <x_i, x>/d`.
pub fn phi1_limit(x: &Vector, data: &Dataset, depth: usize) -> Result<f64> {
    check_depth(depth)?;
    let k = kernel_column(x, data)?;
    Ok(depth as f64 / data.len() as f64 * k.dot(data.targets())?)
}

/// Index of the training input with the largest `|φ_1^∞|`, a probe whose limit
/// stands well above finite-width fluctuations.
pub fn strongest_training_input(data: &Dataset) -> Result<usize> {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..data.len() {
        let v = phi1_limit(&data.input(i), data, 1)?.abs();
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best.0)
}

/// Limiting one-step output `f_∞(x) = η φ_1^∞(x)`.
pub fn limit_output_one_step(eta: f64, x: &Vector, data: &Dataset, depth: usize) -> Result<f64> {
    Ok(eta * phi1_limit(x, data, depth)?)
}

/// Limit of `d f^(t)(x) / dη` at `η = 0`: `(tL/m) Σ_i y_i <x_i, x>/d`.
pub fn derivative_at_zero(t: usize, x: &Vector, data: &Dataset, depth: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::Argument("derivative_at_zero needs t >= 1".into()));
    }
    Ok(t as f64 * phi1_limit(x, data, depth)?)
}

/// Strong-convexity diagnostic `μ = (L²/m³) yᵀK²y`.
pub fn strong_convexity(data: &Dataset, depth: usize) -> f64 {
    let m = data.len() as f64;
    (depth * depth) as f64 / (m * m * m) * data.gram_times_targets().sq_norm()
}

/// Prefactor in front of `Σ_i γ_i <x_i, x>/d` in the second-step coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T2Prefactor {
    /// `(-m)^L`
    MinusM,
    /// `(-1/m)^L`
    MinusInvM,
}

impl T2Prefactor {
    fn value(self, m: usize, depth: usize) -> f64 {
        let m = m as f64;
        let base = match self {
            T2Prefactor::MinusM => -m,
            T2Prefactor::MinusInvM => -1.0 / m,
        };
        base.powi(depth as i32)
    }
}

/// `γ_i = (f_∞(x_i) - y_i) S^{L-1}` with `S = Σ_j (f_∞(x_j) - y_j) f_∞(x_j)`.
pub fn t2_gammas(eta: f64, data: &Dataset, depth: usize) -> Result<Vec<f64>> {
    check_depth(depth)?;
    let m = data.len() as f64;
    let f: Vec<f64> = data
        .gram_times_targets()
        .iter()
        .map(|v| eta * depth as f64 / m * v)
        .collect();
    let r: Vec<f64> = f.iter().zip(data.targets().iter()).map(|(fi, yi)| fi - yi).collect();
    let s: f64 = r.iter().zip(&f).map(|(a, b)| a * b).sum();
    let p = s.powi(depth as i32 - 1);
    Ok(r.iter().map(|ri| ri * p).collect())
}

/// Limit of the top coefficient of the second GD step, with the prefactor
/// `(-m)^L`.
pub fn phi_l_limit_t2(eta: f64, x: &Vector, data: &Dataset, depth: usize) -> Result<f64> {
    phi_l_limit_t2_with(eta, x, data, depth, T2Prefactor::MinusM)
}

pub fn phi_l_limit_t2_with(
    eta: f64,
    x: &Vector,
    data: &Dataset,
    depth: usize,
    prefactor: T2Prefactor,
) -> Result<f64> {
    let gamma = t2_gammas(eta, data, depth)?;
    let k = kernel_column(x, data)?;
    let sum: f64 = gamma.iter().zip(k.iter()).map(|(g, c)| g * c).sum();
    Ok(prefactor.value(data.len(), depth) * sum)
}

/// Finite-width top coefficient of the second step at learning rate `eta`:
/// the `η^L` term of `Ṽᵀ Π_l (W̃_l^(1) - η κ_l G_l^(1)) W̃_0 x` with every
/// step-one weight held at its value after the first step.
pub fn phi_l_t2_finite(model: &ModelState, data: &Dataset, x: &Vector, eta: f64) -> Result<f64> {
    if model.activation() != Activation::Linear {
        return Err(Error::UnsupportedMode("phi_l_t2_finite requires a linear network".into()));
    }
    let mut stepped = model.clone();
    let g = gradients(&stepped, data)?;
    gd_step(&mut stepped, &g, eta)?;
    let g = gradients(&stepped, data)?;
    // g.hidden[l-1] = s_h b_{l+1} ⊗ a_{l-1}(x̄)
    let s_h = model.multiplier(Layer::Hidden(1));
    let depth = model.depth();
    let chain = stepped.backward_chain();
    let a0x = stepped.forward_chain_linear(x.as_slice()).swap_remove(0);
    let right: Vec<Vector> = g
        .hidden
        .iter()
        .map(|lg| match lg {
            crate::model::LayerGrad::Rank1 { right, .. } => right.clone(),
            crate::model::LayerGrad::Dense(_) => unreachable!("linear gradients are rank one"),
        })
        .collect();
    let mut value = chain.b[depth + 1].sq_norm() * right[0].dot(&a0x)?;
    for l in 2..=depth {
        value *= right[l - 1].dot(&chain.b[l])?;
    }
    let kappa: f64 = (1..=depth)
        .map(|l| model.layer_lr(1.0, Layer::Hidden(l), OptimizerKind::Gd) * s_h * s_h)
        .product();
    Ok((-1.0f64).powi(depth as i32) * kappa * value)
}

/// Monte-Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

impl MonteCarlo {
    fn from_samples(xs: &[f64]) -> Self {
        MonteCarlo {
            mean: stats::mean(xs),
            std_err: stats::std_err(xs),
            trials: xs.len(),
        }
    }
}

/// Independent `(x, y)` pairs drawn per sampled `W` by default.
pub const MP_PROBES_PER_MATRIX: usize = 64;

/// Mean of `(xᵀ Wᵀ W Wᵀ y)² / n` with `W_ij ~ N(0, 1/n)` and standard normal
/// `x`, `y`; its limit is the third moment of the Marchenko-Pastur law at
/// aspect ratio one, 5.
pub fn mp_third_moment_check(n: usize, trials: usize, rng: &RngStream) -> Result<MonteCarlo> {
    mp_third_moment_check_with(n, trials, MP_PROBES_PER_MATRIX, rng)
}

/// As [`mp_third_moment_check`], averaging `probes` independent `(x, y)`
/// pairs per matrix; the reported standard error is over matrices.
/// A single trial leaves the standard error undefined (NaN).
pub fn mp_third_moment_check_with(
    n: usize,
    trials: usize,
    probes: usize,
    rng: &RngStream,
) -> Result<MonteCarlo> {
    if n == 0 || trials == 0 || probes == 0 {
        return Err(Error::InsufficientInput("need n >= 1, trials >= 1, probes >= 1".into()));
    }
    let per_trial: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng.split(StreamKey::new("mp").push_u64(n as u64).push_u64(trial as u64).finish());
            let w = r.gaussian_matrix(n, n, (n as f64).powf(-0.5))?;
            let x = r.gaussian_matrix(n, probes, 1.0)?;
            let y = r.gaussian_matrix(n, probes, 1.0)?;
            // columns are probes: Wᵀ W Wᵀ Y
            let z = gemm(1.0, &w, Trans::Yes, &y, Trans::No)?;
            let z = gemm(1.0, &w, Trans::No, &z, Trans::No)?;
            let z = gemm(1.0, &w, Trans::Yes, &z, Trans::No)?;
            let mut acc = vec![0.0; probes];
            for i in 0..n {
                for ((a, xv), zv) in acc.iter_mut().zip(x.row(i)).zip(z.row(i)) {
                    *a += xv * zv;
                }
            }
            Ok(acc.iter().map(|s| s * s / n as f64).sum::<f64>() / probes as f64)
        })
        .collect::<Result<_>>()?;
    Ok(MonteCarlo::from_samples(&per_trial))
}

/// Mean over trials of `max_ij |(1/L) Σ_l ‖b_{l+1}‖² <a_{l-1,i}, a_{l-1,j}> - K_ij|`
/// for fresh muP initializations of width `n`.
pub fn layerwise_gram_limit_check(
    n: usize,
    depth: usize,
    data: &Dataset,
    trials: usize,
    rng: &RngStream,
) -> Result<MonteCarlo> {
    check_depth(depth)?;
    if trials < 2 {
        return Err(Error::InsufficientInput("need at least two trials".into()));
    }
    let param = Parametrization::mup();
    let k = data.gram();
    let devs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng.split(
                StreamKey::new("layerwise-gram")
                    .push_u64(n as u64)
                    .push_u64(trial as u64)
                    .finish(),
            );
            let model = init_model(&param, n, depth, data.input_dim(), Activation::Linear, &mut r)?;
            let gram = layerwise_gram(&model, data)?;
            let mut worst = 0.0f64;
            for (a, b) in gram.as_slice().iter().zip(k.as_slice()) {
                worst = worst.max((a - b).abs());
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(MonteCarlo::from_samples(&devs))
}

/// `(1/L) Σ_{l=1}^{L} ‖b_{l+1}‖² G_{l-1}` with `G_l` the Gram matrix of the
/// layer-`l` forward chains.
pub fn layerwise_gram(model: &ModelState, data: &Dataset) -> Result<Matrix> {
    let cache = forward_cache(model, data)?;
    let m = data.len();
    let depth = model.depth();
    let mut acc = Matrix::zeros(m, m);
    for l in 1..=depth {
        let a = cache.a_layer(l as isize - 1);
        let g = gemm(1.0, a, Trans::No, a, Trans::Yes)?;
        acc.axpy(cache.b(l + 1).sq_norm() / depth as f64, &g)?;
    }
    Ok(acc)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LossSample {
    pub eta: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeEntry {
    pub t: usize,
    pub probe: usize,
    pub value: f64,
}

/// Every closed-form prediction for one dataset and depth.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheoryReport {
    pub depth: usize,
    pub samples: usize,
    pub eta_star_one_step: f64,
    pub loss_at_eta_star: f64,
    pub limiting_loss: Vec<LossSample>,
    pub phi1_limits: Vec<f64>,
    pub derivative_at_zero: Vec<DerivativeEntry>,
    /// Strong-convexity constant `μ`; diagnostic only.
    pub mu: f64,
}

/// Builds a report; `probes` default to the training inputs when empty.
pub fn theory_report(
    data: &Dataset,
    depth: usize,
    probes: &[Vector],
    steps: &[usize],
    curve_points: usize,
) -> Result<TheoryReport> {
    let eta_star = eta_star_one_step(data, depth)?;
    let own: Vec<Vector>;
    let probes = if probes.is_empty() {
        own = (0..data.len()).map(|i| data.input(i)).collect();
        &own[..]
    } else {
        probes
    };
    let k = curve_points.max(2);
    let limiting_loss = (0..k)
        .map(|i| {
            let eta = 2.0 * eta_star * i as f64 / (k - 1) as f64;
            LossSample {
                eta,
                loss: limiting_loss_one_step(eta, data, depth),
            }
        })
        .collect();
    let phi1_limits = probes
        .iter()
        .map(|x| phi1_limit(x, data, depth))
        .collect::<Result<Vec<_>>>()?;
    let mut derivative = Vec::new();
    for &t in steps {
        for (p, x) in probes.iter().enumerate() {
            derivative.push(DerivativeEntry {
                t,
                probe: p,
                value: derivative_at_zero(t, x, data, depth)?,
            });
        }
    }
    Ok(TheoryReport {
        depth,
        samples: data.len(),
        eta_star_one_step: eta_star,
        loss_at_eta_star: limiting_loss_one_step(eta_star, data, depth),
        limiting_loss,
        phi1_limits,
        derivative_at_zero: derivative,
        mu: strong_convexity(data, depth),
    })
}

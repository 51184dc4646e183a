//! Full-batch GD and Adam, plus a matrix-free GD trainer for linear networks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{gradients, Dataset, Gradients, LayerGrad, ModelState, Trainable};
use crate::numerics::{axpy_slices, dot_slices, LinearOperator, Matrix, Matrix32, Vector};
use crate::parametrization::{Layer, OptimizerKind, Parametrization};

/// Losses at or above this value count as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e30;

fn apply_grad(w: &mut Matrix, lr: f64, g: &LayerGrad) -> Result<()> {
    match g {
        LayerGrad::Rank1 { left, right } => w.rank1_update(-lr, left.as_slice(), right.as_slice()),
        LayerGrad::Dense(d) => w.axpy(-lr, d),
    }
}

/// One GD step with every trainable layer at its parametrization's rate.
pub fn gd_step(model: &mut ModelState, grads: &Gradients, eta_base: f64) -> Result<()> {
    if grads.hidden.len() != model.depth() {
        return Err(Error::dims("gd_step", model.depth(), grads.hidden.len()));
    }
    let opt = OptimizerKind::Gd;
    if eta_base != 0.0 {
        for (l, g) in grads.hidden.iter().enumerate() {
            let lr = model.layer_lr(eta_base, Layer::Hidden(l + 1), opt);
            apply_grad(&mut model.hidden[l], lr, g)?;
        }
        if let Some(g) = &grads.input {
            let lr = model.layer_lr(eta_base, Layer::Input, opt);
            apply_grad(&mut model.input, lr, g)?;
        }
        if let Some(g) = &grads.head {
            let lr = model.layer_lr(eta_base, Layer::Head, opt);
            model.head.axpy(-lr, g)?;
        }
    }
    model.step += 1;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Moments {
    fn zeros(len: usize) -> Self {
        Moments {
            first: vec![0.0; len],
            second: vec![0.0; len],
        }
    }

    fn is_zero(&self) -> bool {
        self.first.iter().chain(&self.second).all(|&v| v == 0.0)
    }

    /// Accumulates `g` and writes the bias-corrected step into `w`.
    fn update(&mut self, cfg: &AdamConfig, t: u32, lr: f64, g: &[f64], w: &mut [f64]) {
        let c1 = 1.0 - cfg.beta1.powi(t as i32);
        let c2 = 1.0 - cfg.beta2.powi(t as i32);
        for (((m, v), &gi), wi) in self
            .first
            .iter_mut()
            .zip(self.second.iter_mut())
            .zip(g)
            .zip(w.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *wi -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

/// Zero-initialized Adam moments for every trainable layer.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    hidden: Vec<Moments>,
    input: Option<Moments>,
    head: Option<Moments>,
    step: u32,
}

impl AdamState {
    pub fn new(model: &ModelState, config: AdamConfig) -> Self {
        let n = model.width();
        let t = model.trainable();
        AdamState {
            config,
            hidden: (0..model.depth()).map(|_| Moments::zeros(n * n)).collect(),
            input: t.input.then(|| Moments::zeros(n * model.input_dim())),
            head: t.head.then(|| Moments::zeros(n)),
            step: 0,
        }
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    /// True while no non-zero gradient has been accumulated.
    pub fn moments_are_zero(&self) -> bool {
        self.hidden.iter().all(Moments::is_zero)
            && self.input.as_ref().map_or(true, Moments::is_zero)
            && self.head.as_ref().map_or(true, Moments::is_zero)
    }
}

fn dense(g: &LayerGrad) -> std::borrow::Cow<'_, Matrix> {
    match g {
        LayerGrad::Dense(m) => std::borrow::Cow::Borrowed(m),
        other => std::borrow::Cow::Owned(other.to_dense()),
    }
}

/// One Adam step with bias correction.
pub fn adam_step(
    model: &mut ModelState,
    state: &mut AdamState,
    grads: &Gradients,
    eta_base: f64,
) -> Result<()> {
    if state.hidden.len() != model.depth() || grads.hidden.len() != model.depth() {
        return Err(Error::dims("adam_step", model.depth(), grads.hidden.len()));
    }
    let opt = OptimizerKind::Adam;
    state.step += 1;
    let t = state.step;
    let cfg = state.config;
    for (l, g) in grads.hidden.iter().enumerate() {
        let lr = model.layer_lr(eta_base, Layer::Hidden(l + 1), opt);
        let g = dense(g);
        state.hidden[l].update(&cfg, t, lr, g.as_slice(), model.hidden[l].as_mut_slice());
    }
    if let (Some(g), Some(mom)) = (&grads.input, state.input.as_mut()) {
        let lr = model.layer_lr(eta_base, Layer::Input, opt);
        let g = dense(g);
        mom.update(&cfg, t, lr, g.as_slice(), model.input.as_mut_slice());
    }
    if let (Some(g), Some(mom)) = (&grads.head, state.head.as_mut()) {
        let lr = model.layer_lr(eta_base, Layer::Head, opt);
        mom.update(&cfg, t, lr, g.as_slice(), model.head.as_mut_slice());
    }
    model.step += 1;
    Ok(())
}

/// Trains a copy of `model` for `steps` updates and returns the loss before
/// each update and after the last one (`steps + 1` values). Once the loss
/// stops being finite or exceeds [`DIVERGENCE_THRESHOLD`], the remaining
/// entries are `+inf`.
pub fn train_losses(
    model: &ModelState,
    data: &Dataset,
    optimizer: OptimizerKind,
    adam: AdamConfig,
    eta_base: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let mut model = model.clone();
    let mut adam_state = match optimizer {
        OptimizerKind::Adam => Some(AdamState::new(&model, adam)),
        OptimizerKind::Gd => None,
    };
    let mut out = Vec::with_capacity(steps + 1);
    for t in 0..=steps {
        let diverged = |l: f64| !l.is_finite() || l >= DIVERGENCE_THRESHOLD;
        if t == steps {
            let l = crate::model::loss(&model, data)?;
            out.push(if diverged(l) { f64::INFINITY } else { l });
            break;
        }
        let grads = gradients(&model, data)?;
        if diverged(grads.loss) {
            out.resize(steps + 1, f64::INFINITY);
            break;
        }
        out.push(grads.loss);
        match adam_state.as_mut() {
            Some(st) => adam_step(&mut model, st, &grads, eta_base)?,
            None => gd_step(&mut model, &grads, eta_base)?,
        }
        if !model.is_finite() {
            out.resize(steps + 1, f64::INFINITY);
            break;
        }
    }
    Ok(out)
}

/// A weight matrix kept as its frozen initial value plus accumulated
/// rank-one GD corrections `Σ_k u_k v_kᵀ`.
struct LowRank<'a, Op: LinearOperator> {
    base: &'a Op,
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
}

impl<'a, Op: LinearOperator> LowRank<'a, Op> {
    fn new(base: &'a Op) -> Self {
        LowRank {
            base,
            left: Vec::new(),
            right: Vec::new(),
        }
    }

    fn apply(&self, scale: f64, v: &[f64], out: &mut [f64]) {
        self.base.apply(v, out);
        for (u, w) in self.left.iter().zip(&self.right) {
            axpy_slices(dot_slices(w, v), u, out);
        }
        out.iter_mut().for_each(|o| *o *= scale);
    }

    fn apply_t(&self, scale: f64, v: &[f64], out: &mut [f64]) {
        self.base.apply_t(v, out);
        for (u, w) in self.left.iter().zip(&self.right) {
            axpy_slices(dot_slices(u, v), w, out);
        }
        out.iter_mut().for_each(|o| *o *= scale);
    }

    fn push(&mut self, alpha: f64, u: &[f64], v: &[f64]) {
        self.left.push(u.iter().map(|x| alpha * x).collect());
        self.right.push(v.to_vec());
    }
}

#[derive(Clone, Debug)]
pub struct GdRun {
    /// Loss at steps `0..=T`.
    pub losses: Vec<f64>,
    /// Final-step output on each probe.
    pub probe_outputs: Vec<f64>,
}

/// Frozen weights of a linear network, shared read-only by many GD runs.
///
/// Each run stores only its rank-one corrections, so sweeping many learning
/// rates never copies the `n x n` matrices.
pub struct LinearNet<Op: LinearOperator = Matrix> {
    param: Parametrization,
    width: usize,
    input_dim: usize,
    input: Op,
    hidden: Vec<Op>,
    head: Vector,
    trainable: Trainable,
}

impl LinearNet<Matrix> {
    pub fn from_model(model: ModelState) -> Result<Self> {
        if model.activation() != crate::model::Activation::Linear {
            return Err(Error::UnsupportedMode("LinearNet requires a linear network".into()));
        }
        Ok(LinearNet {
            width: model.width,
            input_dim: model.input_dim,
            trainable: model.trainable,
            param: model.param,
            input: model.input,
            hidden: model.hidden,
            head: model.head,
        })
    }
}

impl LinearNet<Matrix32> {
    /// Stores the frozen weights in single precision.
    pub fn compact(model: &ModelState) -> Result<Self> {
        if model.activation() != crate::model::Activation::Linear {
            return Err(Error::UnsupportedMode("LinearNet requires a linear network".into()));
        }
        Ok(LinearNet {
            width: model.width,
            input_dim: model.input_dim,
            trainable: model.trainable,
            param: model.param.clone(),
            input: Matrix32::from_matrix(&model.input),
            hidden: model.hidden.iter().map(Matrix32::from_matrix).collect(),
            head: model.head.clone(),
        })
    }
}

impl<Op: LinearOperator> LinearNet<Op> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    fn mult(&self, layer: Layer) -> f64 {
        self.param.multiplier(layer, self.width, self.input_dim)
    }

    fn lr(&self, eta: f64, layer: Layer) -> f64 {
        self.param.layer_lr(eta, layer, self.width, OptimizerKind::Gd)
    }

    /// Full-batch GD losses at steps `0..=steps` (same conventions as
    /// [`train_losses`]).
    pub fn gd_losses(&self, data: &Dataset, eta_base: f64, steps: usize) -> Result<Vec<f64>> {
        Ok(self.gd_run(data, eta_base, steps, &[])?.losses)
    }

    /// Like [`LinearNet::gd_losses`], also returning the trained network's
    /// output on each probe (`NaN` after divergence).
    pub fn gd_run(&self, data: &Dataset, eta_base: f64, steps: usize, probes: &[Vector]) -> Result<GdRun> {
        if data.input_dim() != self.input_dim {
            return Err(Error::dims("LinearNet::gd_run", self.input_dim, data.input_dim()));
        }
        if let Some(p) = probes.iter().find(|p| p.dim() != self.input_dim) {
            return Err(Error::dims("LinearNet::gd_run", self.input_dim, p.dim()));
        }
        let n = self.width;
        let depth = self.depth();
        let m = data.len() as f64;
        let s_in = self.mult(Layer::Input);
        let s_h = self.mult(Layer::Hidden(1));
        let s_v = self.mult(Layer::Head);
        let mut input = LowRank::new(&self.input);
        let mut hidden: Vec<LowRank<'_, Op>> = self.hidden.iter().map(LowRank::new).collect();
        let mut head = self.head.clone();

        let mut b = vec![vec![0.0; n]; depth + 2];
        let mut g = vec![vec![0.0; n]; depth + 2];
        let mut b0 = vec![0.0; self.input_dim];
        let mut out = Vec::with_capacity(steps + 1);
        let mut probe_outputs = vec![f64::NAN; probes.len()];
        for t in 0..=steps {
            // backward chain b_{L+1} .. b_1, then b_0
            b[depth + 1] = head.as_slice().iter().map(|v| s_v * v).collect();
            for l in (1..=depth).rev() {
                let (lo, hi) = b.split_at_mut(l + 1);
                hidden[l - 1].apply_t(s_h, &hi[0], &mut lo[l]);
            }
            input.apply_t(s_in, &b[1], &mut b0);
            let mut chi = data.inputs().matvec(&Vector::from_vec(b0.clone()))?;
            chi.axpy(-1.0, data.targets())?;
            let loss = chi.sq_norm() / (2.0 * m);
            if !loss.is_finite() || loss >= DIVERGENCE_THRESHOLD {
                out.resize(steps + 1, f64::INFINITY);
                break;
            }
            out.push(loss);
            if t == steps {
                for (o, p) in probe_outputs.iter_mut().zip(probes) {
                    *o = dot_slices(&b0, p.as_slice());
                }
                break;
            }
            // forward chain of x̄: g[l] = a_{l-1}(x̄)
            let xbar = data.inputs().matvec_t(&chi)?.scaled(1.0 / m);
            input.apply(s_in, xbar.as_slice(), &mut g[1]);
            for l in 1..=depth {
                let (lo, hi) = g.split_at_mut(l + 1);
                hidden[l - 1].apply(s_h, &lo[l], &mut hi[0]);
            }
            for l in 1..=depth {
                let lr = self.lr(eta_base, Layer::Hidden(l));
                hidden[l - 1].push(-lr * s_h, &b[l + 1], &g[l]);
            }
            if self.trainable.input {
                let lr = self.lr(eta_base, Layer::Input);
                input.push(-lr * s_in, &b[1], xbar.as_slice());
            }
            if self.trainable.head {
                let lr = self.lr(eta_base, Layer::Head);
                axpy_slices(-lr * s_v, &g[depth + 1], head.as_mut_slice());
            }
        }
        Ok(GdRun {
            losses: out,
            probe_outputs,
        })
    }
}

//! The bias-free MLP `f(x) = Vᵀ φ(W_L φ(… φ(W_0 x)))`.
//!
//! Weights are stored as sampled; a parametrization's forward multipliers are
//! applied on the fly, so for muP and SP the stored and effective weights
//! coincide. Chains are always expressed in effective weights:
//!
//! * `a_{-1,i} = x_i`, `a_{l,i} = W̃_l a_{l-1,i}` (forward chain),
//! * `b_{L+1} = Ṽ`, `b_l = W̃_lᵀ b_{l+1}` (backward chain), `b_0 = W̃_0ᵀ b_1`,
//!
//! so that `f(x_i) = <b_{l+1}, a_{l,i}>` for every `l` in `-1..=L`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gemm, Matrix, RngStream, Trans, Vector};
use crate::parametrization::{Layer, OptimizerKind, Parametrization};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "identity" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Argument(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
        })
    }
}

/// Training inputs `X` (`m x d`, one sample per row), targets `y` and the
/// normalized Gram matrix `K_ij = <x_i, x_j> / d`.
#[derive(Clone, Debug)]
pub struct Dataset {
    inputs: Matrix,
    targets: Vector,
    gram: Matrix,
    ground_truth: Option<Vector>,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Vector) -> Result<Self> {
        if inputs.rows() != targets.dim() {
            return Err(Error::dims("Dataset::new", inputs.rows(), targets.dim()));
        }
        if inputs.rows() == 0 || inputs.cols() == 0 {
            return Err(Error::Argument("dataset must be non-empty".into()));
        }
        if !inputs.is_finite() || !targets.is_finite() {
            return Err(Error::Argument("dataset contains non-finite values".into()));
        }
        let d = inputs.cols() as f64;
        let mut gram = gemm(1.0 / d, &inputs, Trans::No, &inputs, Trans::Yes)?;
        // exact symmetry
        let m = gram.rows();
        for i in 0..m {
            for j in 0..i {
                let s = 0.5 * (gram[(i, j)] + gram[(j, i)]);
                gram[(i, j)] = s;
                gram[(j, i)] = s;
            }
        }
        Ok(Dataset {
            inputs,
            targets,
            gram,
            ground_truth: None,
        })
    }

    pub fn with_ground_truth(mut self, omega: Vector) -> Self {
        self.ground_truth = Some(omega);
        self
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn targets(&self) -> &Vector {
        &self.targets
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn ground_truth(&self) -> Option<&Vector> {
        self.ground_truth.as_ref()
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn input(&self, i: usize) -> Vector {
        self.inputs.row_vector(i)
    }

    /// The first `k` samples.
    pub fn head(&self, k: usize) -> Result<Dataset> {
        let k = k.min(self.len());
        let rows: Vec<Vector> = (0..k).map(|i| self.input(i)).collect();
        let y = Vector::from_vec(self.targets.as_slice()[..k].to_vec());
        let mut out = Dataset::new(Matrix::from_rows(&rows)?, y)?;
        out.ground_truth = self.ground_truth.clone();
        Ok(out)
    }

    /// Samples reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Dataset> {
        let rows: Vec<Vector> = perm.iter().map(|&i| self.input(i)).collect();
        let y = Vector::from_vec(perm.iter().map(|&i| self.targets[i]).collect());
        Dataset::new(Matrix::from_rows(&rows)?, y)
    }

    /// `K y`
    pub fn gram_times_targets(&self) -> Vector {
        self.gram.matvec(&self.targets).expect("gram is m x m")
    }
}

/// Weights of the network at some training step.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub(crate) param: Parametrization,
    pub(crate) activation: Activation,
    pub(crate) width: usize,
    pub(crate) input_dim: usize,
    pub(crate) input: Matrix,
    pub(crate) hidden: Vec<Matrix>,
    pub(crate) head: Vector,
    pub(crate) step: usize,
    pub(crate) trainable: Trainable,
}

/// Which of the usually frozen layers (`W_0`, `V`) receive updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trainable {
    pub input: bool,
    pub head: bool,
}

/// Samples a fresh network; `W_0`, `W_1..W_L`, `V` are drawn in that order.
pub fn init_model(
    param: &Parametrization,
    width: usize,
    depth: usize,
    input_dim: usize,
    activation: Activation,
    rng: &mut RngStream,
) -> Result<ModelState> {
    if width == 0 || depth == 0 || input_dim == 0 {
        return Err(Error::Argument(format!(
            "width, depth and input dim must be >= 1 (got n={width}, L={depth}, d={input_dim})"
        )));
    }
    let n = width;
    let input = rng.gaussian_matrix(n, input_dim, param.init_std(Layer::Input, n, input_dim))?;
    let hidden = (1..=depth)
        .map(|l| rng.gaussian_matrix(n, n, param.init_std(Layer::Hidden(l), n, input_dim)))
        .collect::<Result<Vec<_>>>()?;
    let head = rng.gaussian_vector(n, param.init_std(Layer::Head, n, input_dim));
    Ok(ModelState {
        param: param.clone(),
        activation,
        width,
        input_dim,
        input,
        hidden,
        head,
        step: 0,
        trainable: Trainable::default(),
    })
}

impl ModelState {
    /// Assembles a model from explicit weights (stored, pre-multiplier).
    pub fn from_weights(
        param: Parametrization,
        activation: Activation,
        input: Matrix,
        hidden: Vec<Matrix>,
        head: Vector,
    ) -> Result<Self> {
        let n = input.rows();
        if hidden.is_empty() {
            return Err(Error::Argument("depth must be >= 1".into()));
        }
        for w in &hidden {
            if w.shape() != (n, n) {
                return Err(Error::dims("ModelState::from_weights", n, format!("{:?}", w.shape())));
            }
        }
        if head.dim() != n {
            return Err(Error::dims("ModelState::from_weights", n, head.dim()));
        }
        Ok(ModelState {
            param,
            activation,
            width: n,
            input_dim: input.cols(),
            input,
            hidden,
            head,
            step: 0,
            trainable: Trainable::default(),
        })
    }

    pub fn with_trainable(mut self, trainable: Trainable) -> Self {
        self.trainable = trainable;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn parametrization(&self) -> &Parametrization {
        &self.param
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn trainable(&self) -> Trainable {
        self.trainable
    }

    pub fn input_weights(&self) -> &Matrix {
        &self.input
    }

    pub fn hidden_weights(&self) -> &[Matrix] {
        &self.hidden
    }

    pub fn head_weights(&self) -> &Vector {
        &self.head
    }

    pub(crate) fn multiplier(&self, layer: Layer) -> f64 {
        self.param.multiplier(layer, self.width, self.input_dim)
    }

    /// Learning rate of `layer` for a base rate `eta`.
    pub fn layer_lr(&self, eta: f64, layer: Layer, optimizer: OptimizerKind) -> f64 {
        self.param.layer_lr(eta, layer, self.width, optimizer)
    }

    pub fn is_finite(&self) -> bool {
        self.input.is_finite()
            && self.head.is_finite()
            && self.hidden.iter().all(Matrix::is_finite)
    }

    fn require_linear(&self, op: &str) -> Result<()> {
        match self.activation {
            Activation::Linear => Ok(()),
            Activation::Relu => Err(Error::UnsupportedMode(format!(
                "{op} requires a linear network"
            ))),
        }
    }

    /// Network output for a single input.
    pub fn forward(&self, x: &Vector) -> Result<f64> {
        if x.dim() != self.input_dim {
            return Err(Error::dims("forward", self.input_dim, x.dim()));
        }
        let mut h = vec![0.0; self.width];
        let mut tmp = vec![0.0; self.width];
        self.input.matvec_into(x.as_slice(), &mut h);
        let s_in = self.multiplier(Layer::Input);
        h.iter_mut().for_each(|v| *v = self.activation.apply(s_in * *v));
        let s_h = self.multiplier(Layer::Hidden(1));
        for w in &self.hidden {
            w.matvec_into(&h, &mut tmp);
            for (o, z) in h.iter_mut().zip(&tmp) {
                *o = self.activation.apply(s_h * z);
            }
        }
        let s_v = self.multiplier(Layer::Head);
        Ok(s_v * crate::numerics::dot_slices(self.head.as_slice(), &h))
    }

    /// Outputs for every sample in `data`.
    pub fn predict(&self, data: &Dataset) -> Result<Vector> {
        if data.input_dim() != self.input_dim {
            return Err(Error::dims("predict", self.input_dim, data.input_dim()));
        }
        match self.activation {
            Activation::Linear => {
                let b0 = self.backward_chain().input_covector;
                data.inputs().matvec(&b0)
            }
            Activation::Relu => Ok(self.batch_forward(data.inputs())?.outputs),
        }
    }

    /// Backward chain `b_{L+1} = Ṽ, b_l = W̃_lᵀ b_{l+1}` plus `b_0 = W̃_0ᵀ b_1`.
    pub(crate) fn backward_chain(&self) -> BackwardChain {
        let depth = self.depth();
        let s_h = self.multiplier(Layer::Hidden(1));
        let mut b = vec![Vector::zeros(0); depth + 2];
        b[depth + 1] = self.head.scaled(self.multiplier(Layer::Head));
        for l in (1..=depth).rev() {
            let mut next = vec![0.0; self.width];
            self.hidden[l - 1].matvec_t_into(b[l + 1].as_slice(), &mut next);
            next.iter_mut().for_each(|v| *v *= s_h);
            b[l] = Vector::from_vec(next);
        }
        let mut b0 = vec![0.0; self.input_dim];
        self.input.matvec_t_into(b[1].as_slice(), &mut b0);
        let s_in = self.multiplier(Layer::Input);
        b0.iter_mut().for_each(|v| *v *= s_in);
        b[0] = Vector::zeros(0);
        BackwardChain {
            b,
            input_covector: Vector::from_vec(b0),
        }
    }

    /// Forward chain of a single vector: `[a_0, …, a_L]` for input `x`.
    pub(crate) fn forward_chain_linear(&self, x: &[f64]) -> Vec<Vector> {
        let s_in = self.multiplier(Layer::Input);
        let s_h = self.multiplier(Layer::Hidden(1));
        let mut out = Vec::with_capacity(self.depth() + 1);
        let mut a = vec![0.0; self.width];
        self.input.matvec_into(x, &mut a);
        a.iter_mut().for_each(|v| *v *= s_in);
        out.push(Vector::from_vec(a));
        for w in &self.hidden {
            let mut next = vec![0.0; self.width];
            w.matvec_into(out.last().expect("non-empty").as_slice(), &mut next);
            next.iter_mut().for_each(|v| *v *= s_h);
            out.push(Vector::from_vec(next));
        }
        out
    }

    fn batch_forward(&self, inputs: &Matrix) -> Result<BatchForward> {
        let s_in = self.multiplier(Layer::Input);
        let s_h = self.multiplier(Layer::Hidden(1));
        let s_v = self.multiplier(Layer::Head);
        let act = self.activation;
        // rows are samples
        let mut pre = Vec::with_capacity(self.depth() + 1);
        let mut post = Vec::with_capacity(self.depth() + 1);
        let z0 = gemm(s_in, inputs, Trans::No, &self.input, Trans::Yes)?;
        let mut h0 = z0.clone();
        h0.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
        pre.push(z0);
        post.push(h0);
        for w in &self.hidden {
            let z = gemm(s_h, post.last().expect("non-empty"), Trans::No, w, Trans::Yes)?;
            let mut h = z.clone();
            h.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            pre.push(z);
            post.push(h);
        }
        let outputs = post
            .last()
            .expect("non-empty")
            .matvec(&self.head)?
            .scaled(s_v);
        Ok(BatchForward { pre, post, outputs })
    }
}

pub(crate) struct BackwardChain {
    /// `b[l]` for `l` in `1..=L+1`; `b[0]` is unused.
    pub b: Vec<Vector>,
    /// `b_0 = W̃_0ᵀ b_1`, so that `f(x) = <b_0, x>`.
    pub input_covector: Vector,
}

struct BatchForward {
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
    outputs: Vector,
}

/// Cached forward/backward chains of a linear network on a dataset.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `a[l + 1]` holds `a_{l,i}` (one row per sample) for `l` in `-1..=L`.
    a: Vec<Matrix>,
    /// `b[l]` for `l` in `1..=L+1`.
    b: Vec<Vector>,
    residuals: Vector,
}

impl ForwardCache {
    /// `a_{l,i}` for `l` in `-1..=L`.
    pub fn a(&self, l: isize, i: usize) -> Vector {
        self.a[(l + 1) as usize].row_vector(i)
    }

    pub fn a_layer(&self, l: isize) -> &Matrix {
        &self.a[(l + 1) as usize]
    }

    /// `b_l` for `l` in `1..=L+1`.
    pub fn b(&self, l: usize) -> &Vector {
        &self.b[l]
    }

    /// `χ_i = f(x_i) - y_i`.
    pub fn residuals(&self) -> &Vector {
        &self.residuals
    }

    pub fn depth(&self) -> usize {
        self.b.len() - 2
    }

    /// `(1/m) Σ_i χ_i a_{l-1,i}` for hidden layer `l`.
    pub fn aggregated_input(&self, l: usize) -> Vector {
        let m = self.residuals.dim() as f64;
        self.a_layer(l as isize - 1)
            .matvec_t(&self.residuals)
            .expect("rows are samples")
            .scaled(1.0 / m)
    }

    /// Effective-weight gradient of hidden layer `l` as the explicit sum of
    /// rank-one matrices `(1/m) Σ_i χ_i b_{l+1} ⊗ a_{l-1,i}`.
    pub fn rank_one_sum(&self, l: usize) -> Matrix {
        let m = self.residuals.dim();
        let a = self.a_layer(l as isize - 1);
        let mut g = Matrix::zeros(self.b[l + 1].dim(), a.cols());
        for i in 0..m {
            g.rank1_update(
                self.residuals[i] / m as f64,
                self.b[l + 1].as_slice(),
                a.row(i),
            )
            .expect("conforming chains");
        }
        g
    }
}

/// Populates every chain of a linear network on `data`.
pub fn forward_cache(model: &ModelState, data: &Dataset) -> Result<ForwardCache> {
    model.require_linear("forward_cache")?;
    if data.input_dim() != model.input_dim {
        return Err(Error::dims("forward_cache", model.input_dim, data.input_dim()));
    }
    let s_in = model.multiplier(Layer::Input);
    let s_h = model.multiplier(Layer::Hidden(1));
    let mut a = Vec::with_capacity(model.depth() + 2);
    a.push(data.inputs().clone());
    a.push(gemm(s_in, data.inputs(), Trans::No, &model.input, Trans::Yes)?);
    for w in &model.hidden {
        let next = gemm(s_h, a.last().expect("non-empty"), Trans::No, w, Trans::Yes)?;
        a.push(next);
    }
    let chain = model.backward_chain();
    let outputs = a.last().expect("non-empty").matvec(&chain.b[model.depth() + 1])?;
    let mut residuals = outputs;
    residuals.axpy(-1.0, data.targets())?;
    Ok(ForwardCache {
        a,
        b: chain.b,
        residuals,
    })
}

/// Quadratic loss `(1/2m) Σ (f(x_i) - y_i)²`.
pub fn loss(model: &ModelState, data: &Dataset) -> Result<f64> {
    let mut r = model.predict(data)?;
    r.axpy(-1.0, data.targets())?;
    Ok(r.sq_norm() / (2.0 * data.len() as f64))
}

/// Gradient of one weight matrix.
#[derive(Clone, Debug)]
pub enum LayerGrad {
    /// `left ⊗ right`
    Rank1 { left: Vector, right: Vector },
    Dense(Matrix),
}

impl LayerGrad {
    pub fn to_dense(&self) -> Matrix {
        match self {
            LayerGrad::Rank1 { left, right } => crate::numerics::outer(left, right),
            LayerGrad::Dense(m) => m.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            LayerGrad::Rank1 { left, right } => left.sq_norm() == 0.0 || right.sq_norm() == 0.0,
            LayerGrad::Dense(m) => m.frobenius_sq() == 0.0,
        }
    }
}

/// Gradients with respect to the stored weights.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub input: Option<LayerGrad>,
    pub hidden: Vec<LayerGrad>,
    pub head: Option<Vector>,
    pub loss: f64,
}

/// Loss gradients for every trainable layer.
///
/// For a linear network every layer's gradient is rank one,
/// `(1/m) Σ_i χ_i b_{l+1} ⊗ a_{l-1,i} = b_{l+1} ⊗ a_{l-1}(x̄)` with
/// `x̄ = (1/m) Σ_i χ_i x_i`, so it is formed from two vector chains without
/// touching per-sample activations. ReLU networks use batched backprop.
pub fn gradients(model: &ModelState, data: &Dataset) -> Result<Gradients> {
    if data.input_dim() != model.input_dim {
        return Err(Error::dims("gradients", model.input_dim, data.input_dim()));
    }
    match model.activation {
        Activation::Linear => linear_gradients(model, data),
        Activation::Relu => backprop_gradients(model, data),
    }
}

fn linear_gradients(model: &ModelState, data: &Dataset) -> Result<Gradients> {
    let m = data.len() as f64;
    let chain = model.backward_chain();
    let mut chi = data.inputs().matvec(&chain.input_covector)?;
    chi.axpy(-1.0, data.targets())?;
    let loss = chi.sq_norm() / (2.0 * m);
    let xbar = data.inputs().matvec_t(&chi)?.scaled(1.0 / m);
    let g = model.forward_chain_linear(xbar.as_slice());
    let s_h = model.multiplier(Layer::Hidden(1));
    let hidden = (1..=model.depth())
        .map(|l| LayerGrad::Rank1 {
            left: chain.b[l + 1].scaled(s_h),
            right: g[l - 1].clone(),
        })
        .collect();
    let input = model.trainable.input.then(|| LayerGrad::Rank1 {
        left: chain.b[1].scaled(model.multiplier(Layer::Input)),
        right: xbar.clone(),
    });
    let head = model
        .trainable
        .head
        .then(|| g[model.depth()].scaled(model.multiplier(Layer::Head)));
    Ok(Gradients {
        input,
        hidden,
        head,
        loss,
    })
}

fn backprop_gradients(model: &ModelState, data: &Dataset) -> Result<Gradients> {
    let m = data.len();
    let act = model.activation;
    let fwd = model.batch_forward(data.inputs())?;
    let mut chi = fwd.outputs.clone();
    chi.axpy(-1.0, data.targets())?;
    let loss = chi.sq_norm() / (2.0 * m as f64);
    let s_in = model.multiplier(Layer::Input);
    let s_h = model.multiplier(Layer::Hidden(1));
    let s_v = model.multiplier(Layer::Head);

    let depth = model.depth();
    let head = model.trainable.head.then(|| {
        fwd.post[depth]
            .matvec_t(&chi)
            .expect("rows are samples")
            .scaled(s_v / m as f64)
    });

    // delta = dLoss/dz for the current layer, one row per sample
    let mut delta = Matrix::zeros(m, model.width);
    for i in 0..m {
        let c = chi[i] * s_v / m as f64;
        let z = fwd.pre[depth].row(i);
        for ((d, &v), &zz) in delta.row_mut(i).iter_mut().zip(model.head.as_slice()).zip(z) {
            *d = c * v * act.derivative(zz);
        }
    }
    let mut hidden = vec![LayerGrad::Dense(Matrix::zeros(0, 0)); depth];
    for l in (1..=depth).rev() {
        let grad = gemm(s_h, &delta, Trans::Yes, &fwd.post[l - 1], Trans::No)?;
        hidden[l - 1] = LayerGrad::Dense(grad);
        let mut prev = gemm(s_h, &delta, Trans::No, &model.hidden[l - 1], Trans::No)?;
        let z = &fwd.pre[l - 1];
        for (p, &zz) in prev.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *p *= act.derivative(zz);
        }
        delta = prev;
    }
    let input = if model.trainable.input {
        Some(LayerGrad::Dense(gemm(
            s_in,
            &delta,
            Trans::Yes,
            data.inputs(),
            Trans::No,
        )?))
    } else {
        None
    };
    Ok(Gradients {
        input,
        hidden,
        head,
        loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::stats::mean;

    fn random_data(m: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed, 99);
        let x = rng.gaussian_matrix(m, d, 1.0).unwrap();
        let y = rng.gaussian_vector(m, 1.0);
        Dataset::new(x, y).unwrap()
    }

    fn model(p: Parametrization, n: usize, l: usize, d: usize, act: Activation, seed: u64) -> ModelState {
        init_model(&p, n, l, d, act, &mut RngStream::new(seed, 1)).unwrap()
    }

    #[test]
    fn head_norm_scales_with_parametrization() {
        let mut mup = Vec::new();
        let mut sp = Vec::new();
        for s in 0..100 {
            mup.push(model(Parametrization::mup(), 64, 3, 10, Activation::Linear, s).head.sq_norm());
            sp.push(model(Parametrization::sp(), 64, 3, 10, Activation::Linear, s).head.sq_norm());
        }
        assert!((mean(&mup) * 64.0 - 1.0).abs() < 0.3);
        assert!((mean(&sp) - 1.0).abs() < 0.3);
    }

    #[test]
    fn init_is_deterministic() {
        let a = model(Parametrization::mup(), 8, 2, 3, Activation::Linear, 5);
        let b = model(Parametrization::mup(), 8, 2, 3, Activation::Linear, 5);
        assert_eq!(a.hidden[1], b.hidden[1]);
        assert_eq!(a.head, b.head);
    }

    #[test]
    fn forward_basic_identities() {
        for act in [Activation::Linear, Activation::Relu] {
            let m = model(Parametrization::mup(), 16, 3, 5, act, 2);
            assert_eq!(m.forward(&Vector::zeros(5)).unwrap(), 0.0);
        }
        let m = model(Parametrization::sp(), 16, 3, 5, Activation::Linear, 2);
        let x = RngStream::new(1, 2).gaussian_vector(5, 1.0);
        let f1 = m.forward(&x).unwrap();
        let f2 = m.forward(&x.scaled(2.0)).unwrap();
        assert!((f2 - 2.0 * f1).abs() <= 1e-12 * f1.abs().max(1.0));
        assert!(m.forward(&Vector::zeros(4)).is_err());
    }

    #[test]
    fn scalar_network_by_hand() {
        let one = |v: f64| Matrix::from_vec(1, 1, vec![v]).unwrap();
        let m = ModelState::from_weights(
            Parametrization::sp(),
            Activation::Linear,
            one(2.0),
            vec![one(3.0)],
            Vector::from_vec(vec![5.0]),
        )
        .unwrap();
        assert_eq!(m.forward(&Vector::from_vec(vec![1.0])).unwrap(), 30.0);
    }

    #[test]
    fn cache_telescopes() {
        let data = random_data(4, 6, 3);
        let m = model(Parametrization::mup(), 16, 3, 6, Activation::Linear, 8);
        let cache = forward_cache(&m, &data).unwrap();
        for i in 0..4 {
            let f = m.forward(&data.input(i)).unwrap();
            for l in 0..=3isize {
                let v = cache.a(l, i).dot(cache.b((l + 1) as usize)).unwrap();
                assert!((v - f).abs() <= 1e-10 * f.abs().max(1e-300), "l={l} {v} {f}");
            }
            assert!((cache.residuals()[i] - (f - data.targets()[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn cache_depth_one_backward() {
        let data = random_data(2, 3, 3);
        let m = model(Parametrization::sp(), 5, 1, 3, Activation::Linear, 8);
        let cache = forward_cache(&m, &data).unwrap();
        let want = m.hidden[0].matvec_t(&m.head).unwrap();
        assert_eq!(cache.b(1), &want);
    }

    #[test]
    fn cache_matches_direct_products() {
        let data = random_data(3, 4, 1);
        let m = model(Parametrization::mup(), 16, 3, 4, Activation::Linear, 4);
        let cache = forward_cache(&m, &data).unwrap();
        // a_{l,i} by explicit matrix products
        let mut prod = m.input.clone();
        for l in 0..=3usize {
            if l > 0 {
                prod = m.hidden[l - 1].matmul(&prod).unwrap();
            }
            for i in 0..3 {
                let want = prod.matvec(&data.input(i)).unwrap();
                let got = cache.a(l as isize, i);
                for k in 0..16 {
                    assert!((want[k] - got[k]).abs() <= 1e-12);
                }
            }
        }
        // b_l = (W_L ... W_l)ᵀ V
        let mut prod = Matrix::identity(16);
        for l in (1..=3usize).rev() {
            prod = prod.matmul(&m.hidden[l - 1]).unwrap();
            let want = prod.matvec_t(&m.head).unwrap();
            for k in 0..16 {
                assert!((want[k] - cache.b(l)[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn forward_cache_rejects_relu() {
        let data = random_data(2, 3, 3);
        let m = model(Parametrization::mup(), 4, 1, 3, Activation::Relu, 8);
        assert!(matches!(forward_cache(&m, &data), Err(Error::UnsupportedMode(_))));
    }

    #[test]
    fn loss_examples() {
        let data = random_data(4, 3, 3);
        let m = model(Parametrization::mup(), 8, 2, 3, Activation::Linear, 8);
        // interpolation
        let fitted = Dataset::new(data.inputs().clone(), m.predict(&data).unwrap()).unwrap();
        assert!(loss(&m, &fitted).unwrap() < 1e-30);
        // zero model, unit targets
        let mut z = m.clone();
        z.head = Vector::zeros(8);
        let ones = Dataset::new(data.inputs().clone(), Vector::from_vec(vec![1.0; 4])).unwrap();
        assert_eq!(loss(&z, &ones).unwrap(), 0.5);
        // per-sample recomputation
        for act in [Activation::Linear, Activation::Relu] {
            let mut mm = model(Parametrization::sp(), 8, 2, 3, act, 9);
            mm.activation = act;
            let direct: f64 = (0..4)
                .map(|i| (mm.forward(&data.input(i)).unwrap() - data.targets()[i]).powi(2))
                .sum::<f64>()
                / 8.0;
            assert!((loss(&mm, &data).unwrap() - direct).abs() <= 1e-12);
        }
    }

    #[test]
    fn gram_is_symmetric_psd_with_normalized_diagonal() {
        let data = random_data(6, 4, 12);
        let k = data.gram();
        for i in 0..6 {
            let xi = data.input(i);
            assert!((k[(i, i)] - xi.sq_norm() / 4.0).abs() < 1e-14);
            for j in 0..6 {
                assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
        // x^T K x >= 0 on random probes
        let mut rng = RngStream::new(1, 1);
        for _ in 0..50 {
            let v = rng.gaussian_vector(6, 1.0);
            assert!(k.matvec(&v).unwrap().dot(&v).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn interpolating_model_has_zero_gradient() {
        let data = random_data(3, 4, 2);
        let m = model(Parametrization::mup(), 8, 2, 4, Activation::Linear, 3)
            .with_trainable(Trainable { input: true, head: true });
        let fitted = Dataset::new(data.inputs().clone(), m.predict(&data).unwrap()).unwrap();
        let g = gradients(&m, &fitted).unwrap();
        for l in &g.hidden {
            assert!(l.to_dense().frobenius_sq() < 1e-30);
        }
    }
}

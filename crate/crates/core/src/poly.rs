//! Polynomials in the learning rate `η` with scalar, vector and matrix
//! coefficients, and the exact output polynomials of a GD-trained linear
//! network.
//!
//! After one GD step every effective hidden weight is affine in `η`,
//! `W̃_l(η) = W̃_l - η κ_l G_l` with `G_l = b_{l+1} ⊗ g_l` and
//! `g_l = (1/m) Σ_i χ_i a_{l-1,i}`, so the output is a degree-`L` polynomial.
//! Its coefficients are obtained by pushing a vector polynomial through the
//! layers (`v_k ← W̃_l v_k - κ_l G_l v_{k-1}`), which costs about `L²/2`
//! matrix-vector products.

use std::ops::{Add, Mul, Neg, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{init_model, Activation, Dataset, ForwardCache, ModelState};
use crate::numerics::{stats, Matrix, RngStream, StreamKey, Vector};
use crate::parametrization::{Layer, OptimizerKind, Parametrization};

/// Scalar polynomial `c_0 + c_1 η + … + c_D η^D`.
///
/// `D` is the formal degree; trailing zero coefficients are kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EtaPoly {
    coeffs: Vec<f64>,
}

impl EtaPoly {
    /// An empty coefficient list is read as the zero polynomial.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        EtaPoly { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        EtaPoly { coeffs: vec![c] }
    }

    /// `c η^k`
    pub fn monomial(c: f64, k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = c;
        EtaPoly { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Index of the highest non-zero coefficient, if any.
    pub fn effective_degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|&c| c != 0.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Horner evaluation.
    pub fn eval(&self, eta: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * eta + c)
    }

    pub fn scaled(&self, alpha: f64) -> EtaPoly {
        EtaPoly::new(self.coeffs.iter().map(|c| alpha * c).collect())
    }

    /// Multiplies by `η^k`.
    pub fn shifted(&self, k: usize) -> EtaPoly {
        let mut coeffs = vec![0.0; k];
        coeffs.extend_from_slice(&self.coeffs);
        EtaPoly { coeffs }
    }

    pub fn derivative(&self) -> EtaPoly {
        EtaPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }
}

impl Add for &EtaPoly {
    type Output = EtaPoly;
    fn add(self, rhs: &EtaPoly) -> EtaPoly {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        EtaPoly::new((0..len).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &EtaPoly {
    type Output = EtaPoly;
    fn sub(self, rhs: &EtaPoly) -> EtaPoly {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        EtaPoly::new((0..len).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &EtaPoly {
    type Output = EtaPoly;
    fn mul(self, rhs: &EtaPoly) -> EtaPoly {
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        EtaPoly { coeffs: out }
    }
}

impl Neg for &EtaPoly {
    type Output = EtaPoly;
    fn neg(self) -> EtaPoly {
        self.scaled(-1.0)
    }
}

pub fn poly_add(p: &EtaPoly, q: &EtaPoly) -> EtaPoly {
    p + q
}

pub fn poly_mul(p: &EtaPoly, q: &EtaPoly) -> EtaPoly {
    p * q
}

pub fn poly_eval(p: &EtaPoly, eta: f64) -> f64 {
    p.eval(eta)
}

/// Polynomial with vector coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorEtaPoly {
    dim: usize,
    coeffs: Vec<Vector>,
}

impl VectorEtaPoly {
    pub fn constant(v: Vector) -> Self {
        VectorEtaPoly {
            dim: v.dim(),
            coeffs: vec![v],
        }
    }

    pub fn zero(dim: usize, degree: usize) -> Self {
        VectorEtaPoly {
            dim,
            coeffs: vec![Vector::zeros(dim); degree + 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Vector] {
        &self.coeffs
    }

    pub fn eval(&self, eta: f64) -> Vector {
        let mut acc = Vector::zeros(self.dim);
        for c in self.coeffs.iter().rev() {
            acc.scale_mut(eta);
            acc.axpy(1.0, c).expect("conforming coefficients");
        }
        acc
    }

    /// `<self, other>` as a scalar polynomial.
    pub fn dot(&self, other: &VectorEtaPoly) -> Result<EtaPoly> {
        if self.dim != other.dim {
            return Err(Error::dims("VectorEtaPoly::dot", self.dim, other.dim));
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += crate::numerics::dot_slices(a.as_slice(), b.as_slice());
            }
        }
        Ok(EtaPoly::new(out))
    }

    /// `<self, v>` for a constant vector.
    pub fn dot_vector(&self, v: &Vector) -> Result<EtaPoly> {
        if self.dim != v.dim() {
            return Err(Error::dims("VectorEtaPoly::dot_vector", self.dim, v.dim()));
        }
        Ok(EtaPoly::new(
            self.coeffs
                .iter()
                .map(|c| crate::numerics::dot_slices(c.as_slice(), v.as_slice()))
                .collect(),
        ))
    }

    pub fn try_add(&self, other: &VectorEtaPoly) -> Result<VectorEtaPoly> {
        if self.dim != other.dim {
            return Err(Error::dims("VectorEtaPoly::add", self.dim, other.dim));
        }
        let len = self.coeffs.len().max(other.coeffs.len());
        let mut out = VectorEtaPoly::zero(self.dim, len - 1);
        for (k, o) in out.coeffs.iter_mut().enumerate() {
            if let Some(a) = self.coeffs.get(k) {
                o.axpy(1.0, a)?;
            }
            if let Some(b) = other.coeffs.get(k) {
                o.axpy(1.0, b)?;
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, alpha: f64) -> VectorEtaPoly {
        VectorEtaPoly {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|c| c.scaled(alpha)).collect(),
        }
    }

    /// Multiplies by `η^k`.
    pub fn shifted(&self, k: usize) -> VectorEtaPoly {
        let mut coeffs = vec![Vector::zeros(self.dim); k];
        coeffs.extend(self.coeffs.iter().cloned());
        VectorEtaPoly {
            dim: self.dim,
            coeffs,
        }
    }
}

/// Polynomial with matrix coefficients, all of one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixEtaPoly {
    rows: usize,
    cols: usize,
    coeffs: Vec<Matrix>,
}

impl MatrixEtaPoly {
    pub fn constant(m: Matrix) -> Self {
        MatrixEtaPoly {
            rows: m.rows(),
            cols: m.cols(),
            coeffs: vec![m],
        }
    }

    pub fn new(coeffs: Vec<Matrix>) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::Argument("matrix polynomial needs a coefficient".into()))?;
        let shape = first.shape();
        if let Some(bad) = coeffs.iter().find(|c| c.shape() != shape) {
            return Err(Error::dims("MatrixEtaPoly::new", format!("{shape:?}"), format!("{:?}", bad.shape())));
        }
        Ok(MatrixEtaPoly {
            rows: shape.0,
            cols: shape.1,
            coeffs,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Matrix] {
        &self.coeffs
    }

    /// Number of stored scalars.
    pub fn storage(&self) -> usize {
        self.coeffs.len() * self.rows * self.cols
    }

    pub fn eval(&self, eta: f64) -> Matrix {
        let mut acc = Matrix::zeros(self.rows, self.cols);
        for c in self.coeffs.iter().rev() {
            acc.scale_mut(eta);
            acc.axpy(1.0, c).expect("conforming coefficients");
        }
        acc
    }

    pub fn try_add(&self, other: &MatrixEtaPoly) -> Result<MatrixEtaPoly> {
        self.combine(other, 1.0)
    }

    pub fn try_sub(&self, other: &MatrixEtaPoly) -> Result<MatrixEtaPoly> {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &MatrixEtaPoly, sign: f64) -> Result<MatrixEtaPoly> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                "MatrixEtaPoly::add",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        let len = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = vec![Matrix::zeros(self.rows, self.cols); len];
        for (k, o) in coeffs.iter_mut().enumerate() {
            if let Some(a) = self.coeffs.get(k) {
                o.axpy(1.0, a)?;
            }
            if let Some(b) = other.coeffs.get(k) {
                o.axpy(sign, b)?;
            }
        }
        Ok(MatrixEtaPoly {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        })
    }

    pub fn try_mul(&self, other: &MatrixEtaPoly) -> Result<MatrixEtaPoly> {
        if self.cols != other.rows {
            return Err(Error::dims("MatrixEtaPoly::mul", self.cols, other.rows));
        }
        let len = self.coeffs.len() + other.coeffs.len() - 1;
        let mut coeffs = vec![Matrix::zeros(self.rows, other.cols); len];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j].axpy(1.0, &a.matmul(b)?)?;
            }
        }
        Ok(MatrixEtaPoly {
            rows: self.rows,
            cols: other.cols,
            coeffs,
        })
    }

    /// `self(η) v(η)`
    pub fn matvec(&self, v: &VectorEtaPoly) -> Result<VectorEtaPoly> {
        if self.cols != v.dim() {
            return Err(Error::dims("MatrixEtaPoly::matvec", self.cols, v.dim()));
        }
        let mut out = VectorEtaPoly::zero(self.rows, self.degree() + v.degree());
        let mut tmp = vec![0.0; self.rows];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in v.coeffs.iter().enumerate() {
                a.matvec_into(b.as_slice(), &mut tmp);
                crate::numerics::axpy_slices(1.0, &tmp, out.coeffs[i + j].as_mut_slice());
            }
        }
        Ok(out)
    }

    /// `self(η)ᵀ v(η)`
    pub fn matvec_t(&self, v: &VectorEtaPoly) -> Result<VectorEtaPoly> {
        if self.rows != v.dim() {
            return Err(Error::dims("MatrixEtaPoly::matvec_t", self.rows, v.dim()));
        }
        let mut out = VectorEtaPoly::zero(self.cols, self.degree() + v.degree());
        let mut tmp = vec![0.0; self.cols];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in v.coeffs.iter().enumerate() {
                a.matvec_t_into(b.as_slice(), &mut tmp);
                crate::numerics::axpy_slices(1.0, &tmp, out.coeffs[i + j].as_mut_slice());
            }
        }
        Ok(out)
    }

    /// `u(η) ⊗ v(η)`
    pub fn outer(u: &VectorEtaPoly, v: &VectorEtaPoly) -> MatrixEtaPoly {
        let mut coeffs = vec![Matrix::zeros(u.dim(), v.dim()); u.degree() + v.degree() + 1];
        for (i, a) in u.coeffs.iter().enumerate() {
            for (j, b) in v.coeffs.iter().enumerate() {
                coeffs[i + j]
                    .rank1_update(1.0, a.as_slice(), b.as_slice())
                    .expect("shape set above");
            }
        }
        MatrixEtaPoly {
            rows: u.dim(),
            cols: v.dim(),
            coeffs,
        }
    }

    pub fn scaled(&self, alpha: f64) -> MatrixEtaPoly {
        MatrixEtaPoly {
            rows: self.rows,
            cols: self.cols,
            coeffs: self.coeffs.iter().map(|c| c.scaled(alpha)).collect(),
        }
    }

    /// Multiplies by `η^k`.
    pub fn shifted(&self, k: usize) -> MatrixEtaPoly {
        let mut coeffs = vec![Matrix::zeros(self.rows, self.cols); k];
        coeffs.extend(self.coeffs.iter().cloned());
        MatrixEtaPoly {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        }
    }
}

fn require_frozen_linear(model: &ModelState, op: &str) -> Result<()> {
    if model.activation() != Activation::Linear {
        return Err(Error::UnsupportedMode(format!("{op} requires a linear network")));
    }
    let t = model.trainable();
    if t.input || t.head {
        return Err(Error::UnsupportedMode(format!(
            "{op} assumes the input and head layers are frozen"
        )));
    }
    Ok(())
}

/// `κ_l`: per-unit-`η` step size of the effective hidden weight `W̃_l`.
fn hidden_step_factors(model: &ModelState) -> Vec<f64> {
    let s_h = model.multiplier(Layer::Hidden(1));
    (1..=model.depth())
        .map(|l| model.layer_lr(1.0, Layer::Hidden(l), OptimizerKind::Gd) * s_h * s_h)
        .collect()
}

/// Vector recurrence for the one-step output. `b[l]` for `l` in `1..=L+1`,
/// `g[l - 1] = g_l` for `l` in `1..=L`.
fn one_step_recurrence(model: &ModelState, b: &[Vector], g: &[Vector], x: &Vector) -> Result<EtaPoly> {
    if x.dim() != model.input_dim() {
        return Err(Error::dims("one_step_output_poly", model.input_dim(), x.dim()));
    }
    let n = model.width();
    let s_h = model.multiplier(Layer::Hidden(1));
    let kappa = hidden_step_factors(model);
    let a0 = model.forward_chain_linear(x.as_slice()).swap_remove(0);
    let mut v: Vec<Vec<f64>> = vec![a0.into_vec()];
    for l in 1..=model.depth() {
        let w = &model.hidden_weights()[l - 1];
        let mut next = vec![vec![0.0; n]; v.len() + 1];
        let mut tmp = vec![0.0; n];
        for (k, vk) in v.iter().enumerate() {
            w.matvec_into(vk, &mut tmp);
            crate::numerics::axpy_slices(s_h, &tmp, &mut next[k]);
            let proj = crate::numerics::dot_slices(g[l - 1].as_slice(), vk);
            crate::numerics::axpy_slices(-kappa[l - 1] * proj, b[l + 1].as_slice(), &mut next[k + 1]);
        }
        v = next;
    }
    let head = &b[model.depth() + 1];
    Ok(EtaPoly::new(
        v.iter()
            .map(|vk| crate::numerics::dot_slices(head.as_slice(), vk))
            .collect(),
    ))
}

/// Exact one-step output `f^(1)(x)` as a degree-`L` polynomial in `η`, built
/// from a populated cache.
pub fn one_step_output_poly(
    cache: &ForwardCache,
    model: &ModelState,
    data: &Dataset,
    x: &Vector,
) -> Result<EtaPoly> {
    require_frozen_linear(model, "one_step_output_poly")?;
    if cache.depth() != model.depth() || cache.residuals().dim() != data.len() {
        return Err(Error::Argument("cache does not belong to this model and dataset".into()));
    }
    let b: Vec<Vector> = (0..=model.depth() + 1)
        .map(|l| if l == 0 { Vector::zeros(0) } else { cache.b(l).clone() })
        .collect();
    let g: Vec<Vector> = (1..=model.depth()).map(|l| cache.aggregated_input(l)).collect();
    one_step_recurrence(model, &b, &g, x)
}

/// [`one_step_output_poly`] for several probes, without per-sample chains:
/// `g_l` is the forward chain of `x̄ = (1/m) Σ_i χ_i x_i`.
pub fn one_step_output_polys(model: &ModelState, data: &Dataset, probes: &[Vector]) -> Result<Vec<EtaPoly>> {
    require_frozen_linear(model, "one_step_output_polys")?;
    if data.input_dim() != model.input_dim() {
        return Err(Error::dims("one_step_output_polys", model.input_dim(), data.input_dim()));
    }
    let chain = model.backward_chain();
    let mut chi = data.inputs().matvec(&chain.input_covector)?;
    chi.axpy(-1.0, data.targets())?;
    let xbar = data.inputs().matvec_t(&chi)?.scaled(1.0 / data.len() as f64);
    let g: Vec<Vector> = model
        .forward_chain_linear(xbar.as_slice())
        .into_iter()
        .take(model.depth())
        .collect();
    probes
        .iter()
        .map(|x| one_step_recurrence(model, &chain.b, &g, x))
        .collect()
}

/// Caps for the exact multi-step mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyLimits {
    pub max_width: usize,
    /// Largest number of stored scalars in any weight polynomial.
    pub max_coefficients: usize,
}

impl Default for PolyLimits {
    fn default() -> Self {
        PolyLimits {
            max_width: 64,
            max_coefficients: 1 << 24,
        }
    }
}

/// Formal degree of the hidden weights after `t` steps:
/// `D_1 = 1`, `D_{t+1} = 1 + (2L - 1) D_t`.
pub fn weight_degree_bound(depth: usize, t: usize) -> usize {
    (1..t).fold(usize::from(t > 0), |d, _| 1 + (2 * depth - 1) * d)
}

/// Formal degree of `f^(t)`: `L · D_t`.
pub fn output_degree_bound(depth: usize, t: usize) -> usize {
    depth * weight_degree_bound(depth, t)
}

/// Exact `f^(t)(x)` for every probe, propagating the weights as matrix
/// polynomials through `t` GD steps.
pub fn multi_step_output_polys(
    model: &ModelState,
    data: &Dataset,
    probes: &[Vector],
    t: usize,
    limits: &PolyLimits,
) -> Result<Vec<EtaPoly>> {
    require_frozen_linear(model, "multi_step_output_poly")?;
    let n = model.width();
    if n > limits.max_width {
        return Err(Error::ResourceLimit(format!(
            "exact multi-step mode is capped at width {} (got {n})",
            limits.max_width
        )));
    }
    if data.input_dim() != model.input_dim() {
        return Err(Error::dims("multi_step_output_poly", model.input_dim(), data.input_dim()));
    }
    if let Some(p) = probes.iter().find(|p| p.dim() != model.input_dim()) {
        return Err(Error::dims("multi_step_output_poly", model.input_dim(), p.dim()));
    }
    let depth = model.depth();
    let m = data.len() as f64;
    let s_in = model.multiplier(Layer::Input);
    let s_h = model.multiplier(Layer::Hidden(1));
    let kappa = hidden_step_factors(model);
    let w0 = model.input_weights().scaled(s_in);
    let head = VectorEtaPoly::constant(model.head_weights().scaled(model.multiplier(Layer::Head)));
    let mut w: Vec<MatrixEtaPoly> = model
        .hidden_weights()
        .iter()
        .map(|h| MatrixEtaPoly::constant(h.scaled(s_h)))
        .collect();
    let x = data.inputs();
    let xty = x.matvec_t(data.targets())?.scaled(1.0 / m);

    let backward = |w: &[MatrixEtaPoly]| -> Result<(Vec<VectorEtaPoly>, VectorEtaPoly)> {
        let mut b = vec![head.clone(); depth + 2];
        for l in (1..=depth).rev() {
            b[l] = w[l - 1].matvec_t(&b[l + 1])?;
        }
        let b0 = MatrixEtaPoly::constant(w0.clone()).matvec_t(&b[1])?;
        Ok((b, b0))
    };

    for _ in 0..t {
        let (b, b0) = backward(&w)?;
        let next_degree = 1 + (2 * depth - 1) * w[0].degree();
        if (next_degree + 1) * n * n > limits.max_coefficients {
            return Err(Error::ResourceLimit(format!(
                "weight polynomial of degree {next_degree} at width {n} exceeds {} coefficients",
                limits.max_coefficients
            )));
        }
        // x̄(η) = (1/m) Xᵀ (X b_0(η) - y)
        let mut xbar = VectorEtaPoly::zero(model.input_dim(), b0.degree());
        for (k, c) in b0.coeffs().iter().enumerate() {
            xbar.coeffs[k] = x.matvec_t(&x.matvec(c)?)?.scaled(1.0 / m);
        }
        xbar.coeffs[0].axpy(-1.0, &xty)?;
        let mut g = Vec::with_capacity(depth);
        g.push(MatrixEtaPoly::constant(w0.clone()).matvec(&xbar)?);
        for l in 1..depth {
            let next = w[l - 1].matvec(&g[l - 1])?;
            g.push(next);
        }
        for l in 1..=depth {
            let step = MatrixEtaPoly::outer(&b[l + 1], &g[l - 1]).scaled(kappa[l - 1]).shifted(1);
            w[l - 1] = w[l - 1].try_sub(&step)?;
        }
    }
    let (_, b0) = backward(&w)?;
    probes.iter().map(|p| b0.dot_vector(p)).collect()
}

pub fn multi_step_output_poly(
    model: &ModelState,
    data: &Dataset,
    x: &Vector,
    t: usize,
    limits: &PolyLimits,
) -> Result<EtaPoly> {
    Ok(multi_step_output_polys(model, data, std::slice::from_ref(x), t, limits)?.remove(0))
}

/// `(1/2m) Σ_i (p_i(η) - y_i)²`
pub fn loss_poly(output_polys: &[EtaPoly], y: &Vector) -> Result<EtaPoly> {
    if output_polys.len() != y.dim() || output_polys.is_empty() {
        return Err(Error::dims("loss_poly", y.dim(), output_polys.len()));
    }
    let mut acc = EtaPoly::constant(0.0);
    for (p, &yi) in output_polys.iter().zip(y.iter()) {
        let r = p - &EtaPoly::constant(yi);
        acc = &acc + &(&r * &r);
    }
    Ok(acc.scaled(0.5 / y.dim() as f64))
}

/// Monte-Carlo size of the one-step coefficients across widths.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientScaling {
    pub widths: Vec<usize>,
    pub depth: usize,
    pub trials: usize,
    /// `rms[l - 1][w]`: `E[φ_l²]^{1/2}` at `widths[w]`.
    pub rms: Vec<Vec<f64>>,
    /// Log-log slope of `rms[l - 1]` against width.
    pub slopes: Vec<f64>,
}

/// Estimates `E[φ_l²]^{1/2}` for `l` in `1..=L` at each width, with a fresh
/// initialization per trial drawn from a child stream of `rng`.
pub fn coefficient_l2_scaling(
    param: &Parametrization,
    widths: &[usize],
    depth: usize,
    data: &Dataset,
    x: &Vector,
    trials: usize,
    rng: &RngStream,
) -> Result<CoefficientScaling> {
    if widths.is_empty() || trials == 0 {
        return Err(Error::InsufficientInput("need at least one width and one trial".into()));
    }
    let mut rms = vec![Vec::with_capacity(widths.len()); depth];
    for &n in widths {
        let coeffs: Vec<Vec<f64>> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let salt = StreamKey::new("coefficients")
                    .push_u64(n as u64)
                    .push_u64(trial as u64)
                    .finish();
                let mut r = rng.split(salt);
                let model = init_model(param, n, depth, data.input_dim(), Activation::Linear, &mut r)?;
                let p = one_step_output_polys(&model, data, std::slice::from_ref(x))?.remove(0);
                Ok((1..=depth).map(|l| p.coeff(l)).collect())
            })
            .collect::<Result<_>>()?;
        for (l, out) in rms.iter_mut().enumerate() {
            let col: Vec<f64> = coeffs.iter().map(|c| c[l]).collect();
            out.push(stats::rms(&col));
        }
    }
    let xs: Vec<f64> = widths.iter().map(|&n| n as f64).collect();
    let slopes = rms
        .iter()
        .map(|r| stats::loglog_fit(&xs, r).map_or(f64::NAN, |f| f.slope))
        .collect();
    Ok(CoefficientScaling {
        widths: widths.to_vec(),
        depth,
        trials,
        rms,
        slopes,
    })
}

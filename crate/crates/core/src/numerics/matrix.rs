use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense vector of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    /// Unit vector `e_index` in dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[index] = 1.0;
        v
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector(data)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::dims("dot", self.dim(), other.dim()));
        }
        Ok(dot_slices(&self.0, &other.0))
    }

    pub fn sq_norm(&self) -> f64 {
        dot_slices(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Vector {
        Vector(self.0.iter().map(|x| alpha * x).collect())
    }

    pub fn scale_mut(&mut self, alpha: f64) {
        self.0.iter_mut().for_each(|x| *x *= alpha);
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Vector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::dims("axpy", self.dim(), other.dim()));
        }
        axpy_slices(alpha, &other.0, &mut self.0);
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::dims(
                "Matrix::from_vec",
                format!("{rows}x{cols}"),
                format!("{} entries", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::Argument(format!("non-finite matrix entry {bad}")));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix whose rows are the given vectors.
    pub fn from_rows(rows: &[Vector]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vector::dim);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.dim() != cols {
                return Err(Error::dims("Matrix::from_rows", cols, r.dim()));
            }
            data.extend_from_slice(r.as_slice());
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_vector(&self, i: usize) -> Vector {
        Vector::from_vec(self.row(i).to_vec())
    }

    pub fn column_vector(&self, j: usize) -> Vector {
        Vector::from_vec((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scale_mut(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Matrix {
        let mut m = self.clone();
        m.scale_mut(alpha);
        m
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                "Matrix::axpy",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        axpy_slices(alpha, &other.data, &mut self.data);
        Ok(())
    }

    /// `self += alpha * u vᵀ`
    pub fn rank1_update(&mut self, alpha: f64, u: &[f64], v: &[f64]) -> Result<()> {
        if u.len() != self.rows || v.len() != self.cols {
            return Err(Error::dims(
                "rank1_update",
                format!("{:?}", self.shape()),
                format!("({}, {})", u.len(), v.len()),
            ));
        }
        for (i, &ui) in u.iter().enumerate() {
            if ui != 0.0 {
                axpy_slices(alpha * ui, v, self.row_mut(i));
            }
        }
        Ok(())
    }

    pub fn matvec(&self, v: &Vector) -> Result<Vector> {
        if v.dim() != self.cols {
            return Err(Error::dims("matvec", format!("{:?}", self.shape()), v.dim()));
        }
        let mut out = vec![0.0; self.rows];
        self.matvec_into(v.as_slice(), &mut out);
        Ok(Vector::from_vec(out))
    }

    /// `Mᵀ v`
    pub fn matvec_t(&self, v: &Vector) -> Result<Vector> {
        if v.dim() != self.rows {
            return Err(Error::dims("matvec_t", format!("{:?}", self.shape()), v.dim()));
        }
        let mut out = vec![0.0; self.cols];
        self.matvec_t_into(v.as_slice(), &mut out);
        Ok(Vector::from_vec(out))
    }

    pub(crate) fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = dot_slices(row, v);
        }
        if self.cols == 0 {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    }

    pub(crate) fn matvec_t_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                axpy_slices(vi, self.row(i), out);
            }
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        gemm(1.0, self, Trans::No, other, Trans::No)
    }

    pub fn frobenius_sq(&self) -> f64 {
        dot_slices(&self.data, &self.data)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

/// `alpha * op(a) * op(b)` through `matrixmultiply`.
pub fn gemm(alpha: f64, a: &Matrix, ta: Trans, b: &Matrix, tb: Trans) -> Result<Matrix> {
    let (m, k, rsa, csa) = match ta {
        Trans::No => (a.rows, a.cols, a.cols as isize, 1),
        Trans::Yes => (a.cols, a.rows, 1, a.cols as isize),
    };
    let (k2, n, rsb, csb) = match tb {
        Trans::No => (b.rows, b.cols, b.cols as isize, 1),
        Trans::Yes => (b.cols, b.rows, 1, b.cols as isize),
    };
    if k != k2 {
        return Err(Error::dims("gemm", format!("{m}x{k}"), format!("{k2}x{n}")));
    }
    let mut c = Matrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return Ok(c);
    }
    // SAFETY: the strides describe the row-major buffers of `a`, `b` and `c`
    // whose lengths were checked against their shapes above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(c)
}

pub fn matvec(m: &Matrix, v: &Vector) -> Result<Vector> {
    m.matvec(v)
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.matmul(b)
}

pub fn dot(u: &Vector, v: &Vector) -> Result<f64> {
    u.dot(v)
}

pub fn sq_norm(v: &Vector) -> f64 {
    v.sq_norm()
}

pub fn outer(u: &Vector, v: &Vector) -> Matrix {
    let mut m = Matrix::zeros(u.dim(), v.dim());
    m.rank1_update(1.0, u.as_slice(), v.as_slice())
        .expect("shapes match by construction");
    m
}

#[inline]
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub(crate) fn axpy_slices(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    #[test]
    fn identity_matvec_is_noop() {
        let v = Vector::from_vec(vec![1.0, -2.0, 3.5]);
        assert_eq!(matvec(&Matrix::identity(3), &v).unwrap(), v);
    }

    #[test]
    fn outer_product_acts_as_rank_one() {
        let e1 = Vector::basis(3, 0);
        let e2 = Vector::basis(3, 1);
        assert_eq!(outer(&e1, &e2).matvec(&e2).unwrap(), e1);
    }

    #[test]
    fn gemm_matches_triple_loop() {
        let mut rng = RngStream::new(3, 0);
        let a = rng.gaussian_matrix(5, 5, 1.0).unwrap();
        let b = rng.gaussian_matrix(5, 5, 1.0).unwrap();
        assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) <= 1e-12);

        let c = rng.gaussian_matrix(7, 4, 1.0).unwrap();
        let d = rng.gaussian_matrix(7, 3, 1.0).unwrap();
        let got = gemm(2.0, &c, Trans::Yes, &d, Trans::No).unwrap();
        let want = naive_matmul(&c.transpose(), &d).scaled(2.0);
        assert!(got.max_abs_diff(&want) <= 1e-12);
        let got = gemm(1.0, &d, Trans::Yes, &c, Trans::No).unwrap();
        assert!(got.max_abs_diff(&naive_matmul(&d.transpose(), &c)) <= 1e-12);
        let e = rng.gaussian_matrix(3, 4, 1.0).unwrap();
        let got = gemm(1.0, &c, Trans::No, &e, Trans::Yes).unwrap();
        assert!(got.max_abs_diff(&naive_matmul(&c, &e.transpose())) <= 1e-12);
    }

    #[test]
    fn matmul_is_associative_on_small_instances() {
        let mut rng = RngStream::new(11, 2);
        for _ in 0..10 {
            let a = rng.gaussian_matrix(4, 6, 1.0).unwrap();
            let b = rng.gaussian_matrix(6, 3, 1.0).unwrap();
            let c = rng.gaussian_matrix(3, 5, 1.0).unwrap();
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.frobenius_sq().sqrt();
            assert!(left.max_abs_diff(&right) <= 1e-10 * scale);
        }
    }

    #[test]
    fn matvec_t_matches_transpose() {
        let mut rng = RngStream::new(5, 9);
        let m = rng.gaussian_matrix(6, 4, 1.0).unwrap();
        let v = rng.gaussian_vector(6, 1.0);
        let a = m.matvec_t(&v).unwrap();
        let b = m.transpose().matvec(&v).unwrap();
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(
            m.matvec(&Vector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matmul(&m, &m).is_err());
        assert!(dot(&Vector::zeros(2), &Vector::zeros(3)).is_err());
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn sq_norm_zero_only_for_zero_vector() {
        assert_eq!(sq_norm(&Vector::zeros(4)), 0.0);
        assert!(sq_norm(&Vector::basis(4, 2)) > 0.0);
    }

    #[test]
    fn dot_handles_remainders() {
        let u = Vector::from_vec((0..13).map(f64::from).collect());
        let v = Vector::from_vec(vec![1.0; 13]);
        assert_eq!(dot(&u, &v).unwrap(), 78.0);
    }
}

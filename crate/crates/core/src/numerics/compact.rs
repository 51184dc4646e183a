use super::matrix::Matrix;

/// Read-only matrix action used by the low-rank linear trainer.
pub trait LinearOperator: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `out = M v`
    fn apply(&self, v: &[f64], out: &mut [f64]);
    /// `out = Mᵀ v`
    fn apply_t(&self, v: &[f64], out: &mut [f64]);
}

impl LinearOperator for Matrix {
    fn rows(&self) -> usize {
        Matrix::rows(self)
    }
    fn cols(&self) -> usize {
        Matrix::cols(self)
    }
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.matvec_into(v, out)
    }
    fn apply_t(&self, v: &[f64], out: &mut [f64]) {
        self.matvec_t_into(v, out)
    }
}

/// Row-major matrix stored in 32-bit floats; products accumulate in `f64`.
///
/// Halves the footprint of the frozen initial weights for very wide sweeps.
#[derive(Clone, Debug)]
pub struct Matrix32 {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix32 {
    pub fn from_matrix(m: &Matrix) -> Self {
        Matrix32 {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().iter().map(|&x| x as f32).collect(),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|&x| f64::from(x)).collect(),
        )
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

impl LinearOperator for Matrix32 {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = [0.0f64; 4];
            let cr = row.chunks_exact(4);
            let cv = v.chunks_exact(4);
            let (rr, rv) = (cr.remainder(), cv.remainder());
            for (a, b) in cr.zip(cv) {
                for k in 0..4 {
                    acc[k] += f64::from(a[k]) * b[k];
                }
            }
            let tail: f64 = rr.iter().zip(rv).map(|(a, b)| f64::from(*a) * b).sum();
            *o = (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail;
        }
    }
    fn apply_t(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                for (o, &a) in out.iter_mut().zip(self.row(i)) {
                    *o += vi * f64::from(a);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn compact_products_track_f64_products() {
        let mut rng = RngStream::new(8, 1);
        let m = rng.gaussian_matrix(9, 13, 1.0).unwrap();
        let c = Matrix32::from_matrix(&m);
        let v = rng.gaussian_vector(13, 1.0);
        let w = rng.gaussian_vector(9, 1.0);
        let mut a = vec![0.0; 9];
        let mut b = vec![0.0; 9];
        m.apply(v.as_slice(), &mut a);
        c.apply(v.as_slice(), &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-5);
        }
        let mut a = vec![0.0; 13];
        let mut b = vec![0.0; 13];
        m.apply_t(w.as_slice(), &mut a);
        c.apply_t(w.as_slice(), &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-5);
        }
        assert!(c.to_matrix().max_abs_diff(&m) < 1e-6);
    }
}

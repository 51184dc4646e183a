use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{Matrix, Vector};
use crate::error::{Error, Result};

/// Seeded, splittable Gaussian source.
///
/// Uniforms come from a ChaCha8 keystream keyed by `seed` and positioned on
/// stream `stream_id`, so every `(seed, stream_id)` pair addresses its own
/// counter-based sequence. Gaussians use the Box–Muller transform and are
/// emitted in pairs; the second value of a pair is buffered so that the
/// output sequence does not depend on how draws are grouped into calls.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Position in the keystream, in 32-bit words.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Independent child stream derived from this stream's identity.
    pub fn split(&self, salt: u64) -> RngStream {
        let mut h = StreamKey::new("split");
        h.push_u64(self.stream_id).push_u64(salt);
        RngStream::new(self.seed, h.finish())
    }

    /// Uniform in the half-open interval (0, 1].
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits, shifted away from zero so ln() is finite.
        ((self.inner.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let (z0, z1) = self.box_muller();
        self.spare = Some(z1);
        z0
    }

    fn box_muller(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }

    pub fn fill_normal(&mut self, out: &mut [f64], std: f64) {
        for x in out.iter_mut() {
            *x = std * self.standard_normal();
        }
    }

    pub fn gaussian_vector(&mut self, dim: usize, std: f64) -> Vector {
        let mut v = vec![0.0; dim];
        self.fill_normal(&mut v, std);
        Vector::from_vec(v)
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize, std: f64) -> Result<Matrix> {
        if !(std >= 0.0) || !std.is_finite() {
            return Err(Error::Argument(format!(
                "standard deviation must be finite and non-negative, got {std}"
            )));
        }
        let mut data = vec![0.0; rows * cols];
        self.fill_normal(&mut data, std);
        Ok(Matrix::from_raw(rows, cols, data))
    }

    /// Uniform index in `0..bound`.
    pub fn index(&mut self, bound: usize) -> usize {
        ((self.uniform() - f64::EPSILON / 2.0).max(0.0) * bound as f64) as usize % bound.max(1)
    }
}

/// i.i.d. N(0, std²) matrix drawn from `rng`.
pub fn sample_gaussian_matrix(
    rows: usize,
    cols: usize,
    std: f64,
    rng: &mut RngStream,
) -> Result<Matrix> {
    rng.gaussian_matrix(rows, cols, std)
}

/// Stable 64-bit FNV-1a hash used to derive stream ids from labelled parts.
///
/// Stream ids depend only on what a job *is* (experiment, parametrization,
/// width, depth, seed index), never on when or where it runs.
#[derive(Clone, Debug)]
pub struct StreamKey(u64);

impl StreamKey {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;

    pub fn new(label: &str) -> Self {
        let mut k = StreamKey(Self::OFFSET);
        k.push_str(label);
        k
    }

    fn push_bytes(&mut self, bytes: &[u8]) -> &mut Self {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(Self::PRIME);
        }
        self
    }

    pub fn push_str(&mut self, s: &str) -> &mut Self {
        self.push_bytes(&(s.len() as u64).to_le_bytes());
        self.push_bytes(s.as_bytes())
    }

    pub fn push_u64(&mut self, v: u64) -> &mut Self {
        self.push_bytes(&v.to_le_bytes())
    }

    pub fn finish(&self) -> u64 {
        // final avalanche (splitmix64 finalizer)
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// Stream id for one training job.
pub fn job_stream_id(
    experiment: &str,
    parametrization: &str,
    width: usize,
    depth: usize,
    seed_index: u64,
) -> u64 {
    StreamKey::new(experiment)
        .push_str(parametrization)
        .push_u64(width as u64)
        .push_u64(depth as u64)
        .push_u64(seed_index)
        .finish()
}

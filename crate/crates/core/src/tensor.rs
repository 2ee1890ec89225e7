//! Dense row-major tensors and the elementwise / matrix kernels used by the
//! encoder. Everything here is plain math over values; gradient tracking
//! lives in [`crate::autograd`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Scalar element type. The crate trains in `f32`; `f64` instantiations are
/// used by the tight gradient checks.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + std::iter::Sum
    + std::fmt::Display
    + std::fmt::Debug
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for converting an `f64` literal into the active scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 conversion")
}

/// Dense tensor: positive extents, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn scalar(x: T) -> Self {
        Tensor {
            shape: vec![],
            data: vec![x],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> T {
        debug_assert!(self.data.len() == 1);
        self.data[0]
    }

    /// Number of rows of a 2-D tensor (1 for vectors treated as a row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    /// Number of columns of a 1-D or 2-D tensor.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let m = self.cols();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols() + j]
    }

    /// Deterministic i.i.d. normal entries (mean 0, given std).
    pub fn randn(shape: Vec<usize>, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let n: usize = shape.iter().product();
        let dist = rand_distr::Normal::new(0.0f64, std).expect("valid std");
        let data = (0..n)
            .map(|_| real::<T>(rng.sample(dist)))
            .collect::<Vec<_>>();
        Tensor { shape, data }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

fn check_2d<T: Real>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [n, m] => Ok((*n, *m)),
        other => Err(Error::ShapeMismatch {
            op,
            lhs: other.to_vec(),
            rhs: vec![],
        }),
    }
}

/// `C = A · B` for `A[n,k]`, `B[k,m]`.
///
/// The k-inner loop streams rows of `B` so the compiler can vectorize the
/// accumulation; this is the hot kernel of the whole crate.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ka) = check_2d(a, "matmul lhs")?;
    let (kb, m) = check_2d(b, "matmul rhs")?;
    if ka != kb {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let a_row = a.row(i);
        let c_row = &mut out[i * m..(i + 1) * m];
        for (kk, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let b_row = &b.data[kk * m..(kk + 1) * m];
            for (c, &bv) in c_row.iter_mut().zip(b_row) {
                *c += av * bv;
            }
        }
    }
    Tensor::new(vec![n, m], out)
}

/// Dot product with four independent accumulators so the compiler can keep
/// the lanes in flight.
#[inline]
fn dot_unrolled<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = T::zero();
    for (&x, &y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `C = A · Bᵀ` for `A[n,k]`, `B[m,k]`.
pub fn matmul_nt<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ka) = check_2d(a, "matmul_nt lhs")?;
    let (m, kb) = check_2d(b, "matmul_nt rhs")?;
    if ka != kb {
        return Err(Error::ShapeMismatch {
            op: "matmul_nt",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let a_row = a.row(i);
        for j in 0..m {
            out[i * m + j] = dot_unrolled(a_row, b.row(j));
        }
    }
    Tensor::new(vec![n, m], out)
}

/// `C = Aᵀ · B` for `A[k,n]`, `B[k,m]`.
pub fn matmul_tn<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ka, n) = check_2d(a, "matmul_tn lhs")?;
    let (kb, m) = check_2d(b, "matmul_tn rhs")?;
    if ka != kb {
        return Err(Error::ShapeMismatch {
            op: "matmul_tn",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = vec![T::zero(); n * m];
    for kk in 0..ka {
        let a_row = a.row(kk);
        let b_row = b.row(kk);
        for (i, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let c_row = &mut out[i * m..(i + 1) * m];
            for (c, &bv) in c_row.iter_mut().zip(b_row) {
                *c += av * bv;
            }
        }
    }
    Tensor::new(vec![n, m], out)
}

/// Elementwise sum of same-shape tensors.
pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "add",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.shape.clone(), data)
}

/// Broadcasts a length-`m` bias over the rows of `x[n,m]`.
pub fn add_bias<T: Real>(x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, m) = check_2d(x, "add_bias input")?;
    if bias.len() != m {
        return Err(Error::ShapeMismatch {
            op: "add_bias",
            lhs: x.shape().to_vec(),
            rhs: bias.shape().to_vec(),
        });
    }
    let mut data = x.data.clone();
    for i in 0..n {
        for j in 0..m {
            data[i * m + j] += bias.data[j];
        }
    }
    Tensor::new(vec![n, m], data)
}

pub fn scale<T: Real>(x: &Tensor<T>, c: T) -> Tensor<T> {
    x.map(|v| v * c)
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Inverted dropout. In training each element is zeroed with probability `p`
/// and survivors scale by `1/(1-p)`; at evaluation the input passes through
/// bit-identically.
pub fn dropout<T: Real>(x: &Tensor<T>, p: f64, training: bool, seed: u64) -> Result<Tensor<T>> {
    let (_, mask) = dropout_mask(x, p, training, seed)?;
    Ok(Tensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect(),
    })
}

/// Dropout plus the multiplicative mask actually applied (needed by the
/// backward pass). The mask is all ones at evaluation.
pub fn dropout_mask<T: Real>(
    x: &Tensor<T>,
    p: f64,
    training: bool,
    seed: u64,
) -> Result<(Tensor<T>, Vec<T>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument {
            name: "dropout p",
            msg: format!("{p} not in [0,1)"),
        });
    }
    if !training || p == 0.0 {
        let mask = vec![T::one(); x.len()];
        return Ok((x.clone(), mask));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep_scale = real::<T>(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..x.len())
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep_scale
            }
        })
        .collect();
    let data = x.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((
        Tensor {
            shape: x.shape.clone(),
            data,
        },
        mask,
    ))
}

/// Row softmax with an optional 0/1 column mask (shared by all rows).
/// Masked columns are exactly zero in the output; each row is computed with
/// max-subtraction and normalizes to 1 over the unmasked columns.
pub fn softmax_rows<T: Real>(x: &Tensor<T>, col_mask: Option<&[u8]>) -> Result<Tensor<T>> {
    let (n, m) = check_2d(x, "softmax_rows")?;
    if let Some(mask) = col_mask {
        if mask.len() != m {
            return Err(Error::ShapeMismatch {
                op: "softmax_rows mask",
                lhs: vec![n, m],
                rhs: vec![mask.len()],
            });
        }
        if mask.iter().all(|&b| b == 0) {
            return Err(Error::AllMaskedRow { row: 0 });
        }
    }
    let live = |j: usize| col_mask.is_none_or(|mask| mask[j] != 0);
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let row = x.row(i);
        let mut max = T::neg_infinity();
        let mut n_live = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if live(j) {
                n_live += 1;
                if v > max {
                    max = v;
                }
            }
        }
        if n_live == 0 {
            return Err(Error::AllMaskedRow { row: i });
        }
        // Non-finite logits propagate as NaN so divergence is visible in
        // the loss instead of masquerading as a masking error.
        let mut sum = T::zero();
        for (j, &v) in row.iter().enumerate() {
            if live(j) {
                let e = (v - max).exp();
                out[i * m + j] = e;
                sum += e;
            }
        }
        for j in 0..m {
            if live(j) {
                out[i * m + j] /= sum;
            }
        }
    }
    Tensor::new(vec![n, m], out)
}

/// Per-row layer normalization of `x[n,d]` followed by the affine
/// `gain ⊙ x̂ + bias`.
pub fn layer_norm<T: Real>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let (out, _, _) = layer_norm_cached(x, gain, bias, eps)?;
    Ok(out)
}

/// Layer norm that also returns the normalized activations and the inverse
/// standard deviations, which the backward pass reuses.
pub fn layer_norm_cached<T: Real>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let (n, d) = check_2d(x, "layer_norm")?;
    if gain.len() != d || bias.len() != d {
        return Err(Error::ShapeMismatch {
            op: "layer_norm affine",
            lhs: vec![n, d],
            rhs: vec![gain.len(), bias.len()],
        });
    }
    let inv_d = real::<T>(1.0 / d as f64);
    let eps = real::<T>(eps);
    let mut xhat = vec![T::zero(); n * d];
    let mut inv_std = vec![T::zero(); n];
    let mut out = vec![T::zero(); n * d];
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let mut var = T::zero();
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        var *= inv_d;
        let istd = T::one() / (var + eps).sqrt();
        inv_std[i] = istd;
        for j in 0..d {
            let h = (row[j] - mean) * istd;
            xhat[i * d + j] = h;
            out[i * d + j] = gain.data[j] * h + bias.data[j];
        }
    }
    Ok((Tensor::new(vec![n, d], out)?, xhat, inv_std))
}

//! Dense `f64` tensors and a reverse-mode gradient tape.
//!
//! [`Tensor`] is an immutable, cheaply clonable value. Differentiable
//! computations are recorded on an explicit [`Tape`]; there is no ambient
//! global tape. A tape belongs to one thread of execution.

mod checkpoint;
mod conv;
pub mod gradcheck;
mod optim;
mod sparse;
mod tape;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointEntry, DType, CHECKPOINT_MAGIC};
pub use conv::{conv3d_forward, Conv3dSpec};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use sparse::{SparsePlan, Tap};
pub use tape::{sigmoid, Gradients, Tape, Var};

/// Errors raised by tensor arithmetic, the tape and checkpoint IO.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Deterministic RNG used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// N-dimensional row-major array of `f64`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::Dimension(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                numel(shape),
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data: Arc::new(data) })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Self { shape, data: Arc::new(data) }
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_parts(vec![], vec![v])
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self::from_parts(vec![values.len()], values.to_vec())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Self::from_parts(shape.to_vec(), vec![v; numel(shape)])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = numel(shape);
        Self::from_parts(shape.to_vec(), (0..n).map(&mut f).collect())
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut SeededRng) -> Self {
        Self::from_fn(shape, |_| rng.random_range(lo..hi))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.as_ref().clone()
    }

    pub fn into_vec(self) -> Vec<f64> {
        Arc::try_unwrap(self.data).unwrap_or_else(|a| a.as_ref().clone())
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(TensorError::Contract(format!("item() on tensor of shape {:?}", self.shape)));
        }
        Ok(self.data[0])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.len() {
            return Err(TensorError::Dimension(format!("cannot reshape {:?} into {:?}", self.shape, shape)));
        }
        Ok(Self { shape: shape.to_vec(), data: Arc::clone(&self.data) })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TensorError::Dimension(format!("shape mismatch {:?} vs {:?}", self.shape, other.shape)));
        }
        let data = self.data.iter().zip(other.data.iter()).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sub-tensor `index` along axis 0, with the leading axis removed.
    pub fn index0(&self, index: usize) -> Result<Self> {
        let (&n, rest) = self.shape.split_first().ok_or_else(|| TensorError::Dimension("index0 on scalar".into()))?;
        if index >= n {
            return Err(TensorError::Dimension(format!("index {index} out of range {n}")));
        }
        let step = numel(rest);
        Ok(Self::from_parts(rest.to_vec(), self.data[index * step..(index + 1) * step].to_vec()))
    }

    /// Stacks same-shape tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        let first = items.first().ok_or_else(|| TensorError::Dimension("stack of zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(TensorError::Dimension(format!("stack shape mismatch {:?} vs {:?}", t.shape, first.shape)));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self::from_parts(shape, data))
    }

    /// Bit pattern checksum, used to prove parameters did not move.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for d in &self.shape {
            h = (h ^ *d as u64).wrapping_mul(0x0000_0100_0000_01b3);
        }
        for v in self.data.iter() {
            h = (h ^ v.to_bits()).wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Result shape of trailing-dimension broadcasting.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(TensorError::Dimension(format!("shapes {a:?} and {b:?} are not broadcast-compatible"))),
        };
    }
    Ok(out)
}

/// Strides of `shape` laid out against `out` (zero on broadcast axes).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let offset = out.len() - shape.len();
    let mut strides = vec![0; out.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i + offset] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Source flat index for every element of `out` when `shape` is broadcast to it.
pub(crate) fn broadcast_index_map(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let strides = broadcast_strides(shape, out);
    let total = numel(out);
    let mut idx = vec![0usize; out.len()];
    let mut map = Vec::with_capacity(total);
    let mut src = 0usize;
    for _ in 0..total {
        map.push(src);
        for ax in (0..out.len()).rev() {
            idx[ax] += 1;
            src += strides[ax];
            if idx[ax] < out[ax] {
                break;
            }
            src -= strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    map
}

pub(crate) fn broadcast_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape == b.shape {
        return a.zip_map(b, f);
    }
    let out = broadcast_shape(&a.shape, &b.shape)?;
    let ia = broadcast_index_map(&a.shape, &out);
    let ib = broadcast_index_map(&b.shape, &out);
    let data = ia.iter().zip(&ib).map(|(&i, &j)| f(a.data[i], b.data[j])).collect();
    Ok(Tensor::from_parts(out, data))
}

/// Sums a gradient laid out as `out` back down to the broadcast source `shape`.
pub(crate) fn reduce_to_shape(grad: &[f64], out: &[usize], shape: &[usize]) -> Vec<f64> {
    if out == shape {
        return grad.to_vec();
    }
    let map = broadcast_index_map(shape, out);
    let mut acc = vec![0.0; numel(shape)];
    for (g, &i) in grad.iter().zip(&map) {
        acc[i] += g;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_count() {
        assert!(matches!(Tensor::new(&[2, 3], vec![0.0; 5]), Err(TensorError::Dimension(_))));
    }

    #[test]
    fn broadcast_matches_explicit_tiling() {
        let mut rng = seeded_rng(3);
        let cases: [(&[usize], &[usize]); 4] =
            [(&[2, 3, 4], &[4]), (&[2, 3, 4], &[3, 1]), (&[1, 3, 1], &[2, 1, 4]), (&[5], &[1])];
        for (sa, sb) in cases {
            let a = Tensor::uniform(sa, -1.0, 1.0, &mut rng);
            let b = Tensor::uniform(sb, -1.0, 1.0, &mut rng);
            let got = broadcast_binary(&a, &b, |x, y| x + y).unwrap();
            let out = broadcast_shape(sa, sb).unwrap();
            // explicit tiling: walk the output multi-index and clamp broadcast axes
            let mut idx = vec![0usize; out.len()];
            for k in 0..numel(&out) {
                let pick = |s: &[usize], t: &Tensor| {
                    let off = out.len() - s.len();
                    let mut flat = 0;
                    for (d, &ext) in s.iter().enumerate() {
                        let i = if ext == 1 { 0 } else { idx[d + off] };
                        flat = flat * ext + i;
                    }
                    t.data()[flat]
                };
                assert_eq!(got.data()[k], pick(sa, &a) + pick(sb, &b));
                for ax in (0..out.len()).rev() {
                    idx[ax] += 1;
                    if idx[ax] < out[ax] {
                        break;
                    }
                    idx[ax] = 0;
                }
            }
        }
    }

    #[test]
    fn incompatible_broadcast_is_dimension_error() {
        assert!(broadcast_shape(&[2, 3], &[4]).is_err());
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
    }
}

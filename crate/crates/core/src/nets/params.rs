use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{NetsError, Result};
use crate::tensor::{read_checkpoint, write_checkpoint, DType, SeededRng, Tape, Tensor, Var};

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.names.push(name.into());
        self.tensors.push(t);
    }

    /// Uniform in `±gain * sqrt(3 / fan_in)`.
    pub(crate) fn push_init(&mut self, name: &str, shape: &[usize], fan_in: usize, gain: f64, rng: &mut SeededRng) {
        let a = gain * (3.0 / fan_in as f64).sqrt();
        self.push(name, Tensor::uniform(shape, -a, a, rng));
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records the parameters as trainable leaves.
    pub fn attach<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Records the parameters as constants; no gradient flows into them.
    pub fn attach_frozen<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { names: self.names.clone(), tensors: self.tensors.iter().map(|t| t.map(&f)).collect() }
    }

    /// SHA-256 over names, shapes and the exact bit patterns of every value.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (n, t) in self.names.iter().zip(&self.tensors) {
            h.update(n.as_bytes());
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| NetsError::Io { path: path.display().to_string(), msg: e.to_string() };
        let f = File::create(path).map_err(io)?;
        let entries: Vec<(String, Tensor)> = self.names.iter().cloned().zip(self.tensors.iter().cloned()).collect();
        write_checkpoint(BufWriter::new(f), &entries, DType::F64)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| NetsError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        let mut out = Self::new();
        for (name, t) in read_checkpoint(BufReader::new(f))? {
            out.push(name, t);
        }
        Ok(out)
    }

    /// Checks that `other` has the same names and shapes.
    pub fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.names != other.names {
            return Err(NetsError::Config(format!("parameter names differ: {:?} vs {:?}", self.names, other.names)));
        }
        for (n, (a, b)) in self.names.iter().zip(self.tensors.iter().zip(&other.tensors)) {
            if a.shape() != b.shape() {
                return Err(NetsError::Config(format!("parameter {n}: shape {:?} vs {:?}", a.shape(), b.shape())));
            }
        }
        Ok(())
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named, row-major parameter tensor as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamArray {
    pub fn validate(&self) -> Result<()> {
        let n: usize = self.shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "parameter {} has shape {:?} but {} values",
                self.name,
                self.shape,
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("parameter {} has non-finite values", self.name)));
        }
        Ok(())
    }
}

/// Visitor over the trainable tensors of a module, in a fixed order.
///
/// Both methods must visit the same tensors in the same order so that
/// gradients and optimizer state can be matched positionally.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));

    fn param_arrays(&self) -> Vec<ParamArray> {
        let mut out = Vec::new();
        self.visit("", &mut |name, shape, data| {
            out.push(ParamArray {
                name: name.to_string(),
                shape: shape.to_vec(),
                data: data.to_vec(),
            })
        });
        out
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, d| n += d.len());
        n
    }

    /// Concatenation of every tensor in visiting order.
    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, _, d| out.extend_from_slice(d));
        out
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut at = 0;
        self.visit_mut("", &mut |_, d| {
            d.copy_from_slice(&values[at..at + d.len()]);
            at += d.len();
        });
        assert_eq!(at, values.len(), "flat parameter length mismatch");
    }

    fn fill_zero(&mut self) {
        self.visit_mut("", &mut |_, d| d.fill(0.0));
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn visit2(prefix: &str, name: &str, a: &Array2<f64>, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
    f(&join(prefix, name), a.shape(), a.as_slice().expect("standard layout"));
}

pub(crate) fn visit1(prefix: &str, name: &str, a: &Array1<f64>, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
    f(&join(prefix, name), a.shape(), a.as_slice().expect("standard layout"));
}

pub(crate) fn visit2_mut(prefix: &str, name: &str, a: &mut Array2<f64>, f: &mut dyn FnMut(&str, &mut [f64])) {
    f(&join(prefix, name), a.as_slice_mut().expect("standard layout"));
}

pub(crate) fn visit1_mut(prefix: &str, name: &str, a: &mut Array1<f64>, f: &mut dyn FnMut(&str, &mut [f64])) {
    f(&join(prefix, name), a.as_slice_mut().expect("standard layout"));
}

/// Uniform(-s, s) with `s = sqrt(6 / (fan_in + fan_out))`, shape `fan_out x fan_in`.
pub fn glorot_uniform<R: Rng>(fan_out: usize, fan_in: usize, rng: &mut R) -> Array2<f64> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-s..=s))
}

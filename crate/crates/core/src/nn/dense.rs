use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::activation::Activation;
use super::param::{glorot_uniform, visit1, visit1_mut, visit2, visit2_mut, Params};
use crate::error::{Error, Result};

/// Fully connected layer `activation(W v + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// Pre-activations and outputs of a batched forward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub z: Array2<f64>,
    pub y: Array2<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Dense {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
            activation,
        }
    }

    pub fn glorot<R: Rng>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        Dense {
            weight: glorot_uniform(output, input, rng),
            bias: Array1::zeros(output),
            activation,
        }
    }

    pub fn input_size(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_size(&self) -> usize {
        self.weight.nrows()
    }

    /// Forward over a `batch x in` matrix.
    pub fn forward_batch(&self, x: &Array2<f64>) -> DenseCache {
        let mut z = Array2::zeros((x.nrows(), self.output_size()));
        z += &self.bias;
        general_mat_mul(1.0, x, &self.weight.t(), 1.0, &mut z);
        let y = self.activation.apply(&z);
        DenseCache { z, y }
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input `x`.
    pub fn backward_batch(&self, x: &Array2<f64>, cache: &DenseCache, dy: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
        let dz = self.activation.backward(&cache.z, &cache.y, dy);
        self.backward_preactivation(x, &dz, grad)
    }

    /// Like [`Dense::backward_batch`] but starting from the gradient of the
    /// pre-activation, e.g. the `p - y` shortcut of softmax cross-entropy.
    pub fn backward_preactivation(&self, x: &Array2<f64>, dz: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
        general_mat_mul(1.0, &dz.t(), x, 1.0, &mut grad.weight);
        grad.bias += &dz.sum_axis(Axis(0));
        dz.dot(&self.weight)
    }
}

impl Params for Dense {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit2(prefix, "weight", &self.weight, f);
        visit1(prefix, "bias", &self.bias, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit2_mut(prefix, "weight", &mut self.weight, f);
        visit1_mut(prefix, "bias", &mut self.bias, f);
    }
}

/// Single-vector forward pass.
pub fn dense_forward(layer: &Dense, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != layer.input_size() {
        return Err(Error::Shape(format!(
            "dense layer expects {} inputs, got {}",
            layer.input_size(),
            v.len()
        )));
    }
    let x = Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row vector");
    Ok(layer.forward_batch(&x).y.into_raw_vec_and_offset().0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::cross_entropy_index;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_layer_gives_zeros() {
        let l = Dense::zeros(3, 2, Activation::Identity);
        assert_eq!(dense_forward(&l, &[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert!(dense_forward(&l, &[1.0]).is_err());
    }

    #[test]
    fn identity_elu() {
        let l = Dense {
            weight: array![[1.0, 0.0], [0.0, 1.0]],
            bias: array![0.0, 0.0],
            activation: Activation::Elu,
        };
        let y = dense_forward(&l, &[-50.0, 2.0]).unwrap();
        assert!((y[0] + 1.0).abs() < 1e-9);
        assert!((y[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_layer_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = Dense::glorot(5, 7, Activation::Softmax, &mut rng);
        let y = dense_forward(&l, &[3.0, -1.0, 200.0, 0.5, -40.0]).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    // Finite differences on a single softmax layer with cross-entropy.
    #[test]
    fn toy_classifier_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut layer = Dense::glorot(4, 3, Activation::Softmax, &mut rng);
        let x = array![[0.3, -0.2, 0.8, 0.1], [-0.5, 0.4, 0.0, 0.9]];
        let targets = [2usize, 0];
        let loss = |l: &Dense| {
            let y = l.forward_batch(&x).y;
            targets
                .iter()
                .enumerate()
                .map(|(i, &t)| cross_entropy_index(y.row(i).as_slice().unwrap(), t))
                .sum::<f64>()
                / 2.0
        };
        let cache = layer.forward_batch(&x);
        let mut dy = Array2::zeros((2, 3));
        for (i, &t) in targets.iter().enumerate() {
            dy[[i, t]] = -1.0 / cache.y[[i, t]] / 2.0;
        }
        let mut grad = Dense::zeros(4, 3, Activation::Softmax);
        layer.backward_batch(&x, &cache, &dy, &mut grad);
        let analytic = grad.flat();
        let base = layer.flat();
        for (i, a) in analytic.iter().enumerate() {
            let mut p = base.clone();
            p[i] += 1e-4;
            layer.set_flat(&p);
            let up = loss(&layer);
            p[i] -= 2e-4;
            layer.set_flat(&p);
            let down = loss(&layer);
            layer.set_flat(&base);
            let numeric = (up - down) / 2e-4;
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
            assert!(rel < 1e-6, "coordinate {i}: {a} vs {numeric}");
        }
    }
}

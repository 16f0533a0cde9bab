use ndarray::{Array2, ArrayView1, Axis, Zip};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Elu,
    HardSigmoid,
    Softmax,
}

/// ELU with alpha = 1.
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// `clamp(0.2 x + 0.5, 0, 1)`.
pub fn hard_sigmoid(x: f64) -> f64 {
    (0.2 * x + 0.5).clamp(0.0, 1.0)
}

pub fn hard_sigmoid_grad(x: f64) -> f64 {
    if x.abs() < 2.5 {
        0.2
    } else {
        0.0
    }
}

/// Logistic function, evaluated through `e^-|x|` so that it never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    let s = 1.0 / (1.0 + e);
    if x >= 0.0 {
        s
    } else {
        e * s
    }
}

/// Max-shifted softmax.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn softmax_row(row: ArrayView1<f64>, out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row.iter()) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

impl Activation {
    /// Row-wise application to a batch of pre-activations.
    pub fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => z.clone(),
            Activation::Elu => z.mapv(elu),
            Activation::HardSigmoid => z.mapv(hard_sigmoid),
            Activation::Softmax => {
                let mut out = Array2::zeros(z.raw_dim());
                for (row, mut o) in z.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
                    softmax_row(row, o.as_slice_mut().expect("standard layout"));
                }
                out
            }
        }
    }

    /// Gradient w.r.t. pre-activations `z` given the upstream gradient `dy`
    /// and the activation output `y`.
    pub fn backward(self, z: &Array2<f64>, y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => dy.clone(),
            Activation::Elu => {
                let mut dz = dy.clone();
                Zip::from(&mut dz).and(z).for_each(|d, &x| *d *= elu_grad(x));
                dz
            }
            Activation::HardSigmoid => {
                let mut dz = dy.clone();
                Zip::from(&mut dz).and(z).for_each(|d, &x| *d *= hard_sigmoid_grad(x));
                dz
            }
            Activation::Softmax => {
                let mut dz = Array2::zeros(z.raw_dim());
                for ((mut d, yr), dyr) in dz
                    .axis_iter_mut(Axis(0))
                    .zip(y.axis_iter(Axis(0)))
                    .zip(dy.axis_iter(Axis(0)))
                {
                    let dot: f64 = yr.iter().zip(dyr.iter()).map(|(a, b)| a * b).sum();
                    Zip::from(&mut d).and(&yr).and(&dyr).for_each(|d, &p, &g| *d = p * (g - dot));
                }
                dz
            }
        }
    }
}

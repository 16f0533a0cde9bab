use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::activation::sigmoid;
use super::param::{glorot_uniform, visit1, visit1_mut, visit2, visit2_mut, Params};
use crate::error::{Error, Result};

/// GRU cell with logistic gates and an identity candidate activation:
///
/// ```text
/// z  = sigmoid(W_z x + U_z h + b_z)
/// r  = sigmoid(W_r x + U_r h + b_r)
/// h~ = W_h x + U_h (r * h) + b_h
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_z: Array2<f64>,
    pub w_r: Array2<f64>,
    pub w_h: Array2<f64>,
    pub u_z: Array2<f64>,
    pub u_r: Array2<f64>,
    pub u_h: Array2<f64>,
    pub b_z: Array1<f64>,
    pub b_r: Array1<f64>,
    pub b_h: Array1<f64>,
}

/// Intermediate values of a batched forward pass, one entry per step.
#[derive(Debug, Clone)]
pub struct GruCache {
    /// `hs[k]` is the hidden state entering step `k`; the last entry is the output.
    pub hs: Vec<Array2<f64>>,
    /// Per step `[z | r | candidate]`, `rows x 3 Hd`.
    pub gates: Vec<Array2<f64>>,
    /// Per step `r * h`.
    pub rh: Vec<Array2<f64>>,
}

impl GruCache {
    pub fn output(&self) -> &Array2<f64> {
        self.hs.last().expect("at least the initial state")
    }
}

/// Weights stacked so that one product serves several gates.
struct Stacked {
    /// `[W_z; W_r; W_h]`, `3 Hd x I`.
    w: Array2<f64>,
    /// `[U_z; U_r]`, `2 Hd x Hd`.
    u_zr: Array2<f64>,
    b: Array1<f64>,
}

impl GruCell {
    fn stacked(&self) -> Stacked {
        let cat2 = |a: &Array2<f64>, b: &Array2<f64>| concatenate![Axis(0), a.view(), b.view()];
        Stacked {
            w: concatenate![Axis(0), self.w_z.view(), self.w_r.view(), self.w_h.view()],
            u_zr: cat2(&self.u_z, &self.u_r),
            b: concatenate![Axis(0), self.b_z.view(), self.b_r.view(), self.b_h.view()],
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruCell {
            w_z: Array2::zeros((hidden, input)),
            w_r: Array2::zeros((hidden, input)),
            w_h: Array2::zeros((hidden, input)),
            u_z: Array2::zeros((hidden, hidden)),
            u_r: Array2::zeros((hidden, hidden)),
            u_h: Array2::zeros((hidden, hidden)),
            b_z: Array1::zeros(hidden),
            b_r: Array1::zeros(hidden),
            b_h: Array1::zeros(hidden),
        }
    }

    pub fn glorot<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut cell = GruCell::zeros(input, hidden);
        cell.w_z = glorot_uniform(hidden, input, rng);
        cell.w_r = glorot_uniform(hidden, input, rng);
        cell.w_h = glorot_uniform(hidden, input, rng);
        cell.u_z = glorot_uniform(hidden, hidden, rng);
        cell.u_r = glorot_uniform(hidden, hidden, rng);
        cell.u_h = glorot_uniform(hidden, hidden, rng);
        cell
    }

    pub fn input_size(&self) -> usize {
        self.w_z.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_z.nrows()
    }

    /// Runs the recurrence over `xs` (one `rows x input` matrix per step)
    /// starting from a zero hidden state.
    pub fn forward_batch(&self, xs: &[Array2<f64>]) -> GruCache {
        let rows = xs.first().map_or(0, |x| x.nrows());
        let hd = self.hidden_size();
        let st = self.stacked();
        let mut cache = GruCache {
            hs: Vec::with_capacity(xs.len() + 1),
            gates: Vec::with_capacity(xs.len()),
            rh: Vec::with_capacity(xs.len()),
        };
        cache.hs.push(Array2::zeros((rows, hd)));
        for x in xs {
            let h = cache.hs.last().expect("initial state");
            let mut gates = Array2::zeros((rows, 3 * hd));
            gates += &st.b;
            general_mat_mul(1.0, x, &st.w.t(), 1.0, &mut gates);
            general_mat_mul(1.0, h, &st.u_zr.t(), 1.0, &mut gates.slice_mut(s![.., ..2 * hd]));
            let mut rh = Array2::zeros((rows, hd));
            for ((mut g, hrow), mut rhrow) in gates.outer_iter_mut().zip(h.outer_iter()).zip(rh.outer_iter_mut()) {
                let g = g.as_slice_mut().expect("contiguous row");
                let (zr, _) = g.split_at_mut(2 * hd);
                for v in zr.iter_mut() {
                    *v = sigmoid(*v);
                }
                for ((o, &r), &hv) in rhrow.iter_mut().zip(&zr[hd..]).zip(hrow.iter()) {
                    *o = r * hv;
                }
            }
            general_mat_mul(1.0, &rh, &self.u_h.t(), 1.0, &mut gates.slice_mut(s![.., 2 * hd..]));
            let mut next = h.clone();
            for (mut nrow, g) in next.outer_iter_mut().zip(gates.outer_iter()) {
                let g = g.as_slice().expect("contiguous row");
                let (z, cand) = (&g[..hd], &g[2 * hd..]);
                for ((n, &zz), &c) in nrow.iter_mut().zip(z).zip(cand) {
                    *n += zz * (c - *n);
                }
            }
            cache.gates.push(gates);
            cache.rh.push(rh);
            cache.hs.push(next);
        }
        cache
    }

    /// Backpropagation through time from the gradient of the final hidden
    /// state. Parameter gradients are accumulated into `grad`.
    pub fn backward_batch(&self, xs: &[Array2<f64>], cache: &GruCache, d_out: &Array2<f64>, grad: &mut GruCell) {
        let hd = self.hidden_size();
        let rows = d_out.nrows();
        let st = self.stacked();
        let mut dw = Array2::<f64>::zeros(st.w.raw_dim());
        let mut du_zr = Array2::<f64>::zeros(st.u_zr.raw_dim());
        let mut db = Array1::<f64>::zeros(3 * hd);
        let mut dh = d_out.clone();
        let mut dpre = Array2::<f64>::zeros((rows, 3 * hd));
        for k in (0..xs.len()).rev() {
            let (x, h, gates, rh) = (&xs[k], &cache.hs[k], &cache.gates[k], &cache.rh[k]);
            let mut dh_prev = Array2::<f64>::zeros((rows, hd));
            for (((mut dp, g), (dhr, hr)), mut dpr) in dpre
                .outer_iter_mut()
                .zip(gates.outer_iter())
                .zip(dh.outer_iter().zip(h.outer_iter()))
                .zip(dh_prev.outer_iter_mut())
            {
                let dp = dp.as_slice_mut().expect("contiguous row");
                let g = g.as_slice().expect("contiguous row");
                for i in 0..hd {
                    let (z, c, d, hv) = (g[i], g[2 * hd + i], dhr[i], hr[i]);
                    dp[i] = d * (c - hv) * z * (1.0 - z);
                    dp[2 * hd + i] = d * z;
                    dpr[i] = d * (1.0 - z);
                }
            }
            let d_cand = dpre.slice(s![.., 2 * hd..]);
            general_mat_mul(1.0, &d_cand.t(), rh, 1.0, &mut grad.u_h);
            let d_rh = d_cand.dot(&self.u_h);
            for ((((mut dp, g), drh), hr), mut dpr) in dpre
                .outer_iter_mut()
                .zip(gates.outer_iter())
                .zip(d_rh.outer_iter())
                .zip(h.outer_iter())
                .zip(dh_prev.outer_iter_mut())
            {
                for i in 0..hd {
                    let r = g[hd + i];
                    dp[hd + i] = drh[i] * hr[i] * r * (1.0 - r);
                    dpr[i] += drh[i] * r;
                }
            }
            let da_zr = dpre.slice(s![.., ..2 * hd]);
            general_mat_mul(1.0, &da_zr.t(), h, 1.0, &mut du_zr);
            if k > 0 {
                general_mat_mul(1.0, &da_zr, &st.u_zr, 1.0, &mut dh_prev);
            }
            general_mat_mul(1.0, &dpre.t(), x, 1.0, &mut dw);
            db += &dpre.sum_axis(Axis(0));
            dh = dh_prev;
        }
        grad.w_z += &dw.slice(s![..hd, ..]);
        grad.w_r += &dw.slice(s![hd..2 * hd, ..]);
        grad.w_h += &dw.slice(s![2 * hd.., ..]);
        grad.u_z += &du_zr.slice(s![..hd, ..]);
        grad.u_r += &du_zr.slice(s![hd.., ..]);
        grad.b_z += &db.slice(s![..hd]);
        grad.b_r += &db.slice(s![hd..2 * hd]);
        grad.b_h += &db.slice(s![2 * hd..]);
    }
}

impl Params for GruCell {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit2(prefix, "W_z", &self.w_z, f);
        visit2(prefix, "W_r", &self.w_r, f);
        visit2(prefix, "W_h", &self.w_h, f);
        visit2(prefix, "U_z", &self.u_z, f);
        visit2(prefix, "U_r", &self.u_r, f);
        visit2(prefix, "U_h", &self.u_h, f);
        visit1(prefix, "b_z", &self.b_z, f);
        visit1(prefix, "b_r", &self.b_r, f);
        visit1(prefix, "b_h", &self.b_h, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit2_mut(prefix, "W_z", &mut self.w_z, f);
        visit2_mut(prefix, "W_r", &mut self.w_r, f);
        visit2_mut(prefix, "W_h", &mut self.w_h, f);
        visit2_mut(prefix, "U_z", &mut self.u_z, f);
        visit2_mut(prefix, "U_r", &mut self.u_r, f);
        visit2_mut(prefix, "U_h", &mut self.u_h, f);
        visit1_mut(prefix, "b_z", &mut self.b_z, f);
        visit1_mut(prefix, "b_r", &mut self.b_r, f);
        visit1_mut(prefix, "b_h", &mut self.b_h, f);
    }
}

/// One recurrence step for a single sequence.
pub fn gru_step(cell: &GruCell, x: &[f64], h: &[f64]) -> Vec<f64> {
    let hd = cell.hidden_size();
    let gate = |w: &Array2<f64>, u: &Array2<f64>, b: &Array1<f64>, i: usize, hv: &[f64]| {
        let mut a = b[i];
        for (j, xv) in x.iter().enumerate() {
            a += w[[i, j]] * xv;
        }
        for (j, v) in hv.iter().enumerate() {
            a += u[[i, j]] * v;
        }
        a
    };
    let z: Vec<f64> = (0..hd).map(|i| sigmoid(gate(&cell.w_z, &cell.u_z, &cell.b_z, i, h))).collect();
    let r: Vec<f64> = (0..hd).map(|i| sigmoid(gate(&cell.w_r, &cell.u_r, &cell.b_r, i, h))).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    (0..hd)
        .map(|i| {
            let cand = gate(&cell.w_h, &cell.u_h, &cell.b_h, i, &rh);
            (1.0 - z[i]) * h[i] + z[i] * cand
        })
        .collect()
}

/// Runs the cell over the columns of an `input x H` sequence and returns the
/// final hidden state.
pub fn gru_forward(cell: &GruCell, sequence: ArrayView2<f64>, h0: &[f64]) -> Result<Vec<f64>> {
    if sequence.nrows() != cell.input_size() {
        return Err(Error::Shape(format!(
            "GRU expects {} input features, got {}",
            cell.input_size(),
            sequence.nrows()
        )));
    }
    if sequence.ncols() == 0 {
        return Err(Error::Shape("GRU sequence has no steps".into()));
    }
    if h0.len() != cell.hidden_size() {
        return Err(Error::Shape(format!(
            "GRU hidden size is {}, initial state has {}",
            cell.hidden_size(),
            h0.len()
        )));
    }
    let mut h = h0.to_vec();
    for col in sequence.columns() {
        h = gru_step(cell, &col.to_vec(), &h);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cell(input: usize, hidden: usize, seed: u64) -> GruCell {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cell = GruCell::glorot(input, hidden, &mut rng);
        for b in [&mut cell.b_z, &mut cell.b_r, &mut cell.b_h] {
            b.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
        cell
    }

    fn random_seq(input: usize, steps: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((input, steps), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_cell_outputs_zero() {
        let cell = GruCell::zeros(3, 5);
        let out = gru_forward(&cell, random_seq(3, 7, 1).view(), &[0.0; 5]).unwrap();
        assert_eq!(out, vec![0.0; 5]);
    }

    #[test]
    fn single_step_halves_input() {
        let mut cell = GruCell::zeros(3, 3);
        cell.w_h = Array2::eye(3);
        let x = Array2::from_shape_vec((3, 1), vec![0.4, -1.2, 2.0]).unwrap();
        let out = gru_forward(&cell, x.view(), &[0.0; 3]).unwrap();
        for (o, v) in out.iter().zip([0.4, -1.2, 2.0]) {
            assert!((o - 0.5 * v).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_is_iterated_step() {
        let cell = random_cell(4, 6, 2);
        let seq = random_seq(4, 5, 3);
        let mut h = vec![0.0; 6];
        for k in 0..5 {
            h = gru_step(&cell, &seq.column(k).to_vec(), &h);
        }
        assert_eq!(gru_forward(&cell, seq.view(), &[0.0; 6]).unwrap(), h);
    }

    #[test]
    fn shape_errors() {
        let cell = GruCell::zeros(3, 2);
        assert!(gru_forward(&cell, Array2::zeros((2, 4)).view(), &[0.0; 2]).is_err());
        assert!(gru_forward(&cell, Array2::zeros((3, 0)).view(), &[0.0; 2]).is_err());
        assert!(gru_forward(&cell, Array2::zeros((3, 1)).view(), &[0.0; 3]).is_err());
    }

    #[test]
    fn batched_matches_single_sequence() {
        let cell = random_cell(3, 5, 7);
        let seqs: Vec<Array2<f64>> = (0..4).map(|s| random_seq(3, 6, 10 + s)).collect();
        let xs: Vec<Array2<f64>> = (0..6)
            .map(|k| {
                Array2::from_shape_fn((4, 3), |(row, i)| seqs[row][[i, k]])
            })
            .collect();
        let cache = cell.forward_batch(&xs);
        for (row, seq) in seqs.iter().enumerate() {
            let single = gru_forward(&cell, seq.view(), &[0.0; 5]).unwrap();
            for (a, b) in cache.output().row(row).iter().zip(&single) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    // Finite differences of sum(c * h_T) for a fixed random projection c.
    #[test]
    fn bptt_matches_finite_differences() {
        let mut cell = random_cell(3, 4, 21);
        let xs: Vec<Array2<f64>> = (0..4).map(|k| random_seq(3, 2, 30 + k).reversed_axes()).collect();
        let proj = random_seq(2, 4, 99);
        let loss = |c: &GruCell| (c.forward_batch(&xs).output() * &proj).sum();
        let cache = cell.forward_batch(&xs);
        let mut grad = GruCell::zeros(3, 4);
        cell.backward_batch(&xs, &cache, &proj, &mut grad);
        let analytic = grad.flat();
        let base = cell.flat();
        for (i, a) in analytic.iter().enumerate() {
            let mut p = base.clone();
            p[i] += 1e-5;
            cell.set_flat(&p);
            let up = loss(&cell);
            p[i] -= 2e-5;
            cell.set_flat(&p);
            let down = loss(&cell);
            cell.set_flat(&base);
            let numeric = (up - down) / 2e-5;
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
            assert!(rel < 1e-6, "coordinate {i}: {a} vs {numeric}");
        }
    }

    proptest! {
        #[test]
        fn length_composable(split in 1usize..6, seed in 0u64..1000) {
            let cell = random_cell(2, 3, seed);
            let seq = random_seq(2, 6, seed + 1);
            let full = gru_forward(&cell, seq.view(), &[0.0; 3]).unwrap();
            let mid = gru_forward(&cell, seq.slice(ndarray::s![.., ..split]), &[0.0; 3]).unwrap();
            let rest = gru_forward(&cell, seq.slice(ndarray::s![.., split..]), &mid).unwrap();
            prop_assert_eq!(full, rest);
        }
    }
}

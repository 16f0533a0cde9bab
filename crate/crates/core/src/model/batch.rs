use ndarray::{s, Array2, ArrayView1};

use super::{MgpiConfig, MgpiNetwork, Variant};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy_index, DenseCache, GruCache};
use crate::scene::AgentState;

/// A set of states laid out for batched evaluation.
///
/// Neighbor histories of all samples are stacked as rows; `row_owner` maps a
/// row back to its sample. Per-step inputs are stored as one matrix per step.
#[derive(Debug, Clone)]
pub struct Batch {
    size: usize,
    row_owner: Vec<usize>,
    /// Rows per pooling slot: per sample, or per (sample, cell) for grid pooling.
    slot_counts: Vec<usize>,
    /// Pooling slot of each row; `None` for rows dropped outside the grid.
    row_slot: Vec<Option<usize>>,
    neighbor_obs: Vec<Array2<f64>>,
    neighbor_actions: Vec<Array2<f64>>,
    self_actions: Vec<Array2<f64>>,
}

impl Batch {
    pub fn from_states(config: &MgpiConfig, states: &[&AgentState]) -> Result<Batch> {
        let h = config.horizon;
        let u = config.action_count;
        let variant = config.variant;
        for (i, st) in states.iter().enumerate() {
            if st.horizon != h || st.self_actions.dim() != (u, h) {
                return Err(Error::Shape(format!(
                    "state {i} has horizon {} and {} actions, network expects {h} and {u}",
                    st.horizon,
                    st.self_actions.nrows()
                )));
            }
            if (st.position_scale - config.position_scale).abs() > 1e-12 * config.position_scale {
                return Err(Error::Shape(format!(
                    "state {i} uses position scale {}, network expects {}",
                    st.position_scale, config.position_scale
                )));
            }
            for nb in &st.neighbors {
                if nb.gaze.dim() != (2, h) || nb.position.dim() != (2, h) || nb.actions.dim() != (u, h) {
                    return Err(Error::Shape(format!("state {i}: neighbor {} history has the wrong shape", nb.id)));
                }
            }
        }
        let use_neighbors = variant.uses_neighbors();
        let rows: usize = if use_neighbors {
            states.iter().map(|s| s.neighbors.len()).sum()
        } else {
            0
        };
        let mut batch = Batch {
            size: states.len(),
            row_owner: Vec::with_capacity(rows),
            slot_counts: Vec::new(),
            row_slot: Vec::with_capacity(rows),
            neighbor_obs: (0..h).map(|_| Array2::zeros((rows, 4))).collect(),
            neighbor_actions: (0..h).map(|_| Array2::zeros((rows, u))).collect(),
            self_actions: Vec::new(),
        };
        if variant.uses_self() {
            batch.self_actions = (0..h)
                .map(|k| Array2::from_shape_fn((states.len(), u), |(b, a)| states[b].self_actions[[a, k]]))
                .collect();
        }
        if !use_neighbors {
            return Ok(batch);
        }
        let cells = config.socpool_grid * config.socpool_grid;
        batch.slot_counts = vec![0; if variant == Variant::Socpool { states.len() * cells } else { states.len() }];
        let mut row = 0;
        for (b, st) in states.iter().enumerate() {
            for nb in &st.neighbors {
                for k in 0..h {
                    let mut obs = batch.neighbor_obs[k].row_mut(row);
                    obs[0] = nb.gaze[[0, k]];
                    obs[1] = nb.gaze[[1, k]];
                    obs[2] = nb.position[[0, k]];
                    obs[3] = nb.position[[1, k]];
                    batch.neighbor_actions[k].row_mut(row).assign(&nb.actions.column(k));
                }
                let slot = if variant == Variant::Socpool {
                    let x = nb.position[[0, h - 1]] * st.position_scale;
                    let y = nb.position[[1, h - 1]] * st.position_scale;
                    config.socpool_cell_of(x, y).map(|c| b * cells + c)
                } else {
                    Some(b)
                };
                if let Some(sl) = slot {
                    batch.slot_counts[sl] += 1;
                }
                batch.row_slot.push(slot);
                batch.row_owner.push(b);
                row += 1;
            }
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Number of stacked neighbor rows.
    pub fn rows(&self) -> usize {
        self.row_owner.len()
    }

    pub fn row_owner(&self) -> &[usize] {
        &self.row_owner
    }

    /// Current-step relative observations of all neighbor rows (`rows x 4`).
    pub fn gate_inputs(&self) -> &Array2<f64> {
        self.neighbor_obs.last().expect("horizon >= 1")
    }
}

/// Everything the backward pass needs from a forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    n: Option<GruCache>,
    c: Option<GruCache>,
    c_self: Option<GruCache>,
    gate1: Option<DenseCache>,
    gate2: Option<DenseCache>,
    /// Ungated `[N, C]` per neighbor row.
    messages: Array2<f64>,
    pi_in: Array2<f64>,
    pi1: DenseCache,
    pi2: DenseCache,
}

impl ForwardCache {
    pub fn probabilities(&self) -> &Array2<f64> {
        &self.pi2.y
    }

    /// Gate value per neighbor row, for gated variants.
    pub fn gates(&self) -> Option<ArrayView1<'_, f64>> {
        self.gate2.as_ref().map(|g| g.y.column(0))
    }

    /// Mean cross-entropy of the batch against target class indices.
    pub fn loss(&self, targets: &[usize]) -> f64 {
        let p = self.probabilities();
        let total: f64 = targets
            .iter()
            .enumerate()
            .map(|(b, &t)| cross_entropy_index(p.row(b).as_slice().expect("row"), t))
            .sum();
        total / targets.len() as f64
    }
}

impl MgpiNetwork {
    pub fn forward_batch(&self, batch: &Batch) -> ForwardCache {
        let cfg = &self.config;
        let hd = cfg.encoder_hidden;
        let rows = batch.rows();
        let width = cfg.message_width();
        let mut messages = Array2::zeros((rows, width));
        let (mut n_cache, mut c_cache, mut gate1, mut gate2) = (None, None, None, None);
        if let (Some(n), Some(c)) = (&self.n, &self.c) {
            if rows > 0 {
                let nc = n.forward_batch(&batch.neighbor_obs);
                let cc = c.forward_batch(&batch.neighbor_actions);
                messages.slice_mut(s![.., ..hd]).assign(nc.output());
                messages.slice_mut(s![.., hd..]).assign(cc.output());
                n_cache = Some(nc);
                c_cache = Some(cc);
                if let Some(k) = &self.k {
                    let g1 = k.layer1.forward_batch(batch.gate_inputs());
                    gate2 = Some(k.layer2.forward_batch(&g1.y));
                    gate1 = Some(g1);
                }
            }
        }
        let pooled_width = cfg.pooled_width();
        let mut pi_in = Array2::zeros((batch.len(), cfg.policy_input_width()));
        if pooled_width > 0 && rows > 0 {
            let gates = gate2.as_ref().map(|g: &DenseCache| g.y.column(0));
            let mut pooled = Array2::<f64>::zeros((batch.slot_counts.len(), width));
            for (r, slot) in batch.row_slot.iter().enumerate() {
                let Some(slot) = *slot else { continue };
                let mut dst = pooled.row_mut(slot);
                match &gates {
                    Some(g) => dst.scaled_add(g[r], &messages.row(r)),
                    None => dst += &messages.row(r),
                }
            }
            for (mut row, &count) in pooled.outer_iter_mut().zip(&batch.slot_counts) {
                if count > 0 {
                    row /= count as f64;
                }
            }
            let pooled = pooled
                .into_shape_with_order((batch.len(), pooled_width))
                .expect("slots are contiguous per sample");
            pi_in.slice_mut(s![.., ..pooled_width]).assign(&pooled);
        }
        let c_self = self.c_self.as_ref().map(|cs| {
            let cache = cs.forward_batch(&batch.self_actions);
            pi_in.slice_mut(s![.., pooled_width..]).assign(cache.output());
            cache
        });
        let pi1 = self.pi1.forward_batch(&pi_in);
        let pi2 = self.pi2.forward_batch(&pi1.y);
        ForwardCache {
            n: n_cache,
            c: c_cache,
            c_self,
            gate1,
            gate2,
            messages,
            pi_in,
            pi1,
            pi2,
        }
    }

    /// Mean cross-entropy of a batch and its gradient with respect to every
    /// parameter.
    pub fn loss_and_gradient(&self, batch: &Batch, targets: &[usize]) -> Result<(f64, MgpiNetwork)> {
        if targets.len() != batch.len() {
            return Err(Error::Shape(format!("{} targets for {} samples", targets.len(), batch.len())));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= self.config.action_count) {
            return Err(Error::InvalidInput(format!("target class {t} out of range")));
        }
        let cache = self.forward_batch(batch);
        let grad = self.backward(batch, &cache, targets);
        Ok((cache.loss(targets), grad))
    }

    /// Gradients of the mean cross-entropy given a recorded forward pass.
    pub fn backward(&self, batch: &Batch, cache: &ForwardCache, targets: &[usize]) -> MgpiNetwork {
        let cfg = &self.config;
        let hd = cfg.encoder_hidden;
        let mut grad = self.zeros_like();
        let bsz = batch.len() as f64;
        let mut dz = cache.pi2.y.clone();
        for (b, &t) in targets.iter().enumerate() {
            dz[[b, t]] -= 1.0;
        }
        dz /= bsz;
        let d_hidden = self.pi2.backward_preactivation(&cache.pi1.y, &dz, &mut grad.pi2);
        let d_in = self.pi1.backward_batch(&cache.pi_in, &cache.pi1, &d_hidden, &mut grad.pi1);
        let pooled_width = cfg.pooled_width();

        if let (Some(cs), Some(cs_cache), Some(g)) = (&self.c_self, &cache.c_self, &mut grad.c_self) {
            let d_self = d_in.slice(s![.., pooled_width..]).to_owned();
            cs.backward_batch(&batch.self_actions, cs_cache, &d_self, g);
        }

        let rows = batch.rows();
        let (Some(n), Some(c), Some(n_cache), Some(c_cache)) = (&self.n, &self.c, &cache.n, &cache.c) else {
            return grad;
        };
        let width = cfg.message_width();
        let d_pooled = d_in
            .slice(s![.., ..pooled_width])
            .to_owned()
            .into_shape_with_order((batch.slot_counts.len(), width))
            .expect("slots are contiguous per sample");
        let gates = cache.gates();
        let mut d_msg = Array2::<f64>::zeros((rows, width));
        let mut d_gate = Array2::<f64>::zeros((rows, 1));
        for (r, slot) in batch.row_slot.iter().enumerate() {
            let Some(slot) = *slot else { continue };
            let scale = 1.0 / batch.slot_counts[slot] as f64;
            let dw = d_pooled.row(slot);
            match &gates {
                Some(g) => {
                    d_gate[[r, 0]] = scale * dw.dot(&cache.messages.row(r));
                    d_msg.row_mut(r).scaled_add(scale * g[r], &dw);
                }
                None => d_msg.row_mut(r).scaled_add(scale, &dw),
            }
        }
        if let (Some(k), Some(g1), Some(g2), Some(gk)) = (&self.k, &cache.gate1, &cache.gate2, &mut grad.k) {
            let d_h = k.layer2.backward_batch(&g1.y, g2, &d_gate, &mut gk.layer2);
            k.layer1.backward_batch(batch.gate_inputs(), g1, &d_h, &mut gk.layer1);
        }
        let d_n = d_msg.slice(s![.., ..hd]).to_owned();
        let d_c = d_msg.slice(s![.., hd..]).to_owned();
        n.backward_batch(&batch.neighbor_obs, n_cache, &d_n, grad.n.as_mut().expect("same structure"));
        c.backward_batch(&batch.neighbor_actions, c_cache, &d_c, grad.c.as_mut().expect("same structure"));
        grad
    }
}

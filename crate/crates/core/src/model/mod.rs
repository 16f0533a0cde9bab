//! The gated multi-agent policy network and its ablation baselines.

mod batch;
mod checkpoint;
mod config;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use batch::{Batch, ForwardCache};
pub use checkpoint::CHECKPOINT_FORMAT_VERSION;
pub use config::{MgpiConfig, Variant};

use crate::error::{Error, Result};
use crate::nn::{elu, gru_forward, hard_sigmoid, Activation, Dense, GruCell, Params};
use crate::scene::{AgentState, RelativeObservation};

/// Inputs of the gate: relative gaze and scaled relative position.
pub const GATE_INPUT: usize = 4;

/// Two-layer scorer mapping a relative observation to an importance in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub layer1: Dense,
    pub layer2: Dense,
}

impl Gate {
    pub fn zeros(hidden: usize) -> Self {
        Gate {
            layer1: Dense::zeros(GATE_INPUT, hidden, Activation::Elu),
            layer2: Dense::zeros(hidden, 1, Activation::HardSigmoid),
        }
    }

    /// Pre-activation of the output unit.
    pub fn logit(&self, features: [f64; 4]) -> f64 {
        let (w1, b1) = (&self.layer1.weight, &self.layer1.bias);
        let (w2, b2) = (&self.layer2.weight, &self.layer2.bias);
        let mut out = b2[0];
        for i in 0..w1.nrows() {
            let mut a = b1[i];
            for (j, f) in features.iter().enumerate() {
                a += w1[[i, j]] * f;
            }
            out += w2[[0, i]] * elu(a);
        }
        out
    }

    pub fn score(&self, features: [f64; 4]) -> f64 {
        hard_sigmoid(self.logit(features))
    }
}

impl Params for Gate {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.layer1.visit(&crate::nn::param::join(prefix, "layer1"), f);
        self.layer2.visit(&crate::nn::param::join(prefix, "layer2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.layer1.visit_mut(&crate::nn::param::join(prefix, "layer1"), f);
        self.layer2.visit_mut(&crate::nn::param::join(prefix, "layer2"), f);
    }
}

/// All trainable parameters. Modules a variant does not use are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct MgpiNetwork {
    pub config: MgpiConfig,
    /// Social encoder over relative gaze and position histories.
    pub n: Option<GruCell>,
    /// Social encoder over neighbor action histories.
    pub c: Option<GruCell>,
    /// Encoder over the agent's own action history.
    pub c_self: Option<GruCell>,
    pub k: Option<Gate>,
    pub pi1: Dense,
    pub pi2: Dense,
}

impl MgpiNetwork {
    /// A network with every parameter set to zero.
    pub fn zeros(config: MgpiConfig) -> Result<Self> {
        config.validate()?;
        let v = config.variant;
        let hd = config.encoder_hidden;
        let u = config.action_count;
        Ok(MgpiNetwork {
            config,
            n: v.uses_neighbors().then(|| GruCell::zeros(GATE_INPUT, hd)),
            c: v.uses_neighbors().then(|| GruCell::zeros(u, hd)),
            c_self: v.uses_self().then(|| GruCell::zeros(u, hd)),
            k: v.uses_gate().then(|| Gate::zeros(config.gate_hidden)),
            pi1: Dense::zeros(config.policy_input_width(), config.policy_hidden, Activation::Elu),
            pi2: Dense::zeros(config.policy_hidden, u, Activation::Softmax),
        })
    }

    /// Glorot-uniform weights and zero biases drawn from a seeded stream.
    pub fn init(config: MgpiConfig, seed: u64) -> Result<Self> {
        let mut net = MgpiNetwork::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hd = config.encoder_hidden;
        let u = config.action_count;
        if net.n.is_some() {
            net.n = Some(GruCell::glorot(GATE_INPUT, hd, &mut rng));
            net.c = Some(GruCell::glorot(u, hd, &mut rng));
        }
        if net.c_self.is_some() {
            net.c_self = Some(GruCell::glorot(u, hd, &mut rng));
        }
        if net.k.is_some() {
            net.k = Some(Gate {
                layer1: Dense::glorot(GATE_INPUT, config.gate_hidden, Activation::Elu, &mut rng),
                layer2: Dense::glorot(config.gate_hidden, 1, Activation::HardSigmoid, &mut rng),
            });
        }
        net.pi1 = Dense::glorot(config.policy_input_width(), config.policy_hidden, Activation::Elu, &mut rng);
        net.pi2 = Dense::glorot(config.policy_hidden, u, Activation::Softmax, &mut rng);
        Ok(net)
    }

    pub fn gate(&self) -> Option<&Gate> {
        self.k.as_ref()
    }

    /// A zero-valued network of identical structure, used to hold gradients.
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.fill_zero();
        g
    }

    /// Names of all parameter tensors in visiting order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit("", &mut |name, _, _| out.push(name.to_string()));
        out
    }

    /// Gate value for one relative observation; 1 for ungated variants.
    pub fn kpm_gate(&self, rel: &RelativeObservation) -> f64 {
        match &self.k {
            Some(k) => k.score(rel.features()),
            None => 1.0,
        }
    }

    /// `[N(P_hist), C(D_hist)]` for one neighbor from zero initial states.
    pub fn encode_neighbor(&self, p_hist: ArrayView2<f64>, d_hist: ArrayView2<f64>) -> Result<Vec<f64>> {
        let (Some(n), Some(c)) = (&self.n, &self.c) else {
            return Err(Error::Config(format!("variant {} has no neighbor encoders", self.config.variant)));
        };
        if p_hist.ncols() != d_hist.ncols() {
            return Err(Error::Shape("position and action histories differ in length".into()));
        }
        let hd = self.config.encoder_hidden;
        let mut out = gru_forward(n, p_hist, &vec![0.0; hd])?;
        out.extend(gru_forward(c, d_hist, &vec![0.0; hd])?);
        Ok(out)
    }

    /// Next-action distribution for a single state.
    pub fn forward(&self, state: &AgentState) -> Result<Vec<f64>> {
        Ok(self.batch_forward(std::slice::from_ref(state))?.pop().expect("one row"))
    }

    /// Element-wise [`MgpiNetwork::forward`] evaluated as one batch.
    pub fn batch_forward(&self, states: &[AgentState]) -> Result<Vec<Vec<f64>>> {
        if states.is_empty() {
            return Ok(Vec::new());
        }
        let refs: Vec<&AgentState> = states.iter().collect();
        let batch = Batch::from_states(&self.config, &refs)?;
        let probs = self.forward_batch(&batch).probabilities().to_owned();
        Ok(probs.outer_iter().map(|r| r.to_vec()).collect())
    }

    /// Probability matrix (`batch x |U|`) for a prepared batch.
    pub fn predict(&self, batch: &Batch) -> Array2<f64> {
        self.forward_batch(batch).probabilities().to_owned()
    }
}

impl Params for MgpiNetwork {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        use crate::nn::param::join;
        if let Some(n) = &self.n {
            n.visit(&join(prefix, "N"), f);
        }
        if let Some(c) = &self.c {
            c.visit(&join(prefix, "C"), f);
        }
        if let Some(c) = &self.c_self {
            c.visit(&join(prefix, "C_self"), f);
        }
        if let Some(k) = &self.k {
            k.visit(&join(prefix, "K"), f);
        }
        self.pi1.visit(&join(prefix, "pi.layer1"), f);
        self.pi2.visit(&join(prefix, "pi.layer2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        use crate::nn::param::join;
        if let Some(n) = &mut self.n {
            n.visit_mut(&join(prefix, "N"), f);
        }
        if let Some(c) = &mut self.c {
            c.visit_mut(&join(prefix, "C"), f);
        }
        if let Some(c) = &mut self.c_self {
            c.visit_mut(&join(prefix, "C_self"), f);
        }
        if let Some(k) = &mut self.k {
            k.visit_mut(&join(prefix, "K"), f);
        }
        self.pi1.visit_mut(&join(prefix, "pi.layer1"), f);
        self.pi2.visit_mut(&join(prefix, "pi.layer2"), f);
    }
}

/// Coordinate-wise mean of equally sized messages. An empty list pools to
/// `width` zeros and sets the returned flag.
pub fn pool_signals(messages: &[Vec<f64>], width: usize) -> Result<(Vec<f64>, bool)> {
    if messages.is_empty() {
        return Ok((vec![0.0; width], true));
    }
    let mut out = vec![0.0; width];
    for m in messages {
        if m.len() != width {
            return Err(Error::Shape(format!("message of length {} in a pool of width {width}", m.len())));
        }
        for (o, v) in out.iter_mut().zip(m) {
            *o += v;
        }
    }
    let n = messages.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok((out, false))
}

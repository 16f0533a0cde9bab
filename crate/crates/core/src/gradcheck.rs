//! Central finite-difference verification of the hand-derived backward pass.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{Batch, MgpiConfig, MgpiNetwork, Variant};
use crate::nn::Params;
use crate::scene::{build_state, nearest_neighbors, AgentState, Scenario};
use crate::simulator::{generate_layout, rollout, LayoutGenParams, RuleParams};

pub const FD_STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, 1e-7)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub variant: Variant,
    /// Worst relative error per top-level module (`N`, `C`, `C_self`, `K`, `pi`).
    pub modules: BTreeMap<String, f64>,
    pub coordinates: usize,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        self.modules.values().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_error() < TOLERANCE
    }
}

/// Toy configuration: horizon 3, hidden width 8, six actions.
pub fn toy_config(variant: Variant) -> MgpiConfig {
    MgpiConfig {
        horizon: 3,
        encoder_hidden: 8,
        gate_hidden: 8,
        policy_hidden: 8,
        ..MgpiConfig::new(variant, 6)
    }
}

/// A handful of states with two neighbors each, drawn from a short episode.
pub fn toy_states(config: &MgpiConfig, seed: u64) -> Result<(Vec<AgentState>, Vec<usize>)> {
    let lp = LayoutGenParams {
        n_groups_min: 2,
        n_groups_max: 2,
        group_size_min: 2,
        group_size_max: 3,
        ..LayoutGenParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = generate_layout(&lp, &mut rng)?;
    let demo = rollout(&layout, Scenario::Static, 12, &RuleParams::for_layout(&lp), seed)?;
    let mut states = Vec::new();
    let mut targets = Vec::new();
    for t in [config.horizon, demo.len() - 1] {
        for a in &layout.agents {
            let ids = nearest_neighbors(demo.frame(t).expect("in range"), a.id, 2)?;
            states.push(build_state(&demo, a.id, t, config.horizon, &ids, config.position_scale)?);
            targets.push(rng.random_range(0..config.action_count));
        }
    }
    Ok((states, targets))
}

/// Compares the analytic gradient of the mean batch loss with central
/// differences on every coordinate. `corrupt` may tamper with the analytic
/// gradient before the comparison.
pub fn gradcheck_variant(variant: Variant, seed: u64, corrupt: Option<&dyn Fn(&mut MgpiNetwork)>) -> Result<GradcheckReport> {
    let config = toy_config(variant);
    let mut net = MgpiNetwork::init(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    net.visit_mut("", &mut |name, data| {
        if name.ends_with("bias") || name.contains(".b_") {
            data.iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
        }
    });
    let (states, targets) = toy_states(&config, seed)?;
    let refs: Vec<&AgentState> = states.iter().collect();
    let batch = Batch::from_states(&config, &refs)?;
    let (_, mut grad) = net.loss_and_gradient(&batch, &targets)?;
    if let Some(f) = corrupt {
        f(&mut grad);
    }
    let analytic = grad.flat();
    let mut owners = Vec::with_capacity(analytic.len());
    net.visit("", &mut |name, _, data| {
        let module = name.split('.').next().unwrap_or(name).to_string();
        owners.extend(std::iter::repeat_n(module, data.len()));
    });
    let base = net.flat();
    let mut theta = base.clone();
    let mut modules: BTreeMap<String, f64> = BTreeMap::new();
    for (i, &a) in analytic.iter().enumerate() {
        theta[i] = base[i] + FD_STEP;
        net.set_flat(&theta);
        let up = net.forward_batch(&batch).loss(&targets);
        theta[i] = base[i] - FD_STEP;
        net.set_flat(&theta);
        let down = net.forward_batch(&batch).loss(&targets);
        theta[i] = base[i];
        let numeric = (up - down) / (2.0 * FD_STEP);
        let e = modules.entry(owners[i].clone()).or_insert(0.0);
        *e = e.max(relative_error(a, numeric));
    }
    Ok(GradcheckReport {
        variant,
        modules,
        coordinates: analytic.len(),
    })
}

/// Runs [`gradcheck_variant`] for every variant.
pub fn run_gradcheck(seed: u64) -> Result<Vec<GradcheckReport>> {
    Variant::ALL.into_iter().map(|v| gradcheck_variant(v, seed, None)).collect()
}

/// Test fixture: flips the sign of the first gate weight gradient (or of the
/// first policy weight for ungated variants).
pub fn corrupt_backward(grad: &mut MgpiNetwork) {
    match &mut grad.k {
        Some(k) => k.layer1.weight[[0, 0]] = -k.layer1.weight[[0, 0]] + 1e-3,
        None => grad.pi1.weight[[0, 0]] = -grad.pi1.weight[[0, 0]] + 1e-3,
    }
}

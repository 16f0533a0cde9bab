use crate::error::{Error, Result};
use crate::model::{Batch, MgpiConfig};
use crate::scene::{build_state_indexed, AgentState, ConversationalAction, Demonstration, Scenario};

/// Compact handle of one training example; the state is rebuilt on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRef {
    pub demo: u32,
    /// Layout index of the acting agent.
    pub agent: u32,
    /// 1-based step whose state is observed; the target is the action at `t + 1`.
    pub t: u32,
    pub neighbors: Vec<u16>,
}

/// Behavior-cloning examples over a set of demonstrations.
#[derive(Debug, Clone)]
pub struct Dataset<'a> {
    demos: &'a [Demonstration],
    samples: Vec<SampleRef>,
    horizon: usize,
    position_scale: f64,
    scenario: Scenario,
}

fn nearest_indices(demo: &Demonstration, t: usize, me: usize, j: usize) -> Vec<u16> {
    let frame = &demo.frames[t - 1];
    let here = frame.agents[me].pose.position;
    let mut others: Vec<(f64, u32, usize)> = frame
        .agents
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != me)
        .map(|(i, a)| (a.pose.position.dist_sq(here), a.id, i))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.into_iter().take(j).map(|(_, _, i)| i as u16).collect()
}

impl<'a> Dataset<'a> {
    /// One example per (demo, agent, t) with `horizon <= t < T`, built from the
    /// `j` nearest neighbors at `t`.
    pub fn build(demos: &'a [Demonstration], horizon: usize, j: usize, position_scale: f64) -> Result<Self> {
        let Some(first) = demos.first() else {
            return Err(Error::Config("no demonstrations given".into()));
        };
        if horizon == 0 || j == 0 {
            return Err(Error::Config("horizon and neighbor count must be at least 1".into()));
        }
        if !(position_scale > 0.0 && position_scale.is_finite()) {
            return Err(Error::Config("position_scale must be positive".into()));
        }
        if let Some(d) = demos.iter().find(|d| d.scenario != first.scenario) {
            return Err(Error::Config(format!(
                "demonstrations mix scenarios {} and {}",
                first.scenario, d.scenario
            )));
        }
        let mut samples = Vec::new();
        for (di, demo) in demos.iter().enumerate() {
            if demo.layout.len() > u16::MAX as usize {
                return Err(Error::Config("too many agents in one demonstration".into()));
            }
            for me in 0..demo.layout.len() {
                for t in horizon..demo.len() {
                    samples.push(SampleRef {
                        demo: di as u32,
                        agent: me as u32,
                        t: t as u32,
                        neighbors: nearest_indices(demo, t, me, j),
                    });
                }
            }
        }
        if samples.is_empty() {
            return Err(Error::Config(format!(
                "no training examples: every demonstration is shorter than horizon + 1 = {}",
                horizon + 1
            )));
        }
        Ok(Dataset {
            demos,
            samples,
            horizon,
            position_scale,
            scenario: first.scenario,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn samples(&self) -> &[SampleRef] {
        &self.samples
    }

    pub fn state(&self, i: usize) -> AgentState {
        let s = &self.samples[i];
        let nb: Vec<usize> = s.neighbors.iter().map(|&n| n as usize).collect();
        build_state_indexed(
            &self.demos[s.demo as usize],
            s.agent as usize,
            s.t as usize,
            self.horizon,
            &nb,
            self.position_scale,
        )
    }

    pub fn target(&self, i: usize) -> ConversationalAction {
        let s = &self.samples[i];
        self.demos[s.demo as usize].frames[s.t as usize].agents[s.agent as usize].action
    }

    /// Batched network input and target indices for the given samples.
    pub fn batch(&self, config: &MgpiConfig, indices: &[usize]) -> Result<(Batch, Vec<usize>)> {
        let states: Vec<AgentState> = indices.iter().map(|&i| self.state(i)).collect();
        let refs: Vec<&AgentState> = states.iter().collect();
        let targets = indices.iter().map(|&i| self.target(i).index()).collect();
        Ok((Batch::from_states(config, &refs)?, targets))
    }
}

/// Materialized `(state, next action)` pairs; see [`Dataset::build`].
pub fn make_dataset(
    demos: &[Demonstration],
    horizon: usize,
    j: usize,
    position_scale: f64,
) -> Result<Vec<(AgentState, ConversationalAction)>> {
    let ds = Dataset::build(demos, horizon, j, position_scale)?;
    Ok((0..ds.len()).map(|i| (ds.state(i), ds.target(i))).collect())
}

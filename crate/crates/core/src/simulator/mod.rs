//! Rule-based multigroup conversation simulator.
//!
//! Every group runs the same probabilistic turn-taking rules. One step applies,
//! in this order:
//!
//! 1. distraction: Listening agents may become Distracted; Distracted agents in
//!    a group with other members may return spontaneously;
//! 2. strong addressing: an addressed target may return (releasing the
//!    addresser), and a Speaking agent whose group holds a member distracted for
//!    long enough may start addressing the longest-distracted one;
//! 3. weak addressing: running episodes count down, Speaking agents may start one
//!    (the speaking timer is paused meanwhile);
//! 4. turn timers: an expired speaker yields to a random Listening member, who
//!    Responds and then Speaks; Responding agents take the floor when done;
//! 5. dynamic scenario only: Distracted agents may start Moving to another
//!    group, movers advance, and arrivals preempt the host group's speaker;
//! 6. gaze update from the resulting actions.

mod check;
mod config;
mod layout;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{
    AgentPose, AgentRecord, ConversationalAction, Demonstration, Frame, GroupId, Layout, Scenario, Vec2,
};

pub use check::{check_demonstration, check_speaker_roles, check_transitions, is_legal_transition, Violation};
pub use config::{parse_key_values, ConfigFile};
pub use layout::{generate_layout, LayoutGenParams};

use ConversationalAction::*;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    pub p_distract: f64,
    pub distract_trigger_steps: u32,
    pub p_strong_address: f64,
    pub p_return_addressed: f64,
    pub p_return_spontaneous: f64,
    pub speak_duration_min: u32,
    pub speak_duration_max: u32,
    pub p_weak_address: f64,
    pub weak_address_duration_min: u32,
    pub weak_address_duration_max: u32,
    pub respond_duration: u32,
    pub p_move: f64,
    pub move_speed: f64,
    pub arrive_epsilon: f64,
    pub join_radius: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        RuleParams::for_layout(&LayoutGenParams::default())
    }
}

impl RuleParams {
    /// Defaults with the spatial rules scaled to the given layout geometry.
    pub fn for_layout(layout: &LayoutGenParams) -> Self {
        RuleParams {
            p_distract: 0.03,
            distract_trigger_steps: 5,
            p_strong_address: 0.5,
            p_return_addressed: 0.5,
            p_return_spontaneous: 0.02,
            speak_duration_min: 20,
            speak_duration_max: 60,
            p_weak_address: 0.02,
            weak_address_duration_min: 3,
            weak_address_duration_max: 8,
            respond_duration: 5,
            p_move: 0.01,
            move_speed: 0.05 * layout.center_spacing,
            arrive_epsilon: 0.1 * layout.group_radius,
            join_radius: layout.group_radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_distract", self.p_distract),
            ("p_strong_address", self.p_strong_address),
            ("p_return_addressed", self.p_return_addressed),
            ("p_return_spontaneous", self.p_return_spontaneous),
            ("p_weak_address", self.p_weak_address),
            ("p_move", self.p_move),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        let durations = [
            ("distract_trigger_steps", self.distract_trigger_steps),
            ("speak_duration_min", self.speak_duration_min),
            ("weak_address_duration_min", self.weak_address_duration_min),
            ("respond_duration", self.respond_duration),
        ];
        for (name, d) in durations {
            if d < 1 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.speak_duration_min > self.speak_duration_max
            || self.weak_address_duration_min > self.weak_address_duration_max
        {
            return Err(Error::Config("empty duration range".into()));
        }
        for (name, v) in [
            ("move_speed", self.move_speed),
            ("arrive_epsilon", self.arrive_epsilon),
            ("join_radius", self.join_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Per-agent simulator bookkeeping, hidden from the recorded frames.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SimAgent {
    pub id: u32,
    pub group: GroupId,
    pub pose: AgentPose,
    pub action: ConversationalAction,
    pub speak_timer: u32,
    pub respond_timer: u32,
    pub weak_timer: u32,
    pub distracted_steps: u32,
    pub distraction_point: Vec2,
    /// Strong-address target or weak-address listener (agent index).
    pub address_target: Option<usize>,
    /// Previous floor holder a Responding agent answers to (agent index).
    pub respond_to: Option<usize>,
    pub move_target: Option<GroupId>,
    pub join_point: Vec2,
    pub velocity: Vec2,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub(crate) t: usize,
    pub(crate) scenario: Scenario,
    pub(crate) agents: Vec<SimAgent>,
    pub(crate) rng: ChaCha8Rng,
}

impl SimState {
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn frame(&self) -> Frame {
        Frame {
            t: self.t,
            agents: self
                .agents
                .iter()
                .map(|a| AgentRecord {
                    id: a.id,
                    pose: a.pose,
                    action: a.action,
                    group: a.group,
                })
                .collect(),
        }
    }

    /// Indices of agents in `group` that are not travelling.
    fn present(&self, group: GroupId) -> impl Iterator<Item = usize> + '_ {
        self.agents
            .iter()
            .enumerate()
            .filter(move |(_, a)| a.group == group && a.action != Moving)
            .map(|(i, _)| i)
    }

    fn others(&self, i: usize) -> Vec<usize> {
        let g = self.agents[i].group;
        self.present(g).filter(|&j| j != i).collect()
    }

    fn floor_holder(&self, group: GroupId) -> Option<usize> {
        self.present(group).find(|&j| self.agents[j].action.is_speaker_role())
    }

    fn centroid(&self, members: &[usize]) -> Option<Vec2> {
        if members.is_empty() {
            return None;
        }
        let sum = members
            .iter()
            .fold(Vec2::ZERO, |acc, &j| acc + self.agents[j].pose.position);
        Some(sum.scale(1.0 / members.len() as f64))
    }

    fn group_ids(&self) -> Vec<GroupId> {
        let mut ids: Vec<GroupId> = self.agents.iter().map(|a| a.group).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    fn fresh_speak_timer(&mut self, params: &RuleParams) -> u32 {
        self.rng
            .random_range(params.speak_duration_min..=params.speak_duration_max)
    }

    fn begin_distraction(&mut self, i: usize, params: &RuleParams) {
        let angle = self.rng.random_range(0.0..std::f64::consts::TAU);
        let a = &mut self.agents[i];
        a.action = Distracted;
        a.distracted_steps = 0;
        a.distraction_point = a.pose.position + Vec2::from_angle(angle).scale(params.join_radius);
        a.address_target = None;
        a.respond_to = None;
    }

    fn become_listener(&mut self, i: usize) {
        let a = &mut self.agents[i];
        a.action = Listening;
        a.address_target = None;
        a.respond_to = None;
        a.distracted_steps = 0;
    }

    fn take_floor(&mut self, i: usize, params: &RuleParams) {
        let timer = self.fresh_speak_timer(params);
        let a = &mut self.agents[i];
        a.action = Speaking;
        a.speak_timer = timer;
        a.address_target = None;
        a.respond_to = None;
    }
}

/// Initial state: in each multi-member group one random member speaks and the
/// rest listen; singletons are Distracted.
pub fn init_sim(layout: &Layout, scenario: Scenario, params: &RuleParams, seed: u64) -> Result<SimState> {
    layout.validate()?;
    params.validate()?;
    let mut state = SimState {
        t: 1,
        scenario,
        agents: layout
            .agents
            .iter()
            .map(|a| SimAgent {
                id: a.id,
                group: a.group,
                pose: a.pose,
                action: Listening,
                speak_timer: 0,
                respond_timer: 0,
                weak_timer: 0,
                distracted_steps: 0,
                distraction_point: a.pose.position + a.pose.gaze,
                address_target: None,
                respond_to: None,
                move_target: None,
                join_point: a.pose.position,
                velocity: Vec2::ZERO,
            })
            .collect(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    for g in state.group_ids() {
        let members: Vec<usize> = state.present(g).collect();
        if members.len() == 1 {
            state.begin_distraction(members[0], params);
        } else {
            let speaker = members[state.rng.random_range(0..members.len())];
            state.take_floor(speaker, params);
        }
    }
    update_gazes(&mut state);
    Ok(state)
}

/// Advances the simulation by one frame.
pub fn step(state: &mut SimState, params: &RuleParams) {
    let entry: Vec<ConversationalAction> = state.agents.iter().map(|a| a.action).collect();
    let n = state.agents.len();

    // 1. distraction onsets and spontaneous returns
    for i in 0..n {
        match entry[i] {
            Listening => {
                if state.rng.random::<f64>() < params.p_distract {
                    state.begin_distraction(i, params);
                }
            }
            Distracted => {
                if !state.others(i).is_empty() && state.rng.random::<f64>() < params.p_return_spontaneous {
                    state.become_listener(i);
                }
            }
            _ => {}
        }
    }

    // 2. strong addressing: release, then trigger
    for i in 0..n {
        if entry[i] != StronglyAddressing {
            continue;
        }
        let group = state.agents[i].group;
        match state.agents[i].address_target {
            Some(target)
                if state.agents[target].action == Distracted && state.agents[target].group == group =>
            {
                if state.rng.random::<f64>() < params.p_return_addressed {
                    state.become_listener(target);
                    release_strong_address(state, i);
                }
            }
            _ => release_strong_address(state, i),
        }
    }
    for i in 0..n {
        if entry[i] != Speaking || state.agents[i].action != Speaking {
            continue;
        }
        let target = state
            .others(i)
            .into_iter()
            .filter(|&j| {
                state.agents[j].action == Distracted
                    && state.agents[j].distracted_steps >= params.distract_trigger_steps
            })
            .max_by(|&a, &b| {
                state.agents[a]
                    .distracted_steps
                    .cmp(&state.agents[b].distracted_steps)
                    .then(b.cmp(&a))
            });
        if let Some(target) = target {
            if state.rng.random::<f64>() < params.p_strong_address {
                let a = &mut state.agents[i];
                a.action = StronglyAddressing;
                a.address_target = Some(target);
            }
        }
    }

    // 3. weak addressing
    for i in 0..n {
        if entry[i] == WeaklyAddressing && state.agents[i].action == WeaklyAddressing {
            let a = &mut state.agents[i];
            a.weak_timer = a.weak_timer.saturating_sub(1);
            if a.weak_timer == 0 {
                a.action = Speaking;
                a.address_target = None;
            }
        } else if entry[i] == Speaking && state.agents[i].action == Speaking {
            let others = state.others(i);
            if !others.is_empty() && state.rng.random::<f64>() < params.p_weak_address {
                let duration = state
                    .rng
                    .random_range(params.weak_address_duration_min..=params.weak_address_duration_max);
                let target = others[state.rng.random_range(0..others.len())];
                let a = &mut state.agents[i];
                a.action = WeaklyAddressing;
                a.weak_timer = duration;
                a.address_target = Some(target);
            }
        }
    }

    // 4. turn timers
    let phase4: Vec<ConversationalAction> = state.agents.iter().map(|a| a.action).collect();
    for i in 0..n {
        if entry[i] == WeaklyAddressing {
            continue;
        }
        match phase4[i] {
            Speaking | StronglyAddressing => {
                if state.agents[i].speak_timer == 0 {
                    yield_floor(state, i, &entry, params);
                } else {
                    state.agents[i].speak_timer -= 1;
                }
            }
            Responding => {
                if state.agents[i].respond_timer == 0 {
                    state.take_floor(i, params);
                } else {
                    state.agents[i].respond_timer -= 1;
                }
            }
            _ => {}
        }
    }

    // 5. movement between groups
    if state.scenario == Scenario::Dynamic {
        move_agents(state, &entry, params);
    }

    // 6. gaze
    update_gazes(state);

    for a in &mut state.agents {
        if a.action == Distracted {
            a.distracted_steps += 1;
        }
    }
    state.t += 1;
}

fn release_strong_address(state: &mut SimState, i: usize) {
    let a = &mut state.agents[i];
    a.action = Speaking;
    a.address_target = None;
}

/// Hands the floor to a random member that listened throughout this step; the
/// speaker keeps talking when nobody is available.
fn yield_floor(state: &mut SimState, i: usize, entry: &[ConversationalAction], params: &RuleParams) {
    let candidates: Vec<usize> = state
        .others(i)
        .into_iter()
        .filter(|&j| state.agents[j].action == Listening && entry[j] == Listening)
        .collect();
    if candidates.is_empty() {
        state.take_floor(i, params);
        return;
    }
    let next = candidates[state.rng.random_range(0..candidates.len())];
    state.become_listener(i);
    let a = &mut state.agents[next];
    a.action = Responding;
    a.respond_timer = params.respond_duration;
    a.respond_to = Some(i);
}

fn join_point(state: &SimState, target: GroupId, position: Vec2, params: &RuleParams, previous: Vec2) -> Vec2 {
    let members: Vec<usize> = state.present(target).collect();
    match state.centroid(&members) {
        Some(c) => {
            let dir = (position - c).normalized().unwrap_or(Vec2::new(1.0, 0.0));
            c + dir.scale(params.join_radius)
        }
        None => previous,
    }
}

fn move_agents(state: &mut SimState, entry: &[ConversationalAction], params: &RuleParams) {
    let n = state.agents.len();
    for i in 0..n {
        if entry[i] != Distracted || state.agents[i].action != Distracted {
            continue;
        }
        let own = state.agents[i].group;
        let targets: Vec<GroupId> = state
            .group_ids()
            .into_iter()
            .filter(|&g| g != own && state.present(g).next().is_some())
            .collect();
        if targets.is_empty() || state.rng.random::<f64>() >= params.p_move {
            continue;
        }
        let target = targets[state.rng.random_range(0..targets.len())];
        let a = &mut state.agents[i];
        a.action = Moving;
        a.move_target = Some(target);
        a.address_target = None;
        a.respond_to = None;
    }

    for i in 0..n {
        if state.agents[i].action != Moving {
            continue;
        }
        let Some(target) = state.agents[i].move_target else {
            continue;
        };
        let pos = state.agents[i].pose.position;
        let join = join_point(state, target, pos, params, state.agents[i].join_point);
        let delta = join - pos;
        let dist = delta.norm();
        let a = &mut state.agents[i];
        a.join_point = join;
        if let Some(dir) = delta.normalized() {
            a.velocity = dir;
        }
        a.pose.position = if dist <= params.move_speed {
            join
        } else {
            pos + a.velocity.scale(params.move_speed)
        };
    }

    for i in 0..n {
        let a = &state.agents[i];
        if entry[i] != Moving || a.action != Moving || a.pose.position.dist(a.join_point) > params.arrive_epsilon {
            continue;
        }
        let Some(target) = a.move_target else { continue };
        let departed = a.group;
        let host = state.floor_holder(target);
        if let Some(h) = host {
            state.become_listener(h);
        }
        let a = &mut state.agents[i];
        a.group = target;
        a.move_target = None;
        a.action = Responding;
        a.respond_timer = params.respond_duration;
        a.respond_to = host;
        a.distracted_steps = 0;

        let remaining: Vec<usize> = (0..n).filter(|&j| state.agents[j].group == departed).collect();
        if let [last] = remaining[..] {
            if state.agents[last].action != Moving && state.agents[last].action != Distracted {
                state.begin_distraction(last, params);
            }
        }
    }
}

fn update_gazes(state: &mut SimState) {
    let n = state.agents.len();
    for i in 0..n {
        let a = &state.agents[i];
        let others = state.others(i);
        let in_group = |j: usize| state.agents[j].group == a.group && state.agents[j].action != Moving && j != i;
        let target = match a.action {
            Listening => state
                .floor_holder(a.group)
                .filter(|&h| h != i)
                .map(|h| state.agents[h].pose.position)
                .or_else(|| state.centroid(&others)),
            Responding => a
                .respond_to
                .filter(|&j| in_group(j))
                .map(|j| state.agents[j].pose.position)
                .or_else(|| state.centroid(&others)),
            Speaking => state.centroid(&others),
            StronglyAddressing | WeaklyAddressing => a
                .address_target
                .filter(|&j| in_group(j))
                .map(|j| state.agents[j].pose.position)
                .or_else(|| state.centroid(&others)),
            Distracted => Some(a.distraction_point),
            Moving => Some(a.pose.position + a.velocity),
        };
        if let Some(target) = target {
            let pose = AgentPose::looking_at(a.pose.position, target, a.pose.gaze);
            state.agents[i].pose = pose;
        }
    }
}

/// Runs `steps` frames (the initial one included) from `layout`.
pub fn rollout(layout: &Layout, scenario: Scenario, steps: usize, params: &RuleParams, seed: u64) -> Result<Demonstration> {
    if steps == 0 {
        return Err(Error::InvalidInput("rollout needs at least one step".into()));
    }
    let mut state = init_sim(layout, scenario, params, seed)?;
    let mut frames = Vec::with_capacity(steps);
    frames.push(state.frame());
    for _ in 1..steps {
        step(&mut state, params);
        frames.push(state.frame());
    }
    Ok(Demonstration {
        scenario,
        layout: layout.clone(),
        frames,
        seed,
    })
}

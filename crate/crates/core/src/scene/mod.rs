//! Scene primitives shared by the simulator, the policy network and group
//! detection: poses, conversational actions, episodes, and the observer-centric
//! features an agent perceives of its neighbors.

mod io;

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_layout, read_demonstration, read_layout_csv, write_demonstration, write_layout_csv};

pub type AgentId = u32;
pub type GroupId = u32;

/// Gaze vectors must be unit length within this tolerance.
pub const UNIT_TOL: f64 = 1e-9;

/// Default divisor applied to scene-unit positions before they reach the network.
pub const DEFAULT_POSITION_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn dist_sq(self, other: Vec2) -> f64 {
        let d = self - other;
        d.x * d.x + d.y * d.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector in the same direction, or `None` for a zero or non-finite vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(Vec2::new(self.x / n, self.y / n))
        } else {
            None
        }
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    /// Counter-clockwise rotation by `theta`.
    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub position: Vec2,
    /// Unit gaze direction.
    pub gaze: Vec2,
}

impl AgentPose {
    /// Builds a pose, rejecting non-finite values and gazes that are not unit length.
    pub fn new(position: Vec2, gaze: Vec2) -> Result<Self> {
        if !position.is_finite() || !gaze.is_finite() {
            return Err(Error::InvalidInput("non-finite pose component".into()));
        }
        if (gaze.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!(
                "gaze ({}, {}) is not unit length",
                gaze.x, gaze.y
            )));
        }
        Ok(AgentPose { position, gaze })
    }

    /// Pose looking along `direction`, which is normalized.
    pub fn facing(position: Vec2, direction: Vec2) -> Result<Self> {
        let gaze = direction
            .normalized()
            .ok_or_else(|| Error::InvalidInput("zero gaze direction".into()))?;
        AgentPose::new(position, gaze)
    }

    /// Pose looking at `target`. Falls back to `fallback` when the target coincides
    /// with the position.
    pub(crate) fn looking_at(position: Vec2, target: Vec2, fallback: Vec2) -> Self {
        let gaze = (target - position).normalized().unwrap_or(fallback);
        AgentPose { position, gaze }
    }
}

/// Conversational actions in canonical index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConversationalAction {
    Speaking = 0,
    Listening = 1,
    Distracted = 2,
    StronglyAddressing = 3,
    WeaklyAddressing = 4,
    Responding = 5,
    Moving = 6,
}

impl ConversationalAction {
    pub const ALL: [ConversationalAction; 7] = [
        ConversationalAction::Speaking,
        ConversationalAction::Listening,
        ConversationalAction::Distracted,
        ConversationalAction::StronglyAddressing,
        ConversationalAction::WeaklyAddressing,
        ConversationalAction::Responding,
        ConversationalAction::Moving,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Speaking, both addressing modes, and Responding hold the floor.
    pub fn is_speaker_role(self) -> bool {
        matches!(
            self,
            ConversationalAction::Speaking
                | ConversationalAction::StronglyAddressing
                | ConversationalAction::WeaklyAddressing
                | ConversationalAction::Responding
        )
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ConversationalAction::Speaking => "SP",
            ConversationalAction::Listening => "LI",
            ConversationalAction::Distracted => "DI",
            ConversationalAction::StronglyAddressing => "SA",
            ConversationalAction::WeaklyAddressing => "WA",
            ConversationalAction::Responding => "RE",
            ConversationalAction::Moving => "MV",
        }
    }
}

impl fmt::Display for ConversationalAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Static,
    Dynamic,
}

impl Scenario {
    /// Size of the action space: 6 without Moving, 7 with it.
    pub fn action_count(self) -> usize {
        match self {
            Scenario::Static => 6,
            Scenario::Dynamic => 7,
        }
    }

    pub fn allows(self, action: ConversationalAction) -> bool {
        action.index() < self.action_count()
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Static => "static",
            Scenario::Dynamic => "dynamic",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Scenario::Static),
            "dynamic" => Ok(Scenario::Dynamic),
            other => Err(Error::InvalidInput(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutAgent {
    pub id: AgentId,
    pub pose: AgentPose,
    pub group: GroupId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub agents: Vec<LayoutAgent>,
}

impl Layout {
    /// Validates id uniqueness, agent count and pose invariants.
    pub fn new(agents: Vec<LayoutAgent>) -> Result<Self> {
        let layout = Layout { agents };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "layout needs at least 2 agents, got {}",
                self.agents.len()
            )));
        }
        let mut ids: Vec<AgentId> = self.agents.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!("duplicate agent id {}", w[0])));
        }
        for a in &self.agents {
            AgentPose::new(a.pose.position, a.pose.gaze)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn ids(&self) -> Vec<AgentId> {
        self.agents.iter().map(|a| a.id).collect()
    }

    /// Ground-truth groups as sorted id lists, ordered by smallest member.
    pub fn groups(&self) -> Vec<Vec<AgentId>> {
        let mut by_group: std::collections::BTreeMap<GroupId, Vec<AgentId>> = Default::default();
        for a in &self.agents {
            by_group.entry(a.group).or_default().push(a.id);
        }
        let mut groups: Vec<Vec<AgentId>> = by_group
            .into_values()
            .map(|mut g| {
                g.sort_unstable();
                g
            })
            .collect();
        groups.sort();
        groups
    }

    /// Applies `rotation` (radians, about the origin) then `translation` to every pose.
    pub fn transformed(&self, rotation: f64, translation: Vec2) -> Layout {
        Layout {
            agents: self
                .agents
                .iter()
                .map(|a| LayoutAgent {
                    pose: rigid_motion(a.pose, rotation, translation),
                    ..*a
                })
                .collect(),
        }
    }
}

pub(crate) fn rigid_motion(pose: AgentPose, rotation: f64, translation: Vec2) -> AgentPose {
    AgentPose {
        position: pose.position.rotate(rotation) + translation,
        gaze: pose.gaze.rotate(rotation),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: AgentId,
    pub pose: AgentPose,
    pub action: ConversationalAction,
    pub group: GroupId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// 1-based step index.
    pub t: usize,
    pub agents: Vec<AgentRecord>,
}

impl Frame {
    pub fn agent(&self, id: AgentId) -> Option<&AgentRecord> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn as_layout(&self) -> Layout {
        Layout {
            agents: self
                .agents
                .iter()
                .map(|a| LayoutAgent {
                    id: a.id,
                    pose: a.pose,
                    group: a.group,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub scenario: Scenario,
    pub layout: Layout,
    pub frames: Vec<Frame>,
    pub seed: u64,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame at 1-based step `t`.
    pub fn frame(&self, t: usize) -> Option<&Frame> {
        t.checked_sub(1).and_then(|i| self.frames.get(i))
    }

    /// Position of `id` within the layout; every frame lists agents in this order.
    pub fn agent_index(&self, id: AgentId) -> Option<usize> {
        self.layout.agents.iter().position(|a| a.id == id)
    }

    /// Checks frame contiguity, agent sets and the static-scenario constancy rule.
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        let ids = self.layout.ids();
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.t != i + 1 {
                return Err(Error::InvalidInput(format!(
                    "frame {} has t = {}, expected {}",
                    i,
                    frame.t,
                    i + 1
                )));
            }
            let frame_ids: Vec<AgentId> = frame.agents.iter().map(|a| a.id).collect();
            if frame_ids != ids {
                return Err(Error::InvalidInput(format!("frame {} agent set differs from layout", frame.t)));
            }
            for a in &frame.agents {
                if !self.scenario.allows(a.action) {
                    return Err(Error::InvalidInput(format!(
                        "action {} not allowed in {} scenario",
                        a.action,
                        self.scenario.name()
                    )));
                }
            }
        }
        if self.scenario == Scenario::Static {
            if let Some(first) = self.frames.first() {
                for frame in &self.frames[1..] {
                    for (a, b) in first.agents.iter().zip(&frame.agents) {
                        if a.pose.position != b.pose.position || a.group != b.group {
                            return Err(Error::InvalidInput(format!(
                                "agent {} moved in a static episode at t = {}",
                                a.id, frame.t
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A neighbor's gaze and position expressed in an observer's frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeObservation {
    pub rel_gaze: Vec2,
    pub rel_pos: Vec2,
}

impl RelativeObservation {
    pub fn features(&self) -> [f64; 4] {
        [self.rel_gaze.x, self.rel_gaze.y, self.rel_pos.x, self.rel_pos.y]
    }
}

/// Expresses `neighbor` in the frame of `observer`: the observer sits at the
/// origin looking along +x. Positions are divided by `position_scale`.
pub fn relative_frame(observer: &AgentPose, neighbor: &AgentPose, position_scale: f64) -> Result<RelativeObservation> {
    if !(position_scale > 0.0 && position_scale.is_finite()) {
        return Err(Error::InvalidInput(format!("position_scale must be positive, got {position_scale}")));
    }
    for g in [observer.gaze, neighbor.gaze] {
        if !g.is_finite() || (g.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!("gaze ({}, {}) is not unit length", g.x, g.y)));
        }
    }
    Ok(relative_frame_unchecked(observer, neighbor, position_scale))
}

/// Rotation by the transpose of R(phi) with phi = atan2(g_y, g_x); for a unit
/// gaze cos(phi) = g_x and sin(phi) = g_y.
pub(crate) fn relative_frame_unchecked(observer: &AgentPose, neighbor: &AgentPose, position_scale: f64) -> RelativeObservation {
    let (c, s) = (observer.gaze.x, observer.gaze.y);
    let to_frame = |v: Vec2| Vec2::new(c * v.x + s * v.y, -s * v.x + c * v.y);
    let offset = neighbor.position - observer.position;
    RelativeObservation {
        rel_gaze: to_frame(neighbor.gaze),
        rel_pos: to_frame(offset).scale(1.0 / position_scale),
    }
}

/// The `min(j, M - 1)` agents closest to `agent_id`, ties broken by id.
pub fn nearest_neighbors(frame: &Frame, agent_id: AgentId, j: usize) -> Result<Vec<AgentId>> {
    let me = frame.agent(agent_id).ok_or(Error::NotFound(agent_id as i64))?;
    let mut others: Vec<(f64, AgentId)> = frame
        .agents
        .iter()
        .filter(|a| a.id != agent_id)
        .map(|a| (a.pose.position.dist_sq(me.pose.position), a.id))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(others.into_iter().take(j).map(|(_, id)| id).collect())
}

/// Per-neighbor histories over the last `horizon` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborHistory {
    pub id: AgentId,
    /// 2 x H relative gaze directions.
    pub gaze: Array2<f64>,
    /// 2 x H relative scaled positions.
    pub position: Array2<f64>,
    /// |U| x H one-hot actions.
    pub actions: Array2<f64>,
}

/// Network input for one agent at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub neighbors: Vec<NeighborHistory>,
    /// |U| x H one-hot own actions.
    pub self_actions: Array2<f64>,
    pub horizon: usize,
    pub position_scale: f64,
}

impl AgentState {
    pub fn neighbor_ids(&self) -> Vec<AgentId> {
        self.neighbors.iter().map(|n| n.id).collect()
    }

    pub fn action_count(&self) -> usize {
        self.self_actions.nrows()
    }

    /// Relative observation at the most recent column for neighbor `i`.
    pub fn current_observation(&self, i: usize) -> RelativeObservation {
        let n = &self.neighbors[i];
        let k = self.horizon - 1;
        RelativeObservation {
            rel_gaze: Vec2::new(n.gaze[[0, k]], n.gaze[[1, k]]),
            rel_pos: Vec2::new(n.position[[0, k]], n.position[[1, k]]),
        }
    }
}

fn one_hot_column(m: &mut Array2<f64>, col: usize, action: ConversationalAction) {
    m[[action.index(), col]] = 1.0;
}

/// Builds the state of `agent_id` at 1-based step `t` over a window of `horizon` frames.
pub fn build_state(
    demo: &Demonstration,
    agent_id: AgentId,
    t: usize,
    horizon: usize,
    neighbor_ids: &[AgentId],
    position_scale: f64,
) -> Result<AgentState> {
    if horizon == 0 || t < horizon || t > demo.len() {
        return Err(Error::OutOfWindow { t, horizon });
    }
    if !(position_scale > 0.0 && position_scale.is_finite()) {
        return Err(Error::InvalidInput(format!("position_scale must be positive, got {position_scale}")));
    }
    let me = demo.agent_index(agent_id).ok_or(Error::NotFound(agent_id as i64))?;
    let mut neighbor_idx = Vec::with_capacity(neighbor_ids.len());
    for &id in neighbor_ids {
        if id == agent_id {
            return Err(Error::InvalidInput(format!("agent {id} listed as its own neighbor")));
        }
        neighbor_idx.push(demo.agent_index(id).ok_or(Error::NotFound(id as i64))?);
    }
    Ok(build_state_indexed(demo, me, t, horizon, &neighbor_idx, position_scale))
}

/// `build_state` on pre-resolved layout indices; inputs must already be valid.
pub(crate) fn build_state_indexed(
    demo: &Demonstration,
    me: usize,
    t: usize,
    horizon: usize,
    neighbors: &[usize],
    position_scale: f64,
) -> AgentState {
    let u = demo.scenario.action_count();
    let mut self_actions = Array2::zeros((u, horizon));
    let mut out: Vec<NeighborHistory> = neighbors
        .iter()
        .map(|&n| NeighborHistory {
            id: demo.layout.agents[n].id,
            gaze: Array2::zeros((2, horizon)),
            position: Array2::zeros((2, horizon)),
            actions: Array2::zeros((u, horizon)),
        })
        .collect();
    for col in 0..horizon {
        let frame = &demo.frames[t - horizon + col];
        let observer = &frame.agents[me];
        one_hot_column(&mut self_actions, col, observer.action);
        for (hist, &n) in out.iter_mut().zip(neighbors) {
            let other = &frame.agents[n];
            let rel = relative_frame_unchecked(&observer.pose, &other.pose, position_scale);
            hist.gaze[[0, col]] = rel.rel_gaze.x;
            hist.gaze[[1, col]] = rel.rel_gaze.y;
            hist.position[[0, col]] = rel.rel_pos.x;
            hist.position[[1, col]] = rel.rel_pos.y;
            one_hot_column(&mut hist.actions, col, other.action);
        }
    }
    AgentState {
        neighbors: out,
        self_actions,
        horizon,
        position_scale,
    }
}

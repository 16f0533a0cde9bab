//! Replay checkers for generated episodes.

use std::collections::BTreeMap;
use std::fmt;

use crate::scene::{AgentId, ConversationalAction, Demonstration, Frame, GroupId, Scenario};

use ConversationalAction::*;

/// Angular tolerance (radians) for "looks at the speaker".
pub const GAZE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub t: usize,
    pub agent: Option<AgentId>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.agent {
            Some(a) => write!(f, "t={} agent {}: {}", self.t, a, self.message),
            None => write!(f, "t={}: {}", self.t, self.message),
        }
    }
}

impl std::error::Error for Violation {}

/// Whether `from -> to` between consecutive frames is an edge of the rule table.
/// Staying in the same action is always legal.
pub fn is_legal_transition(scenario: Scenario, from: ConversationalAction, to: ConversationalAction) -> bool {
    if !scenario.allows(from) || !scenario.allows(to) {
        return false;
    }
    if from == to {
        return true;
    }
    let base = matches!(
        (from, to),
        (Speaking, Listening | StronglyAddressing | WeaklyAddressing)
            | (Listening, Distracted | Responding)
            | (Distracted, Listening)
            | (StronglyAddressing, Speaking | Listening)
            | (WeaklyAddressing, Speaking)
            | (Responding, Speaking)
    );
    if base || scenario == Scenario::Static {
        return base;
    }
    // movement, preemption by an arriving agent, and dissolution of a group
    // left with a single member
    matches!(
        (from, to),
        (Distracted, Moving)
            | (Moving, Responding | Listening | Distracted)
            | (Speaking | StronglyAddressing | WeaklyAddressing | Responding, Listening)
            | (Speaking | StronglyAddressing | WeaklyAddressing | Responding | Listening, Distracted)
    )
}

fn groups(frame: &Frame) -> BTreeMap<GroupId, Vec<usize>> {
    let mut out: BTreeMap<GroupId, Vec<usize>> = BTreeMap::new();
    for (i, a) in frame.agents.iter().enumerate() {
        out.entry(a.group).or_default().push(i);
    }
    out
}

/// At most one floor holder per group; exactly one in every multi-member group.
pub fn check_speaker_roles(frame: &Frame) -> Result<(), Violation> {
    for (g, members) in groups(frame) {
        let holders = members
            .iter()
            .filter(|&&i| frame.agents[i].action.is_speaker_role())
            .count();
        let expected = if members.len() >= 2 { 1 } else { 0 };
        if holders != expected {
            return Err(Violation {
                t: frame.t,
                agent: None,
                message: format!(
                    "group {g} with {} members has {holders} speaker-role holders",
                    members.len()
                ),
            });
        }
    }
    Ok(())
}

fn check_listener_gaze(frame: &Frame) -> Result<(), Violation> {
    for a in &frame.agents {
        if a.action != Listening {
            continue;
        }
        let holder = frame
            .agents
            .iter()
            .find(|b| b.group == a.group && b.action != Moving && b.action.is_speaker_role());
        let Some(holder) = holder else { continue };
        let Some(dir) = (holder.pose.position - a.pose.position).normalized() else {
            continue;
        };
        let g = a.pose.gaze;
        let angle = (g.x * dir.y - g.y * dir.x).atan2(g.dot(dir)).abs();
        if angle > GAZE_TOL {
            return Err(Violation {
                t: frame.t,
                agent: Some(a.id),
                message: format!("listener gaze is {angle:.3e} rad off speaker {}", holder.id),
            });
        }
    }
    Ok(())
}

/// Every consecutive action pair is an edge of the rule table, and group ids
/// change only when a Move completes.
pub fn check_transitions(demo: &Demonstration) -> Result<(), Violation> {
    for w in demo.frames.windows(2) {
        for (a, b) in w[0].agents.iter().zip(&w[1].agents) {
            if !is_legal_transition(demo.scenario, a.action, b.action) {
                return Err(Violation {
                    t: w[1].t,
                    agent: Some(a.id),
                    message: format!("illegal transition {} -> {}", a.action, b.action),
                });
            }
            if a.group != b.group && a.action != Moving {
                return Err(Violation {
                    t: w[1].t,
                    agent: Some(a.id),
                    message: format!("group changed from {} to {} without moving", a.group, b.group),
                });
            }
        }
    }
    Ok(())
}

/// Full replay check: structure, transitions, speaker roles and listener gaze.
pub fn check_demonstration(demo: &Demonstration) -> Result<(), Violation> {
    demo.validate().map_err(|e| Violation {
        t: 0,
        agent: None,
        message: e.to_string(),
    })?;
    check_transitions(demo)?;
    for frame in &demo.frames {
        check_speaker_roles(frame)?;
        check_listener_gaze(frame)?;
        if demo.scenario == Scenario::Static && frame.agents.iter().any(|a| a.action == Moving) {
            return Err(Violation {
                t: frame.t,
                agent: None,
                message: "Moving in a static episode".into(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_table_excludes_movement() {
        assert!(is_legal_transition(Scenario::Static, Speaking, WeaklyAddressing));
        assert!(is_legal_transition(Scenario::Static, Listening, Responding));
        assert!(!is_legal_transition(Scenario::Static, Distracted, Moving));
        assert!(!is_legal_transition(Scenario::Static, Distracted, Speaking));
        assert!(!is_legal_transition(Scenario::Static, Responding, Listening));
        assert!(is_legal_transition(Scenario::Dynamic, Responding, Listening));
        assert!(is_legal_transition(Scenario::Dynamic, Moving, Responding));
        assert!(!is_legal_transition(Scenario::Dynamic, Listening, Moving));
        assert!(!is_legal_transition(Scenario::Dynamic, Distracted, Responding));
    }
}

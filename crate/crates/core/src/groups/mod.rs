//! Unsupervised conversational group identification: gate-based pairwise
//! affinities, DBSCAN over a precomputed distance matrix, exact-match group
//! scoring and a pose-only baseline.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gate, MgpiNetwork};
use crate::scene::{relative_frame, AgentId, AgentPose, Layout, Vec2};


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    /// Neighborhood radius; points with `D <= eps` are neighbors.
    pub eps: f64,
    /// Neighborhood size (the point itself included) that makes a core point.
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams { eps: 0.5, min_pts: 2 }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::Config(format!("eps must lie in (0, 1], got {}", self.eps)));
        }
        if self.min_pts == 0 {
            return Err(Error::Config("min_pts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Symmetric pairwise distances in `[0, 1]` with a zero diagonal, indexed by
/// position in `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    ids: Vec<AgentId>,
    distances: Array2<f64>,
}

impl AffinityMatrix {
    pub fn new(ids: Vec<AgentId>, distances: Array2<f64>) -> Result<Self> {
        let m = ids.len();
        if distances.dim() != (m, m) {
            return Err(Error::Shape(format!(
                "{m} agents need a {m}x{m} matrix, got {:?}",
                distances.dim()
            )));
        }
        if ids.iter().collect::<BTreeSet<_>>().len() != m {
            return Err(Error::InvalidInput("affinity ids are not unique".into()));
        }
        for i in 0..m {
            if distances[[i, i]] != 0.0 {
                return Err(Error::InvalidInput(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..m {
                let d = distances[[i, j]];
                if !(0.0..=1.0).contains(&d) {
                    return Err(Error::InvalidInput(format!("distance ({i}, {j}) = {d} is outside [0, 1]")));
                }
                if d != distances[[j, i]] {
                    return Err(Error::InvalidInput(format!("distance matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(AffinityMatrix { ids, distances })
    }

    pub fn ids(&self) -> &[AgentId] {
        &self.ids
    }

    pub fn distances(&self) -> &Array2<f64> {
        &self.distances
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Disjoint, non-empty agent-id sets. The canonical form sorts each group and
/// orders groups by their smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub groups: Vec<Vec<AgentId>>,
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<AgentId>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidInput("partition contains an empty group".into()));
            }
            for &id in g {
                if !seen.insert(id) {
                    return Err(Error::InvalidInput(format!("agent {id} appears in two groups")));
                }
            }
        }
        let mut groups: Vec<Vec<AgentId>> = groups
            .into_iter()
            .map(|mut g| {
                g.sort_unstable();
                g
            })
            .collect();
        groups.sort();
        Ok(GroupPartition { groups })
    }

    /// Ground-truth partition from the layout's group labels.
    pub fn from_layout(layout: &Layout) -> Self {
        GroupPartition { groups: layout.groups() }
    }

    /// All agent ids, ascending.
    pub fn universe(&self) -> Vec<AgentId> {
        let mut ids: Vec<AgentId> = self.groups.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("partition serializes")
    }

    /// Parses `{"groups": [[ids]...]}` and validates disjointness.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GroupPartition = serde_json::from_str(text)?;
        GroupPartition::new(raw.groups)
    }
}

/// `D(n, j) = 1 - (K(j <- n) + K(n <- j)) / 2`, where each gate term scores one
/// agent as seen from the other's frame.
pub fn pair_distance(gate: &Gate, pose_n: &AgentPose, pose_j: &AgentPose, position_scale: f64) -> Result<f64> {
    let k_nj = gate.score(relative_frame(pose_n, pose_j, position_scale)?.features());
    let k_jn = gate.score(relative_frame(pose_j, pose_n, position_scale)?.features());
    Ok(1.0 - 0.5 * (k_nj + k_jn))
}

fn require_gate(net: &MgpiNetwork) -> Result<&Gate> {
    net.gate().ok_or_else(|| {
        Error::Config(format!(
            "variant {} has no gate; group detection needs an mgpi model",
            net.config.variant
        ))
    })
}

/// Gate distances between every pair of agents in `layout` order.
pub fn affinity(net: &MgpiNetwork, layout: &Layout, position_scale: f64) -> Result<AffinityMatrix> {
    let gate = require_gate(net)?;
    layout.validate()?;
    let m = layout.len();
    let mut d = Array2::zeros((m, m));
    for a in 0..m {
        for b in a + 1..m {
            let v = pair_distance(gate, &layout.agents[a].pose, &layout.agents[b].pose, position_scale)?;
            d[[a, b]] = v;
            d[[b, a]] = v;
        }
    }
    AffinityMatrix::new(layout.ids(), d)
}

/// DBSCAN over the precomputed distances. Points are visited by ascending id;
/// noise points end up as singleton groups.
pub fn dbscan(aff: &AffinityMatrix, params: &DbscanParams) -> Result<GroupPartition> {
    params.validate()?;
    let m = aff.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| aff.ids[i]);
    let neighborhood = |p: usize| -> Vec<usize> {
        order
            .iter()
            .copied()
            .filter(|&q| aff.distances[[p, q]] <= params.eps)
            .collect()
    };
    let mut label: Vec<Option<usize>> = vec![None; m];
    let mut clusters = 0;
    for &p in &order {
        if label[p].is_some() {
            continue;
        }
        let seeds = neighborhood(p);
        if seeds.len() < params.min_pts {
            continue;
        }
        let c = clusters;
        clusters += 1;
        label[p] = Some(c);
        let mut queue = std::collections::VecDeque::from(seeds);
        while let Some(q) = queue.pop_front() {
            if label[q].is_some() {
                continue;
            }
            label[q] = Some(c);
            let nq = neighborhood(q);
            if nq.len() >= params.min_pts {
                queue.extend(nq.into_iter().filter(|&r| label[r].is_none()));
            }
        }
    }
    let mut groups: Vec<Vec<AgentId>> = vec![Vec::new(); clusters];
    for &p in &order {
        match label[p] {
            Some(c) => groups[c].push(aff.ids[p]),
            None => groups.push(vec![aff.ids[p]]),
        }
    }
    GroupPartition::new(groups)
}

/// Affinity from the trained gate followed by DBSCAN.
pub fn detect_groups(net: &MgpiNetwork, layout: &Layout, params: &DbscanParams, position_scale: f64) -> Result<GroupPartition> {
    dbscan(&affinity(net, layout, position_scale)?, params)
}

/// Euclidean distances scaled by the largest pairwise distance.
pub fn pose_only_affinity(layout: &Layout) -> Result<AffinityMatrix> {
    layout.validate()?;
    let m = layout.len();
    let mut d = Array2::zeros((m, m));
    for a in 0..m {
        for b in a + 1..m {
            let v = layout.agents[a].pose.position.dist(layout.agents[b].pose.position);
            d[[a, b]] = v;
            d[[b, a]] = v;
        }
    }
    let max = d.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        d.mapv_inplace(|v| v / max);
    }
    AffinityMatrix::new(layout.ids(), d)
}

/// DBSCAN baseline on pose-only distances.
pub fn pose_only_groups(layout: &Layout, params: &DbscanParams) -> Result<GroupPartition> {
    dbscan(&pose_only_affinity(layout)?, params)
}

/// Exact-match detection counts and the derived scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    /// Truth groups matched exactly by a predicted cluster.
    pub detected: usize,
    /// Predicted clusters considered.
    pub predicted: usize,
    /// Truth groups considered.
    pub truth: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl GroupScore {
    /// Scores from counts; F1 is computed as `2 detected / (predicted + truth)`,
    /// which equals the harmonic mean of precision and recall. With nothing to
    /// find and nothing predicted every score is 1; otherwise an empty
    /// denominator yields 0.
    pub fn from_counts(detected: usize, predicted: usize, truth: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let (precision, recall, f1) = if predicted == 0 && truth == 0 {
            (1.0, 1.0, 1.0)
        } else {
            (
                ratio(detected, predicted),
                ratio(detected, truth),
                ratio(2 * detected, predicted + truth),
            )
        };
        GroupScore {
            detected,
            predicted,
            truth,
            precision,
            recall,
            f1,
        }
    }

    /// Micro-average: counts summed over several scenes, then rescored.
    pub fn pooled(scores: &[GroupScore]) -> Self {
        let sum = |f: fn(&GroupScore) -> usize| scores.iter().map(f).sum();
        GroupScore::from_counts(sum(|s| s.detected), sum(|s| s.predicted), sum(|s| s.truth))
    }
}

/// Exact-set-match precision, recall and F1. Singleton groups are ignored on
/// both sides unless `include_singletons`.
pub fn score_groups(pred: &GroupPartition, truth: &GroupPartition, include_singletons: bool) -> Result<GroupScore> {
    let (pu, tu) = (pred.universe(), truth.universe());
    if pu != tu {
        return Err(Error::Universe(format!(
            "prediction covers {} agents, truth covers {}; the id sets differ",
            pu.len(),
            tu.len()
        )));
    }
    let considered = |p: &GroupPartition| -> BTreeSet<BTreeSet<AgentId>> {
        p.groups
            .iter()
            .filter(|g| include_singletons || g.len() > 1)
            .map(|g| g.iter().copied().collect())
            .collect()
    };
    let (ps, ts) = (considered(pred), considered(truth));
    let detected = ts.intersection(&ps).count();
    Ok(GroupScore::from_counts(detected, ps.len(), ts.len()))
}

/// Gate values for a neighbor placed on a lattice around the observer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub grid_n: usize,
    /// Half-width of the lattice in network (scaled) position units.
    pub extent: f64,
    /// Row-major `grid_n * grid_n` cells.
    pub cells: Vec<AttentionCell>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionCell {
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
    pub gate: f64,
}

impl AttentionMap {
    /// `row,col,x,y,gate` CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col,x,y,gate\n");
        for c in &self.cells {
            let _ = writeln!(s, "{},{},{},{},{}", c.row, c.col, c.x, c.y, c.gate);
        }
        s
    }

    /// Mean gate over cells with `x < 0` and over cells with `x > 0`.
    pub fn half_plane_means(&self) -> (f64, f64) {
        let mean = |keep: &dyn Fn(f64) -> bool| {
            let v: Vec<f64> = self.cells.iter().filter(|c| keep(c.x)).map(|c| c.gate).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        (mean(&|x| x < 0.0), mean(&|x| x > 0.0))
    }
}

/// Evaluates the gate for a neighbor at each cell of a `grid_n x grid_n`
/// lattice spanning `[-extent, extent]^2` around an observer at the origin.
/// Coordinates are world-aligned and in network units, so the neighbor's raw
/// position is the cell coordinate times `position_scale`. Row `r` runs along
/// y (top row = +extent), column `c` along x.
pub fn attention_map(
    net: &MgpiNetwork,
    observer_gaze: Vec2,
    neighbor_gaze: Vec2,
    grid_n: usize,
    extent: f64,
    position_scale: f64,
) -> Result<AttentionMap> {
    if grid_n < 2 {
        return Err(Error::Config(format!("grid must have at least 2 cells per side, got {grid_n}")));
    }
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(Error::Config(format!("extent must be positive, got {extent}")));
    }
    let gate = require_gate(net)?;
    let observer = AgentPose::new(Vec2::ZERO, observer_gaze)?;
    let step = 2.0 * extent / (grid_n - 1) as f64;
    let mut cells = Vec::with_capacity(grid_n * grid_n);
    for row in 0..grid_n {
        let y = extent - row as f64 * step;
        for col in 0..grid_n {
            let x = -extent + col as f64 * step;
            let neighbor = AgentPose::new(Vec2::new(x, y).scale(position_scale), neighbor_gaze)?;
            let g = gate.score(relative_frame(&observer, &neighbor, position_scale)?.features());
            cells.push(AttentionCell { row, col, x, y, gate: g });
        }
    }
    Ok(AttentionMap { grid_n, extent, cells })
}

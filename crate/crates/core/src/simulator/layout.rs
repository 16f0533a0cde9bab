use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{AgentPose, GroupId, Layout, LayoutAgent, Vec2};

const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutGenParams {
    pub n_groups_min: usize,
    pub n_groups_max: usize,
    pub group_size_min: usize,
    pub group_size_max: usize,
    pub group_radius: f64,
    pub center_spacing: f64,
    pub jitter: f64,
}

impl Default for LayoutGenParams {
    fn default() -> Self {
        LayoutGenParams {
            n_groups_min: 2,
            n_groups_max: 4,
            group_size_min: 1,
            group_size_max: 4,
            group_radius: 50.0,
            center_spacing: 250.0,
            jitter: 5.0,
        }
    }
}

impl LayoutGenParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_groups_min == 0 || self.n_groups_min > self.n_groups_max {
            return Err(Error::Config(format!(
                "n_groups range [{}, {}] is empty",
                self.n_groups_min, self.n_groups_max
            )));
        }
        if self.group_size_min == 0 || self.group_size_min > self.group_size_max {
            return Err(Error::Config(format!(
                "group_size range [{}, {}] is empty",
                self.group_size_min, self.group_size_max
            )));
        }
        if !(self.group_radius > 0.0) || !(self.jitter >= 0.0) {
            return Err(Error::Config("group_radius must be > 0 and jitter >= 0".into()));
        }
        if !(self.center_spacing > 2.0 * (self.group_radius + self.jitter)) {
            return Err(Error::Config(format!(
                "center_spacing {} must exceed 2 * (group_radius + jitter) = {}",
                self.center_spacing,
                2.0 * (self.group_radius + self.jitter)
            )));
        }
        Ok(())
    }
}

fn jitter_offset<R: Rng>(rng: &mut R, jitter: f64) -> Vec2 {
    if jitter == 0.0 {
        Vec2::ZERO
    } else {
        Vec2::new(rng.random_range(-jitter..=jitter), rng.random_range(-jitter..=jitter))
    }
}

/// Places groups on a jittered square grid, members evenly spaced on a circle
/// around each center and looking at it.
pub fn generate_layout<R: Rng>(params: &LayoutGenParams, rng: &mut R) -> Result<Layout> {
    params.validate()?;
    for _ in 0..MAX_ATTEMPTS {
        let layout = sample_layout(params, rng);
        if well_separated(&layout) {
            return Ok(layout);
        }
    }
    Err(Error::Generation(format!(
        "no well-separated layout after {MAX_ATTEMPTS} attempts"
    )))
}

fn sample_layout<R: Rng>(params: &LayoutGenParams, rng: &mut R) -> Layout {
    let n_groups = rng.random_range(params.n_groups_min..=params.n_groups_max);
    let cols = (n_groups as f64).sqrt().ceil() as usize;
    let mut agents = Vec::new();
    for g in 0..n_groups {
        let (row, col) = (g / cols, g % cols);
        let center = Vec2::new(col as f64, row as f64).scale(params.center_spacing)
            + jitter_offset(rng, params.jitter);
        let size = rng.random_range(params.group_size_min..=params.group_size_max);
        let phase = rng.random_range(0.0..TAU);
        for k in 0..size {
            let pose = if size == 1 {
                AgentPose {
                    position: center,
                    gaze: Vec2::from_angle(rng.random_range(0.0..TAU)),
                }
            } else {
                let angle = phase + TAU * k as f64 / size as f64;
                let position = center + Vec2::from_angle(angle).scale(params.group_radius) + jitter_offset(rng, params.jitter);
                AgentPose::looking_at(position, center, Vec2::from_angle(angle + std::f64::consts::PI))
            };
            agents.push(LayoutAgent {
                id: agents.len() as u32,
                pose,
                group: g as GroupId,
            });
        }
    }
    Layout { agents }
}

/// Every cross-group pair is farther apart than the widest group.
fn well_separated(layout: &Layout) -> bool {
    if layout.agents.len() < 2 {
        return false;
    }
    let mut intra_max: f64 = 0.0;
    let mut inter_min = f64::INFINITY;
    for (i, a) in layout.agents.iter().enumerate() {
        for b in &layout.agents[i + 1..] {
            let d = a.pose.position.dist(b.pose.position);
            if a.group == b.group {
                intra_max = intra_max.max(d);
            } else {
                inter_min = inter_min.min(d);
            }
        }
    }
    inter_min > intra_max
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixed(n_groups: usize, size: usize, radius: f64, spacing: f64, jitter: f64) -> LayoutGenParams {
        LayoutGenParams {
            n_groups_min: n_groups,
            n_groups_max: n_groups,
            group_size_min: size,
            group_size_max: size,
            group_radius: radius,
            center_spacing: spacing,
            jitter,
        }
    }

    #[test]
    fn pair_faces_each_other() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = generate_layout(&fixed(1, 2, 1.0, 10.0, 0.0), &mut rng).unwrap();
        let (a, b) = (l.agents[0].pose, l.agents[1].pose);
        assert!((a.position.dist(b.position) - 2.0).abs() < 1e-12);
        assert!((a.gaze.dot(b.gaze) + 1.0).abs() < 1e-12);
        let toward_b = (b.position - a.position).normalized().unwrap();
        assert!((a.gaze.dot(toward_b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn groups_are_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = generate_layout(&fixed(2, 3, 1.0, 10.0, 0.2), &mut rng).unwrap();
        assert_eq!(l.len(), 6);
        let mut intra: f64 = 0.0;
        let mut inter = f64::INFINITY;
        for a in &l.agents {
            for b in &l.agents {
                if a.id == b.id {
                    continue;
                }
                let d = a.pose.position.dist(b.pose.position);
                if a.group == b.group {
                    intra = intra.max(d);
                } else {
                    inter = inter.min(d);
                }
            }
        }
        assert!(inter > intra, "inter {inter} intra {intra}");
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let p = LayoutGenParams::default();
        let a = generate_layout(&p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = generate_layout(&p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn rejects_overlapping_spacing() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            generate_layout(&fixed(2, 3, 5.0, 10.0, 0.0), &mut rng),
            Err(Error::Config(_))
        ));
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::DEFAULT_POSITION_SCALE;

/// Network family: the gated model and the four ablation baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Gated neighbor messages pooled and joined with the self encoding.
    Mgpi,
    /// Gated neighbor messages only.
    Nso,
    /// Self encoding only.
    Sso,
    /// Neighbor messages with a constant gate of one.
    Eqpool,
    /// Ungated messages averaged per cell of an observer-centered grid.
    Socpool,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Mgpi, Variant::Nso, Variant::Sso, Variant::Eqpool, Variant::Socpool];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mgpi => "mgpi",
            Variant::Nso => "nso",
            Variant::Sso => "sso",
            Variant::Eqpool => "eqpool",
            Variant::Socpool => "socpool",
        }
    }

    pub fn uses_neighbors(self) -> bool {
        self != Variant::Sso
    }

    pub fn uses_self(self) -> bool {
        self != Variant::Nso
    }

    pub fn uses_gate(self) -> bool {
        matches!(self, Variant::Mgpi | Variant::Nso)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgpiConfig {
    pub variant: Variant,
    pub horizon: usize,
    pub action_count: usize,
    pub encoder_hidden: usize,
    pub gate_hidden: usize,
    pub policy_hidden: usize,
    pub position_scale: f64,
    pub socpool_grid: usize,
    /// Side of one pooling cell in raw scene units.
    pub socpool_cell: f64,
}

impl MgpiConfig {
    pub fn new(variant: Variant, action_count: usize) -> Self {
        MgpiConfig {
            variant,
            horizon: 15,
            action_count,
            encoder_hidden: 64,
            gate_hidden: 64,
            policy_hidden: 64,
            position_scale: DEFAULT_POSITION_SCALE,
            socpool_grid: 4,
            socpool_cell: 50.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.encoder_hidden == 0 || self.gate_hidden == 0 || self.policy_hidden == 0 {
            return Err(Error::Config("hidden sizes must be at least 1".into()));
        }
        if !(6..=7).contains(&self.action_count) {
            return Err(Error::Config(format!("action count must be 6 or 7, got {}", self.action_count)));
        }
        if !(self.position_scale > 0.0 && self.position_scale.is_finite()) {
            return Err(Error::Config("position_scale must be positive".into()));
        }
        if self.socpool_grid == 0 || !(self.socpool_cell > 0.0 && self.socpool_cell.is_finite()) {
            return Err(Error::Config("socpool grid and cell size must be positive".into()));
        }
        Ok(())
    }

    /// Width of one neighbor message `[N, C]`.
    pub fn message_width(&self) -> usize {
        2 * self.encoder_hidden
    }

    pub fn pooled_width(&self) -> usize {
        match self.variant {
            Variant::Mgpi | Variant::Nso | Variant::Eqpool => self.message_width(),
            Variant::Sso => 0,
            Variant::Socpool => self.message_width() * self.socpool_grid * self.socpool_grid,
        }
    }

    pub fn policy_input_width(&self) -> usize {
        self.pooled_width() + if self.variant.uses_self() { self.encoder_hidden } else { 0 }
    }

    /// Grid cell (row-major index) of a neighbor at raw offset `(x, y)` in the
    /// observer frame. Rows run along the facing axis, columns along the
    /// observer's left; `None` when outside the grid.
    pub fn socpool_cell_of(&self, x: f64, y: f64) -> Option<usize> {
        let n = self.socpool_grid;
        let half = 0.5 * n as f64 * self.socpool_cell;
        let row = ((x + half) / self.socpool_cell).floor();
        let col = ((y + half) / self.socpool_cell).floor();
        let inside = |v: f64| v >= 0.0 && v < n as f64;
        (inside(row) && inside(col)).then(|| row as usize * n + col as usize)
    }
}

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AgentId, AgentPose, AgentRecord, ConversationalAction, Demonstration, Frame, GroupId, Layout, LayoutAgent,
    Scenario, Vec2, UNIT_TOL,
};
use crate::error::{Error, Result};

pub const DEMO_FORMAT_VERSION: u32 = 1;

const LAYOUT_HEADER: [&str; 6] = ["agent_id", "x", "y", "gaze_x", "gaze_y", "group_id"];

/// Reads a layout CSV file (`agent_id,x,y,gaze_x,gaze_y,group_id`).
pub fn load_layout(path: impl AsRef<Path>) -> Result<Layout> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_layout_csv(file, path)
}

/// Parses layout CSV from any reader; `origin` names the source in errors.
pub fn read_layout_csv<R: Read>(reader: R, origin: &Path) -> Result<Layout> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::parse(origin, 1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != LAYOUT_HEADER {
        return Err(Error::parse(
            origin,
            1,
            format!("expected header `{}`", LAYOUT_HEADER.join(",")),
        ));
    }
    let mut agents: Vec<LayoutAgent> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        if record.len() != LAYOUT_HEADER.len() {
            return Err(Error::parse(origin, line, format!("expected 6 fields, got {}", record.len())));
        }
        let real = |k: usize| -> Result<f64> {
            let v: f64 = record[k]
                .parse()
                .map_err(|_| Error::parse(origin, line, format!("bad {} `{}`", LAYOUT_HEADER[k], &record[k])))?;
            if !v.is_finite() {
                return Err(Error::parse(origin, line, format!("non-finite {}", LAYOUT_HEADER[k])));
            }
            Ok(v)
        };
        let int = |k: usize| -> Result<u32> {
            record[k]
                .parse()
                .map_err(|_| Error::parse(origin, line, format!("bad {} `{}`", LAYOUT_HEADER[k], &record[k])))
        };
        let id = int(0)?;
        let position = Vec2::new(real(1)?, real(2)?);
        let gaze = unit_gaze(Vec2::new(real(3)?, real(4)?))
            .ok_or_else(|| Error::parse(origin, line, "zero gaze vector"))?;
        let group = int(5)?;
        if agents.iter().any(|a| a.id == id) {
            return Err(Error::parse(origin, line, format!("duplicate agent id {id}")));
        }
        agents.push(LayoutAgent {
            id,
            pose: AgentPose { position, gaze },
            group,
        });
    }
    Layout::new(agents).map_err(|e| Error::parse(origin, 1, e.to_string()))
}

pub fn write_layout_csv<W: Write>(layout: &Layout, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{}", LAYOUT_HEADER.join(","))?;
    for a in &layout.agents {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            a.id, a.pose.position.x, a.pose.position.y, a.pose.gaze.x, a.pose.gaze.y, a.group
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PoseRow {
    id: AgentId,
    x: f64,
    y: f64,
    gx: f64,
    gy: f64,
    group: GroupId,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    scenario: Scenario,
    seed: u64,
    agent_ids: Vec<AgentId>,
    /// Initial layout; older files without it fall back to the first frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layout: Option<Vec<PoseRow>>,
}

#[derive(Serialize, Deserialize)]
struct AgentRow {
    id: AgentId,
    x: f64,
    y: f64,
    gx: f64,
    gy: f64,
    action: usize,
    group: GroupId,
}

#[derive(Serialize, Deserialize)]
struct FrameRow {
    t: usize,
    agents: Vec<AgentRow>,
}

pub fn write_demonstration<W: Write>(demo: &Demonstration, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let header = Header {
        format_version: DEMO_FORMAT_VERSION,
        scenario: demo.scenario,
        seed: demo.seed,
        agent_ids: demo.layout.ids(),
        layout: Some(
            demo.layout
                .agents
                .iter()
                .map(|a| PoseRow {
                    id: a.id,
                    x: a.pose.position.x,
                    y: a.pose.position.y,
                    gx: a.pose.gaze.x,
                    gy: a.pose.gaze.y,
                    group: a.group,
                })
                .collect(),
        ),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for frame in &demo.frames {
        let row = FrameRow {
            t: frame.t,
            agents: frame
                .agents
                .iter()
                .map(|a| AgentRow {
                    id: a.id,
                    x: a.pose.position.x,
                    y: a.pose.position.y,
                    gx: a.pose.gaze.x,
                    gy: a.pose.gaze.y,
                    action: a.action.index(),
                    group: a.group,
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Normalizes a stored gaze, leaving vectors already within `UNIT_TOL` of unit
/// length untouched so that write-then-read reproduces them bit for bit.
fn unit_gaze(v: Vec2) -> Option<Vec2> {
    if v.is_finite() && (v.norm() - 1.0).abs() <= UNIT_TOL {
        Some(v)
    } else {
        v.normalized()
    }
}

fn pose_from(origin: &Path, line: usize, x: f64, y: f64, gx: f64, gy: f64) -> Result<AgentPose> {
    let gaze = unit_gaze(Vec2::new(gx, gy))
        .ok_or_else(|| Error::parse(origin, line, "zero gaze vector"))?;
    AgentPose::new(Vec2::new(x, y), gaze).map_err(|e| Error::parse(origin, line, e.to_string()))
}

/// Reads a demonstration JSONL stream; `origin` names the source in errors.
pub fn read_demonstration<R: Read>(reader: R, origin: &Path) -> Result<Demonstration> {
    let mut lines = BufReader::new(reader).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "empty demonstration file"))??;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::parse(origin, 1, e.to_string()))?;
    if header.format_version != DEMO_FORMAT_VERSION {
        return Err(Error::parse(
            origin,
            1,
            format!("unsupported format_version {}", header.format_version),
        ));
    }
    let mut frames = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: FrameRow = serde_json::from_str(&line).map_err(|e| Error::parse(origin, n, e.to_string()))?;
        let mut agents = Vec::with_capacity(row.agents.len());
        for a in row.agents {
            let action = ConversationalAction::from_index(a.action)
                .ok_or_else(|| Error::parse(origin, n, format!("unknown action index {}", a.action)))?;
            agents.push(AgentRecord {
                id: a.id,
                pose: pose_from(origin, n, a.x, a.y, a.gx, a.gy)?,
                action,
                group: a.group,
            });
        }
        frames.push(Frame { t: row.t, agents });
    }
    let layout_agents = match header.layout {
        Some(rows) => rows
            .into_iter()
            .map(|r| {
                Ok(LayoutAgent {
                    id: r.id,
                    pose: pose_from(origin, 1, r.x, r.y, r.gx, r.gy)?,
                    group: r.group,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => frames
            .first()
            .ok_or_else(|| Error::parse(origin, 2, "no frames"))?
            .as_layout()
            .agents,
    };
    let layout = Layout { agents: layout_agents };
    if layout.ids() != header.agent_ids {
        return Err(Error::parse(origin, 1, "agent_ids disagree with layout"));
    }
    let demo = Demonstration {
        scenario: header.scenario,
        layout,
        frames,
        seed: header.seed,
    };
    demo.validate().map_err(|e| Error::parse(origin, 1, e.to_string()))?;
    Ok(demo)
}

use std::fmt::Write as _;

use mgpi::scene::{ConversationalAction, Frame, Scenario};

use crate::args::RenderArgs;
use crate::common::{data, load_demo, output_path, write_file, CliResult};

/// Fill color of each action; red, green and yellow follow the usual figure
/// convention for speaking, listening and distracted agents.
pub fn action_color(a: ConversationalAction) -> &'static str {
    match a {
        ConversationalAction::Speaking => "#d62728",
        ConversationalAction::Listening => "#2ca02c",
        ConversationalAction::Distracted => "#f2c80f",
        ConversationalAction::StronglyAddressing => "#ff7f0e",
        ConversationalAction::WeaklyAddressing => "#9467bd",
        ConversationalAction::Responding => "#1f77b4",
        ConversationalAction::Moving => "#7f7f7f",
    }
}

const WIDTH: f64 = 800.0;
const MARGIN: f64 = 60.0;
const LEGEND_HEIGHT: f64 = 40.0;
const AGENT_RADIUS: f64 = 9.0;
const ARROW_LENGTH: f64 = 26.0;

/// Draws agents as action-colored circles with gaze arrows, plus a legend of
/// the scenario's actions drawn with squares (so every `<circle>` is an agent).
pub fn render_svg(frame: &Frame, scenario: Scenario) -> String {
    let xs = frame.agents.iter().map(|a| a.pose.position.x);
    let ys = frame.agents.iter().map(|a| a.pose.position.y);
    let (min_x, max_x) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (min_y, max_y) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = (max_x - min_x).max(max_y - min_y).max(1e-9);
    let scale = (WIDTH - 2.0 * MARGIN) / span;
    let plot_h = (max_y - min_y) * scale + 2.0 * MARGIN;
    let height = plot_h + LEGEND_HEIGHT;
    // scene y points up, SVG y points down
    let to_px = |x: f64, y: f64| (MARGIN + (x - min_x) * scale, plot_h - MARGIN - (y - min_y) * scale);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#
    );
    let _ = writeln!(
        s,
        r##"<defs><marker id="arrow" markerWidth="8" markerHeight="8" refX="6" refY="4" orient="auto"><path d="M0,0 L8,4 L0,8 z" fill="#333"/></marker></defs>"##
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<title>t = {}</title>"#, frame.t);
    for a in &frame.agents {
        let (cx, cy) = to_px(a.pose.position.x, a.pose.position.y);
        let (tx, ty) = (cx + ARROW_LENGTH * a.pose.gaze.x, cy - ARROW_LENGTH * a.pose.gaze.y);
        let _ = writeln!(
            s,
            r##"<line x1="{cx:.2}" y1="{cy:.2}" x2="{tx:.2}" y2="{ty:.2}" stroke="#333" stroke-width="2" marker-end="url(#arrow)"/>"##
        );
        let _ = writeln!(
            s,
            r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{AGENT_RADIUS}" fill="{}" stroke="#000" stroke-width="1"><title>agent {} group {} {}</title></circle>"##,
            action_color(a.action),
            a.id,
            a.group,
            a.action
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10">{}</text>"#,
            cx + AGENT_RADIUS + 2.0,
            cy - AGENT_RADIUS - 2.0,
            a.id
        );
    }
    let _ = writeln!(s, r#"<g id="legend" font-family="sans-serif" font-size="11">"#);
    let actions = ConversationalAction::ALL.into_iter().filter(|a| scenario.allows(*a));
    for (i, a) in actions.enumerate() {
        let x = 10.0 + i as f64 * 112.0;
        let y = plot_h + 12.0;
        let _ = writeln!(
            s,
            r##"<rect x="{x:.0}" y="{y:.0}" width="12" height="12" fill="{}" stroke="#000"/><text x="{:.0}" y="{:.0}">{a}</text>"##,
            action_color(a),
            x + 16.0,
            y + 10.0
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

pub fn run(args: RenderArgs) -> CliResult {
    let demo = load_demo(&args.demo)?;
    let frame = demo.frame(args.frame).ok_or_else(|| {
        data(format!(
            "frame {} is out of range; {} has frames 1..={}",
            args.frame,
            args.demo.display(),
            demo.len()
        ))
    })?;
    let out = output_path(args.out, "frame.svg");
    write_file(&out, render_svg(frame, demo.scenario))?;
    println!("wrote {}", out.display());
    Ok(())
}

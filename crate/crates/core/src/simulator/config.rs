use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{LayoutGenParams, RuleParams};
use crate::error::{Error, Result};

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{}`", i + 1, k.trim())));
        }
    }
    Ok(out)
}

/// Simulator configuration: layout generation and interaction rules in one flat file.
///
/// Spatial rule defaults (`move_speed`, `arrive_epsilon`, `join_radius`) follow
/// the layout geometry unless set explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConfigFile {
    pub layout: LayoutGenParams,
    pub rules: RuleParams,
}

fn value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("bad value `{raw}` for `{key}`")))
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = parse_key_values(text)?;
        let mut layout = LayoutGenParams::default();
        let layout_keys = [
            "n_groups_min",
            "n_groups_max",
            "group_size_min",
            "group_size_max",
            "group_radius",
            "center_spacing",
            "jitter",
        ];
        for key in layout_keys {
            if let Some(raw) = kv.remove(key) {
                match key {
                    "n_groups_min" => layout.n_groups_min = value(key, &raw)?,
                    "n_groups_max" => layout.n_groups_max = value(key, &raw)?,
                    "group_size_min" => layout.group_size_min = value(key, &raw)?,
                    "group_size_max" => layout.group_size_max = value(key, &raw)?,
                    "group_radius" => layout.group_radius = value(key, &raw)?,
                    "center_spacing" => layout.center_spacing = value(key, &raw)?,
                    _ => layout.jitter = value(key, &raw)?,
                }
            }
        }
        let mut rules = RuleParams::for_layout(&layout);
        for (key, raw) in kv {
            let r = &mut rules;
            match key.as_str() {
                "p_distract" => r.p_distract = value(&key, &raw)?,
                "distract_trigger_steps" => r.distract_trigger_steps = value(&key, &raw)?,
                "p_strong_address" => r.p_strong_address = value(&key, &raw)?,
                "p_return_addressed" => r.p_return_addressed = value(&key, &raw)?,
                "p_return_spontaneous" => r.p_return_spontaneous = value(&key, &raw)?,
                "speak_duration_min" => r.speak_duration_min = value(&key, &raw)?,
                "speak_duration_max" => r.speak_duration_max = value(&key, &raw)?,
                "p_weak_address" => r.p_weak_address = value(&key, &raw)?,
                "weak_address_duration_min" => r.weak_address_duration_min = value(&key, &raw)?,
                "weak_address_duration_max" => r.weak_address_duration_max = value(&key, &raw)?,
                "respond_duration" => r.respond_duration = value(&key, &raw)?,
                "p_move" => r.p_move = value(&key, &raw)?,
                "move_speed" => r.move_speed = value(&key, &raw)?,
                "arrive_epsilon" => r.arrive_epsilon = value(&key, &raw)?,
                "join_radius" => r.join_radius = value(&key, &raw)?,
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        layout.validate()?;
        rules.validate()?;
        Ok(ConfigFile { layout, rules })
    }

    pub fn to_text(&self) -> String {
        let (l, r) = (&self.layout, &self.rules);
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("n_groups_min", l.n_groups_min.to_string());
        kv("n_groups_max", l.n_groups_max.to_string());
        kv("group_size_min", l.group_size_min.to_string());
        kv("group_size_max", l.group_size_max.to_string());
        kv("group_radius", l.group_radius.to_string());
        kv("center_spacing", l.center_spacing.to_string());
        kv("jitter", l.jitter.to_string());
        kv("p_distract", r.p_distract.to_string());
        kv("distract_trigger_steps", r.distract_trigger_steps.to_string());
        kv("p_strong_address", r.p_strong_address.to_string());
        kv("p_return_addressed", r.p_return_addressed.to_string());
        kv("p_return_spontaneous", r.p_return_spontaneous.to_string());
        kv("speak_duration_min", r.speak_duration_min.to_string());
        kv("speak_duration_max", r.speak_duration_max.to_string());
        kv("p_weak_address", r.p_weak_address.to_string());
        kv("weak_address_duration_min", r.weak_address_duration_min.to_string());
        kv("weak_address_duration_max", r.weak_address_duration_max.to_string());
        kv("respond_duration", r.respond_duration.to_string());
        kv("p_move", r.p_move.to_string());
        kv("move_speed", r.move_speed.to_string());
        kv("arrive_epsilon", r.arrive_epsilon.to_string());
        kv("join_radius", r.join_radius.to_string());
        s
    }
}

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use mgpi::scene::{load_layout, write_demonstration, write_layout_csv, Demonstration, Layout, Scenario};
use mgpi::simulator::{generate_layout, parse_key_values, rollout, ConfigFile};

use crate::args::{LayoutFlags, RuleFlags, SimulateArgs};
use crate::common::{data, default_out_dir, list_files, read_file, usage, write_file, CliResult};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
struct Manifest {
    format_version: u32,
    scenario: Scenario,
    steps: usize,
    seed: u64,
    episodes: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    demo: String,
    layout: String,
    /// Source file name when layouts were loaded rather than generated.
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    seed: u64,
}

fn push<T: ToString>(kv: &mut BTreeMap<String, String>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        kv.insert(key.to_string(), v.to_string());
    }
}

/// Config file overlaid with explicit flags, then parsed so that geometry
/// dependent rule defaults are derived once.
fn resolve_config(args: &SimulateArgs) -> CliResult<ConfigFile> {
    let mut kv = match &args.config {
        Some(path) => parse_key_values(&read_file(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?,
        None => BTreeMap::new(),
    };
    let LayoutFlags {
        n_groups_min,
        n_groups_max,
        group_size_min,
        group_size_max,
        group_radius,
        center_spacing,
        jitter,
    } = &args.layout;
    push(&mut kv, "n_groups_min", *n_groups_min);
    push(&mut kv, "n_groups_max", *n_groups_max);
    push(&mut kv, "group_size_min", *group_size_min);
    push(&mut kv, "group_size_max", *group_size_max);
    push(&mut kv, "group_radius", *group_radius);
    push(&mut kv, "center_spacing", *center_spacing);
    push(&mut kv, "jitter", *jitter);
    let r: &RuleFlags = &args.rules;
    push(&mut kv, "p_distract", r.p_distract);
    push(&mut kv, "distract_trigger_steps", r.distract_trigger_steps);
    push(&mut kv, "p_strong_address", r.p_strong_address);
    push(&mut kv, "p_return_addressed", r.p_return_addressed);
    push(&mut kv, "p_return_spontaneous", r.p_return_spontaneous);
    push(&mut kv, "speak_duration_min", r.speak_duration_min);
    push(&mut kv, "speak_duration_max", r.speak_duration_max);
    push(&mut kv, "p_weak_address", r.p_weak_address);
    push(&mut kv, "weak_address_duration_min", r.weak_address_duration_min);
    push(&mut kv, "weak_address_duration_max", r.weak_address_duration_max);
    push(&mut kv, "respond_duration", r.respond_duration);
    push(&mut kv, "p_move", r.p_move);
    push(&mut kv, "move_speed", r.move_speed);
    push(&mut kv, "arrive_epsilon", r.arrive_epsilon);
    push(&mut kv, "join_radius", r.join_radius);
    let text: String = kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    ConfigFile::parse(&text).map_err(usage)
}

/// Random stream of episode `index`: layout draws first, then the episode seed.
fn episode_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct Job {
    layout: Layout,
    source: Option<String>,
    seed: u64,
}

pub fn run(args: SimulateArgs) -> CliResult {
    let config = resolve_config(&args)?;
    if args.steps == 0 {
        return Err(usage("--steps must be at least 1"));
    }
    if args.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let out = args.out.out.clone().unwrap_or_else(default_out_dir);
    let mut jobs = Vec::new();
    if let Some(n) = args.generate {
        if n == 0 {
            return Err(usage("--generate must be at least 1"));
        }
        for i in 0..n {
            let mut rng = episode_rng(args.seed, i);
            let layout = generate_layout(&config.layout, &mut rng)?;
            jobs.push(Job {
                layout,
                source: None,
                seed: rng.next_u64(),
            });
        }
    } else if let Some(dir) = &args.layouts {
        for (i, path) in list_files(dir, "csv")?.into_iter().enumerate() {
            let layout = load_layout(&path)?;
            jobs.push(Job {
                layout,
                source: path.file_name().map(|n| n.to_string_lossy().into_owned()),
                seed: episode_rng(args.seed, i).next_u64(),
            });
        }
    }

    let demos = run_episodes(&jobs, args.scenario, args.steps, &config, args.jobs)?;

    let mut entries = Vec::with_capacity(jobs.len());
    for (i, (job, demo)) in jobs.iter().zip(&demos).enumerate() {
        let demo_name = format!("episode_{i:04}.jsonl");
        let layout_name = format!("layout_{i:04}.csv");
        let mut buf = Vec::new();
        write_demonstration(demo, &mut buf)?;
        write_file(&out.join(&demo_name), buf)?;
        let mut buf = Vec::new();
        write_layout_csv(&job.layout, &mut buf)?;
        write_file(&out.join(&layout_name), buf)?;
        entries.push(ManifestEntry {
            demo: demo_name,
            layout: layout_name,
            source: job.source.clone(),
            seed: job.seed,
        });
    }
    let manifest = Manifest {
        format_version: MANIFEST_FORMAT_VERSION,
        scenario: args.scenario,
        steps: args.steps,
        seed: args.seed,
        episodes: entries,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(data)?;
    write_file(&out.join("manifest.json"), json + "\n")?;
    write_file(&out.join("simulator.cfg"), config.to_text())?;
    println!("wrote {} episodes of {} steps to {}", demos.len(), args.steps, out.display());
    Ok(())
}

/// Rolls out every job; with several workers each takes a contiguous slice and
/// results are reassembled in job order.
fn run_episodes(jobs: &[Job], scenario: Scenario, steps: usize, config: &ConfigFile, workers: usize) -> CliResult<Vec<Demonstration>> {
    let one = |job: &Job| rollout(&job.layout, scenario, steps, &config.rules, job.seed);
    let per = jobs.len().div_ceil(workers).max(1);
    let parts: Vec<mgpi::Result<Vec<Demonstration>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(per)
            .map(|chunk| scope.spawn(move || chunk.iter().map(one).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let mut demos = Vec::with_capacity(jobs.len());
    for p in parts {
        demos.extend(p?);
    }
    Ok(demos)
}

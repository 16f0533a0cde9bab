use serde::Serialize;

use mgpi::groups::{
    attention_map, detect_groups, pose_only_groups, score_groups, DbscanParams, GroupPartition, GroupScore,
};
use mgpi::model::MgpiNetwork;
use mgpi::scene::load_layout;

use crate::args::{AttentionArgs, BenchGroupsArgs, DbscanFlags, DetectArgs, EvalGroupsArgs};
use crate::common::{data, list_files, output_path, parse_vec2, read_file, usage, write_file, CliResult};

fn dbscan_params(flags: &DbscanFlags) -> CliResult<DbscanParams> {
    let p = DbscanParams {
        eps: flags.eps,
        min_pts: flags.min_pts,
    };
    p.validate().map_err(usage)?;
    Ok(p)
}

fn print_score(label: &str, s: &GroupScore) {
    println!("{label}precision={} recall={} f1={}", s.precision, s.recall, s.f1);
}

pub fn run_detect(args: DetectArgs) -> CliResult {
    let params = dbscan_params(&args.dbscan)?;
    let layout = load_layout(&args.layout)?;
    let partition = match &args.model {
        Some(path) => {
            let net = MgpiNetwork::load(path)?;
            detect_groups(&net, &layout, &params, net.config.position_scale)?
        }
        None => pose_only_groups(&layout, &params)?,
    };
    let out = output_path(args.out, "groups.json");
    write_file(&out, partition.to_json() + "\n")?;
    println!("{} groups among {} agents; wrote {}", partition.groups.len(), layout.len(), out.display());
    Ok(())
}

fn read_partition(path: &std::path::Path) -> CliResult<GroupPartition> {
    if path.extension().is_some_and(|x| x == "csv") {
        Ok(GroupPartition::from_layout(&load_layout(path)?))
    } else {
        GroupPartition::from_json(&read_file(path)?).map_err(|e| data(format!("{}: {e}", path.display())))
    }
}

pub fn run_eval_groups(args: EvalGroupsArgs) -> CliResult {
    let pred = read_partition(&args.pred)?;
    let truth = read_partition(&args.truth)?;
    let s = score_groups(&pred, &truth, args.include_singletons)?;
    print_score("", &s);
    Ok(())
}

#[derive(Serialize)]
struct BenchReport {
    format_version: u32,
    layouts: usize,
    gate: GroupScore,
    pose_only: GroupScore,
    gate_params: DbscanParams,
    pose_params: DbscanParams,
    include_singletons: bool,
}

pub fn run_bench_groups(args: BenchGroupsArgs) -> CliResult {
    let params = dbscan_params(&args.dbscan)?;
    let pose_params = dbscan_params(&DbscanFlags {
        eps: args.pose_eps.unwrap_or(params.eps),
        min_pts: params.min_pts,
    })?;
    let net = MgpiNetwork::load(&args.model)?;
    let files = list_files(&args.layouts, "csv")?;
    let mut gate_scores = Vec::with_capacity(files.len());
    let mut pose_scores = Vec::with_capacity(files.len());
    for path in &files {
        let layout = load_layout(path)?;
        let truth = GroupPartition::from_layout(&layout);
        let gate = detect_groups(&net, &layout, &params, net.config.position_scale)?;
        let pose = pose_only_groups(&layout, &pose_params)?;
        gate_scores.push(score_groups(&gate, &truth, args.include_singletons)?);
        pose_scores.push(score_groups(&pose, &truth, args.include_singletons)?);
    }
    let report = BenchReport {
        format_version: 1,
        layouts: files.len(),
        gate: GroupScore::pooled(&gate_scores),
        pose_only: GroupScore::pooled(&pose_scores),
        gate_params: params,
        pose_params,
        include_singletons: args.include_singletons,
    };
    print_score("gate: ", &report.gate);
    print_score("pose-only: ", &report.pose_only);
    if let Some(out) = args.out {
        write_file(&out, serde_json::to_string_pretty(&report).map_err(data)? + "\n")?;
    }
    Ok(())
}

pub fn run_attention(args: AttentionArgs) -> CliResult {
    let net = MgpiNetwork::load(&args.model)?;
    let unit = |raw: &str| -> CliResult<mgpi::scene::Vec2> {
        parse_vec2(raw)?
            .normalized()
            .ok_or_else(|| usage(format!("gaze `{raw}` has zero length")))
    };
    let map = attention_map(
        &net,
        unit(&args.observer_gaze)?,
        unit(&args.neighbor_gaze)?,
        args.grid,
        args.extent,
        net.config.position_scale,
    )
    .map_err(|e| match e {
        mgpi::Error::Config(m) => usage(m),
        other => other.into(),
    })?;
    let out = output_path(args.out, "attention.csv");
    write_file(&out, map.to_csv())?;
    let (faced, behind) = map.half_plane_means();
    println!("mean gate x<0: {faced:.6}, x>0: {behind:.6}; wrote {}", out.display());
    Ok(())
}

use std::path::{Path, PathBuf};

use serde::Serialize;

use mgpi::model::{MgpiNetwork, Variant};
use mgpi::scene::Demonstration;
use mgpi::train::{
    behavior_clone_with, cross_validate_with, evaluate_dataset_parallel, loss_trace_csv, CrossValReport, Dataset,
    EvalReport, TrainConfig,
};

use crate::args::{EvalArgs, TrainArgs, TrainFlags};
use crate::common::{data, load_demos, output_path, read_settings, setting, usage, write_file, CliResult};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Training configuration from flags, then `--config`, then defaults. The
/// action count follows the scenario of `demos`.
pub fn resolve_train_config(flags: &TrainFlags, variant: Option<Variant>, seed: u64, demos: &[Demonstration]) -> CliResult<TrainConfig> {
    let mut file = match &flags.config {
        Some(path) => read_settings(path)?,
        None => Default::default(),
    };
    let fallback = match file.remove("model") {
        Some(raw) => raw.parse().map_err(usage)?,
        None => Variant::Mgpi,
    };
    let variant = setting(variant.or(flags.variant), &mut file, "variant", fallback)?;
    let actions = demos.first().map_or(6, |d| d.scenario.action_count());
    let mut cfg = TrainConfig::new(variant, actions, seed);
    cfg.model.horizon = setting(flags.horizon, &mut file, "horizon", cfg.model.horizon)?;
    cfg.neighbors = setting(flags.neighbors, &mut file, "neighbors", cfg.neighbors)?;
    cfg.epochs = setting(flags.epochs, &mut file, "epochs", cfg.epochs)?;
    cfg.batch_size = setting(flags.batch, &mut file, "batch", cfg.batch_size)?;
    cfg.adam.lr = setting(flags.lr, &mut file, "lr", cfg.adam.lr)?;
    cfg.model.socpool_grid = setting(flags.socpool_grid, &mut file, "socpool_grid", cfg.model.socpool_grid)?;
    if let Some(key) = file.keys().next() {
        return Err(usage(format!("unknown training setting `{key}`")));
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn run_train(args: TrainArgs) -> CliResult {
    let demos = load_demos(&args.demos)?;
    let cfg = resolve_train_config(&args.train, args.model, args.seed, &demos)?;
    let quiet = args.quiet;
    let total = cfg.epochs;
    let outcome = behavior_clone_with(&demos, &cfg, &mut |s| {
        if !quiet {
            eprintln!("epoch {}/{total} loss {:.6}", s.epoch, s.mean_loss);
        }
    })?;
    let out = output_path(args.out, "model.json");
    let loss_out = args.loss_out.unwrap_or_else(|| sibling(&out, ".loss.csv"));
    write_file(&out, outcome.network.to_checkpoint_json())?;
    write_file(&loss_out, loss_trace_csv(&outcome.loss_trace))?;
    println!(
        "trained {} for {} epochs, final loss {:.6}; checkpoint {}",
        cfg.model.variant,
        cfg.epochs,
        outcome.loss_trace.last().map_or(f64::NAN, |s| s.mean_loss),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CheckpointReport<'a> {
    format_version: u32,
    mode: &'static str,
    neighbors: usize,
    #[serde(flatten)]
    report: &'a EvalReport,
}

#[derive(Serialize)]
struct CrossValOutput<'a> {
    format_version: u32,
    mode: &'static str,
    config: &'a TrainConfig,
    #[serde(flatten)]
    report: &'a CrossValReport,
}

fn summary(label: &str, ce: f64, acc: f64, map: f64) {
    println!("{label}: cross_entropy={ce:.6} accuracy={acc:.6} map={map:.6}");
}

pub fn run_eval(args: EvalArgs) -> CliResult {
    if args.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let demos = load_demos(&args.demos)?;
    let out = output_path(args.out, "report.json");
    let confusion_out = sibling(&out, ".confusion.csv");
    if args.crossval {
        let cfg = resolve_train_config(&args.train, None, args.seed, &demos)?;
        let quiet = args.quiet;
        let report = cross_validate_with(&demos, &cfg, &mut |fold, s| {
            if !quiet {
                eprintln!("fold {} epoch {}/{} loss {:.6}", fold + 1, s.epoch, cfg.epochs, s.mean_loss);
            }
        })?;
        let doc = CrossValOutput {
            format_version: REPORT_FORMAT_VERSION,
            mode: "crossval",
            config: &cfg,
            report: &report,
        };
        write_file(&out, serde_json::to_string_pretty(&doc).map_err(data)? + "\n")?;
        write_file(&confusion_out, report.mean.confusion_csv())?;
        for (k, f) in report.folds.iter().enumerate() {
            summary(&format!("fold {}", k + 1), f.cross_entropy, f.accuracy, f.map);
        }
        let m = &report.mean;
        summary("mean", m.cross_entropy, m.accuracy, m.map);
        return Ok(());
    }

    let path = args.model.as_deref().expect("clap enforces --model or --crossval");
    let net = MgpiNetwork::load(path)?;
    let j = args.train.neighbors.unwrap_or(4);
    if j == 0 {
        return Err(usage("--neighbors must be at least 1"));
    }
    let ds = Dataset::build(&demos, net.config.horizon, j, net.config.position_scale)?;
    let actions = ds.scenario().action_count();
    if actions != net.config.action_count {
        return Err(data(format!(
            "checkpoint predicts {} actions but the {} demonstrations have {actions}",
            net.config.action_count,
            ds.scenario()
        )));
    }
    let report = evaluate_dataset_parallel(&net, &ds, args.jobs)?;
    let doc = CheckpointReport {
        format_version: REPORT_FORMAT_VERSION,
        mode: "checkpoint",
        neighbors: j,
        report: &report,
    };
    write_file(&out, serde_json::to_string_pretty(&doc).map_err(data)? + "\n")?;
    write_file(&confusion_out, report.confusion_csv())?;
    summary("test", report.cross_entropy, report.accuracy, report.map);
    Ok(())
}

use mgpi::gradcheck::{corrupt_backward, gradcheck_variant, TOLERANCE};
use mgpi::model::{MgpiNetwork, Variant};
use mgpi::simulator::check_demonstration;

use crate::args::{CheckArgs, GradcheckArgs};
use crate::common::{list_files, load_demo, CliError, CliResult};

pub fn run_gradcheck(args: GradcheckArgs) -> CliResult {
    let corrupt: Option<&dyn Fn(&mut MgpiNetwork)> = if args.corrupt_backward {
        Some(&corrupt_backward)
    } else {
        None
    };
    let mut failed = Vec::new();
    for v in Variant::ALL {
        let r = gradcheck_variant(v, args.seed, corrupt)?;
        let modules: Vec<String> = r.modules.iter().map(|(m, e)| format!("{m}={e:.3e}")).collect();
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<8} {verdict:<4} max={:.3e} over {} coordinates ({})",
            v.name(),
            r.max_error(),
            r.coordinates,
            modules.join(" ")
        );
        if !r.passed() {
            failed.push(v.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "relative gradient error >= {TOLERANCE:e} in {}",
            failed.join(", ")
        )))
    }
}

pub fn run_check(args: CheckArgs) -> CliResult {
    let files = list_files(&args.demos, "jsonl")?;
    let mut bad = 0;
    for path in &files {
        let demo = load_demo(path)?;
        if let Err(v) = check_demonstration(&demo) {
            println!("{}: {v}", path.display());
            bad += 1;
        }
    }
    println!("{} of {} episodes pass", files.len() - bad, files.len());
    if bad > 0 {
        return Err(CliError::Check(format!("{bad} episodes violate the interaction rules")));
    }
    Ok(())
}

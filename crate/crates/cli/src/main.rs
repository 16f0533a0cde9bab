mod args;
mod common;
mod groups;
mod render;
mod simulate;
mod train;
mod verify;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use common::CliResult;

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Train(a) => train::run_train(a),
        Command::Eval(a) => train::run_eval(a),
        Command::Detect(a) => groups::run_detect(a),
        Command::EvalGroups(a) => groups::run_eval_groups(a),
        Command::BenchGroups(a) => groups::run_bench_groups(a),
        Command::Render(a) => render::run(a),
        Command::Attention(a) => groups::run_attention(a),
        Command::Gradcheck(a) => verify::run_gradcheck(a),
        Command::Check(a) => verify::run_check(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            std::process::exit(code);
        }
    };
    if let Err(e) = dispatch(cli) {
        eprintln!("mgpi: {e}");
        std::process::exit(e.exit_code());
    }
}

//! `infodisc`: information cost, discrepancy and correlated-sampling experiments.

mod commands;
mod inputs;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use report::Format;

#[derive(Parser, Debug)]
#[command(
    name = "infodisc",
    version,
    about = "Information cost, discrepancy and correlated-sampling experiments",
    long_about = "Exact and Monte Carlo checks for two-party protocols.\n\n\
        Every run prints a report to standard output, writes it to OUT_DIR/<command>.json \
        and appends CSV rows to OUT_DIR/<command>.csv. Files are replaced atomically.",
    after_help = "EXIT STATUS:\n    0  all checked bounds hold\n    1  a checked bound was violated\n    2  usage or input error"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Directory for report files.
    #[arg(long, global = true, env = "INFODISC_OUT_DIR", default_value = "reports")]
    pub out_dir: PathBuf,
    /// Also write the rendered report to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Format of standard output and of `--out`.
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    /// Do not write report files, only print.
    #[arg(long, global = true)]
    pub no_write: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Information cost, communication cost and error of a protocol.
    #[command(
        long_about = "Computes IC = I(P;X|Y) + I(P;Y|X) both as mutual information and as expected \
            divergence, the worst-case communication, the mass of the pairs whose divergences \
            are at most 20 IC, and the error against --function when given.",
        after_help = "EXAMPLES:\n    infodisc info --protocol builtin:send_x --dist uniform\n    \
            infodisc info --protocol proto.json --dist mu.json --function f.json"
    )]
    Info(commands::InfoArgs),
    /// Discrepancy of a boolean function.
    #[command(
        long_about = "Maximum over rectangles S x T of |mu(f = 0, S x T) - mu(f = 1, S x T)|.\n\n\
            --function is gt, ip, xor or random on --n bits, or a table file. --dist is uniform, \
            gtmu (the GT hard distribution on --n bits) or a distribution file. Exact mode \
            enumerates subsets of the smaller side; greedy mode gives a lower bound.",
        after_help = "EXAMPLES:\n    infodisc disc --function xor --n 1 --dist uniform --mode exact\n    \
            infodisc disc --function gt --n 10 --dist gtmu --mode greedy --restarts 8"
    )]
    Disc(commands::DiscArgs),
    /// Table of GT discrepancy against constant/sqrt(n).
    #[command(
        long_about = "Checks Disc(GT_n) < constant/sqrt(n) under the GT hard distribution for \
            n = 1..=max-n. Exact mode allows n <= 4, sweep mode (every rectangle against \
            constant sqrt(s t)/sqrt(n)) allows n <= 3, greedy mode gives lower bounds.",
        after_help = "EXAMPLES:\n    infodisc gt-table --max-n 4\n    infodisc gt-table --max-n 12 --mode greedy"
    )]
    GtTable(commands::GtTableArgs),
    /// Closed form and Monte Carlo run of the correlated sampler on one instance.
    #[command(
        long_about = "Loads a sampling instance and reports the exact success probability and \
            output law next to empirical estimates from the literal sampler and its hashed \
            variant with --d bits. Instances in mode `paper` are only evaluated exactly, \
            against the stated success and distance bounds.",
        after_help = "EXAMPLES:\n    infodisc sample-verify --instance inst.json --trials 100000 --seed 1 --d 8"
    )]
    SampleVerify(commands::SampleVerifyArgs),
    /// Simulate a protocol through the correlated sampler.
    #[command(
        long_about = "Runs the low-communication simulation of a protocol: sample a leaf with \
            the correlated sampler, output its label, otherwise flip a coin. Reports the exact \
            success-weighted correctness, and in scaled mode an empirical estimate over --trials \
            runs. Mode `paper` evaluates the exact advantage against (1/12) 2^(-50(i+1)).",
        after_help = "EXAMPLES:\n    infodisc simulate --protocol builtin:bisection_gt --n 2 --dist gtmu \
            --function gt --mode scaled --c 4 --trials 100000 --seed 3 --compress hash:8"
    )]
    Simulate(commands::SimulateArgs),
    /// Run every acceptance claim.
    #[command(
        long_about = "Runs the full verification suite and reports one entry per claim. The JSON \
            is byte-identical for the same seed unless --timings is given.",
        after_help = "EXAMPLES:\n    infodisc verify-all --seed 7\n    infodisc verify-all --quick --only disc.gt-bound"
    )]
    VerifyAll(commands::VerifyAllArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Info(a) => commands::info(a),
        Command::Disc(a) => commands::disc(a),
        Command::GtTable(a) => commands::gt_table(a),
        Command::SampleVerify(a) => commands::sample_verify(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::VerifyAll(a) => commands::verify_all(a),
    };
    match result.and_then(|out| commands::emit(&cli.common, &out).map(|_| out.violation)) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("infodisc: {e:#}");
            ExitCode::from(2)
        }
    }
}

use clap::{Parser, Subcommand};
use genkl_cli::commands::{identify, metrics, relabel, simulate, sweep, table1_check};

#[derive(Parser)]
#[command(
    name = "genkl",
    version,
    about = "Generalized-KL NC identification, soft relabeling, and the iterative training loop"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition prediction records into NC and non-NC
    Identify(identify::IdentifyArgs),
    /// Assign soft labels to a partition (uniform / double-hot)
    Relabel(relabel::RelabelArgs),
    /// Score predicted NC flags against ground truth
    Metrics(metrics::MetricsArgs),
    /// Run the iterative loop on synthetic data
    Simulate(simulate::SimulateArgs),
    /// Run a one-axis-at-a-time sensitivity sweep
    Sweep(sweep::SweepArgs),
    /// Score the ten-row anchor fixture against the published values
    Table1Check,
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Identify(args) => identify::run(args),
        Command::Relabel(args) => relabel::run(args),
        Command::Metrics(args) => metrics::run(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Sweep(args) => sweep::run(args),
        Command::Table1Check => table1_check::run(),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

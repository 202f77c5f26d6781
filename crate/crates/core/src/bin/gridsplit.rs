use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use gridsplit::case_io::CostLinearization;
use gridsplit::study::{
    compare, parse_budgets, run, threads_from_env, Formats, RunConfig, EXIT_ERROR,
};
use gridsplit::topo_model::Mode;
use gridsplit_milp::Branching;

#[derive(Parser)]
#[command(
    name = "gridsplit",
    version,
    about = "Line switching and bus splitting for congestion relief"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a budget sweep and write results.json, costs.csv and decisions.csv.
    Run(RunArgs),
    /// Per-budget savings of the second results.json against the first.
    Compare { a: PathBuf, b: PathBuf },
}

#[derive(Clone)]
struct Budgets(Vec<usize>);

impl std::str::FromStr for Budgets {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_budgets(s).map(Budgets)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Linearize {
    MarginalAtMidpoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum BranchRule {
    MostFractional,
    Reliability,
}

#[derive(clap::Args)]
struct RunArgs {
    /// MATPOWER `.m` or native `.json` file, or a bundled case name.
    #[arg(long)]
    case: String,
    /// Comma-separated: none, line, breaker.
    #[arg(long, default_value = "breaker", value_delimiter = ',')]
    mode: Vec<Mode>,
    /// Budget `N` or inclusive range `A..B`.
    #[arg(short = 's', long = "budget", default_value = "0..5")]
    budget: Budgets,
    /// Largest angle difference across a line, rad.
    #[arg(long, default_value_t = 0.6)]
    dtheta_max: f64,
    #[arg(long, default_value_t = 1e-6)]
    gap: f64,
    /// Seconds per solve.
    #[arg(long, default_value_t = 300.0)]
    time_limit: f64,
    #[arg(long)]
    node_limit: Option<usize>,
    #[arg(long, value_enum, default_value = "most-fractional")]
    branching: BranchRule,
    /// Exclude plans that split the network into more islands.
    #[arg(long)]
    forbid_islanding: bool,
    /// Check every plan with an AC power flow.
    #[arg(long)]
    verify_ac: bool,
    /// Write each model as a CPLEX LP file into this directory.
    #[arg(long, value_name = "DIR")]
    export_lp: Option<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Comma-separated: json, csv.
    #[arg(long, default_value = "json,csv")]
    format: Formats,
    /// Write the branch-and-bound node log as JSON lines.
    #[arg(long)]
    log_nodes: bool,
    /// Accept quadratic and piecewise costs by linearising them.
    #[arg(long, value_enum)]
    linearize_cost: Option<Linearize>,
    /// Leave wall times out of the outputs.
    #[arg(long)]
    no_timings: bool,
    /// Solve every cell from scratch instead of seeding it with the plans of
    /// smaller budgets and weaker modes.
    #[arg(long)]
    no_chain: bool,
}

impl RunArgs {
    fn config(self) -> RunConfig {
        RunConfig {
            case: self.case,
            modes: self.mode,
            budgets: self.budget.0,
            dtheta_max: self.dtheta_max,
            gap: self.gap,
            time_limit: (self.time_limit > 0.0).then(|| Duration::from_secs_f64(self.time_limit)),
            node_limit: self.node_limit,
            branching: match self.branching {
                BranchRule::MostFractional => Branching::MostFractional,
                BranchRule::Reliability => Branching::Reliability {
                    candidates: 16,
                    reliable: 1,
                },
            },
            forbid_islanding: self.forbid_islanding,
            verify_ac: self.verify_ac,
            export_lp: self.export_lp,
            out: self.out,
            formats: self.format,
            log_nodes: self.log_nodes,
            linearize_cost: match self.linearize_cost {
                Some(Linearize::MarginalAtMidpoint) => CostLinearization::MarginalAtMidpoint,
                None => CostLinearization::Reject,
            },
            timings: !self.no_timings,
            chain_starts: !self.no_chain,
            threads: threads_from_env(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => {
            match run(&args.config()) {
                Ok(report) => {
                    let code = report.exit_code();
                    if code != 0 {
                        eprintln!("finished with exit code {code}: some cells are infeasible or hit a limit");
                    }
                    code
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_ERROR
                }
            }
        }
        Command::Compare { a, b } => match compare(&a, &b) {
            Ok(c) => {
                print!("{c}");
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ERROR
            }
        },
    };
    ExitCode::from(code as u8)
}

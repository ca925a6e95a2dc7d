use std::path::PathBuf;
use std::process::ExitCode;

use bgsim::commands::{
    cmd_check_slot, cmd_formations, cmd_reduce, cmd_simulate, cmd_verify_trace, parse_crash,
    parse_proposals, parse_value_pairs, CommandResult, ScenarioConfig, EXIT_USAGE,
};
use bgsim::formations::{FormationKind, WitnessOptions};
use bgsim::slot::StatusRule;
use bgsim::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bgsim",
    version,
    about = "Consensus-to-Byzantine-gathering reduction simulator and trace checker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the two-process reduction and write its trace.
    Reduce(ReduceArgs),
    /// Check a trace file; writes a JSON report next to it.
    VerifyTrace {
        trace: PathBuf,
        /// Report path (default: <trace>.report.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustively check the slot object over all schedules.
    CheckSlot {
        #[arg(long, default_value_t = 24)]
        max_events: usize,
        /// Value pairs as `a:b,c:d`.
        #[arg(long, default_value = "5:7,9:9")]
        values: String,
        /// Use the mutated status rule (negative control).
        #[arg(long)]
        mutant: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Raw robot run under a round-robin schedule with a random Byzantine robot.
    Simulate {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value = "move-to-max")]
        algorithm: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Round limit.
        #[arg(long, default_value_t = 1000)]
        max_slots: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bivalency witness check for a formation family.
    Formations {
        #[arg(long, default_value = "line")]
        formation: String,
        /// Correct robots; the pattern has n + 1 points.
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Grid side for the exhaustive check; 0 skips it.
        #[arg(long, default_value_t = 5)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value = "0,1")]
    proposals: String,
    #[arg(long, default_value = "move-to-max")]
    algorithm: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Crash as `process:primitives`, e.g. `1:3`.
    #[arg(long)]
    crash: Option<String>,
    /// Run the formation variant for this family instead of gathering.
    #[arg(long)]
    formation: Option<String>,
    #[arg(long)]
    max_slots: Option<usize>,
    /// Bursty scheduler with this longest burst.
    #[arg(long)]
    max_burst: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ReduceArgs {
    fn config(&self) -> Result<ScenarioConfig, Error> {
        Ok(ScenarioConfig {
            n: self.n,
            proposals: parse_proposals(&self.proposals)?,
            algorithm: self.algorithm.clone(),
            seed: self.seed,
            max_burst: self.max_burst,
            crash: self.crash.as_deref().map(parse_crash).transpose()?,
            formation: self
                .formation
                .as_deref()
                .map(str::parse::<FormationKind>)
                .transpose()?,
            max_slots: self.max_slots,
        })
    }
}

fn dispatch(cmd: Command) -> CommandResult {
    match cmd {
        Command::Reduce(a) => match a.config() {
            Ok(cfg) => cmd_reduce(&cfg, a.out.as_deref()),
            Err(e) => CommandResult::usage(&e),
        },
        Command::VerifyTrace { trace, out } => cmd_verify_trace(&trace, out.as_deref()),
        Command::CheckSlot {
            max_events,
            values,
            mutant,
            out,
        } => match parse_value_pairs(&values) {
            Ok(pairs) => {
                let rule = if mutant {
                    StatusRule::NoClaimCommit
                } else {
                    StatusRule::Standard
                };
                cmd_check_slot(max_events, &pairs, rule, out.as_deref())
            }
            Err(e) => CommandResult::usage(&e),
        },
        Command::Simulate {
            n,
            algorithm,
            seed,
            max_slots,
            out,
        } => cmd_simulate(n, &algorithm, seed, max_slots, out.as_deref()),
        Command::Formations {
            formation,
            n,
            seed,
            samples,
            grid,
            out,
        } => match formation.parse::<FormationKind>() {
            Ok(kind) => {
                let opts = WitnessOptions {
                    fuzz_samples: samples,
                    seed,
                    grid: (grid > 0).then_some(grid),
                };
                cmd_formations(kind, n + 1, &opts, out.as_deref())
            }
            Err(e) => CommandResult::usage(&e),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let r = dispatch(cli.command);
    if r.exit == EXIT_USAGE {
        eprint!("{}", r.stdout);
    } else {
        print!("{}", r.stdout);
    }
    ExitCode::from(r.exit)
}

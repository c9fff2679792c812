use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wul::cli::{self, OracleFlags, ProveFlags, SynthFlags};

/// Prove or refute unrealizability triples over regular tree grammars.
#[derive(Parser)]
#[command(name = "wul", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the proof skeleton, plug in the provided summaries/invariants,
    /// and discharge the verification conditions.
    Prove {
        file: PathBuf,
        /// Print the proof skeleton and exit (no solver calls).
        #[arg(long)]
        skeleton: bool,
        /// Print each verification condition in the benchmark format.
        #[arg(long)]
        dump_vcs: bool,
        /// Replace right-hand existentials with second-order functions and
        /// race a SyGuS query against the direct SMT query.
        #[arg(long)]
        skolemize: bool,
        /// Skip the quantifier-pulling/splitting optimization.
        #[arg(long)]
        no_optimize: bool,
        /// Assume pre-proven summaries from this store (skips their
        /// defining obligations).
        #[arg(long, value_name = "STORE")]
        ctx: Option<PathBuf>,
        /// Re-verify provided summaries even when a store is available.
        #[arg(long)]
        no_ctx: bool,
        /// Per-VC solver timeout in seconds.
        #[arg(long, value_name = "N")]
        timeout: Option<u64>,
        /// TOML file naming the SMT/SyGuS engines.
        #[arg(long, value_name = "PATH")]
        solver_config: Option<PathBuf>,
    },
    /// Synthesize missing summaries/invariants from template grammars, then
    /// verify the result.
    Synth {
        file: PathBuf,
        /// Search the default quantifier-free grammar for parameters without
        /// a (summary-grammar ...) declaration.
        #[arg(long)]
        unconstrained: bool,
        /// Persist proven summaries to this store.
        #[arg(long, value_name = "STORE")]
        save_ctx: Option<PathBuf>,
        /// Solve parameters one at a time (heuristic; the default solves
        /// them jointly).
        #[arg(long)]
        staged: bool,
        #[arg(long)]
        skolemize: bool,
        #[arg(long)]
        no_optimize: bool,
        #[arg(long)]
        dump_vcs: bool,
        #[arg(long, value_name = "N")]
        timeout: Option<u64>,
        #[arg(long, value_name = "PATH")]
        solver_config: Option<PathBuf>,
    },
    /// Brute-force the triple at a bounded depth over a finite domain.
    Oracle {
        file: PathBuf,
        #[command(flatten)]
        bounds: OracleArgs,
    },
}

#[derive(Args)]
struct OracleArgs {
    /// Maximum derivation height for program enumeration.
    #[arg(long, value_name = "D")]
    depth: u32,
    /// Inclusive integer range LO..HI for state enumeration.
    #[arg(long, value_name = "LO..HI")]
    domain: String,
    /// Maximum loop iterations before a run counts as diverged.
    #[arg(long, value_name = "F", default_value_t = 100)]
    fuel: u32,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = match cli.command {
        Command::Prove {
            file,
            skeleton,
            dump_vcs,
            skolemize,
            no_optimize,
            ctx,
            no_ctx,
            timeout,
            solver_config,
        } => cli::cmd_prove(
            &file,
            &ProveFlags {
                skeleton,
                dump_vcs,
                skolemize,
                no_optimize,
                ctx,
                no_ctx,
                timeout,
                solver_config,
            },
        ),
        Command::Synth {
            file,
            unconstrained,
            save_ctx,
            staged,
            skolemize,
            no_optimize,
            dump_vcs,
            timeout,
            solver_config,
        } => cli::cmd_synth(
            &file,
            &SynthFlags {
                unconstrained,
                save_ctx,
                staged,
                skolemize,
                no_optimize,
                dump_vcs,
                timeout,
                solver_config,
            },
        ),
        Command::Oracle { file, bounds } => {
            let domain = match cli::parse_domain(&bounds.domain) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(cli::EXIT_ERROR as u8);
                }
            };
            cli::cmd_oracle(
                &file,
                &OracleFlags { depth: bounds.depth, domain, fuel: bounds.fuel },
            )
        }
    };
    print!("{}", report.text);
    ExitCode::from(report.exit as u8)
}

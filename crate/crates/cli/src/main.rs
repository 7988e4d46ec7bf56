//! Command-line front end: instance generation and IO, experiment
//! orchestration, ratio measurement, and report emission.
//!
//! Exit codes: 0 success, 2 validation failure, 3 audit failure, 4 oracle
//! limit exceeded.

mod commands;
mod report;

use clap::{Parser, Subcommand, ValueEnum};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "adalloc", version, about = "Online budgeted allocation with multi-tier budgets")]
struct Cli {
    /// Seed for anything randomized.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress timestamps so outputs are byte-identical across runs.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Runtime audit mode.
    #[arg(long, global = true, value_enum, default_value_t = AuditArg::End)]
    audit: AuditArg,
    /// Output path (primary artifact of the subcommand).
    #[arg(long, global = true)]
    out: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AuditArg {
    Off,
    End,
    Paranoid,
}

impl AuditArg {
    fn to_mode(self) -> adalloc::AuditMode {
        match self {
            AuditArg::Off => adalloc::AuditMode::Off,
            AuditArg::End => adalloc::AuditMode::End,
            AuditArg::Paranoid => adalloc::AuditMode::Paranoid,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen {
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 3)]
        bidders: usize,
        #[arg(long, default_value_t = 8)]
        dims: usize,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 2)]
        branching: usize,
        #[arg(long, default_value_t = 50)]
        impressions: usize,
        /// Bid scale relative to the small-bids threshold (general mode) or
        /// as a fraction of the tightest budget (laminar mode).
        #[arg(long, default_value = "1")]
        bid_scale: String,
        /// Target p for general families.
        #[arg(long, default_value_t = 4)]
        p: u64,
        /// Line-graph size for lb-admission.
        #[arg(long, default_value_t = 16)]
        n: u64,
        #[arg(long)]
        delta: Option<String>,
        #[arg(long, default_value = "1/2")]
        eps: String,
    },
    /// Run one strategy over an instance file and write a report.
    Run {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        algo: String,
        /// Optional per-impression CSV trace path.
        #[arg(long)]
        trace: Option<String>,
        /// Relative tolerance of the primal-dual ratio audit. The dual
        /// carries a discretization residual of order max_bid/capacity, so
        /// tighten this only on instances with correspondingly small bids.
        #[arg(long, default_value_t = 1e-2)]
        ratio_tol: f64,
        #[arg(long, default_value_t = 1e-9)]
        feas_tol: f64,
    },
    /// Run a strategy and an offline oracle; report OPT/ALG.
    Ratio {
        #[arg(long)]
        instance: Option<String>,
        #[arg(long)]
        algo: String,
        #[arg(long, default_value = "lp")]
        opt_method: String,
        #[arg(long, default_value = "partial")]
        semantics: String,
        /// Seeded random trials over generated instances instead of a file.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value = "random-laminar")]
        gen_kind: String,
        #[arg(long, default_value_t = 3)]
        bidders: usize,
        #[arg(long, default_value_t = 8)]
        dims: usize,
        #[arg(long, default_value_t = 50)]
        impressions: usize,
        #[arg(long, default_value = "1")]
        bid_scale: String,
    },
    /// Offline optimum of an instance file.
    Opt {
        #[arg(long)]
        method: String,
        #[arg(long)]
        instance: String,
        #[arg(long, default_value = "partial")]
        semantics: String,
    },
    /// Drive an adaptive lower-bound adversary against a strategy.
    Adversary {
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 64)]
        n: u64,
        #[arg(long, default_value_t = 4)]
        p: u64,
        #[arg(long, default_value = "1/2")]
        eps: String,
        #[arg(long)]
        delta: Option<String>,
        #[arg(long)]
        algo: String,
    },
    /// Validate an instance file.
    Verify {
        #[arg(long)]
        instance: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = commands::Context {
        seed: cli.seed,
        reproducible: cli.reproducible,
        audit_mode: cli.audit.to_mode(),
        out: cli.out.clone(),
    };
    let result = match cli.command {
        Command::Gen {
            kind,
            bidders,
            dims,
            depth,
            branching,
            impressions,
            bid_scale,
            p,
            n,
            delta,
            eps,
        } => commands::cmd_gen(
            &ctx,
            commands::GenArgs {
                kind,
                bidders,
                dims,
                depth,
                branching,
                impressions,
                bid_scale,
                p,
                n,
                delta,
                eps,
            },
        ),
        Command::Run {
            instance,
            algo,
            trace,
            ratio_tol,
            feas_tol,
        } => commands::cmd_run(&ctx, &instance, &algo, trace.as_deref(), ratio_tol, feas_tol),
        Command::Ratio {
            instance,
            algo,
            opt_method,
            semantics,
            trials,
            gen_kind,
            bidders,
            dims,
            impressions,
            bid_scale,
        } => commands::cmd_ratio(
            &ctx,
            commands::RatioArgs {
                instance,
                algo,
                opt_method,
                semantics,
                trials,
                gen_kind,
                bidders,
                dims,
                impressions,
                bid_scale,
            },
        ),
        Command::Opt {
            method,
            instance,
            semantics,
        } => commands::cmd_opt(&ctx, &method, &instance, &semantics),
        Command::Adversary {
            kind,
            n,
            p,
            eps,
            delta,
            algo,
        } => commands::cmd_adversary(&ctx, &kind, n, p, &eps, delta.as_deref(), &algo),
        Command::Verify { instance } => commands::cmd_verify(&ctx, &instance),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

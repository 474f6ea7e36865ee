//! `seqtrial`: group-sequential design, operating characteristics, estimation
//! after stopping and local-alternative limits from the command line.
//!
//! Exit codes: 0 ok, 1 input (or numerical) error, 2 infeasible design,
//! 3 trial path inconsistent with the boundaries.

mod commands;
mod design_file;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use seqtrial_core::Error;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn io(e: csv::Error) -> Self {
        Self::input(format!("write failed: {e}"))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible { .. } => 2,
            Error::PathInconsistent { .. } => 3,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "seqtrial", version, about = "Group sequential trial designs for a normal mean")]
struct Cli {
    /// Worker threads for simulation and parallel quadrature.
    #[arg(long, global = true, env = "SEQTRIAL_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct DesignArg {
    /// Design JSON (a spec with alternatives, or solved boundaries).
    design: PathBuf,
}

#[derive(Args, Debug)]
struct OutArg {
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Quad,
    Mc,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a design spec; writes the design JSON (with boundaries) and an OC summary.
    Design {
        spec: PathBuf,
        #[command(flatten)]
        out: OutArg,
        /// OC summary CSV at θ = 0 and each alternative.
        #[arg(long)]
        oc_out: Option<PathBuf>,
    },
    /// Stopping and rejection probabilities and expected sample size per θ.
    Oc {
        #[command(flatten)]
        design: DesignArg,
        /// Comma list or start:end:count.
        #[arg(long, allow_hyphen_values = true)]
        theta: String,
        #[arg(long, value_enum, default_value = "quad")]
        method: Method,
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// MLEs and observed information for a completed trial (CSV: stage,n,mean).
    Estimate {
        #[command(flatten)]
        design: DesignArg,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Stage-by-stage decisions for supplied stage statistics (CSV: stage,n,mean).
    Monitor {
        #[command(flatten)]
        design: DesignArg,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Expected information measures over a θ grid.
    Info {
        #[command(flatten)]
        design: DesignArg,
        #[arg(long, allow_hyphen_values = true)]
        theta_grid: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Limiting mixture CDF of the standardized estimate under θ = h/√n₁.
    Asymcdf {
        #[command(flatten)]
        design: DesignArg,
        #[arg(long, allow_hyphen_values = true)]
        h: f64,
        #[arg(long, allow_hyphen_values = true)]
        v_grid: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Bias, SD and MSE of both MLEs given the stopping stage, with histograms.
    Estimators {
        #[command(flatten)]
        design: DesignArg,
        #[arg(long, allow_hyphen_values = true)]
        theta: String,
        #[arg(long, value_enum, default_value = "mc")]
        method: Method,
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Drop searches that hit the bracket edge from the conditional moments.
        #[arg(long)]
        exclude_divergent: bool,
        /// Histogram CSV of the simulated estimates (mc only).
        #[arg(long)]
        hist_out: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        hist_bins: usize,
        /// Histogram range as lower:upper.
        #[arg(long, default_value = "-1:1", allow_hyphen_values = true)]
        hist_range: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Distance between finite-sample and limiting CDFs as the design is scaled up.
    Convergence {
        #[command(flatten)]
        design: DesignArg,
        #[arg(long, allow_hyphen_values = true)]
        h: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        scales: Vec<u64>,
        #[arg(long, default_value = "-4:4:101", allow_hyphen_values = true)]
        v_grid: String,
        /// Replicates for the centred-exponential Monte Carlo column; 0 skips it.
        #[arg(long, default_value_t = 0)]
        mc_reps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::input("threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    }
    use commands as c;
    match cli.command {
        Command::Design { spec, out, oc_out } => c::design(&spec, out.out.as_deref(), oc_out.as_deref()),
        Command::Oc {
            design,
            theta,
            method,
            reps,
            seed,
            out,
        } => c::oc(&design.design, &theta, method, reps, seed, out.out.as_deref()),
        Command::Estimate { design, data, out } => c::estimate(&design.design, &data, out.out.as_deref()),
        Command::Monitor { design, data, out } => c::monitor(&design.design, &data, out.out.as_deref()),
        Command::Info {
            design,
            theta_grid,
            out,
        } => c::info(&design.design, &theta_grid, out.out.as_deref()),
        Command::Asymcdf { design, h, v_grid, out } => c::asymcdf(&design.design, h, &v_grid, out.out.as_deref()),
        Command::Estimators {
            design,
            theta,
            method,
            reps,
            seed,
            exclude_divergent,
            hist_out,
            hist_bins,
            hist_range,
            out,
        } => c::estimators(
            &design.design,
            &c::EstimatorArgs {
                theta: &theta,
                method,
                reps,
                seed,
                exclude_divergent,
                hist_out: hist_out.as_deref(),
                hist_bins,
                hist_range: &hist_range,
            },
            out.out.as_deref(),
        ),
        Command::Convergence {
            design,
            h,
            scales,
            v_grid,
            mc_reps,
            seed,
            out,
        } => c::convergence(&design.design, h, &scales, &v_grid, mc_reps, seed, out.out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; clap's own code 2 would read as infeasible
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

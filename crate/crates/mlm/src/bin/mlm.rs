use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlm::cli::{self, BenchmarkArgs, FitArgs, GenS1Args, PredictArgs, SelectRefsArgs};

#[derive(Parser)]
#[command(
    name = "mlm",
    version,
    about = "Minimal Learning Machine: distance-matrix regression with multilateration output recovery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a CSV dataset and write it as JSON.
    Fit {
        /// Training data: comma-separated, one header row, numeric cells.
        data: PathBuf,
        /// Selection strategy: random, rs_kmeanspp, rs_kmedoidspp, rs_upgma, rs_maximin.
        #[arg(long)]
        method: String,
        /// Reference count as a percentage of the training size.
        #[arg(long)]
        krel: Option<f64>,
        /// Absolute reference count (alternative to --krel).
        #[arg(long)]
        k: Option<usize>,
        /// How many rightmost columns are targets.
        #[arg(long, default_value_t = 1)]
        targets: usize,
        /// Seed for the nondeterministic selection methods.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional ridge weight for the distance regression (0 = plain least squares).
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        /// Output model path (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict a CSV of inputs with a saved model.
    Predict {
        /// Model JSON written by `mlm fit`.
        model: PathBuf,
        /// Input rows: the model's feature columns (trailing target columns are ignored).
        inputs: PathBuf,
        /// Output CSV of predictions in original units.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print selected reference indices (and optionally their separation profile).
    SelectRefs {
        data: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rightmost columns excluded from the input space (0 = use every column).
        #[arg(long, default_value_t = 1)]
        targets: usize,
        /// Also print this many smallest pairwise distances among the selected rows.
        #[arg(long, default_value_t = 0)]
        profile: usize,
    },
    /// Run the nested cross-validation benchmark described by a JSON config.
    Benchmark { config: PathBuf },
    /// Generate the 2-D sine-sum synthetic dataset as CSV.
    GenS1 {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Draw inputs from a two-column points file instead of uniform sampling.
        #[arg(long)]
        points_file: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit {
            data,
            method,
            krel,
            k,
            targets,
            seed,
            ridge,
            out,
        } => cli::run_fit(&FitArgs {
            data,
            method,
            krel,
            k,
            targets,
            seed,
            ridge,
            out,
        }),
        Command::Predict { model, inputs, out } => {
            cli::run_predict(&PredictArgs { model, inputs, out })
        }
        Command::SelectRefs {
            data,
            method,
            k,
            seed,
            targets,
            profile,
        } => cli::run_select_refs(&SelectRefsArgs {
            data,
            method,
            k,
            seed,
            targets,
            profile,
        }),
        Command::Benchmark { config } => cli::run_benchmark(&BenchmarkArgs { config }),
        Command::GenS1 {
            n,
            seed,
            out,
            points_file,
        } => cli::run_gen_s1(&GenS1Args {
            n,
            seed,
            out,
            points_file,
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

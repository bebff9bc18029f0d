//! Implementations behind the `mlm` binary. Kept in the library so the
//! command surface is testable without spawning processes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::csvio;
use crate::data::Scaler;
use crate::evaluation::{
    self, gen_s1_synthetic, run_protocol, BenchmarkReport, ProtocolConfig, S1Source,
};
use crate::prediction::{predict_batch, BanPolicy};
use crate::refselect::{self, SelectionConfig, SelectionMethod};
use crate::training::{train_scaled, MlmModel, TrainConfig};

/// Command failures split by exit code: usage/validation problems exit 2,
/// runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub type CliResult = Result<(), CliError>;

fn parse_method(name: &str) -> Result<SelectionMethod, CliError> {
    name.parse::<SelectionMethod>().map_err(usage)
}

#[derive(Debug)]
pub struct FitArgs {
    pub data: PathBuf,
    pub method: String,
    pub krel: Option<f64>,
    pub k: Option<usize>,
    pub targets: usize,
    pub seed: u64,
    pub ridge: f64,
    pub out: PathBuf,
}

pub fn run_fit(args: &FitArgs) -> CliResult {
    let loaded = csvio::read_dataset(&args.data, args.targets).map_err(usage)?;
    let n = loaded.data.n();
    let method = parse_method(&args.method)?;
    let k = match (args.k, args.krel) {
        (Some(_), Some(_)) => return Err(CliError::Usage("pass --k or --krel, not both".into())),
        (None, None) => return Err(CliError::Usage("one of --k or --krel is required".into())),
        (Some(k), None) => k,
        (None, Some(krel)) => {
            if !(krel > 0.0 && krel <= 100.0) {
                return Err(CliError::Usage(format!(
                    "--krel {krel} must be in (0, 100]"
                )));
            }
            evaluation::krel_to_k(krel, n)
        }
    };
    if k == 0 || k > n {
        return Err(CliError::Usage(format!("K must be in [1, {n}], got {k}")));
    }

    let cfg = TrainConfig {
        method,
        k,
        seed: args.seed,
        ridge: args.ridge,
    };
    let mut model = train_scaled(&loaded.data, &cfg).map_err(runtime)?;
    let mut metadata = model.metadata().clone();
    metadata.feature_names = loaded.feature_names;
    metadata.target_names = loaded.target_names;
    model.set_metadata(metadata);
    model.write_json(&args.out).map_err(runtime)?;

    println!("n: {n}  p: {}  l: {}", model.p(), model.l());
    println!("k: {k}  k_rel: {}", 100.0 * k as f64 / n as f64);
    println!("fit_residual: {}", model.fit_residual_norm());
    println!("rank_deficient: {}", model.rank_deficient());
    println!("wrote: {}", args.out.display());
    Ok(())
}

#[derive(Debug)]
pub struct PredictArgs {
    pub model: PathBuf,
    pub inputs: PathBuf,
    pub out: PathBuf,
}

pub fn run_predict(args: &PredictArgs) -> CliResult {
    let model = MlmModel::read_json(&args.model).map_err(usage)?;
    let table = csvio::read_table(&args.inputs).map_err(usage)?;
    if table.header.is_empty() {
        // Empty input file: empty output, success.
        std::fs::write(&args.out, "").map_err(runtime)?;
        println!("predicted 0 rows -> {}", args.out.display());
        return Ok(());
    }
    let p = model.p();
    let l = model.l();
    // Accept a bare feature table or a full dataset file whose trailing
    // target columns are ignored, so training files round-trip directly.
    if table.width() != p && table.width() != p + l {
        return Err(CliError::Usage(format!(
            "input has {} columns; the model expects {p} feature columns \
             (optionally followed by its {l} target columns)",
            table.width()
        )));
    }

    let header: Vec<String> = if model.metadata().target_names.len() == l {
        model.metadata().target_names.clone()
    } else {
        (1..=l).map(|i| format!("y{i}")).collect()
    };
    if table.rows.is_empty() {
        csvio::write_table(&args.out, &header, &[]).map_err(runtime)?;
        println!("predicted 0 rows -> {}", args.out.display());
        return Ok(());
    }

    let m = table.rows.len();
    let raw = DMatrix::from_fn(m, p, |i, j| table.rows[i][j]);
    let scaled = model.input_scaler().apply(&raw).map_err(runtime)?;
    let batch = predict_batch(&model, &scaled, BanPolicy::default()).map_err(runtime)?;
    let unscaled = model
        .output_scaler()
        .invert(&batch.outputs)
        .map_err(runtime)?;
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|i| unscaled.row(i).iter().copied().collect())
        .collect();
    csvio::write_table(&args.out, &header, &rows).map_err(runtime)?;
    if batch.any_degenerate {
        eprintln!("warning: some rows used the minimum-norm fallback (degenerate anchors)");
    }
    println!("predicted {m} rows -> {}", args.out.display());
    Ok(())
}

#[derive(Debug)]
pub struct SelectRefsArgs {
    pub data: PathBuf,
    pub method: String,
    pub k: usize,
    pub seed: u64,
    /// Rightmost columns excluded from the input space (0 = none).
    pub targets: usize,
    /// When > 0, also print this many smallest pairwise distances.
    pub profile: usize,
}

pub fn run_select_refs(args: &SelectRefsArgs) -> CliResult {
    let table = csvio::read_table(&args.data).map_err(usage)?;
    if table.header.is_empty() || table.rows.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no data rows",
            args.data.display()
        )));
    }
    if table.width() <= args.targets {
        return Err(CliError::Usage(format!(
            "{} columns cannot hold {} target(s) plus at least one feature",
            table.width(),
            args.targets
        )));
    }
    let method = parse_method(&args.method)?;
    let n = table.rows.len();
    if args.k == 0 || args.k > n {
        return Err(CliError::Usage(format!(
            "K must be in [1, {n}], got {}",
            args.k
        )));
    }
    let p = table.width() - args.targets;
    let raw = DMatrix::from_fn(n, p, |i, j| table.rows[i][j]);
    // Same convention as fit: selection runs on [0, 1]-scaled features.
    let scaler = Scaler::fit(&raw).map_err(usage)?;
    let points = scaler.apply(&raw).map_err(runtime)?;

    let cfg = SelectionConfig {
        method,
        k: args.k,
        seed: args.seed,
    };
    let indices = refselect::select(&points, &cfg).map_err(runtime)?;
    let rendered: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
    println!("indices: {}", rendered.join(","));

    if args.profile > 0 {
        let profile = refselect::pairwise_separation_profile(&points, &indices, args.profile)
            .map_err(usage)?;
        let rendered: Vec<String> = profile.iter().map(|d| d.to_string()).collect();
        println!("profile: {}", rendered.join(","));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchmarkConfig {
    version: u32,
    seed: u64,
    datasets: Vec<DatasetSpec>,
    methods: Vec<SelectionMethod>,
    krel_grid: Vec<f64>,
    #[serde(default)]
    outer_folds: Option<usize>,
    #[serde(default)]
    inner_folds: Option<usize>,
    #[serde(default)]
    parsimony_tol: Option<f64>,
    output: OutputSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetSpec {
    name: String,
    #[serde(default)]
    csv: Option<CsvSourceSpec>,
    #[serde(default)]
    gen_s1: Option<GenS1Spec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CsvSourceSpec {
    path: String,
    #[serde(default = "default_targets")]
    targets: usize,
}

fn default_targets() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenS1Spec {
    n: usize,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    points_file: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSpec {
    #[serde(default)]
    json: Option<String>,
    #[serde(default)]
    csv: Option<String>,
}

#[derive(Debug)]
pub struct BenchmarkArgs {
    pub config: PathBuf,
}

pub fn run_benchmark(args: &BenchmarkArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.config).map_err(usage)?;
    let config: BenchmarkConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.config.display())))?;
    if config.version != 1 {
        return Err(CliError::Usage(format!(
            "unsupported config version {} (expected 1)",
            config.version
        )));
    }
    if config.datasets.is_empty() {
        return Err(CliError::Usage("config lists no datasets".into()));
    }
    if config.output.json.is_none() && config.output.csv.is_none() {
        return Err(CliError::Usage(
            "config output names neither a json nor a csv file".into(),
        ));
    }

    let started = Instant::now();
    let mut reports = Vec::with_capacity(config.datasets.len());
    for (idx, spec) in config.datasets.iter().enumerate() {
        let data = match (&spec.csv, &spec.gen_s1) {
            (Some(csv), None) => {
                csvio::read_dataset(Path::new(&csv.path), csv.targets)
                    .map_err(usage)?
                    .data
            }
            (None, Some(gen)) => {
                let seed = gen
                    .seed
                    .unwrap_or_else(|| evaluation::derive_seed(config.seed, &[4, idx as u64]));
                let source = match &gen.points_file {
                    Some(path) => S1Source::PointsFile(PathBuf::from(path)),
                    None => S1Source::Uniform,
                };
                gen_s1_synthetic(gen.n, seed, &source).map_err(usage)?
            }
            _ => {
                return Err(CliError::Usage(format!(
                    "dataset '{}' must set exactly one of 'csv' or 'gen_s1'",
                    spec.name
                )))
            }
        };

        let mut protocol = ProtocolConfig::new(
            config.methods.clone(),
            config.krel_grid.clone(),
            config.seed,
        );
        if let Some(outer) = config.outer_folds {
            protocol.outer_folds = outer;
        }
        if let Some(inner) = config.inner_folds {
            protocol.inner_folds = inner;
        }
        protocol.parsimony_tol = config.parsimony_tol;

        eprintln!(
            "running {} (n = {}, {} methods, {} grid points)...",
            spec.name,
            data.n(),
            protocol.methods.len(),
            protocol.krel_grid.len()
        );
        let report = run_protocol(&spec.name, &data, &protocol).map_err(runtime)?;
        print_dataset_summary(&report, &protocol.methods);
        reports.push(report);
    }

    let report = BenchmarkReport::new(
        config.seed,
        config.methods,
        config.krel_grid,
        reports,
        started.elapsed().as_secs_f64(),
    );
    if let Some(path) = &config.output.json {
        std::fs::write(path, report.to_json().map_err(runtime)?).map_err(runtime)?;
        println!("wrote: {path}");
    }
    if let Some(path) = &config.output.csv {
        std::fs::write(path, report.to_csv()).map_err(runtime)?;
        println!("wrote: {path}");
    }
    Ok(())
}

fn print_dataset_summary(report: &evaluation::DatasetReport, methods: &[SelectionMethod]) {
    println!(
        "{}: n = {}, hygiene {}/{} checks passed",
        report.dataset,
        report.n,
        report.hygiene_checks - report.hygiene_violations,
        report.hygiene_checks
    );
    for &method in methods {
        let chosen: Vec<String> = report
            .chosen
            .iter()
            .filter(|c| c.method == method)
            .map(|c| format!("{}", c.krel))
            .collect();
        let test: Vec<f64> = report
            .chosen
            .iter()
            .filter(|c| c.method == method)
            .flat_map(|c| c.test_rmses.iter().copied())
            .collect();
        let mean = if test.is_empty() {
            f64::NAN
        } else {
            test.iter().sum::<f64>() / test.len() as f64
        };
        println!(
            "  {:<14} chosen K_rel = [{}]  mean test RMSE at chosen = {:.6}",
            method.to_string(),
            chosen.join(","),
            mean
        );
    }
}

#[derive(Debug)]
pub struct GenS1Args {
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub points_file: Option<PathBuf>,
}

pub fn run_gen_s1(args: &GenS1Args) -> CliResult {
    let source = match &args.points_file {
        Some(path) => S1Source::PointsFile(path.clone()),
        None => S1Source::Uniform,
    };
    let data = gen_s1_synthetic(args.n, args.seed, &source).map_err(usage)?;
    csvio::write_dataset(&args.out, &data, &["x1".into(), "x2".into()], &["y".into()])
        .map_err(runtime)?;
    println!("wrote {} rows -> {}", data.n(), args.out.display());
    Ok(())
}

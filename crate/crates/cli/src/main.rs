//! `cgpt`: generate synthetic data, train forecasters, evaluate checkpoints
//! and build result tables.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use cgpt::data::{generate, write_csv, write_graph_sidecar, Split, SyntheticConfig, SyntheticKind};
use cgpt::experiment::{collect_results, evaluate_checkpoint, run_experiment, ExperimentSpec};
use cgpt::report::{build_table, Experiment};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "cgpt",
    version,
    about = "Causally guided pairwise transformer experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV plus a causal-edge sidecar.
    GenData(GenDataArgs),
    /// Train one model family over a list of seeds.
    Train(TrainArgs),
    /// Score a stored checkpoint on one split.
    Eval(EvalArgs),
    /// Build an experiment table from stored results.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Additive,
    Interactive,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Edge sidecar destination, `<out stem>.graph.txt` by default.
    #[arg(long)]
    graph: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// `key=value` file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    /// leaky, strict, pure, dlinear or mlp.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    context: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    /// yes or no.
    #[arg(long)]
    revin: Option<String>,
    /// e.g. `0-4` or `0,2,7`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset root, overriding `CGPT_DATA_DIR`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Any other setting, e.g. `--set lr=5e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    settings: Vec<String>,
    #[arg(long)]
    overwrite: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    results: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    experiment: u8,
    /// Context length to select; needs `--horizon`.
    #[arg(long, requires = "horizon")]
    context: Option<usize>,
    #[arg(long, requires = "context")]
    horizon: Option<usize>,
    /// Table destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn gen_data(args: GenDataArgs) -> Result<(), Failure> {
    let kind = match args.kind {
        Kind::Additive => SyntheticKind::Additive,
        Kind::Interactive => SyntheticKind::Interactive,
    };
    let ds =
        generate(kind, &SyntheticConfig::for_kind(kind, args.seed)).map_err(anyhow::Error::from)?;
    let graph = args.graph.unwrap_or_else(|| sidecar_path(&args.out));
    write_csv(&ds, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    write_graph_sidecar(&ds, &graph).with_context(|| format!("writing {}", graph.display()))?;
    println!(
        "wrote {} rows to {} and {} edges to {}",
        ds.n_rows(),
        args.out.display(),
        ds.graph().len(),
        graph.display()
    );
    Ok(())
}

fn sidecar_path(csv: &Path) -> PathBuf {
    let stem = csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv.with_file_name(format!("{stem}.graph.txt"))
}

fn build_spec(args: &TrainArgs) -> anyhow::Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    if let Some(path) = &args.config {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        spec.apply_config_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    let flags = [
        ("dataset", &args.dataset),
        ("model", &args.model),
        ("context", &args.context),
        ("horizon", &args.horizon),
        ("revin", &args.revin),
        ("seeds", &args.seeds),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            spec.set(key, v).with_context(|| format!("--{key}"))?;
        }
    }
    for s in &args.settings {
        let (k, v) = s
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {s:?}"))?;
        spec.set(k, v).with_context(|| format!("--set {s}"))?;
    }
    if let Some(out) = &args.out {
        spec.out = out.clone();
    }
    if let Some(dir) = &args.data_dir {
        spec.data_dir = Some(dir.clone());
    }
    spec.validate()?;
    Ok(spec)
}

fn train(args: TrainArgs) -> Result<(), Failure> {
    let spec = build_spec(&args).map_err(usage)?;
    println!(
        "{} {} {}->{} revin={} seeds {:?}",
        spec.dataset.id(),
        spec.model.name(),
        spec.context_len,
        spec.horizon,
        if spec.revin { "yes" } else { "no" },
        spec.seeds
    );
    run_experiment(&spec, args.overwrite, |run| {
        let r = &run.result;
        println!(
            "seed {}: test MSE {:.6} MAE {:.6}, best epoch {} of {}, {:.1}s",
            r.seed,
            r.test_mse,
            r.test_mae,
            r.best_epoch,
            r.val_losses.len(),
            run.seconds
        );
    })
    .map_err(anyhow::Error::from)?;
    println!("results under {}", spec.out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    };
    let (metrics, arch) = evaluate_checkpoint(&args.checkpoint, split, args.data_dir.as_deref())
        .with_context(|| format!("evaluating {}", args.checkpoint.display()))?;
    println!(
        "model={} context={} horizon={} mae={:.6} mse={:.6}",
        arch.kind.name(),
        arch.context_len,
        arch.horizon,
        metrics.mae,
        metrics.mse
    );
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let experiment = Experiment::from_number(args.experiment).map_err(usage)?;
    let task = args.context.zip(args.horizon);
    let records = collect_results(&args.results).map_err(anyhow::Error::from)?;
    let table = build_table(&records, experiment, task).map_err(anyhow::Error::from)?;
    match &args.output {
        Some(path) => {
            fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use focilab::data::{load_dataset, make_blobs, save_dataset, BlobSpec};
use focilab::history::PredictionHistory;
use focilab::metrics::{distribution_summary, quadrant_analysis};
use focilab::noise::{build_transition, corrupt_labels, realized_noise_rate, NoiseKind};
use focilab::nn::PROB_FLOOR;
use focilab::report::{
    emit_report, emit_summary, format_summary_table, read_history_csv, read_metrics_csv, summarize,
    write_distribution_csv, write_quadrant_csv,
};
use focilab::{run_experiment, Error, ExperimentConfig, Method, Result};

#[derive(Debug, Parser)]
#[command(name = "focilab", version, about = "Label-noise injection and robust reweighted training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Corrupt the labels of a dataset CSV.
    Corrupt(CorruptArgs),
    /// Train every configured seed and write metrics, summary and charts.
    Train(TrainArgs),
    /// Quadrant and distribution analysis of a prediction-history dump.
    Analyze(AnalyzeArgs),
    /// Summary table and charts from existing metrics CSVs.
    Report(ReportArgs),
    /// Write a clean Gaussian-blob train/test pair.
    Blobs(BlobArgs),
}

#[derive(Debug, Args)]
struct CorruptArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// asymmetric, symmetric_excluding, symmetric_including, mixed or nearest
    #[arg(long)]
    noise: String,
    #[arg(long)]
    tau: f64,
    /// Symmetric share of tau (mixed noise).
    #[arg(long, default_value_t = 0.0)]
    tau_sym: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// k x k confusion counts as CSV without header (nearest noise).
    #[arg(long)]
    confusion: Option<PathBuf>,
    /// Number of classes; defaults to one more than the largest label.
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    method: Option<String>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Noise rate, applied both to corruption and to the FOCI high-loss screen.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    gamma: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// History dump (`sample_id,epoch,prob_given_label,predicted_label`).
    #[arg(long)]
    history: PathBuf,
    /// Training set CSV matching the dump, for the clean mask.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    epoch: usize,
    #[arg(long, default_value_t = 15)]
    q: usize,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Metrics CSVs named `metrics_<method>_seed<seed>.csv`.
    #[arg(required = true)]
    metrics: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct BlobArgs {
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 2.0)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

fn read_confusion(path: &Path) -> Result<Vec<Vec<u64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|c| {
                    c.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::Config(format!("bad confusion count {c:?}")))
                })
                .collect()
        })
        .collect()
}

fn corrupt(args: CorruptArgs) -> Result<()> {
    let kind: NoiseKind = args.noise.parse()?;
    let data = load_dataset(&args.input, args.classes)?;
    let confusion = args.confusion.as_deref().map(read_confusion).transpose()?;
    let transition = build_transition(kind, data.num_classes, args.tau, Some(args.tau_sym), confusion.as_deref())?;
    let observed = corrupt_labels(&data.true_labels, &transition, args.seed)?;
    let rate = realized_noise_rate(&data.true_labels, &observed)?;
    save_dataset(&data.with_observed(observed)?, &args.output)?;
    eprintln!("{} samples, realized noise rate {rate:.4}", data.len());
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(m) = &args.method {
        cfg.method = m.parse::<Method>()?;
    }
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    if let Some(t) = args.tau {
        cfg.noise.tau = t;
        cfg.foci.tau = t;
        cfg.noise.tau_sym = cfg.noise.tau_sym.min(t);
    }
    if let Some(q) = args.q {
        cfg.foci.q = q;
    }
    if let Some(g) = args.gamma {
        cfg.foci.gamma = g;
    }
    if let Some(e) = args.epsilon {
        cfg.foci.epsilon = e;
    }
    if let Some(d) = args.out_dir {
        cfg.out_dir = d;
    }
    cfg.validate()?;
    let results = run_experiment(&cfg)?;
    let written = emit_report(&results, &cfg.out_dir)?;
    let series: Vec<_> = results.iter().map(|r| r.series.clone()).collect();
    print!("{}", format_summary_table(&summarize(&series)));
    eprintln!("wrote {} files to {}", written.len(), cfg.out_dir.display());
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let data = load_dataset(&args.dataset, None)?;
    let mut rows = read_history_csv(&args.history)?;
    rows.retain(|r| r.epoch <= args.epoch);
    rows.sort_by_key(|r| (r.epoch, r.sample_id));
    let n = data.len();
    let mut history = PredictionHistory::new(n, args.q, data.num_classes)?;
    let mut losses = vec![None; n];
    for r in &rows {
        history.record(r.sample_id, r.prob_given_label, r.predicted_label)?;
        if r.epoch == args.epoch {
            losses[r.sample_id] = Some(-r.prob_given_label.max(PROB_FLOOR).ln());
        }
    }
    let losses: Vec<f64> = losses
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::Config(format!("sample {i} has no record at epoch {}", args.epoch))))
        .collect::<Result<_>>()?;
    let unc: Vec<f64> = (0..n).map(|i| history.variance_given_label(i)).collect::<Result<_>>()?;
    let clean = data.clean_mask();

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Config(format!("{}: {e}", args.out_dir.display())))?;
    let quad = quadrant_analysis(&losses, &unc, &clean, args.tau, args.epoch)?;
    write_quadrant_csv(&quad, &args.out_dir.join("quadrant.csv"))?;
    write_distribution_csv(
        &distribution_summary(&losses, &clean, args.bins)?,
        &args.out_dir.join("distribution_loss.csv"),
    )?;
    write_distribution_csv(
        &distribution_summary(&unc, &clean, args.bins)?,
        &args.out_dir.join("distribution_uncertainty.csv"),
    )?;
    for (name, p) in focilab::QuadrantReport::NAMES.iter().zip(quad.proportions()) {
        println!("{name:<26} {p:.4}");
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let series = args
        .metrics
        .iter()
        .map(|p| read_metrics_csv(p))
        .collect::<Result<Vec<_>>>()?;
    emit_summary(&series, &args.out_dir)?;
    print!("{}", format_summary_table(&summarize(&series)));
    Ok(())
}

fn blobs(args: BlobArgs) -> Result<()> {
    let split = make_blobs(&BlobSpec {
        k: args.k,
        n_train: args.n_train,
        n_test: args.n_test,
        dim: args.dim,
        radius: args.radius,
        spread: args.spread,
        seed: args.seed,
    })?;
    save_dataset(&split.train, &args.train_out)?;
    save_dataset(&split.test, &args.test_out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Corrupt(a) => corrupt(a),
        Command::Train(a) => train(a),
        Command::Analyze(a) => analyze(a),
        Command::Report(a) => report(a),
        Command::Blobs(a) => blobs(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

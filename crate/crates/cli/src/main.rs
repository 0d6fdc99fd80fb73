use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use dfnet::data::{load_dataset_sized, synth_generate, DatasetStats};
use dfnet::evaluation::report::{emit_report, load_external_models, load_trace, performance_table, save_trace};
use dfnet::evaluation::{FoldEvaluation, Metric, MetricsReport};
use dfnet::gradcheck::{check_primitives, grad_check, GradCheckConfig, GradCheckReport};
use dfnet::training::{evaluate, load_checkpoint, make_folds, save_checkpoint, train, Checkpoint, TrainConfig};
use dfnet::{Network, NetworkConfig, Tensor};

const LOG_ENV: &str = "DFNET_LOG";
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "dfnet", version, about = "Dual-Feedback CNN for chest X-ray opacity classification")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one fold and write a checkpoint plus a per-epoch trace.
    Train(TrainArgs),
    /// Train with the p2 and/or p3 pathways removed.
    Ablate(TrainArgs),
    /// Evaluate checkpoints on the validation split.
    Eval {
        /// One checkpoint per fold; repeat for a multi-fold table.
        #[arg(long, required = true, num_args = 1..)]
        ckpt: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// JSON report with confusion counts and metrics per checkpoint.
        #[arg(long)]
        report: PathBuf,
    },
    /// Compare reverse-mode gradients with central finite differences.
    Gradcheck {
        /// Check the three-block network on 16x16 inputs (takes minutes).
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the fold partition of the opacity images.
    Partition {
        #[arg(long)]
        normal: usize,
        #[arg(long)]
        opacity: usize,
        #[arg(long, default_value_t = 3)]
        folds: usize,
    },
    /// Write a synthetic NORMAL/OPACITY dataset as PNG files.
    Synth {
        /// Training images per class.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Validation images per class; defaults to half of `--n`.
        #[arg(long)]
        val_n: Option<usize>,
    },
    /// Print the layer table and parameter count.
    Summary {
        #[arg(long, conflicts_with = "config")]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Emit the APT series and summary for a trace, optionally with other models.
    Report {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint whose parameter count is used.
        #[arg(long, required_unless_present = "params_m")]
        ckpt: Option<PathBuf>,
        /// Parameter count in millions, instead of a checkpoint.
        #[arg(long, conflicts_with = "ckpt")]
        params_m: Option<f64>,
        /// JSON array of {name, accuracy_per_epoch, params_millions}.
        #[arg(long)]
        external: Option<PathBuf>,
        #[arg(long, default_value = "DF-CNN")]
        name: String,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// 1-based fold index.
    #[arg(long)]
    fold: usize,
    /// JSON file with optional `network` and `train` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    /// Overrides the config seed (initialization and shuffling).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    disable_p2: bool,
    #[arg(long)]
    disable_p3: bool,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
struct ConfigFile {
    network: NetworkConfig,
    train: TrainConfig,
}

fn read_config(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
        None => Ok(ConfigFile::default()),
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    ensure!(path.is_dir(), "{what} directory {} does not exist", path.display());
    Ok(())
}

fn require_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        require_dir(parent, "output")?;
    }
    Ok(())
}

fn print_stats(split: &str, s: &DatasetStats) {
    println!(
        "{split}: normal {} opacity {} | width {:.3} ± {:.3} | height {:.3} ± {:.3}",
        s.normal, s.opacity, s.width_mean, s.width_std, s.height_mean, s.height_std
    );
}

fn cell(m: Metric) -> String {
    m.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
}

fn print_metrics(label: &str, m: &MetricsReport) {
    let f = cell;
    println!(
        "{label}: acc {} sen {} spe {} f1 {} apt {} (params {:.6}M)",
        f(m.acc),
        f(m.sen),
        f(m.spe),
        f(m.f1),
        f(m.apt),
        m.params_millions
    );
}

fn run_train(args: &TrainArgs, ablation_required: bool) -> Result<()> {
    if ablation_required && !(args.disable_p2 || args.disable_p3) {
        bail!("ablate needs --disable-p2, --disable-p3 or both");
    }
    require_dir(&args.data, "data")?;
    require_parent(&args.out)?;
    require_parent(&args.trace)?;
    let mut cfg = read_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    cfg.network.use_p2 &= !args.disable_p2;
    cfg.network.use_p3 &= !args.disable_p3;
    cfg.network.validate()?;
    cfg.train.validate()?;

    let dataset = load_dataset_sized(&args.data, cfg.network.input_size)?;
    print_stats("train", &dataset.train.stats);
    print_stats("val", &dataset.val.stats);
    let folds = make_folds(dataset.train.normal.len(), dataset.train.opacity.len(), args.folds)?;
    let fold = folds
        .get(args.fold.wrapping_sub(1))
        .cloned()
        .with_context(|| format!("fold {} is outside 1..={}", args.fold, folds.len()))?;
    info!("fold {}: opacity slice {:?}", fold.index, fold.opacity);

    let mut network = Network::<f32>::new(cfg.network.clone(), cfg.train.seed)?;
    println!("parameters: {}", network.param_count());
    let outcome = train(&mut network, &fold, &dataset.train, &dataset.val, &cfg.train)?;
    save_trace(&args.trace, &outcome.trace)?;
    let checkpoint = Checkpoint {
        network,
        adam: outcome.adam,
        train: cfg.train,
        fold: Some(fold),
    };
    save_checkpoint(&args.out, &checkpoint)?;
    println!(
        "trained {} steps: loss {:.6} -> {:.6}",
        outcome.steps, outcome.initial_loss, outcome.final_loss
    );
    if let Some(last) = outcome.trace.last() {
        let m = MetricsReport {
            acc: last.val_acc,
            sen: last.val_sen,
            spe: last.val_spe,
            f1: last.val_f1,
            apt: last.val_apt,
            params_millions: checkpoint.network.params_millions(),
        };
        print_metrics("validation", &m);
    }
    Ok(())
}

fn run_eval(ckpts: &[PathBuf], data: &Path, report: &Path) -> Result<()> {
    require_dir(data, "data")?;
    require_parent(report)?;
    for c in ckpts {
        ensure!(c.is_file(), "checkpoint {} does not exist", c.display());
    }
    let mut rows = Vec::with_capacity(ckpts.len());
    for (i, path) in ckpts.iter().enumerate() {
        let ck = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
        let dataset = load_dataset_sized(data, ck.network.config().input_size)?;
        let eval = evaluate(&ck.network, &dataset.val)?;
        let partition = match &ck.fold {
            Some(f) => format!("Fold-{}", f.index),
            None => format!("Model-{}", i + 1),
        };
        print_metrics(&partition, &eval.metrics);
        rows.push(FoldEvaluation {
            partition,
            confusion: eval.confusion,
            metrics: eval.metrics,
        });
    }
    print!("{}", performance_table(&rows));
    fs::write(report, serde_json::to_vec_pretty(&rows)?)?;
    Ok(())
}

/// One normal and one opacity synthetic image as a batch of two.
fn pair_input(size: usize, seed: u64) -> Result<Tensor<f64>> {
    let set = synth_generate(1, size, seed)?;
    Ok(Tensor::stack(&[set.normal[0].clone(), set.opacity[0].clone()])?.cast())
}

fn report_line(name: &str, r: &GradCheckReport) {
    println!(
        "{name:<28} max rel error {:.3e} over {} elements ({} at kinks)",
        r.max_rel_error(),
        r.checked(),
        r.kinks()
    );
}

fn run_gradcheck(full: bool, seed: u64) -> Result<()> {
    let config = GradCheckConfig::default();
    let mut worst: f64 = 0.0;
    for (name, report) in check_primitives(seed, &config)? {
        report_line(&name, &report);
        worst = worst.max(report.max_rel_error());
    }
    let (filters, size): (&[usize], usize) = if full { (&[8, 12, 16], 16) } else { (&[2, 4], 8) };
    let network = Network::<f64>::new(NetworkConfig::scaled(filters, size), seed)?;
    let input = pair_input(size, seed.wrapping_add(1))?;
    let report = grad_check(&network, &input, &config)?;
    report_line(&format!("network {filters:?} @ {size}x{size}"), &report);
    worst = worst.max(report.max_rel_error());
    println!("max relative error: {worst:.3e}");
    ensure!(worst < GRADCHECK_TOLERANCE, "max relative error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}");
    Ok(())
}

fn run_partition(normal: usize, opacity: usize, folds: usize) -> Result<()> {
    let specs = make_folds(normal, opacity, folds)?;
    println!("| fold | normal | opacity range | opacity count |");
    for f in &specs {
        println!(
            "| {:>4} | {:>6} | {:>13} | {:>13} |",
            f.index,
            f.normal.len(),
            format!("{}..{}", f.opacity.start, f.opacity.end),
            f.opacity.len()
        );
    }
    let sizes: Vec<String> = specs.iter().map(|f| f.opacity.len().to_string()).collect();
    println!("opacity slice sizes: {}", sizes.join("/"));
    Ok(())
}

fn run_synth(n: usize, size: usize, seed: u64, out: &Path, val_n: Option<usize>) -> Result<()> {
    let val_n = val_n.unwrap_or((n / 2).max(1));
    let train_set = synth_generate(n, size, seed)?;
    let val_set = synth_generate(val_n, size, seed.wrapping_add(1))?;
    train_set.write_png(&out.join("train"))?;
    val_set.write_png(&out.join("val"))?;
    println!(
        "wrote {n}+{n} training and {val_n}+{val_n} validation images of {size}x{size} to {}",
        out.display()
    );
    Ok(())
}

fn run_summary(ckpt: Option<&Path>, config: Option<&Path>) -> Result<()> {
    let network = match ckpt {
        Some(p) => load_checkpoint(p)?.network,
        None => Network::<f32>::new(read_config(config)?.network, 0)?,
    };
    print!("{}", network.render_summary());
    Ok(())
}

fn run_report(
    trace: &Path,
    out: &Path,
    ckpt: Option<&Path>,
    params_m: Option<f64>,
    external: Option<&Path>,
    name: &str,
) -> Result<()> {
    let rows = load_trace(trace)?;
    let params = match (ckpt, params_m) {
        (Some(p), _) => load_checkpoint(p)?.network.params_millions(),
        (None, Some(m)) => m,
        (None, None) => bail!("give --ckpt or --params-m"),
    };
    let external = match external {
        Some(p) => load_external_models(p)?,
        None => Vec::new(),
    };
    let files = emit_report(out, name, params, &rows, &external)?;
    println!("wrote {} and {}", files.series_csv.display(), files.summary_json.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => run_train(&args, false),
        Command::Ablate(args) => run_train(&args, true),
        Command::Eval { ckpt, data, report } => run_eval(&ckpt, &data, &report),
        Command::Gradcheck { full, seed } => run_gradcheck(full, seed),
        Command::Partition { normal, opacity, folds } => run_partition(normal, opacity, folds),
        Command::Synth {
            n,
            size,
            seed,
            out,
            val_n,
        } => run_synth(n, size, seed, &out, val_n),
        Command::Summary { ckpt, config } => run_summary(ckpt.as_deref(), config.as_deref()),
        Command::Report {
            trace,
            out,
            ckpt,
            params_m,
            external,
            name,
        } => run_report(&trace, &out, ckpt.as_deref(), params_m, external.as_deref(), &name),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

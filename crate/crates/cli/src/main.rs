use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wmlp::config::{RunConfig, KEYS};
use wmlp::dataset::{scan_dataset, split_manifest, Class};
use wmlp::dragonfly::{optimize, rastrigin, DaConfig};
use wmlp::pipeline::{evaluate_checkpoint, run_pipeline, trace_csv, Evaluation};
use wmlp::synth::synth_generate;

#[derive(Parser)]
#[command(
    name = "wmlp",
    version,
    about = "Wavelet + MLP CT classifier with Dragonfly tuning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a dataset directory and report per-class counts and the split.
    Ingest {
        root: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        train_ratio: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write a synthetic three-class corpus.
    Synth {
        /// Images per class.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        dir: PathBuf,
    },
    /// Train and evaluate without tuning.
    Train(RunArgs),
    /// Train, tune (learning rate, hidden width) with the swarm, retrain and evaluate.
    Tune(RunArgs),
    /// Score a saved checkpoint on a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "eval")]
        out: PathBuf,
    },
    /// Run the swarm on the Rastrigin function and write trace.csv.
    BenchmarkDa {
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 30)]
        pop: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// List the configuration keys.
    Keys,
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any key, e.g. `--set epochs=30`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Per-key overrides applied after the config file.
#[derive(Args)]
struct Overrides {
    #[arg(long, alias = "input_mode")]
    input_mode: Option<String>,
    #[arg(long, alias = "learning_rate")]
    learning_rate: Option<String>,
    #[arg(long, alias = "batch_size")]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    l2: Option<String>,
    #[arg(long, alias = "early_stop_patience")]
    early_stop_patience: Option<String>,
    #[arg(long, alias = "hidden_dim")]
    hidden_dim: Option<String>,
    #[arg(long, alias = "train_ratio")]
    train_ratio: Option<String>,
    #[arg(long, alias = "val_ratio")]
    val_ratio: Option<String>,
    #[arg(long, alias = "tune_pop")]
    tune_pop: Option<String>,
    #[arg(long, alias = "tune_max_iter")]
    tune_max_iter: Option<String>,
    #[arg(long, alias = "tune_epochs")]
    tune_epochs: Option<String>,
    #[arg(long, alias = "data_root")]
    data_root: Option<String>,
    #[arg(long, alias = "output_dir")]
    output_dir: Option<String>,
    #[arg(long, alias = "debug_dir")]
    debug_dir: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        [
            ("input_mode", &self.input_mode),
            ("learning_rate", &self.learning_rate),
            ("batch_size", &self.batch_size),
            ("epochs", &self.epochs),
            ("seed", &self.seed),
            ("l2", &self.l2),
            ("early_stop_patience", &self.early_stop_patience),
            ("hidden_dim", &self.hidden_dim),
            ("train_ratio", &self.train_ratio),
            ("val_ratio", &self.val_ratio),
            ("tune_pop", &self.tune_pop),
            ("tune_max_iter", &self.tune_max_iter),
            ("tune_epochs", &self.tune_epochs),
            ("data_root", &self.data_root),
            ("output_dir", &self.output_dir),
            ("debug_dir", &self.debug_dir),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    for (key, value) in args.overrides.pairs() {
        cfg.set(key, value, None)?;
    }
    for item in &args.set {
        let Some((key, value)) = item.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{item}`");
        };
        cfg.set(key.trim(), value.trim(), None)?;
    }
    if cfg.data_root.is_none() {
        bail!("no data_root given; set it in the config file or pass --data-root");
    }
    Ok(cfg)
}

fn print_evaluation(eval: &Evaluation) {
    let m = &eval.metrics;
    println!("accuracy   {:.4}", m.accuracy);
    println!("precision  {:.4} (macro)", m.macro_precision);
    println!("recall     {:.4} (macro)", m.macro_recall);
    println!("f1         {:.4} (macro)", m.macro_f1);
    for (c, auc) in m.auc.iter().enumerate() {
        match auc {
            Some(a) => println!("auc {:<9} {a:.4}", Class::ALL[c].dir_name()),
            None => println!(
                "auc {:<9} undefined (single-class test set)",
                Class::ALL[c].dir_name()
            ),
        }
    }
}

fn run(args: RunArgs, tune: bool) -> Result<()> {
    let mut cfg = load_config(&args)?;
    cfg.skip_tuning = !tune;
    let out = run_pipeline(&cfg)?;
    if let Some(t) = &out.tuning {
        println!(
            "tuned      lr {} hidden {} (validation accuracy {:.4})",
            t.learning_rate,
            t.hidden,
            t.validation_accuracy()
        );
    }
    print_evaluation(&out.evaluation);
    println!("artifacts  {}", cfg.output_dir.display());
    Ok(())
}

fn ingest(root: &Path, train_ratio: f64, seed: u64) -> Result<()> {
    let m = scan_dataset(root)?;
    for w in &m.warnings {
        log::warn!("{w}");
    }
    for c in Class::ALL {
        println!("{:<10} {}", c.dir_name(), m.counts[c.index()]);
    }
    println!("{:<10} {}", "total", m.len());
    let split = split_manifest(&m, train_ratio, seed)?;
    println!(
        "split      {} train / {} test",
        split.train.len(),
        split.test.len()
    );
    Ok(())
}

fn benchmark(dim: usize, pop: usize, iters: usize, seed: u64, out: &Path) -> Result<()> {
    let cfg = DaConfig::uniform_bounds(dim, -5.12, 5.12, pop, iters, seed);
    let r = optimize(&rastrigin::<f64>, &cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("trace.csv");
    fs::write(&path, trace_csv(&r.trace)).with_context(|| format!("writing {}", path.display()))?;
    println!("initial best {:.6}", r.initial_best);
    println!("final best   {:.6}", r.best_fitness);
    println!("trace        {}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            root,
            train_ratio,
            seed,
        } => ingest(&root, train_ratio, seed),
        Command::Synth { n, seed, dir } => {
            let m = synth_generate(n, seed, &dir)?;
            println!("wrote {} images to {}", m.len(), dir.display());
            Ok(())
        }
        Command::Train(args) => run(args, false),
        Command::Tune(args) => run(args, true),
        Command::Evaluate {
            checkpoint,
            data,
            out,
        } => {
            let eval = evaluate_checkpoint(&checkpoint, &data, &out)?;
            print_evaluation(&eval);
            println!("artifacts  {}", out.display());
            Ok(())
        }
        Command::BenchmarkDa {
            dim,
            pop,
            iters,
            seed,
            out,
        } => benchmark(dim, pop, iters, seed, &out),
        Command::Keys => {
            for (k, d) in KEYS {
                println!("{k:<20} {d}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

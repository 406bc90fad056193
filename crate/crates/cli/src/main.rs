use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use hashvocab::data::{generate_synthetic, load_interactions, write_interactions};
use hashvocab::eval::{throughput_bench, write_latency_csv, BenchMode};
use hashvocab::pipeline::{
    self, evaluate_run, read_run, DataConfig, run_ablation, run_probe, run_sweep, train_run, write_prepared, write_run, Dataset, EvalSplit,
    RunConfig, RunMetrics,
};

#[derive(Parser)]
#[command(name = "hashvocab", version, about = "Item-token recommender with a hash-compressed item vocabulary")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override such as `train.learning_rate=1e-3`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory, overriding `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let mut cfg = base.with_overrides(self.overrides.iter().map(String::as_str))?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Validation,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Split an interaction log into train/validation/test manifests.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        max_history: usize,
        #[arg(long, default_value_t = 0.05)]
        val_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic corpus as an interaction log plus its transition matrix.
    Synth(ConfigArgs),
    /// Train a model and write its run directory.
    Train(ConfigArgs),
    /// Score a trained run on a held-out split.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Comma-separated cutoffs; the run's configured cutoffs when omitted.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Train and evaluate one model per compression rate.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        rates: Vec<f64>,
        /// Run legs on separate threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Train and evaluate the BOTH / E / I variants.
    Ablate(ConfigArgs),
    /// Throughput of single-pass ranking against title generation.
    Bench {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
    },
    /// Decode item titles from item tokens.
    Probe {
        #[arg(long)]
        run: PathBuf,
        /// Number of items to probe; the run's `probe_items` when omitted.
        #[arg(long)]
        items: Option<usize>,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn prepare(input: &Path, out: &Path, max_history: usize, val_fraction: f64, seed: u64) -> Result<()> {
    // Everything is read and split before the output directory is touched.
    let (catalog, sequences) = load_interactions(input)?;
    let data = DataConfig {
        max_history,
        val_fraction,
        ..DataConfig::default()
    };
    let dataset = Dataset::build(catalog, sequences, None, &data, seed)?;
    write_prepared(out, &dataset)?;
    println!(
        "{} items, {} train / {} validation / {} test samples -> {}",
        dataset.catalog.len(),
        dataset.split.train.len(),
        dataset.split.validation.len(),
        dataset.split.test.len(),
        out.display()
    );
    Ok(())
}

fn synth(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.resolved().data.synthetic;
    let corpus = generate_synthetic(&spec)?;
    fs::create_dir_all(&cfg.out_dir)?;
    write_interactions(&cfg.out_dir.join("interactions.jsonl"), &corpus.catalog, &corpus.sequences)?;
    corpus.transitions.save(&cfg.out_dir.join("transitions.json"))?;
    println!(
        "{} items, {} sequences -> {}",
        corpus.catalog.len(),
        corpus.sequences.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<()> {
    let data = pipeline::prepare_dataset(cfg)?;
    info!(
        "{} items, {} training samples, fingerprint {}",
        data.catalog.len(),
        data.split.train.len(),
        cfg.fingerprint()
    );
    let ckpt = train_run(cfg, &data)?;
    write_run(cfg, &data, &ckpt)?;
    println!(
        "trained {} steps over {} epochs, best validation loss {} -> {}",
        ckpt.state.step,
        ckpt.state.epoch,
        ckpt.best_val_loss.map_or("n/a".to_string(), |v| format!("{v:.4}")),
        cfg.out_dir.display()
    );
    Ok(())
}

fn eval(run: &Path, split: SplitArg, ks: Option<Vec<usize>>) -> Result<()> {
    let (mut cfg, data, ckpt) = read_run(run)?;
    if let Some(ks) = ks {
        cfg.ks = ks;
        cfg.validate()?;
    }
    let (split, stem) = match split {
        SplitArg::Test => (EvalSplit::Test, "metrics"),
        SplitArg::Validation => (EvalSplit::Validation, "metrics_validation"),
    };
    let metrics = RunMetrics::new(&cfg, evaluate_run(&cfg, &data, &ckpt, split)?);
    metrics.write(run, stem)?;
    print!("{}", metrics.report.to_csv());
    Ok(())
}

fn sweep(cfg: &RunConfig, rates: &[f64], parallel: bool) -> Result<()> {
    let data = pipeline::prepare_dataset(cfg)?;
    let rows = run_sweep(cfg, &data, rates, true, parallel)?;
    for r in &rows {
        println!(
            "rate {:>5}  rows {:>6}  hr@10 {:.4}  ng@10 {:.4}",
            r.rate,
            r.shared_rows,
            r.report.hr(10),
            r.report.ng(10)
        );
    }
    println!("summary -> {}", cfg.out_dir.join("sweep.csv").display());
    Ok(())
}

fn ablate(cfg: &RunConfig) -> Result<()> {
    let data = pipeline::prepare_dataset(cfg)?;
    let report = run_ablation(cfg, &data, true)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn bench(run: &Path, samples: usize, warmup: usize) -> Result<()> {
    let (cfg, data, ckpt) = read_run(run)?;
    let encoder = data.encoder(&cfg.prompt_format())?;
    let set: Vec<_> = data.split.test.iter().take(samples).cloned().collect();
    let adapters = ckpt.state.adapters.as_ref();
    let mut reports = Vec::new();
    for mode in [BenchMode::Logits, BenchMode::Generative] {
        let r = throughput_bench(&ckpt.state.model, adapters, &encoder, &set, mode, warmup)?;
        let name = match mode {
            BenchMode::Logits => "logits",
            BenchMode::Generative => "generative",
        };
        write_latency_csv(&run.join(format!("latency_{name}.csv")), &r)?;
        println!(
            "{name:>10}: {:.2} passes/sample, {:.1} samples/s",
            r.passes_per_sample, r.samples_per_second
        );
        reports.push(r);
    }
    let speedup = reports[0].samples_per_second / reports[1].samples_per_second;
    println!("speedup {speedup:.2}x");
    let summary = serde_json::json!({
        "fingerprint": cfg.fingerprint(),
        "seed": cfg.seed,
        "speedup": speedup,
        "modes": reports.iter().map(|r| serde_json::json!({
            "mode": r.mode,
            "samples": r.samples,
            "warmup": r.warmup,
            "forward_passes": r.forward_passes,
            "passes_per_sample": r.passes_per_sample,
            "samples_per_second": r.samples_per_second,
        })).collect::<Vec<_>>(),
    });
    write(&run.join("bench.json"), &serde_json::to_string_pretty(&summary)?)
}

fn probe(run: &Path, items: Option<usize>) -> Result<()> {
    let (cfg, data, ckpt) = read_run(run)?;
    let report = run_probe(&cfg, &data, &ckpt, items.unwrap_or(cfg.probe_items))?;
    let transcript = report.transcript();
    write(&run.join("probe_transcript.txt"), &transcript)?;
    let summary = serde_json::json!({
        "fingerprint": cfg.fingerprint(),
        "seed": cfg.seed,
        "fraction": report.fraction,
        "entries": report.entries,
    });
    write(&run.join("probe.json"), &serde_json::to_string_pretty(&summary)?)?;
    print!("{transcript}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare {
            input,
            out,
            max_history,
            val_fraction,
            seed,
        } => prepare(&input, &out, max_history, val_fraction, seed),
        Command::Synth(c) => synth(&c.load()?),
        Command::Train(c) => train(&c.load()?),
        Command::Eval { run, split, ks } => eval(&run, split, ks),
        Command::Sweep {
            config,
            rates,
            parallel,
        } => sweep(&config.load()?, &rates, parallel),
        Command::Ablate(c) => ablate(&c.load()?),
        Command::Bench { run, samples, warmup } => bench(&run, samples, warmup),
        Command::Probe { run, items } => probe(&run, items),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let bad_input = e
                .chain()
                .find_map(|c| c.downcast_ref::<hashvocab::Error>())
                .is_some_and(hashvocab::Error::is_bad_input);
            ExitCode::from(if bad_input { 2 } else { 1 })
        }
    }
}

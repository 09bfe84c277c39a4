//! Command-line pipeline for code-poisoning detection: train a clean
//! language model, simulate attacks, scan suspect datasets for trigger
//! tokens, purify, and evaluate against ground truth.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use codesweep_core::attacks::{self, AttackConfig, AttackStrategy};
use codesweep_core::corpus::{load_dataset, save_dataset};
use codesweep_core::detector::{identify_triggers, purify, DetectorConfig, TriggerReport};
use codesweep_core::eval::{self, run_sweep, Scenario, SweepAxis, SweepSpec};
use codesweep_core::ngram::{EntropyMode, NGramModel};
use codesweep_core::tokenizer::TokenizerMode;

#[derive(Parser)]
#[command(
    name = "codesweep",
    about = "Detects and removes code-poisoning samples from code datasets",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an n-gram language model on a clean corpus.
    Train(TrainArgs),
    /// Poison a clean dataset with a simulated attack.
    Poison(PoisonArgs),
    /// Rank trigger candidates in a suspect dataset.
    Scan(ScanArgs),
    /// Split a dataset into kept and removed halves using a scan report.
    Purify(PurifyArgs),
    /// Score flagged samples against poison ground truth.
    Eval(EvalArgs),
    /// Run the pipeline along one configuration axis.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Clean corpus (line-delimited records).
    #[arg(long)]
    clean: PathBuf,
    /// Output model file.
    #[arg(long)]
    model_out: PathBuf,
    /// Model order.
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Absolute-discount parameter.
    #[arg(long, default_value_t = 0.4)]
    discount: f64,
    /// Tokenizer granularity: fine | coarse.
    #[arg(long, default_value = "fine")]
    tokenizer: String,
}

#[derive(Args)]
struct PoisonArgs {
    /// Clean input dataset.
    #[arg(long)]
    input: PathBuf,
    /// Poisoned output dataset.
    #[arg(long)]
    output: PathBuf,
    /// Ground-truth sidecar (line-delimited poison records).
    #[arg(long)]
    records_out: PathBuf,
    /// Attack strategy: badcode-fixed | badcode-mixed | bnc-fixed |
    /// bnc-grammar | codepoisoner-variable.
    #[arg(long)]
    attack: String,
    /// Poisoning rate in [0, 1].
    #[arg(long, default_value_t = 0.01)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed trigger token (badcode-fixed).
    #[arg(long)]
    trigger: Option<String>,
    /// Comma-separated trigger pool (badcode-mixed).
    #[arg(long)]
    trigger_pool: Option<String>,
    /// Dead-code statement (bnc-fixed).
    #[arg(long)]
    dead_code: Option<String>,
    /// Trigger-name prefix (codepoisoner-variable).
    #[arg(long)]
    rename_base: Option<String>,
}

#[derive(Args)]
struct ScanArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Suspect dataset.
    #[arg(long)]
    dataset: PathBuf,
    /// Output report file (JSON).
    #[arg(long)]
    report_out: PathBuf,
    /// Number of trigger tokens to select.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Entropy comparison mode: per-token | total.
    #[arg(long, default_value = "per-token")]
    entropy_mode: String,
    /// Token cap per sample.
    #[arg(long, default_value_t = 2048)]
    max_seq_len: usize,
    /// Expected tokenizer mode; errors if the model was trained differently.
    #[arg(long)]
    tokenizer: Option<String>,
}

#[derive(Args)]
struct PurifyArgs {
    /// Trained model file (supplies the scan-time tokenizer).
    #[arg(long)]
    model: PathBuf,
    /// Dataset to purify.
    #[arg(long)]
    dataset: PathBuf,
    /// Scan report with the selected trigger tokens.
    #[arg(long)]
    report: PathBuf,
    /// Output path for the kept samples.
    #[arg(long)]
    clean_out: PathBuf,
    /// Output path for the removed samples.
    #[arg(long)]
    removed_out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Scan report (flagged ids).
    #[arg(long)]
    report: PathBuf,
    /// Poison-record sidecar (ground truth).
    #[arg(long)]
    records: PathBuf,
    /// The dataset both refer to.
    #[arg(long)]
    dataset: PathBuf,
    /// Optional metrics output file (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Clean corpus for model training.
    #[arg(long)]
    clean: PathBuf,
    /// Clean suspect base to be poisoned per sweep point.
    #[arg(long)]
    suspect: PathBuf,
    /// Attack strategy.
    #[arg(long)]
    attack: String,
    /// Axis: n | k | clean_size | rate | tokenizer_mode | dataset_size.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long)]
    values: String,
    /// Delimiter-separated table output.
    #[arg(long)]
    out: PathBuf,
    /// Structured report output (JSON).
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.4)]
    discount: f64,
    #[arg(long, default_value = "fine")]
    tokenizer: String,
    #[arg(long, default_value = "per-token")]
    entropy_mode: String,
    #[arg(long, default_value_t = 0.01)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    env_logger::init();
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => cmd_train(args),
        Command::Poison(args) => cmd_poison(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Purify(args) => cmd_purify(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mode: TokenizerMode = args.tokenizer.parse()?;
    let clean = load_dataset(&args.clean)?;
    let started = Instant::now();
    let model = NGramModel::train(&clean, args.n, args.discount, mode)?;
    let elapsed = started.elapsed().as_secs_f64();
    model.save(&args.model_out)?;
    println!(
        "trained order-{} model on {} samples: {} tokens, {} vocabulary entries, {:.2}s",
        model.order(),
        clean.len(),
        model.total_tokens(),
        model.vocab_size(),
        elapsed
    );
    println!("model written to {}", args.model_out.display());
    Ok(())
}

fn attack_config(
    strategy: &str,
    rate: f64,
    seed: u64,
    trigger: Option<String>,
    trigger_pool: Option<String>,
    dead_code: Option<String>,
    rename_base: Option<String>,
) -> Result<AttackConfig> {
    let strategy: AttackStrategy = strategy.parse()?;
    let mut cfg = AttackConfig::new(strategy).with_rate(rate).with_seed(seed);
    if let Some(t) = trigger {
        cfg.fixed_trigger = t;
    }
    if let Some(pool) = trigger_pool {
        let pool: Vec<String> = pool.split(',').map(|s| s.trim().to_string()).collect();
        if pool.iter().any(String::is_empty) {
            bail!("empty token in --trigger-pool");
        }
        cfg.trigger_pool = pool;
    }
    if let Some(d) = dead_code {
        cfg.dead_code = d;
    }
    if let Some(r) = rename_base {
        cfg.rename_base = r;
    }
    Ok(cfg)
}

fn cmd_poison(args: PoisonArgs) -> Result<()> {
    let clean = load_dataset(&args.input)?;
    let cfg = attack_config(
        &args.attack,
        args.rate,
        args.seed,
        args.trigger,
        args.trigger_pool,
        args.dead_code,
        args.rename_base,
    )?;
    let (poisoned, records) = attacks::poison(&clean, &cfg)?;
    save_dataset(&poisoned, &args.output)?;
    attacks::save_records(&records, &args.records_out)?;
    println!(
        "poisoned {} of {} samples with {} (rate {}, seed {})",
        records.len(),
        clean.len(),
        cfg.strategy,
        cfg.rate,
        cfg.seed
    );
    println!(
        "dataset written to {}, records to {}",
        args.output.display(),
        args.records_out.display()
    );
    Ok(())
}

fn cmd_scan(args: ScanArgs) -> Result<()> {
    let model = NGramModel::load(&args.model)?;
    if let Some(requested) = &args.tokenizer {
        let requested: TokenizerMode = requested.parse()?;
        if requested != model.tokenizer_mode() {
            return Err(codesweep_core::Error::TokenizerModeMismatch {
                model_mode: model.tokenizer_mode().to_string(),
                requested: requested.to_string(),
            }
            .into());
        }
    }
    let dataset = load_dataset(&args.dataset)?;
    let cfg = DetectorConfig {
        k: args.k,
        max_seq_len: args.max_seq_len,
        entropy_mode: args.entropy_mode.parse::<EntropyMode>()?,
    };
    let started = Instant::now();
    let report = identify_triggers(&model, &dataset, &cfg)?;
    let elapsed = started.elapsed().as_secs_f64();
    report.save(&args.report_out)?;

    println!(
        "scanned {} samples in {elapsed:.2}s; {} tokens scored, {} samples flagged",
        dataset.len(),
        report.entries.len(),
        report.flagged_ids.len()
    );
    println!("{:<4} {:<24} {:>14} {:>8}", "rank", "token", "delta", "support");
    for (rank, entry) in report
        .entries
        .iter()
        .take(report.selected.len())
        .enumerate()
    {
        println!(
            "{:<4} {:<24} {:>14.6} {:>8}",
            rank + 1,
            entry.token,
            entry.cumulative_delta,
            entry.support
        );
    }
    println!("report written to {}", args.report_out.display());
    Ok(())
}

fn cmd_purify(args: PurifyArgs) -> Result<()> {
    let model = NGramModel::load(&args.model)?;
    let dataset = load_dataset(&args.dataset)?;
    let report = TriggerReport::load(&args.report)?;
    if report.config.tokenizer_mode != model.tokenizer_mode() {
        return Err(codesweep_core::Error::TokenizerModeMismatch {
            model_mode: model.tokenizer_mode().to_string(),
            requested: report.config.tokenizer_mode.to_string(),
        }
        .into());
    }
    let (kept, removed) = purify(&dataset, &report, &model.tokenizer());
    save_dataset(&kept, &args.clean_out)?;
    save_dataset(&removed, &args.removed_out)?;
    println!(
        "kept {} samples, removed {} ({} trigger tokens)",
        kept.len(),
        removed.len(),
        report.selected.len()
    );
    println!(
        "kept -> {}, removed -> {}",
        args.clean_out.display(),
        args.removed_out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let report = TriggerReport::load(&args.report)?;
    let records = attacks::load_records(&args.records)?;
    let flagged: HashSet<String> = report.flagged_ids.iter().cloned().collect();
    let truth: HashSet<String> = records.iter().map(|r| r.sample_id.clone()).collect();
    let outcome = eval::score(&dataset, &flagged, &truth)?;

    println!(
        "recall {:.4}  fpr {:.4}  precision {:.4}  f1 {:.4}",
        outcome.recall, outcome.fpr, outcome.precision, outcome.f1
    );
    println!(
        "tp {}  fp {}  tn {}  fn {}",
        outcome.true_positives,
        outcome.false_positives,
        outcome.true_negatives,
        outcome.false_negatives
    );
    if let Some(out) = args.out {
        let json = serde_json::to_string_pretty(&outcome)?;
        std::fs::write(&out, json + "\n")
            .with_context(|| format!("writing metrics to {}", out.display()))?;
        println!("metrics written to {}", out.display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let clean = load_dataset(&args.clean)?;
    let suspect = load_dataset(&args.suspect)?;
    let attack = attack_config(&args.attack, args.rate, args.seed, None, None, None, None)?;
    let mut scenario = Scenario::new(clean, suspect, attack);
    scenario.n = args.n;
    scenario.k = args.k;
    scenario.discount = args.discount;
    scenario.tokenizer_mode = args.tokenizer.parse()?;
    scenario.entropy_mode = args.entropy_mode.parse()?;

    let axis: SweepAxis = args.axis.parse()?;
    let raw_values: Vec<String> = args.values.split(',').map(|s| s.trim().to_string()).collect();
    let spec = SweepSpec::parse(axis, &raw_values)?;

    let table = run_sweep(&scenario, &spec)?;
    let tsv = table.to_tsv();
    std::fs::write(&args.out, &tsv)
        .with_context(|| format!("writing sweep table to {}", args.out.display()))?;
    print!("{tsv}");
    if let Some(report_out) = args.report_out {
        let json = serde_json::to_string_pretty(&table)?;
        std::fs::write(&report_out, json + "\n")
            .with_context(|| format!("writing sweep report to {}", report_out.display()))?;
        println!("sweep report written to {}", report_out.display());
    }
    println!("sweep table written to {}", args.out.display());
    Ok(())
}

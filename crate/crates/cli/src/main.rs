use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lnshift::checkpoint;
use lnshift::harness::{report, run_grid, GridConfig, SweepSummary};
use lnshift::surgery::{apply_surgery, sweep_family, ParamFamily, SurgeryKind, SurgerySpec, SurgeryTarget};
use lnshift::synthdata::{DomainPair, DomainSpec, LabeledDataset, ShiftSpec};
use lnshift::tuning::{finetune, pretrain_on, Strategy, StrategyKind};
use lnshift::Model;

#[derive(Parser)]
#[command(name = "lnshift", version, about = "LayerNorm shift experiments on synthetic Gaussian domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write source, target-train and target-test CSVs.
    Gen(GenArgs),
    /// Pretrain on the source domain, fine-tune with one strategy, write checkpoints.
    Train(TrainArgs),
    /// Accuracy of λ-rescaled models on a test CSV.
    Sweep(SweepArgs),
    /// Run the full experiment grid.
    Grid(GridArgs),
    /// Re-aggregate an existing cases.csv.
    Report(ReportArgs),
    /// Apply a LayerNorm surgery to a tuned checkpoint.
    Rescale(RescaleArgs),
}

/// Options shared by commands that read a grid configuration.
#[derive(Args)]
struct ConfigArgs {
    /// JSON file with GridConfig fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Seed for weight initialization and training.
    #[arg(long)]
    train_seed: Option<u64>,
    /// LN_ONLY, LP, LP_LN, LP_FM or CYCLIC.
    #[arg(long)]
    strategy: Option<StrategyKind>,
    /// Comma-separated class counts.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<usize>>,
    /// Comma-separated target train fractions.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
}

impl ConfigArgs {
    fn load(&self) -> Result<GridConfig> {
        let mut cfg = match &self.config {
            Some(path) => GridConfig::load(path)?,
            None => GridConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.data_seed = s;
        }
        if let Some(s) = self.train_seed {
            cfg.train_seed = s;
        }
        if let Some(k) = self.strategy {
            cfg.strategy.kind = k;
        }
        if let Some(c) = &self.classes {
            cfg.class_counts = c.clone();
        }
        if let Some(f) = &self.fractions {
            cfg.train_fractions = f.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct CaseArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 0.0)]
    mean_shift: f64,
    #[arg(long, default_value_t = 0.0)]
    var_shift: f64,
}

impl CaseArgs {
    /// The configuration plus the domain pair for its first class count and fraction.
    fn pair(&self) -> Result<(GridConfig, DomainPair<f64>)> {
        let cfg = self.config.load()?;
        let (classes, fraction) = (cfg.class_counts[0], cfg.train_fractions[0]);
        if cfg.class_counts.len() > 1 || cfg.train_fractions.len() > 1 {
            eprintln!("using classes={classes}, fraction={fraction}");
        }
        let pair = DomainPair::generate(
            DomainSpec::circle(classes, cfg.samples_per_class, cfg.data_seed),
            ShiftSpec::standard(classes, self.mean_shift, self.var_shift),
            fraction,
        )?;
        Ok((cfg, pair))
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Add the width-doubling map in front of the predictor before fine-tuning.
    #[arg(long)]
    expand_predictor: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Gamma,
    Beta,
}

impl From<Family> for ParamFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Gamma => ParamFamily::Gamma,
            Family::Beta => ParamFamily::Beta,
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    tuned: PathBuf,
    /// CSV with columns x0,…,label.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum, default_value = "gamma")]
    family: Family,
    /// Evaluate a single λ instead of the configured grid.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "grid-out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding cases.csv (and optionally case_shifts.csv).
    input: PathBuf,
    /// Output directory (defaults to the input directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RescaleArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    tuned: PathBuf,
    /// LAMBDA_GAMMA, LAMBDA_BETA, SVD_FIRST, SVD_LAST, SVD_MIDDLE, RANDOM_DROP_GAMMA or RANDOM_DROP_BETA.
    #[arg(long, default_value = "LAMBDA_GAMMA")]
    kind: String,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// gamma, beta or both (SVD kinds only).
    #[arg(long, default_value = "both")]
    target: String,
    #[arg(long, default_value_t = 0.0)]
    drop_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

fn parse_enum<T: serde::de::DeserializeOwned>(value: &str, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .with_context(|| format!("unknown {what} `{value}`"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn gen(args: &GenArgs) -> Result<()> {
    let (_, pair) = args.case.pair()?;
    ensure_dir(&args.out)?;
    for (name, data) in [
        ("source.csv", &pair.source),
        ("target_train.csv", &pair.target_train),
        ("target_test.csv", &pair.target_test),
    ] {
        data.save_csv(&args.out.join(name))?;
    }
    println!(
        "wrote {} source, {} target train and {} target test rows to {}",
        pair.source.len(),
        pair.target_train.len(),
        pair.target_test.len(),
        args.out.display()
    );
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let (cfg, pair) = args.case.pair()?;
    let pretrain_cfg = lnshift::nn::TrainConfig {
        seed: cfg.train_seed,
        ..cfg.pretrain.clone()
    };
    let finetune_cfg = lnshift::nn::TrainConfig {
        seed: cfg.train_seed,
        ..cfg.finetune.clone()
    };
    let source = pretrain_on(&pair.source, &pretrain_cfg)?;
    let mut strategy: Strategy = cfg.strategy.clone();
    strategy.expand_predictor |= args.expand_predictor;
    let outcome = finetune(&source, &pair, &strategy, &finetune_cfg)?;
    ensure_dir(&args.out)?;
    checkpoint::save(&outcome.source, &args.out.join("source.json"))?;
    checkpoint::save(&outcome.tuned, &args.out.join("tuned.json"))?;
    pair.target_test.save_csv(&args.out.join("target_test.csv"))?;
    println!(
        "{}: target test accuracy {:.4}, LayerNorm shift {:.6}",
        strategy.kind, outcome.test_accuracy, outcome.ln_shift_report.total
    );
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let source: Model = checkpoint::load(&args.source)?;
    let tuned: Model = checkpoint::load(&args.tuned)?;
    let test = LabeledDataset::<f64>::load_csv(&args.test, Some(tuned.num_classes()))?;
    let grid = match (args.lambda, &args.config) {
        (Some(l), _) => vec![l],
        (None, Some(path)) => GridConfig::load(path)?.lambda_grid,
        (None, None) => GridConfig::default().lambda_grid,
    };
    let result = sweep_family(&source, &tuned, &test.x, &test.y, &grid, args.family.into())?;
    let text = serde_json::to_string_pretty(&result)? + "\n";
    match &args.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn print_summary(s: &SweepSummary) {
    println!(
        "{} cases: {} improved, {} unchanged, {} not improved, {} zero accuracy, {} failed",
        s.overall_cases, s.improved_cases, s.unchanged_cases, s.not_improved_cases, s.zero_accuracy_cases, s.failed_cases
    );
    if let Some(a) = s.avg_improvement_of_improved {
        println!("average improvement of improved cases: {a:.6}");
    }
    if let Some(r) = s.spearman_fsr_vs_best_lambda {
        println!("spearman(FSR, best lambda): {r:.4}");
    }
    if let Some(r) = s.spearman_lnshift_vs_wasserstein {
        println!("spearman(LN shift, data shift): {r:.4}");
    }
}

fn grid(args: &GridArgs) -> Result<()> {
    let cfg = args.config.load()?;
    eprintln!("running {} cases", cfg.total_cases());
    let (results, summary) = run_grid(&cfg, args.jobs)?;
    report::write_report(&results, &summary, &cfg.lambda_grid, &args.out)?;
    print_summary(&summary);
    println!("results in {}", args.out.display());
    Ok(())
}

fn report_cmd(args: &ReportArgs) -> Result<()> {
    let (results, lambdas) = report::read_results(&args.input)?;
    if results.is_empty() {
        bail!("{} has no cases", args.input.join(report::CASES_FILE).display());
    }
    let summary = SweepSummary::from_results(&results);
    let out = args.out.as_ref().unwrap_or(&args.input);
    report::write_report(&results, &summary, &lambdas, out)?;
    print_summary(&summary);
    Ok(())
}

fn rescale(args: &RescaleArgs) -> Result<()> {
    let source: Model = checkpoint::load(&args.source)?;
    let mut tuned: Model = checkpoint::load(&args.tuned)?;
    let spec = SurgerySpec {
        kind: parse_enum::<SurgeryKind>(&args.kind, "surgery kind")?,
        lambda: args.lambda,
        k: args.k,
        target: parse_enum::<SurgeryTarget>(&args.target, "surgery target")?,
        drop_ratio: args.drop_ratio,
        seed: args.seed,
    };
    let mut ln = apply_surgery(
        std::slice::from_ref(&source.ln),
        std::slice::from_ref(&tuned.ln),
        &spec,
    )?;
    tuned.ln = ln.pop().expect("one LayerNorm layer");
    checkpoint::save(&tuned, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Grid(a) => grid(a),
        Command::Report(a) => report_cmd(a),
        Command::Rescale(a) => rescale(a),
    }
}

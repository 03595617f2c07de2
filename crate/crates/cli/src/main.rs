//! `semjoint`: train, predict with and evaluate joint frame-semantic and
//! semantic dependency parsers.
//!
//! Exit status: 0 on success, 1 on bad input or usage, 2 on internal errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semjoint::eval::{error_breakdown, eval_frames, eval_sdp, length_bins_csv, length_binned_pr};
use semjoint::inference::{ad3_solve, brute_force_map, Ad3Config, BruteLimits, FactorGraph};
use semjoint::io;
use semjoint::pruning::{pretrain, PretrainConfig, PruneConfig, Pruner, PrunerConfig};
use semjoint::scorers::{Model, ModelConfig};
use semjoint::synth::{random_instance, InstanceBounds};
use semjoint::training::{build_model, predict_frames, predict_sdp, train, Corpora, Pruning, TrainConfig};
use semjoint::{CostConfig, Error, Ontology, Result, Sentence};

#[derive(Parser)]
#[command(name = "semjoint", version, about = "Joint frame-semantic and semantic dependency parsing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a parser on frame and/or dependency corpora.
    Train(TrainArgs),
    /// Train the span and arc pruning model.
    PretrainPruner(PretrainArgs),
    /// Decode frames for given targets, or dependency graphs.
    Predict(PredictArgs),
    /// Score predictions against gold files.
    Evaluate(EvaluateArgs),
    /// Compare AD³ against exhaustive search on random instances.
    OracleCheck(OracleArgs),
    /// Write the argument error breakdown and length-binned P/R as CSV.
    ExportAnalysis(AnalysisArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    ontology: PathBuf,
    /// Frame annotations (JSON lines).
    #[arg(long)]
    fn_train: Option<PathBuf>,
    #[arg(long)]
    fn_dev: Option<PathBuf>,
    /// Exemplar sentences, subsampled every epoch.
    #[arg(long)]
    exemplars: Option<PathBuf>,
    /// Semantic dependency graphs (tab-separated).
    #[arg(long)]
    dm_train: Option<PathBuf>,
    #[arg(long)]
    dm_dev: Option<PathBuf>,
    /// Pretrained word vectors, one word and its values per line.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Output directory for `model.ckpt` and `metrics.tsv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// ℓ1 weight on cross-task scores.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    no_cross_task: bool,
    /// Frame instances carry no latent dependency parts; implies --no-cross-task.
    #[arg(long)]
    no_joint: bool,
    /// Model hyperparameters as JSON; unspecified fields keep their defaults.
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long)]
    pruner: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    anneal_every: Option<usize>,
    #[arg(long)]
    anneal_factor: Option<f64>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    exemplar_fraction: Option<f64>,
    #[arg(long)]
    word_dropout: Option<f64>,
    #[arg(long)]
    false_positive_cost: Option<f64>,
    #[arg(long)]
    false_negative_cost: Option<f64>,
    #[arg(long)]
    max_span_len: Option<usize>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    fn_train: Option<PathBuf>,
    #[arg(long)]
    dm_train: Option<PathBuf>,
    /// Validates the frame data and is recorded in the checkpoint.
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 20)]
    max_span_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Fn,
    Sdp,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Further checkpoints whose scores are averaged with `--model`.
    #[arg(long, value_delimiter = ',')]
    ensemble: Vec<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Format,
    #[arg(long)]
    output: PathBuf,
    /// Required for frame prediction.
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    pruner: Option<PathBuf>,
    /// Load checkpoints trained under a different ontology.
    #[arg(long)]
    allow_ontology_mismatch: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, requires = "fn_pred")]
    fn_gold: Option<PathBuf>,
    #[arg(long, requires = "fn_gold")]
    fn_pred: Option<PathBuf>,
    #[arg(long, requires = "dm_pred")]
    dm_gold: Option<PathBuf>,
    #[arg(long, requires = "dm_gold")]
    dm_pred: Option<PathBuf>,
    /// Enables the ambiguous-LU frame accuracy.
    #[arg(long)]
    ontology: Option<PathBuf>,
    /// Count the top as an arc from the virtual root.
    #[arg(long)]
    include_top: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
}

#[derive(Args)]
struct AnalysisArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Directory for `error_breakdown.csv` and `length_bins.csv`.
    #[arg(long)]
    out: PathBuf,
}

/// A library error, or a self-check that ran but failed.
enum Failure {
    Lib(Error),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::PretrainPruner(a) => cmd_pretrain(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::OracleCheck(a) => cmd_oracle(a),
        Command::ExportAnalysis(a) => cmd_analysis(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn frames_or_empty(path: Option<&Path>, ontology: Option<&Ontology>) -> Result<Vec<Sentence>> {
    path.map_or(Ok(Vec::new()), |p| io::read_frames(p, ontology))
}

fn graphs_or_empty(path: Option<&Path>) -> Result<Vec<Sentence>> {
    path.map_or(Ok(Vec::new()), io::read_sdp)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)?;
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let ontology = io::read_ontology(&a.ontology)?;
    let corpora = Corpora {
        fn_train: frames_or_empty(a.fn_train.as_deref(), Some(&ontology))?,
        exemplars: frames_or_empty(a.exemplars.as_deref(), Some(&ontology))?,
        dm_train: graphs_or_empty(a.dm_train.as_deref())?,
        fn_dev: frames_or_empty(a.fn_dev.as_deref(), Some(&ontology))?,
        dm_dev: graphs_or_empty(a.dm_dev.as_deref())?,
    };
    let mut model_config: ModelConfig = match &a.model_config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => ModelConfig::default(),
    };
    if a.no_joint {
        model_config.decoding.joint = false;
        model_config.decoding.cross_task = false;
    }
    if a.no_cross_task {
        model_config.decoding.cross_task = false;
    }
    if let Some(m) = a.max_span_len {
        model_config.decoding.max_span_len = m;
    }
    let mut config = TrainConfig {
        seed: a.seed,
        ..Default::default()
    };
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = a.$field { config.$field = v; })*};
    }
    set!(lambda, epochs, learning_rate, anneal_every, anneal_factor, clip, l2, exemplar_fraction, word_dropout);
    config.cost = CostConfig {
        false_positive_cost: a.false_positive_cost.unwrap_or(config.cost.false_positive_cost),
        false_negative_cost: a.false_negative_cost.unwrap_or(config.cost.false_negative_cost),
    };
    config.validate()?;
    model_config.validate()?;

    let mut model = build_model(model_config, &corpora, &ontology, a.seed)?;
    if let Some(p) = &a.embeddings {
        let vectors = io::load_embeddings(p)?;
        let set = model.encoder.init_words(&mut model.store, &vectors)?;
        log::info!("initialized {set} of {} word vectors", model.encoder.vocab.words.len());
    }
    let pruner = a.pruner.as_ref().map(Pruner::load).transpose()?;
    let prune_config = PruneConfig::default();
    let pruning = pruner.as_ref().map(|p| Pruning {
        pruner: p,
        config: &prune_config,
    });

    create_dir(&a.out)?;
    let metrics_path = a.out.join("metrics.tsv");
    let mut metrics = String::new();
    let report = train(&mut model, &corpora, &ontology, &config, pruning, |m, _| {
        metrics.push_str(&m.tsv_line());
        metrics.push('\n');
        fs::write(&metrics_path, &metrics)?;
        Ok(())
    })?;
    io::save_model(&model, Some(&ontology), a.out.join("model.ckpt"))?;
    fs::write(
        a.out.join("train_config.json"),
        serde_json::to_string_pretty(&config).map_err(|e| Error::Invalid(e.to_string()))?,
    )?;
    match report.best_epoch {
        Some(e) => println!("kept epoch {e}; model written to {}", a.out.join("model.ckpt").display()),
        None => println!("no epochs run; model written to {}", a.out.join("model.ckpt").display()),
    }
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs) -> CmdResult {
    let ontology = a.ontology.as_ref().map(io::read_ontology).transpose()?;
    let frames = frames_or_empty(a.fn_train.as_deref(), ontology.as_ref())?;
    let graphs = graphs_or_empty(a.dm_train.as_deref())?;
    let vocab = semjoint::encoder::Vocabularies::build(frames.iter().chain(&graphs));
    let mut pruner = Pruner::new(PrunerConfig::default(), vocab, a.seed)?;
    let config = PretrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        max_span_len: a.max_span_len,
        seed: a.seed,
    };
    let log = pretrain(&mut pruner, &frames, &graphs, &config)?;
    for (k, (s, arc)) in log.span_loss.iter().zip(&log.arc_loss).enumerate() {
        println!("{k}\t{s:.6}\t{arc:.6}");
    }
    pruner.save(&a.out, ontology.as_ref())?;
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> CmdResult {
    let ontology = a.ontology.as_ref().map(io::read_ontology).transpose()?;
    let load = |p: &PathBuf| io::load_model(p, ontology.as_ref(), a.allow_ontology_mismatch);
    let mut models: Vec<Model> = vec![load(&a.model)?];
    for p in &a.ensemble {
        models.push(load(p)?);
    }
    let members: Vec<&Model> = models.iter().collect();
    let pruner = a.pruner.as_ref().map(Pruner::load).transpose()?;
    let prune_config = PruneConfig::default();
    let pruning = pruner.as_ref().map(|p| Pruning {
        pruner: p,
        config: &prune_config,
    });
    let start = Instant::now();
    match a.format {
        Format::Fn => {
            let ontology = ontology.ok_or_else(|| Error::Config("--ontology is required for frame prediction".into()))?;
            let inputs = io::read_targets(&a.input)?;
            let out = predict_frames(&members, &inputs, &ontology, pruning)?;
            io::write_frames(&out, &a.output)?;
            log::info!("{} sentences in {:.1}s", out.len(), start.elapsed().as_secs_f64());
        }
        Format::Sdp => {
            let ontology = match ontology {
                Some(o) => o,
                None => Ontology::new(Vec::<(String, Vec<String>)>::new(), Vec::<(String, Vec<String>)>::new())?,
            };
            let inputs = io::read_sdp(&a.input)?;
            let out = predict_sdp(&members, &inputs, &ontology, pruning)?;
            io::write_sdp(&out, &a.output)?;
            log::info!("{} sentences in {:.1}s", out.len(), start.elapsed().as_secs_f64());
        }
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> CmdResult {
    if a.fn_gold.is_none() && a.dm_gold.is_none() {
        return Err(Error::Config("give --fn-gold/--fn-pred and/or --dm-gold/--dm-pred".into()).into());
    }
    if a.fn_gold.is_some() != a.fn_pred.is_some() || a.dm_gold.is_some() != a.dm_pred.is_some() {
        return Err(Error::Config("gold and prediction files come in pairs".into()).into());
    }
    let ontology = a.ontology.as_ref().map(io::read_ontology).transpose()?;
    if let (Some(g), Some(p)) = (&a.fn_gold, &a.fn_pred) {
        let r = eval_frames(&io::read_frames(g, None)?, &io::read_frames(p, None)?, ontology.as_ref())?;
        let prf = r.parts;
        println!("frames\tP {:.3}\tR {:.3}\tF1 {:.3}", prf.precision, prf.recall, prf.f1);
        println!("frame-id\taccuracy {:.3}\t({} targets)", r.frame_accuracy, r.targets);
        if ontology.is_some() {
            println!(
                "frame-id ambiguous\taccuracy {:.3}\t({} targets)",
                r.ambiguous_accuracy, r.ambiguous_targets
            );
        }
    }
    if let (Some(g), Some(p)) = (&a.dm_gold, &a.dm_pred) {
        let r = eval_sdp(&io::read_sdp(g)?, &io::read_sdp(p)?, a.include_top)?;
        let prf = r.arcs;
        println!("labeled arcs\tP {:.3}\tR {:.3}\tF1 {:.3}", prf.precision, prf.recall, prf.f1);
    }
    Ok(())
}

fn cmd_oracle(a: OracleArgs) -> CmdResult {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..a.n {
        let inst = random_instance(&mut rng, &InstanceBounds::default())?;
        let graph = FactorGraph::from_space(&inst.space, &inst.constraints)?;
        let solved = ad3_solve(&graph, &Ad3Config::default())?;
        let (_, exact) = brute_force_map(&graph, &BruteLimits::default())?;
        worst = worst.max((solved.objective - exact).abs());
    }
    println!("{} instances, max objective gap {worst:.3e}", a.n);
    if worst > a.tolerance {
        return Err(Failure::Internal(format!("objective gap {worst:e} exceeds {:e}", a.tolerance)));
    }
    Ok(())
}

fn cmd_analysis(a: AnalysisArgs) -> CmdResult {
    let gold = io::read_frames(&a.gold, None)?;
    let pred = io::read_frames(&a.pred, None)?;
    create_dir(&a.out)?;
    fs::write(a.out.join("error_breakdown.csv"), error_breakdown(&gold, &pred)?.to_csv())?;
    fs::write(a.out.join("length_bins.csv"), length_bins_csv(&length_binned_pr(&gold, &pred)?))?;
    println!("wrote {} and {}", a.out.join("error_breakdown.csv").display(), a.out.join("length_bins.csv").display());
    Ok(())
}

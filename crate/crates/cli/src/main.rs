//! `crossvec` command-line interface.
//!
//! Exit codes: 0 on success, 1 on validation or input errors, 2 on
//! numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crossvec::classifier::{
    classify, review_vectors, split_reviews, train_logreg, ActivationOptions, LinearModel,
};
use crossvec::config::PipelineConfig;
use crossvec::cooc::generate_instances;
use crossvec::corpus::{load_corpus, Domain};
use crossvec::embedding::EmbeddingModel;
use crossvec::error::{Error, Result};
use crossvec::eval::{evaluate_predictions, read_predictions, write_predictions, EvalReport};
use crossvec::pipeline::{load_bundle, run_pipeline, write_report};
use crossvec::pivots::{read_pivots_tsv, select, write_pivots_tsv, NpmiStats};
use crossvec::derive_seed;
use crossvec::synth::{gen_synthetic, SyntheticSpec};
use crossvec::trainer::train;

#[derive(Parser, Debug)]
#[command(
    name = "crossvec",
    about = "Cross-domain word embeddings with pivot regularization, and sentiment transfer",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic source/target corpus pair.
    GenSynthetic(GenSyntheticArgs),
    /// Score features with NPMI and write pivots.tsv.
    SelectPivots(ConfigArgs),
    /// Learn the four embedding tables and write model.bin / model.tsv.
    TrainEmbeddings(ConfigArgs),
    /// Train the source-domain sentiment classifier (classifier.tsv).
    TrainClassifier(ConfigArgs),
    /// Classify target test reviews with the activation score
    /// (predictions.tsv).
    Classify(ConfigArgs),
    /// Recompute accuracy and its confidence interval from a predictions
    /// file.
    Evaluate(EvaluateArgs),
    /// Run the whole pipeline and report NA / Proposed / InDomain.
    RunAll(ConfigArgs),
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Config file of `key = value` pairs; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shrink to desk scale (n=50, 50 pivots/non-pivots, min_count=2).
    #[arg(long)]
    desk: bool,

    #[arg(long)]
    source_unlabeled: Option<PathBuf>,
    #[arg(long)]
    target_unlabeled: Option<PathBuf>,
    #[arg(long)]
    source_labeled: Option<PathBuf>,
    #[arg(long)]
    target_labeled: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    n_pivots: Option<usize>,
    #[arg(long)]
    n_source_nonpivots: Option<usize>,
    #[arg(long)]
    n_target_nonpivots: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Embedding dimensionality.
    #[arg(long)]
    n: Option<usize>,
    /// Negatives per co-occurrence pair.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    base_lr: Option<f64>,
    #[arg(long)]
    adagrad_eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Logistic-regression regularization strength.
    #[arg(long)]
    l2: Option<f64>,
    /// Similarity for the activation score: cosine, dot or kronecker.
    #[arg(long)]
    similarity: Option<String>,
    /// Include the classifier bias in the activation score.
    #[arg(long)]
    use_bias: bool,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    confidence: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if self.desk {
            config.apply_desk();
        }
        let mut set = |key: &str, value: Option<String>| -> Result<()> {
            if let Some(v) = value {
                config
                    .set_key(key, &v)
                    .map_err(Error::InvalidInput)?;
            }
            Ok(())
        };
        let path_str = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        set("source_unlabeled", path_str(&self.source_unlabeled))?;
        set("target_unlabeled", path_str(&self.target_unlabeled))?;
        set("source_labeled", path_str(&self.source_labeled))?;
        set("target_labeled", path_str(&self.target_labeled))?;
        set("out_dir", path_str(&self.out_dir))?;
        set("stopwords", path_str(&self.stopwords))?;
        set("min_count", self.min_count.map(|v| v.to_string()))?;
        set("n_pivots", self.n_pivots.map(|v| v.to_string()))?;
        set(
            "n_source_nonpivots",
            self.n_source_nonpivots.map(|v| v.to_string()),
        )?;
        set(
            "n_target_nonpivots",
            self.n_target_nonpivots.map(|v| v.to_string()),
        )?;
        set("lambda", self.lambda.map(|v| v.to_string()))?;
        set("n", self.n.map(|v| v.to_string()))?;
        set("k", self.k.map(|v| v.to_string()))?;
        set("window", self.window.map(|v| v.to_string()))?;
        set("batch_size", self.batch_size.map(|v| v.to_string()))?;
        set("max_epochs", self.max_epochs.map(|v| v.to_string()))?;
        set("base_lr", self.base_lr.map(|v| v.to_string()))?;
        set("adagrad_eps", self.adagrad_eps.map(|v| v.to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("l2", self.l2.map(|v| v.to_string()))?;
        set("similarity", self.similarity.clone())?;
        if self.use_bias {
            set("use_bias", Some("true".into()))?;
        }
        set("train_fraction", self.train_fraction.map(|v| v.to_string()))?;
        set("confidence", self.confidence.map(|v| v.to_string()))?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct GenSyntheticArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 250)]
    labeled_per_class: usize,
    #[arg(long, default_value_t = 1200)]
    unlabeled_docs: usize,
    #[arg(long, default_value_t = 8)]
    shared_positive: usize,
    #[arg(long, default_value_t = 8)]
    shared_negative: usize,
    #[arg(long, default_value_t = 32)]
    shared_neutral: usize,
    #[arg(long, default_value_t = 2)]
    flip_words: usize,
    #[arg(long, default_value_t = 16)]
    domain_positive: usize,
    #[arg(long, default_value_t = 16)]
    domain_negative: usize,
    #[arg(long, default_value_t = 12)]
    domain_neutral: usize,
    /// Also write a ready-to-run config file next to the corpora.
    #[arg(long)]
    emit_config: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, default_value = "Proposed")]
    method: String,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Optional report file to write the row into.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap's default exit code for usage errors is 2; keep 2 for
            // numerical failures only.
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic(args) => cmd_gen_synthetic(args),
        Command::SelectPivots(args) => cmd_select_pivots(&args.resolve()?),
        Command::TrainEmbeddings(args) => cmd_train_embeddings(&args.resolve()?),
        Command::TrainClassifier(args) => cmd_train_classifier(&args.resolve()?),
        Command::Classify(args) => cmd_classify(&args.resolve()?),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::RunAll(args) => cmd_run_all(&args.resolve()?),
    }
}

fn cmd_gen_synthetic(args: GenSyntheticArgs) -> Result<()> {
    let spec = SyntheticSpec {
        seed: args.seed,
        labeled_per_class: args.labeled_per_class,
        unlabeled_docs: args.unlabeled_docs,
        shared_positive: args.shared_positive,
        shared_negative: args.shared_negative,
        shared_neutral: args.shared_neutral,
        flip_words: args.flip_words,
        domain_positive: args.domain_positive,
        domain_negative: args.domain_negative,
        domain_neutral: args.domain_neutral,
        ..SyntheticSpec::default()
    };
    let paths = gen_synthetic(&spec, &args.out_dir)?;
    println!("wrote {}", paths.source_unlabeled.display());
    println!("wrote {}", paths.target_unlabeled.display());
    println!("wrote {}", paths.source_labeled.display());
    println!("wrote {}", paths.target_labeled.display());
    println!("wrote {}", paths.answer_key.display());
    if args.emit_config {
        // Paths relative to the config file's own directory, so the
        // generated bundle stays relocatable.
        let config = PipelineConfig {
            source_unlabeled: PathBuf::from("source_unlabeled.tsv"),
            target_unlabeled: PathBuf::from("target_unlabeled.tsv"),
            source_labeled: PathBuf::from("source_labeled.tsv"),
            target_labeled: PathBuf::from("target_labeled.tsv"),
            out_dir: PathBuf::from("artifacts"),
            ..PipelineConfig::default()
        };
        let config_path = args.out_dir.join("run.conf");
        config.to_file(&config_path)?;
        println!("wrote {}", config_path.display());
    }
    Ok(())
}

fn cmd_select_pivots(config: &PipelineConfig) -> Result<()> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let bundle = load_bundle(config)?;
    let stats = NpmiStats::build(&bundle.source_unlabeled, &bundle.target_unlabeled, &bundle.vocab);
    let selection = select(
        &bundle.vocab,
        &stats,
        config.n_pivots,
        config.n_source_nonpivots,
        config.n_target_nonpivots,
    )?;
    let path = config.out_dir.join("pivots.tsv");
    write_pivots_tsv(&selection, &bundle.vocab, &path)?;
    println!(
        "selected {} pivots, {} source non-pivots, {} target non-pivots -> {}",
        selection.pivots().len(),
        selection.source_nonpivots().len(),
        selection.target_nonpivots().len(),
        path.display()
    );
    Ok(())
}

fn cmd_train_embeddings(config: &PipelineConfig) -> Result<()> {
    config.validate()?;
    let bundle = load_bundle(config)?;
    let pivots_path = config.out_dir.join("pivots.tsv");
    if !pivots_path.exists() {
        return Err(Error::InvalidInput(format!(
            "{} not found; run `crossvec select-pivots` first",
            pivots_path.display()
        )));
    }
    let selection = read_pivots_tsv(&pivots_path, &bundle.vocab)?;
    let source_instances = generate_instances(
        &bundle.source_unlabeled,
        &bundle.vocab,
        &selection,
        config.train.window,
        config.train.k,
        derive_seed(config.train.seed, 101),
    )?;
    let target_instances = generate_instances(
        &bundle.target_unlabeled,
        &bundle.vocab,
        &selection,
        config.train.window,
        config.train.k,
        derive_seed(config.train.seed, 202),
    )?;
    println!(
        "{} source + {} target instances",
        source_instances.len(),
        target_instances.len()
    );
    let outcome = train(
        &source_instances,
        &target_instances,
        &selection,
        &bundle.vocab,
        &config.train,
    )?;
    let model_bin = config.out_dir.join("model.bin");
    let model_tsv = config.out_dir.join("model.tsv");
    outcome.model.save(&model_bin)?;
    outcome.model.export_text(&model_tsv)?;
    println!(
        "trained {} epochs (early stop: {}), objective {:.6} -> {:.6}",
        outcome.epochs_run,
        outcome.early_stopped,
        outcome.objective_trace.first().unwrap(),
        outcome.objective_trace.last().unwrap()
    );
    println!("wrote {}", model_bin.display());
    println!("wrote {}", model_tsv.display());
    Ok(())
}

fn cmd_train_classifier(config: &PipelineConfig) -> Result<()> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let bundle = load_bundle(config)?;
    let labeled = load_corpus(&config.source_labeled, Domain::Source)?;
    let reviews = review_vectors(&labeled.documents, &bundle.vocab)?;
    let (train_set, _) = split_reviews(&reviews, config.train_fraction)?;
    let theta = train_logreg(&train_set, config.l2, config.train.seed, bundle.vocab.len())?;
    let path = config.out_dir.join("classifier.tsv");
    theta.save(&bundle.vocab, &path)?;
    println!(
        "trained on {} source reviews (|theta| = {:.4}) -> {}",
        train_set.len(),
        theta.norm(),
        path.display()
    );
    Ok(())
}

fn cmd_classify(config: &PipelineConfig) -> Result<()> {
    config.validate()?;
    let bundle = load_bundle(config)?;
    let selection = read_pivots_tsv(&config.out_dir.join("pivots.tsv"), &bundle.vocab)?;
    let model = EmbeddingModel::load(&config.out_dir.join("model.bin"))?;
    let theta = LinearModel::load(&config.out_dir.join("classifier.tsv"), &bundle.vocab)?;
    let labeled = load_corpus(&config.target_labeled, Domain::Target)?;
    let reviews = review_vectors(&labeled.documents, &bundle.vocab)?;
    let (_, test_set) = split_reviews(&reviews, config.train_fraction)?;
    let options = ActivationOptions {
        similarity: config.similarity,
        use_bias: config.use_bias,
    };
    let predictions: Vec<crossvec::eval::Prediction> = test_set
        .iter()
        .map(|review| {
            let gold = review.label.ok_or_else(|| {
                Error::InvalidInput(format!("test review `{}` is unlabeled", review.doc_id))
            })?;
            let (pred, psi) = classify(review, &theta, &model, &selection, options);
            Ok(crossvec::eval::Prediction {
                doc_id: review.doc_id.clone(),
                gold,
                pred,
                psi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = config.out_dir.join("predictions.tsv");
    write_predictions(&predictions, &path)?;
    let correct = predictions.iter().filter(|p| p.gold == p.pred).count();
    println!(
        "classified {} target reviews ({} correct) -> {}",
        predictions.len(),
        correct,
        path.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let predictions = read_predictions(&args.predictions)?;
    let report = evaluate_predictions(&args.method, &predictions, args.confidence)?;
    print_report(&report);
    if let Some(out) = args.out {
        write_report(std::slice::from_ref(&report), &out)?;
    }
    Ok(())
}

fn cmd_run_all(config: &PipelineConfig) -> Result<()> {
    let artifacts = run_pipeline(config)?;
    for report in &artifacts.reports {
        print_report(report);
    }
    println!("report: {}", artifacts.report_tsv.display());
    Ok(())
}

fn print_report(report: &EvalReport) {
    println!(
        "{:<10} accuracy {:.4} ({}/{})  CI [{:.4}, {:.4}]",
        report.method,
        report.accuracy,
        report.n_correct,
        report.n_total,
        report.ci_low,
        report.ci_high
    );
}

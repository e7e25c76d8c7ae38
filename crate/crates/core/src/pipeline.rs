//! End-to-end orchestration: corpus -> pivots -> co-occurrences ->
//! embeddings -> classifier -> evaluation, with every artifact
//! reproducible from config + seed.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use crate::classifier::{
    classify, review_vectors, split_reviews, train_logreg, ActivationOptions, ReviewVector,
};
use crate::config::PipelineConfig;
use crate::cooc::generate_instances;
use crate::corpus::{build_vocabulary, load_corpus, Domain, Vocabulary};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::eval::{
    baseline_indomain, baseline_na, evaluate_predictions, write_predictions, EvalReport,
    Prediction,
};
use crate::pivots::{select, write_pivots_tsv, NpmiStats, PivotSelection};
use crate::stopwords::StopwordSet;
use crate::trainer::{train, TrainOutcome};

/// Seed-stream indices for the per-domain negative samplers.
const SOURCE_SAMPLER_STREAM: u64 = 101;
const TARGET_SAMPLER_STREAM: u64 = 202;

#[derive(Debug)]
pub struct PipelineArtifacts {
    pub pivots_tsv: PathBuf,
    pub model_bin: PathBuf,
    pub model_tsv: PathBuf,
    pub classifier_tsv: PathBuf,
    pub predictions_tsv: PathBuf,
    pub report_tsv: PathBuf,
    /// NA, Proposed, InDomain in that order.
    pub reports: Vec<EvalReport>,
    pub train_outcome: TrainOutcome,
}

/// Run every stage. On failure the error names the stage and partial
/// artifacts are removed.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineArtifacts> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let mut created: Vec<PathBuf> = Vec::new();
    match run_stages(config, &mut created) {
        Ok(artifacts) => Ok(artifacts),
        Err(err) => {
            for p in created {
                let _ = fs::remove_file(p);
            }
            Err(err)
        }
    }
}

fn run_stages(
    config: &PipelineConfig,
    created: &mut Vec<PathBuf>,
) -> Result<PipelineArtifacts> {
    let stopwords = match &config.stopwords {
        Some(path) => StopwordSet::from_file(path).map_err(|e| e.in_stage("corpus"))?,
        None => StopwordSet::standard(),
    };
    let source_unlabeled = load_corpus(&config.source_unlabeled, Domain::Source)
        .map_err(|e| e.in_stage("corpus"))?;
    let target_unlabeled = load_corpus(&config.target_unlabeled, Domain::Target)
        .map_err(|e| e.in_stage("corpus"))?;
    let source_labeled = load_corpus(&config.source_labeled, Domain::Source)
        .map_err(|e| e.in_stage("corpus"))?;
    let target_labeled = load_corpus(&config.target_labeled, Domain::Target)
        .map_err(|e| e.in_stage("corpus"))?;

    let vocab = build_vocabulary(
        &source_unlabeled,
        &target_unlabeled,
        config.min_count,
        stopwords,
    )
    .map_err(|e| e.in_stage("vocabulary"))?;

    let stats = NpmiStats::build(&source_unlabeled, &target_unlabeled, &vocab);
    let selection = select(
        &vocab,
        &stats,
        config.n_pivots,
        config.n_source_nonpivots,
        config.n_target_nonpivots,
    )
    .map_err(|e| e.in_stage("pivots"))?;
    let pivots_tsv = config.out_dir.join("pivots.tsv");
    write_pivots_tsv(&selection, &vocab, &pivots_tsv).map_err(|e| e.in_stage("pivots"))?;
    created.push(pivots_tsv.clone());

    let source_instances = generate_instances(
        &source_unlabeled,
        &vocab,
        &selection,
        config.train.window,
        config.train.k,
        derive_seed(config.train.seed, SOURCE_SAMPLER_STREAM),
    )
    .map_err(|e| e.in_stage("cooc"))?;
    let target_instances = generate_instances(
        &target_unlabeled,
        &vocab,
        &selection,
        config.train.window,
        config.train.k,
        derive_seed(config.train.seed, TARGET_SAMPLER_STREAM),
    )
    .map_err(|e| e.in_stage("cooc"))?;

    let outcome = train(
        &source_instances,
        &target_instances,
        &selection,
        &vocab,
        &config.train,
    )
    .map_err(|e| e.in_stage("trainer"))?;
    let model_bin = config.out_dir.join("model.bin");
    let model_tsv = config.out_dir.join("model.tsv");
    outcome.model.save(&model_bin).map_err(|e| e.in_stage("trainer"))?;
    created.push(model_bin.clone());
    outcome
        .model
        .export_text(&model_tsv)
        .map_err(|e| e.in_stage("trainer"))?;
    created.push(model_tsv.clone());

    let source_reviews =
        review_vectors(&source_labeled.documents, &vocab).map_err(|e| e.in_stage("classifier"))?;
    let target_reviews =
        review_vectors(&target_labeled.documents, &vocab).map_err(|e| e.in_stage("classifier"))?;
    let (source_train, _source_test) =
        split_reviews(&source_reviews, config.train_fraction).map_err(|e| e.in_stage("classifier"))?;
    let (target_train, target_test) =
        split_reviews(&target_reviews, config.train_fraction).map_err(|e| e.in_stage("classifier"))?;
    let theta = train_logreg(&source_train, config.l2, config.train.seed, vocab.len())
        .map_err(|e| e.in_stage("classifier"))?;
    let classifier_tsv = config.out_dir.join("classifier.tsv");
    theta
        .save(&vocab, &classifier_tsv)
        .map_err(|e| e.in_stage("classifier"))?;
    created.push(classifier_tsv.clone());

    let options = ActivationOptions {
        similarity: config.similarity,
        use_bias: config.use_bias,
    };
    let predictions = proposed_predictions(&target_test, &theta, &outcome, &selection, options)
        .map_err(|e| e.in_stage("classify"))?;
    let predictions_tsv = config.out_dir.join("predictions.tsv");
    write_predictions(&predictions, &predictions_tsv).map_err(|e| e.in_stage("classify"))?;
    created.push(predictions_tsv.clone());

    let proposed_report = evaluate_predictions("Proposed", &predictions, config.confidence)
        .map_err(|e| e.in_stage("evaluate"))?;
    let (na_report, _, _) = baseline_na(
        &source_train,
        &target_test,
        &vocab,
        config.l2,
        config.train.seed,
        config.confidence,
    )
    .map_err(|e| e.in_stage("evaluate"))?;
    let (indomain_report, _, _) = baseline_indomain(
        &target_train,
        &target_test,
        &vocab,
        config.l2,
        config.train.seed,
        config.confidence,
    )
    .map_err(|e| e.in_stage("evaluate"))?;
    let report_tsv = config.out_dir.join("report.tsv");
    let reports = vec![na_report, proposed_report, indomain_report];
    write_report(&reports, &report_tsv).map_err(|e| e.in_stage("evaluate"))?;
    created.push(report_tsv.clone());

    Ok(PipelineArtifacts {
        pivots_tsv,
        model_bin,
        model_tsv,
        classifier_tsv,
        predictions_tsv,
        report_tsv,
        reports,
        train_outcome: outcome,
    })
}

fn proposed_predictions(
    target_test: &[ReviewVector],
    theta: &crate::classifier::LinearModel,
    outcome: &TrainOutcome,
    selection: &PivotSelection,
    options: ActivationOptions,
) -> Result<Vec<Prediction>> {
    target_test
        .iter()
        .map(|review| {
            let gold = review.label.ok_or_else(|| {
                Error::InvalidInput(format!("test review `{}` is unlabeled", review.doc_id))
            })?;
            let (pred, psi) = classify(review, theta, &outcome.model, selection, options);
            Ok(Prediction {
                doc_id: review.doc_id.clone(),
                gold,
                pred,
                psi,
            })
        })
        .collect()
}

pub fn write_report(reports: &[EvalReport], path: &std::path::Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for r in reports {
        writeln!(out, "{}", r.tsv_row())?;
    }
    Ok(())
}

/// Shared plumbing for the CLI stage subcommands: corpora, vocabulary and
/// NPMI stats rebuilt deterministically from the config.
pub struct CorpusBundle {
    pub source_unlabeled: crate::corpus::DomainCorpus,
    pub target_unlabeled: crate::corpus::DomainCorpus,
    pub vocab: Vocabulary,
}

pub fn load_bundle(config: &PipelineConfig) -> Result<CorpusBundle> {
    let stopwords = match &config.stopwords {
        Some(path) => StopwordSet::from_file(path)?,
        None => StopwordSet::standard(),
    };
    let source_unlabeled = load_corpus(&config.source_unlabeled, Domain::Source)?;
    let target_unlabeled = load_corpus(&config.target_unlabeled, Domain::Target)?;
    let vocab = build_vocabulary(
        &source_unlabeled,
        &target_unlabeled,
        config.min_count,
        stopwords,
    )?;
    Ok(CorpusBundle {
        source_unlabeled,
        target_unlabeled,
        vocab,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_synthetic, SyntheticSpec};

    fn desk_config(dir: &std::path::Path) -> PipelineConfig {
        let spec = SyntheticSpec {
            labeled_per_class: 40,
            unlabeled_docs: 120,
            ..SyntheticSpec::default()
        };
        let paths = gen_synthetic(&spec, dir).unwrap();
        let mut config = PipelineConfig {
            source_unlabeled: paths.source_unlabeled,
            target_unlabeled: paths.target_unlabeled,
            source_labeled: paths.source_labeled,
            target_labeled: paths.target_labeled,
            out_dir: dir.join("out"),
            ..PipelineConfig::default()
        };
        config.apply_desk();
        config.n_pivots = 25;
        config.n_source_nonpivots = 25;
        config.n_target_nonpivots = 25;
        config.train.n = 20;
        config.train.max_epochs = 12;
        config
    }

    #[test]
    fn pipeline_produces_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = desk_config(dir.path());
        let artifacts = run_pipeline(&config).unwrap();
        for p in [
            &artifacts.pivots_tsv,
            &artifacts.model_bin,
            &artifacts.model_tsv,
            &artifacts.classifier_tsv,
            &artifacts.predictions_tsv,
            &artifacts.report_tsv,
        ] {
            assert!(p.exists(), "{p:?} missing");
        }
        assert_eq!(artifacts.reports.len(), 3);
        assert_eq!(artifacts.reports[0].method, "NA");
        assert_eq!(artifacts.reports[1].method, "Proposed");
        assert_eq!(artifacts.reports[2].method, "InDomain");
    }

    #[test]
    fn pipeline_fails_at_pivot_stage_when_too_many_requested() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = desk_config(dir.path());
        config.n_pivots = 100_000;
        match run_pipeline(&config) {
            Err(Error::Stage { stage, source }) => {
                assert_eq!(stage, "pivots");
                assert!(matches!(*source, Error::InsufficientCandidates { .. }));
            }
            other => panic!("expected pivots-stage failure, got {other:?}"),
        }
        // Partial artifacts were removed.
        assert!(!config.out_dir.join("pivots.tsv").exists());
        assert!(!config.out_dir.join("model.bin").exists());
    }

    #[test]
    fn pipeline_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = desk_config(dir.path());
        config.out_dir = dir.path().join("run1");
        run_pipeline(&config).unwrap();
        let mut config2 = config.clone();
        config2.out_dir = dir.path().join("run2");
        run_pipeline(&config2).unwrap();
        for name in ["model.bin", "classifier.tsv", "predictions.tsv", "report.tsv", "pivots.tsv"] {
            let a = fs::read(config.out_dir.join(name)).unwrap();
            let b = fs::read(config2.out_dir.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
    }
}

//! Source-trained sentiment classification and its transfer to the target
//! domain through the embedding-similarity activation score.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::ArrayView1;

use crate::corpus::{Document, FeatureId, Sentiment, Vocabulary};
use crate::embedding::{EmbeddingModel, Table};
use crate::error::{Error, Result};
use crate::pivots::{FeatureRole, PivotSelection};

/// A review as a binary bag of vocabulary features.
#[derive(Debug, Clone)]
pub struct ReviewVector {
    pub doc_id: String,
    /// Sorted, de-duplicated feature ids.
    pub features: Vec<FeatureId>,
    pub label: Option<Sentiment>,
}

/// Build the binary feature vector of a document against a frozen
/// vocabulary. Documents whose features are all out of vocabulary yield
/// an empty bag and are rejected.
pub fn review_vector(doc: &Document, vocab: &Vocabulary) -> Result<ReviewVector> {
    let mut features: Vec<FeatureId> = crate::corpus::document_features(doc, vocab)
        .into_iter()
        .collect();
    features.sort();
    if features.is_empty() {
        return Err(Error::InvalidInput(format!(
            "document `{}` has no in-vocabulary features",
            doc.id
        )));
    }
    Ok(ReviewVector {
        doc_id: doc.id.clone(),
        features,
        label: doc.label,
    })
}

/// Feature-indexed weight vector of the trained linear classifier.
#[derive(Debug, Clone)]
pub struct LinearModel {
    weights: Vec<f64>,
    bias: f64,
    l2: f64,
}

impl LinearModel {
    pub fn weight(&self, f: FeatureId) -> f64 {
        self.weights.get(f.index()).copied().unwrap_or(0.0)
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    /// Raw linear score theta.x + bias on the binary bag.
    pub fn raw_score(&self, review: &ReviewVector) -> f64 {
        review
            .features
            .iter()
            .map(|&f| self.weight(f))
            .sum::<f64>()
            + self.bias
    }

    /// Exact-match prediction: positive iff the raw score is > 0.
    pub fn predict_raw(&self, review: &ReviewVector) -> Sentiment {
        if self.raw_score(review) > 0.0 {
            Sentiment::Positive
        } else {
            Sentiment::Negative
        }
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Text rows `surface<TAB>weight` (nonzero weights only) plus a
    /// `__bias__` row.
    pub fn save(&self, vocab: &Vocabulary, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for (i, &w) in self.weights.iter().enumerate() {
            if w != 0.0 {
                writeln!(out, "{}\t{}", vocab.surface(FeatureId(i as u32)), w)?;
            }
        }
        writeln!(out, "__bias__\t{}", self.bias)?;
        Ok(())
    }

    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<LinearModel> {
        let text = fs::read_to_string(path)?;
        let mut weights = vec![0.0; vocab.len()];
        let mut bias = 0.0;
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (surface, value) = line.split_once('\t').ok_or_else(|| {
                Error::parse(path, lineno, "expected `surface<TAB>weight`")
            })?;
            let value: f64 = value
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad weight `{value}`")))?;
            if surface == "__bias__" {
                bias = value;
            } else {
                let f = vocab.lookup(surface).ok_or_else(|| {
                    Error::parse(path, lineno, format!("`{surface}` is not in the vocabulary"))
                })?;
                weights[f.index()] = value;
            }
        }
        Ok(LinearModel {
            weights,
            bias,
            l2: 0.0,
        })
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

struct LogRegProblem<'a> {
    reviews: &'a [ReviewVector],
    labels: Vec<f64>,
    l2: f64,
    n_features: usize,
}

impl LogRegProblem<'_> {
    /// Mean logistic loss plus (l2/2)||theta||^2; bias unregularized.
    fn loss(&self, weights: &[f64], bias: f64) -> f64 {
        let m = self.reviews.len() as f64;
        let mut total = 0.0;
        for (review, &y) in self.reviews.iter().zip(&self.labels) {
            let z: f64 = review.features.iter().map(|&f| weights[f.index()]).sum::<f64>() + bias;
            total += softplus(-y * z);
        }
        total / m + 0.5 * self.l2 * weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Full-batch gradient; returns (d/dweights, d/dbias).
    fn gradient(&self, weights: &[f64], bias: f64) -> (Vec<f64>, f64) {
        let m = self.reviews.len() as f64;
        let mut gw = vec![0.0; self.n_features];
        let mut gb = 0.0;
        for (review, &y) in self.reviews.iter().zip(&self.labels) {
            let z: f64 = review.features.iter().map(|&f| weights[f.index()]).sum::<f64>() + bias;
            let coef = -y * sigmoid(-y * z) / m;
            for &f in &review.features {
                gw[f.index()] += coef;
            }
            gb += coef;
        }
        for (g, w) in gw.iter_mut().zip(weights) {
            *g += self.l2 * w;
        }
        (gw, gb)
    }
}

const GRAD_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 50_000;

/// Train an l2-regularized logistic regression on labeled reviews by
/// deterministic full-batch descent with backtracking line search, down to
/// max-norm gradient tolerance 1e-6 (or the iteration cap for
/// near-separable problems with vanishing regularization).
///
/// The seed argument is part of the call contract but unused: the solver
/// consumes no randomness.
pub fn train_logreg(
    reviews: &[ReviewVector],
    l2: f64,
    _seed: u64,
    n_features: usize,
) -> Result<LinearModel> {
    if l2 < 0.0 {
        return Err(Error::InvalidInput("l2 must be >= 0".into()));
    }
    let labels: Vec<f64> = reviews
        .iter()
        .map(|r| {
            r.label
                .map(Sentiment::value)
                .ok_or_else(|| Error::InvalidInput(format!("review `{}` is unlabeled", r.doc_id)))
        })
        .collect::<Result<Vec<f64>>>()?;
    if labels.is_empty() {
        return Err(Error::InvalidInput("no training reviews".into()));
    }
    let has_pos = labels.iter().any(|&y| y > 0.0);
    let has_neg = labels.iter().any(|&y| y < 0.0);
    if !has_pos || !has_neg {
        return Err(Error::InvalidInput(
            "training data must contain both classes".into(),
        ));
    }
    let problem = LogRegProblem {
        reviews,
        labels,
        l2,
        n_features,
    };
    let mut weights = vec![0.0; n_features];
    let mut bias = 0.0;
    let mut loss = problem.loss(&weights, bias);
    let mut step: f64 = 1.0;
    for _ in 0..MAX_ITERS {
        let (gw, gb) = problem.gradient(&weights, bias);
        let max_norm = gw
            .iter()
            .chain(std::iter::once(&gb))
            .fold(0.0f64, |acc, g| acc.max(g.abs()));
        if max_norm < GRAD_TOL {
            break;
        }
        let g2: f64 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        // Backtracking (Armijo) from twice the last accepted step.
        step = (step * 2.0).min(1e6);
        let mut accepted = false;
        for _ in 0..80 {
            let trial_w: Vec<f64> = weights
                .iter()
                .zip(&gw)
                .map(|(w, g)| w - step * g)
                .collect();
            let trial_b = bias - step * gb;
            let trial_loss = problem.loss(&trial_w, trial_b);
            if trial_loss <= loss - 1e-4 * step * g2 {
                weights = trial_w;
                bias = trial_b;
                loss = trial_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // step underflowed: no further progress possible
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("logistic loss diverged".into()));
    }
    Ok(LinearModel { weights, bias, l2 })
}

/// Pluggable similarity for the activation score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    Cosine,
    Dot,
    /// 1 iff the two features are identical, else 0; reduces the
    /// activation score to the raw linear score on matched features.
    Kronecker,
}

impl Similarity {
    pub fn parse(s: &str) -> Option<Similarity> {
        match s {
            "cosine" => Some(Similarity::Cosine),
            "dot" => Some(Similarity::Dot),
            "kronecker" => Some(Similarity::Kronecker),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Similarity::Cosine => "cosine",
            Similarity::Dot => "dot",
            Similarity::Kronecker => "kronecker",
        }
    }
}

/// Cosine similarity; zero-norm vectors compare as 0.
pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(&b) / (na * nb)
}

fn vector_similarity(f: Similarity, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    match f {
        Similarity::Cosine => cosine(a, b),
        Similarity::Dot => a.dot(&b),
        Similarity::Kronecker => unreachable!("kronecker is resolved on feature identity"),
    }
}

/// Options for the activation score.
#[derive(Debug, Clone, Copy)]
pub struct ActivationOptions {
    pub similarity: Similarity,
    /// Include the classifier bias in the score (off by default; the
    /// activation score proper has no bias term).
    pub use_bias: bool,
}

impl Default for ActivationOptions {
    fn default() -> Self {
        ActivationOptions {
            similarity: Similarity::Cosine,
            use_bias: false,
        }
    }
}

/// The activation score: every pivot of the review is matched against
/// every pivot the classifier knows (source representations on both
/// sides), and every target non-pivot of the review against every source
/// non-pivot in the classifier (source representation against target
/// representation). Review features outside the selection fall back to
/// their exact-match weight.
pub fn activation(
    review: &ReviewVector,
    theta: &LinearModel,
    model: &EmbeddingModel,
    selection: &PivotSelection,
    options: ActivationOptions,
) -> f64 {
    let theta_pivots: Vec<(usize, f64, FeatureId)> = selection
        .pivots()
        .iter()
        .enumerate()
        .filter_map(|(row, &f)| {
            let w = theta.weight(f);
            (w != 0.0).then_some((row, w, f))
        })
        .collect();
    let theta_source_nonpivots: Vec<(usize, f64, FeatureId)> = selection
        .source_nonpivots()
        .iter()
        .enumerate()
        .filter_map(|(row, &f)| {
            let w = theta.weight(f);
            (w != 0.0).then_some((row, w, f))
        })
        .collect();
    let mut psi = 0.0;
    for &f in &review.features {
        match selection.role(f) {
            Some((FeatureRole::Pivot, row)) => {
                let c_vec = model.table(Table::SourcePivot).row(row);
                for &(prow, weight, pf) in &theta_pivots {
                    psi += weight
                        * match options.similarity {
                            Similarity::Kronecker => {
                                if pf == f {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            sim => vector_similarity(
                                sim,
                                model.table(Table::SourcePivot).row(prow),
                                c_vec,
                            ),
                        };
                }
            }
            Some((FeatureRole::TargetNonPivot, row)) => {
                let w_vec = model.table(Table::TargetNonPivot).row(row);
                for &(srow, weight, sf) in &theta_source_nonpivots {
                    psi += weight
                        * match options.similarity {
                            Similarity::Kronecker => {
                                if sf == f {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            sim => vector_similarity(
                                sim,
                                model.table(Table::SourceNonPivot).row(srow),
                                w_vec,
                            ),
                        };
                }
            }
            Some((FeatureRole::SourceNonPivot, _)) => {
                // Source-exclusive features carry no mass in a target
                // review's score; their transfer happens through the
                // classifier side of the second sum.
            }
            None => {
                psi += theta.weight(f);
            }
        }
    }
    if options.use_bias {
        psi += theta.bias();
    }
    psi
}

/// Sign rule on the activation score: positive iff psi > 0, negative
/// otherwise (ties go negative).
pub fn classify(
    review: &ReviewVector,
    theta: &LinearModel,
    model: &EmbeddingModel,
    selection: &PivotSelection,
    options: ActivationOptions,
) -> (Sentiment, f64) {
    let psi = activation(review, theta, model, selection, options);
    let label = if psi > 0.0 {
        Sentiment::Positive
    } else {
        Sentiment::Negative
    };
    (label, psi)
}

/// Top-k cosine neighbors of `query` among the rows of both non-pivot
/// tables; returns (surface, similarity) pairs, best first.
pub fn nonpivot_neighbors(
    model: &EmbeddingModel,
    query: ArrayView1<f64>,
    k: usize,
) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = Vec::new();
    for (table, surfaces) in [
        (Table::SourceNonPivot, model.source_nonpivot_surfaces()),
        (Table::TargetNonPivot, model.target_nonpivot_surfaces()),
    ] {
        for (row, surface) in surfaces.iter().enumerate() {
            scored.push((surface.clone(), cosine(query, model.table(table).row(row))));
        }
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("cosine is finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(k);
    scored
}

/// Finite-difference check target: the regularized training objective at
/// an arbitrary parameter point (exposed for tests).
pub fn logreg_loss(
    reviews: &[ReviewVector],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> Result<f64> {
    let labels: Vec<f64> = reviews
        .iter()
        .map(|r| {
            r.label
                .map(Sentiment::value)
                .ok_or_else(|| Error::InvalidInput("unlabeled review".into()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let problem = LogRegProblem {
        reviews,
        labels,
        l2,
        n_features: weights.len(),
    };
    Ok(problem.loss(weights, bias))
}

/// Analytic gradient of the training objective (exposed for tests).
pub fn logreg_gradient(
    reviews: &[ReviewVector],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> Result<(Vec<f64>, f64)> {
    let labels: Vec<f64> = reviews
        .iter()
        .map(|r| {
            r.label
                .map(Sentiment::value)
                .ok_or_else(|| Error::InvalidInput("unlabeled review".into()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let problem = LogRegProblem {
        reviews,
        labels,
        l2,
        n_features: weights.len(),
    };
    Ok(problem.gradient(weights, bias))
}

/// Convenience: map documents to review vectors, skipping nothing.
pub fn review_vectors(docs: &[Document], vocab: &Vocabulary) -> Result<Vec<ReviewVector>> {
    docs.iter().map(|d| review_vector(d, vocab)).collect()
}

/// Split labeled reviews per class: the first `train_fraction` of each
/// class (in input order) trains, the rest tests.
pub fn split_reviews(
    reviews: &[ReviewVector],
    train_fraction: f64,
) -> Result<(Vec<ReviewVector>, Vec<ReviewVector>)> {
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(Error::InvalidInput(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: HashMap<Sentiment, Vec<&ReviewVector>> = HashMap::new();
    for r in reviews {
        let label = r.label.ok_or_else(|| {
            Error::InvalidInput(format!("review `{}` is unlabeled", r.doc_id))
        })?;
        by_class.entry(label).or_default().push(r);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [Sentiment::Positive, Sentiment::Negative] {
        let members = by_class.remove(&class).unwrap_or_default();
        let n_train = ((members.len() as f64) * train_fraction).round() as usize;
        let n_train = n_train.min(members.len());
        for (i, r) in members.into_iter().enumerate() {
            if i < n_train {
                train.push(r.clone());
            } else {
                test.push(r.clone());
            }
        }
    }
    if test.is_empty() {
        return Err(Error::InvalidInput(
            "labeled split produced an empty test set".into(),
        ));
    }
    Ok((train, test))
}

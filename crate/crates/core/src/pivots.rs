//! NPMI scoring against each domain, and selection of pivots (common,
//! high-scoring features) and per-domain non-pivots.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::corpus::{extract_features, Domain, DomainCorpus, FeatureId, Vocabulary};
use crate::error::{Error, Result};

/// Sentence-level association counts between each feature and the domain
/// indicator, estimated over the union of both domains' sentences.
#[derive(Debug, Clone)]
pub struct NpmiStats {
    source_sentences: u64,
    target_sentences: u64,
    /// Per feature: number of source sentences containing it.
    sent_source: Vec<u64>,
    /// Per feature: number of target sentences containing it.
    sent_target: Vec<u64>,
}

impl NpmiStats {
    pub fn build(source: &DomainCorpus, target: &DomainCorpus, vocab: &Vocabulary) -> NpmiStats {
        let mut sent_source = vec![0u64; vocab.len()];
        let mut sent_target = vec![0u64; vocab.len()];
        let mut source_sentences = 0u64;
        let mut target_sentences = 0u64;
        for (corpus, counts, total) in [
            (source, &mut sent_source, &mut source_sentences),
            (target, &mut sent_target, &mut target_sentences),
        ] {
            for doc in &corpus.documents {
                *total += doc.sentences.len() as u64;
                let mut per_sentence: HashMap<usize, HashSet<FeatureId>> = HashMap::new();
                for occ in extract_features(doc, vocab) {
                    per_sentence.entry(occ.sentence).or_default().insert(occ.feature);
                }
                for features in per_sentence.values() {
                    for &f in features {
                        counts[f.index()] += 1;
                    }
                }
            }
        }
        NpmiStats {
            source_sentences,
            target_sentences,
            sent_source,
            sent_target,
        }
    }

    pub fn total_sentences(&self) -> u64 {
        self.source_sentences + self.target_sentences
    }

    pub fn sentences_in(&self, domain: Domain) -> u64 {
        match domain {
            Domain::Source => self.source_sentences,
            Domain::Target => self.target_sentences,
        }
    }

    pub fn containing_in(&self, x: FeatureId, domain: Domain) -> u64 {
        match domain {
            Domain::Source => self.sent_source[x.index()],
            Domain::Target => self.sent_target[x.index()],
        }
    }

    fn containing_total(&self, x: FeatureId) -> u64 {
        self.sent_source[x.index()] + self.sent_target[x.index()]
    }

    /// NPMI between the event "a sentence contains `x`" and the event "the
    /// sentence belongs to `domain`".
    pub fn domain_affinity(&self, x: FeatureId, domain: Domain) -> Result<f64> {
        let c_x = self.containing_total(x);
        if c_x == 0 {
            return Err(Error::InvalidInput(
                "feature occurs in no sentence of either domain".into(),
            ));
        }
        let n = self.total_sentences() as f64;
        let p_xy = self.containing_in(x, domain) as f64 / n;
        let p_x = c_x as f64 / n;
        let p_y = self.sentences_in(domain) as f64 / n;
        npmi(p_xy, p_x, p_y)
    }

    /// min(NPMI(x, S), NPMI(x, T)); only defined for features present in
    /// both domains.
    pub fn pivot_score(&self, x: FeatureId, vocab: &Vocabulary) -> Result<f64> {
        if vocab.count_source(x) == 0 || vocab.count_target(x) == 0 {
            return Err(Error::InvalidInput(format!(
                "`{}` does not occur in both domains",
                vocab.surface(x)
            )));
        }
        let s = self.domain_affinity(x, Domain::Source)?;
        let t = self.domain_affinity(x, Domain::Target)?;
        Ok(s.min(t))
    }
}

/// Normalized pointwise mutual information:
/// `log(p_xy / (p_x * p_y)) / (-log p_xy)`, in [-1, 1].
///
/// `p_xy = 0` maps to -1 (the distribution's lower bound) so rankings stay
/// total; `p_xy = 1` is rejected (zero denominator).
pub fn npmi(p_xy: f64, p_x: f64, p_y: f64) -> Result<f64> {
    if !(p_x > 0.0 && p_x <= 1.0 && p_y > 0.0 && p_y <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "marginals must lie in (0, 1]: p_x={p_x}, p_y={p_y}"
        )));
    }
    if p_xy == 0.0 {
        return Ok(-1.0);
    }
    if p_xy >= 1.0 {
        return Err(Error::InvalidInput(
            "p_xy = 1 leaves NPMI undefined (zero denominator)".into(),
        ));
    }
    if p_xy < 0.0 || p_xy > p_x.min(p_y) {
        return Err(Error::InvalidInput(format!(
            "p_xy must satisfy 0 <= p_xy <= min(p_x, p_y): p_xy={p_xy}, p_x={p_x}, p_y={p_y}"
        )));
    }
    Ok((p_xy / (p_x * p_y)).ln() / -p_xy.ln())
}

/// Role of a selected feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureRole {
    Pivot,
    SourceNonPivot,
    TargetNonPivot,
}

impl FeatureRole {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureRole::Pivot => "pivot",
            FeatureRole::SourceNonPivot => "src_nonpivot",
            FeatureRole::TargetNonPivot => "tgt_nonpivot",
        }
    }

    fn parse(s: &str) -> Option<FeatureRole> {
        match s {
            "pivot" => Some(FeatureRole::Pivot),
            "src_nonpivot" => Some(FeatureRole::SourceNonPivot),
            "tgt_nonpivot" => Some(FeatureRole::TargetNonPivot),
            _ => None,
        }
    }
}

impl fmt::Display for FeatureRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The selected pivots and per-domain non-pivots, each list sorted by
/// descending score with ties broken by higher total frequency, then by
/// lexicographic surface order.
#[derive(Debug, Clone)]
pub struct PivotSelection {
    pivots: Vec<FeatureId>,
    pivot_scores: Vec<f64>,
    source_nonpivots: Vec<FeatureId>,
    source_scores: Vec<f64>,
    target_nonpivots: Vec<FeatureId>,
    target_scores: Vec<f64>,
    role: HashMap<FeatureId, (FeatureRole, usize)>,
}

impl PivotSelection {
    fn assemble(
        pivots: Vec<(FeatureId, f64)>,
        source: Vec<(FeatureId, f64)>,
        target: Vec<(FeatureId, f64)>,
    ) -> PivotSelection {
        let mut role = HashMap::new();
        for (i, &(f, _)) in pivots.iter().enumerate() {
            role.insert(f, (FeatureRole::Pivot, i));
        }
        for (i, &(f, _)) in source.iter().enumerate() {
            role.insert(f, (FeatureRole::SourceNonPivot, i));
        }
        for (i, &(f, _)) in target.iter().enumerate() {
            role.insert(f, (FeatureRole::TargetNonPivot, i));
        }
        let split = |v: Vec<(FeatureId, f64)>| -> (Vec<FeatureId>, Vec<f64>) {
            v.into_iter().unzip()
        };
        let (pivots, pivot_scores) = split(pivots);
        let (source_nonpivots, source_scores) = split(source);
        let (target_nonpivots, target_scores) = split(target);
        PivotSelection {
            pivots,
            pivot_scores,
            source_nonpivots,
            source_scores,
            target_nonpivots,
            target_scores,
            role,
        }
    }

    pub fn pivots(&self) -> &[FeatureId] {
        &self.pivots
    }

    pub fn source_nonpivots(&self) -> &[FeatureId] {
        &self.source_nonpivots
    }

    pub fn target_nonpivots(&self) -> &[FeatureId] {
        &self.target_nonpivots
    }

    pub fn nonpivots_in(&self, domain: Domain) -> &[FeatureId] {
        match domain {
            Domain::Source => &self.source_nonpivots,
            Domain::Target => &self.target_nonpivots,
        }
    }

    pub fn pivot_scores(&self) -> &[f64] {
        &self.pivot_scores
    }

    pub fn n_pivots(&self) -> usize {
        self.pivots.len()
    }

    /// Role and within-list row index of a feature, if selected.
    pub fn role(&self, f: FeatureId) -> Option<(FeatureRole, usize)> {
        self.role.get(&f).copied()
    }

    pub fn pivot_row(&self, f: FeatureId) -> Option<usize> {
        match self.role(f) {
            Some((FeatureRole::Pivot, i)) => Some(i),
            _ => None,
        }
    }

    pub fn nonpivot_row(&self, f: FeatureId, domain: Domain) -> Option<usize> {
        match (self.role(f), domain) {
            (Some((FeatureRole::SourceNonPivot, i)), Domain::Source) => Some(i),
            (Some((FeatureRole::TargetNonPivot, i)), Domain::Target) => Some(i),
            _ => None,
        }
    }
}

/// Descending by score, ties by higher total count, then surface order.
fn rank_order(
    candidates: &mut Vec<(FeatureId, f64)>,
    vocab: &Vocabulary,
) {
    candidates.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("NPMI scores are finite")
            .then_with(|| vocab.total_count(b.0).cmp(&vocab.total_count(a.0)))
            .then_with(|| vocab.surface(a.0).cmp(vocab.surface(b.0)))
    });
}

/// Select the top `n_pivots` common features by pivot score and the top
/// per-domain exclusive features by domain affinity.
pub fn select(
    vocab: &Vocabulary,
    stats: &NpmiStats,
    n_pivots: usize,
    n_source: usize,
    n_target: usize,
) -> Result<PivotSelection> {
    if n_pivots == 0 {
        return Err(Error::InvalidInput(
            "n_pivots must be >= 1 (pivotless training is undefined)".into(),
        ));
    }
    let mut common = Vec::new();
    let mut source_only = Vec::new();
    let mut target_only = Vec::new();
    for f in vocab.ids() {
        let in_source = vocab.count_source(f) >= 1;
        let in_target = vocab.count_target(f) >= 1;
        match (in_source, in_target) {
            (true, true) => common.push((f, stats.pivot_score(f, vocab)?)),
            (true, false) => source_only.push((f, stats.domain_affinity(f, Domain::Source)?)),
            (false, true) => target_only.push((f, stats.domain_affinity(f, Domain::Target)?)),
            (false, false) => {}
        }
    }
    for (candidates, requested, category) in [
        (&common, n_pivots, "pivot"),
        (&source_only, n_source, "source non-pivot"),
        (&target_only, n_target, "target non-pivot"),
    ] {
        if candidates.len() < requested {
            return Err(Error::InsufficientCandidates {
                category: match category {
                    "pivot" => "pivot",
                    "source non-pivot" => "source non-pivot",
                    _ => "target non-pivot",
                },
                requested,
                available: candidates.len(),
            });
        }
    }
    rank_order(&mut common, vocab);
    rank_order(&mut source_only, vocab);
    rank_order(&mut target_only, vocab);
    common.truncate(n_pivots);
    source_only.truncate(n_source);
    target_only.truncate(n_target);
    Ok(PivotSelection::assemble(common, source_only, target_only))
}

/// Write `surface<TAB>category<TAB>score` rows, sorted as selected.
pub fn write_pivots_tsv(
    selection: &PivotSelection,
    vocab: &Vocabulary,
    path: &Path,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for (ids, scores, role) in [
        (&selection.pivots, &selection.pivot_scores, FeatureRole::Pivot),
        (
            &selection.source_nonpivots,
            &selection.source_scores,
            FeatureRole::SourceNonPivot,
        ),
        (
            &selection.target_nonpivots,
            &selection.target_scores,
            FeatureRole::TargetNonPivot,
        ),
    ] {
        for (&f, &score) in ids.iter().zip(scores.iter()) {
            writeln!(out, "{}\t{}\t{}", vocab.surface(f), role, score)?;
        }
    }
    Ok(())
}

/// Read a selection back (or ingest an externally supplied pivot list in
/// the same format).
pub fn read_pivots_tsv(path: &Path, vocab: &Vocabulary) -> Result<PivotSelection> {
    let text = fs::read_to_string(path)?;
    let mut pivots = Vec::new();
    let mut source = Vec::new();
    let mut target = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(Error::parse(path, lineno, "expected `surface<TAB>category<TAB>score`"));
        }
        let feature = vocab.lookup(parts[0]).ok_or_else(|| {
            Error::parse(path, lineno, format!("`{}` is not in the vocabulary", parts[0]))
        })?;
        let role = FeatureRole::parse(parts[1])
            .ok_or_else(|| Error::parse(path, lineno, format!("unknown category `{}`", parts[1])))?;
        let score: f64 = parts[2]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad score `{}`", parts[2])))?;
        match role {
            FeatureRole::Pivot => pivots.push((feature, score)),
            FeatureRole::SourceNonPivot => source.push((feature, score)),
            FeatureRole::TargetNonPivot => target.push((feature, score)),
        }
    }
    if pivots.is_empty() {
        return Err(Error::parse(path, 0, "no pivot rows found"));
    }
    Ok(PivotSelection::assemble(pivots, source, target))
}

//! Enumeration of (pivot, non-pivot) training co-occurrences within a
//! fixed contextual window, and negative sampling from the smoothed
//! unigram distribution p(w)^(3/4).

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    document_features, extract_features, Domain, DomainCorpus, FeatureId, FeatureOccurrence,
    Vocabulary,
};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::pivots::PivotSelection;

/// One training instance: a pivot, the observed non-pivot it must rank
/// above, and `k` sampled negatives that do not occur in the source
/// document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoocInstance {
    pub domain: Domain,
    pub pivot: FeatureId,
    pub positive: FeatureId,
    pub negatives: Vec<FeatureId>,
}

/// Emit (pivot, non-pivot) pairs for every same-sentence occurrence pair
/// whose positions differ by at most `window`. Multiplicity is preserved:
/// each qualifying occurrence pair yields one emission.
pub fn enumerate_pairs(
    occurrences: &[FeatureOccurrence],
    selection: &PivotSelection,
    domain: Domain,
    window: usize,
) -> Vec<(FeatureId, FeatureId)> {
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < occurrences.len() {
        let sentence = occurrences[i].sentence;
        let mut j = i;
        while j < occurrences.len() && occurrences[j].sentence == sentence {
            j += 1;
        }
        let in_sentence = &occurrences[i..j];
        for pivot_occ in in_sentence {
            if selection.pivot_row(pivot_occ.feature).is_none() {
                continue;
            }
            for np_occ in in_sentence {
                if selection.nonpivot_row(np_occ.feature, domain).is_none() {
                    continue;
                }
                if pivot_occ.position.abs_diff(np_occ.position) <= window {
                    pairs.push((pivot_occ.feature, np_occ.feature));
                }
            }
        }
        i = j;
    }
    pairs
}

/// Negative-sampling distribution over one domain's non-pivots, with mass
/// proportional to count^(3/4).
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    ids: Vec<FeatureId>,
    weights: Vec<f64>,
    cdf: Vec<f64>,
    base_seed: u64,
}

/// Rejection attempts before switching to explicit restricted
/// renormalization.
const REJECTION_CAP: usize = 1000;

pub fn build_sampler(
    vocab: &Vocabulary,
    selection: &PivotSelection,
    domain: Domain,
    seed: u64,
) -> Result<NegativeSampler> {
    let ids: Vec<FeatureId> = selection.nonpivots_in(domain).to_vec();
    if ids.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no {domain} non-pivots to sample from"
        )));
    }
    let raw: Vec<f64> = ids
        .iter()
        .map(|&f| (vocab.count_in(f, domain) as f64).powf(0.75))
        .collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in &weights {
        acc += w;
        cdf.push(acc);
    }
    *cdf.last_mut().unwrap() = 1.0;
    Ok(NegativeSampler {
        ids,
        weights,
        cdf,
        base_seed: seed,
    })
}

impl NegativeSampler {
    pub fn ids(&self) -> &[FeatureId] {
        &self.ids
    }

    /// Normalized weights, aligned with `ids`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// RNG stream for one document, derived from the sampler seed and the
    /// document index so parallel and serial runs draw identically.
    pub fn rng_for_doc(&self, doc_index: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.base_seed, doc_index as u64))
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> FeatureId {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.ids.len() - 1);
        self.ids[idx]
    }

    /// Draw `k` negatives (with replacement) from the distribution
    /// restricted to non-pivots outside `excluded`.
    pub fn sample_negatives(
        &self,
        excluded: &HashSet<FeatureId>,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<FeatureId>> {
        let mut out = Vec::with_capacity(k);
        let mut rejections = 0usize;
        while out.len() < k {
            if rejections >= REJECTION_CAP {
                return self.sample_restricted(excluded, k, out, rng);
            }
            let candidate = self.draw(rng);
            if excluded.contains(&candidate) {
                rejections += 1;
            } else {
                out.push(candidate);
            }
        }
        Ok(out)
    }

    /// Renormalize over the allowed support and finish the remaining draws.
    fn sample_restricted(
        &self,
        excluded: &HashSet<FeatureId>,
        k: usize,
        mut out: Vec<FeatureId>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<FeatureId>> {
        let mut allowed_ids = Vec::new();
        let mut allowed_cdf = Vec::new();
        let mut acc = 0.0;
        for (i, &f) in self.ids.iter().enumerate() {
            if !excluded.contains(&f) {
                acc += self.weights[i];
                allowed_ids.push(f);
                allowed_cdf.push(acc);
            }
        }
        if allowed_ids.is_empty() {
            return Err(Error::SamplerExhausted(
                "every non-pivot with positive mass occurs in the document".into(),
            ));
        }
        while out.len() < k {
            let u: f64 = rng.random::<f64>() * acc;
            let idx = allowed_cdf
                .partition_point(|&c| c <= u)
                .min(allowed_ids.len() - 1);
            out.push(allowed_ids[idx]);
        }
        Ok(out)
    }
}

/// Generate the full training-instance stream for one domain:
/// window-constrained (pivot, non-pivot) pairs per document, each with `k`
/// negatives excluded at document granularity. Byte-identical across runs
/// for a fixed seed.
pub fn generate_instances(
    corpus: &DomainCorpus,
    vocab: &Vocabulary,
    selection: &PivotSelection,
    window: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<CoocInstance>> {
    if window < 1 {
        return Err(Error::InvalidInput("window must be >= 1".into()));
    }
    if k < 1 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    let domain = corpus.domain;
    let sampler = build_sampler(vocab, selection, domain, seed)?;
    let mut instances = Vec::new();
    for (doc_index, doc) in corpus.documents.iter().enumerate() {
        let occurrences = extract_features(doc, vocab);
        let pairs = enumerate_pairs(&occurrences, selection, domain, window);
        if pairs.is_empty() {
            continue;
        }
        let excluded = document_features(doc, vocab);
        let mut rng = sampler.rng_for_doc(doc_index);
        for (pivot, positive) in pairs {
            let negatives = sampler.sample_negatives(&excluded, k, &mut rng)?;
            instances.push(CoocInstance {
                domain,
                pivot,
                positive,
                negatives,
            });
        }
    }
    Ok(instances)
}

/// Audit dump: `domain<TAB>pivot<TAB>positive<TAB>neg1,...,negk`.
pub fn write_instances_tsv(
    instances: &[CoocInstance],
    vocab: &Vocabulary,
    path: &Path,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for inst in instances {
        let negs: Vec<&str> = inst.negatives.iter().map(|&f| vocab.surface(f)).collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            inst.domain,
            vocab.surface(inst.pivot),
            vocab.surface(inst.positive),
            negs.join(",")
        )?;
    }
    Ok(())
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::corpus::{build_vocabulary, tokenize_raw, Document};
    use crate::pivots::{select, NpmiStats};
    use crate::stopwords::StopwordSet;
    use proptest::prelude::*;

    proptest! {
        /// Scaling all counts by a constant leaves sampler weights
        /// unchanged.
        #[test]
        fn sampler_weights_scale_invariant(
            count_a in 1usize..30,
            count_b in 1usize..30,
            scale in 2usize..6,
        ) {
            let build = |a: usize, b: usize| {
                let mk = |w: &str, n: usize| vec![w; n].join(" . ");
                let source = DomainCorpus::new(Domain::Source, vec![
                    Document { id: "s0".into(), sentences: tokenize_raw(&mk("w", a)), label: None },
                    Document { id: "s1".into(), sentences: tokenize_raw(&mk("v", b)), label: None },
                    Document { id: "s2".into(), sentences: tokenize_raw("c"), label: None },
                ]).unwrap();
                let target = DomainCorpus::new(Domain::Target, vec![
                    Document { id: "t0".into(), sentences: tokenize_raw("c z"), label: None },
                ]).unwrap();
                let vocab = build_vocabulary(&source, &target, 1, StopwordSet::empty()).unwrap();
                let stats = NpmiStats::build(&source, &target, &vocab);
                let selection = select(&vocab, &stats, 1, 2, 1).unwrap();
                let sampler = build_sampler(&vocab, &selection, Domain::Source, 1).unwrap();
                let mut pairs: Vec<(String, f64)> = sampler
                    .ids()
                    .iter()
                    .zip(sampler.weights())
                    .map(|(&f, &w)| (vocab.surface(f).to_string(), w))
                    .collect();
                pairs.sort_by(|x, y| x.0.cmp(&y.0));
                pairs
            };
            let base = build(count_a, count_b);
            let scaled = build(count_a * scale, count_b * scale);
            for ((sa, wa), (sb, wb)) in base.iter().zip(scaled.iter()) {
                prop_assert_eq!(sa, sb);
                prop_assert!((wa - wb).abs() < 1e-12);
            }
        }
    }
}

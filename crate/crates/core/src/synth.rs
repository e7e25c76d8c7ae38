//! Seeded synthetic-corpus generator for desk-scale end-to-end runs.
//!
//! Plants three kinds of sentiment carriers: shared words with the same
//! polarity in both domains (future pivots), domain-exclusive sentiment
//! words (future non-pivots), and at least one shared word whose polarity
//! flips between the domains. An answer-key file records every planted
//! word's role and per-domain polarity.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_corpus, Document, Domain, DomainCorpus, Sentence, Sentiment, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Shared sentiment words, consistent polarity across domains.
    pub shared_positive: usize,
    pub shared_negative: usize,
    /// Shared filler words with no polarity.
    pub shared_neutral: usize,
    /// Shared words whose polarity flips between source and target.
    pub flip_words: usize,
    /// Domain-exclusive sentiment words, per polarity per domain.
    pub domain_positive: usize,
    pub domain_negative: usize,
    /// Domain-exclusive filler words per domain.
    pub domain_neutral: usize,
    /// Labeled documents per class per domain.
    pub labeled_per_class: usize,
    /// Unlabeled documents per domain.
    pub unlabeled_docs: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            shared_positive: 8,
            shared_negative: 8,
            shared_neutral: 32,
            flip_words: 2,
            domain_positive: 16,
            domain_negative: 16,
            domain_neutral: 12,
            labeled_per_class: 250,
            unlabeled_docs: 1200,
            min_sentences: 3,
            max_sentences: 5,
            min_tokens: 6,
            max_tokens: 12,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.labeled_per_class < 1 {
            return Err(Error::InvalidInput("labeled_per_class must be >= 1".into()));
        }
        if self.unlabeled_docs < 1 {
            return Err(Error::InvalidInput("unlabeled_docs must be >= 1".into()));
        }
        if self.min_sentences < 1 || self.max_sentences < self.min_sentences {
            return Err(Error::InvalidInput("bad sentence count range".into()));
        }
        if self.min_tokens < 1 || self.max_tokens < self.min_tokens {
            return Err(Error::InvalidInput("bad token count range".into()));
        }
        if self.domain_positive + self.domain_negative + self.domain_neutral == 0 {
            return Err(Error::InvalidInput(
                "each domain needs at least one exclusive word".into(),
            ));
        }

        Ok(())
    }

    /// All planted shared surfaces (consistent, neutral and flipping).
    pub fn shared_words(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.extend(named("shpos", self.shared_positive));
        out.extend(named("shneg", self.shared_negative));
        out.extend(named("shneu", self.shared_neutral));
        out.extend(named("flip", self.flip_words));
        out
    }
}

fn named(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{i:02}")).collect()
}

/// Polarity of a flip word in one domain: alternating, and opposite
/// between the domains.
fn flip_polarity(index: usize, domain: Domain) -> Sentiment {
    let source_positive = index % 2 == 0;
    match (domain, source_positive) {
        (Domain::Source, true) | (Domain::Target, false) => Sentiment::Positive,
        _ => Sentiment::Negative,
    }
}

/// Weighted sampling table for one slot kind of one (domain, label) pair.
struct TokenTable {
    words: Vec<String>,
    cdf: Vec<f64>,
}

impl TokenTable {
    fn new(entries: Vec<(String, f64)>) -> TokenTable {
        let mut words = Vec::with_capacity(entries.len());
        let mut cdf = Vec::with_capacity(entries.len());
        let mut acc = 0.0;
        for (word, mass) in entries {
            acc += mass;
            words.push(word);
            cdf.push(acc);
        }
        TokenTable { words, cdf }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> &str {
        let u: f64 = rng.random::<f64>() * self.cdf.last().unwrap();
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.words.len() - 1);
        &self.words[idx]
    }
}

/// Per-slot category weights. Sentences interleave the two slot kinds:
/// shared words fill odd token positions, domain-exclusive words even
/// ones, so no bigram is ever shared between the domains and the common
/// feature pool is exactly the planted shared vocabulary.
///
/// Target reviews carry most of their sentiment in target-exclusive
/// words and see the flip words relatively more often, which is the
/// regime where exact-match transfer degrades and embedding expansion
/// pays off.
struct SlotWeights {
    shared_neutral: f64,
    shared_sentiment: f64,
    flip: f64,
    shared_noise: f64,
    domain_neutral: f64,
    domain_sentiment: f64,
    domain_noise: f64,
}

fn weights_for(domain: Domain) -> SlotWeights {
    match domain {
        Domain::Source => SlotWeights {
            shared_neutral: 0.65,
            shared_sentiment: 0.20,
            flip: 0.10,
            shared_noise: 0.05,
            domain_neutral: 0.40,
            domain_sentiment: 0.55,
            domain_noise: 0.05,
        },
        Domain::Target => SlotWeights {
            shared_neutral: 0.65,
            shared_sentiment: 0.20,
            flip: 0.10,
            shared_noise: 0.05,
            domain_neutral: 0.20,
            domain_sentiment: 0.75,
            domain_noise: 0.05,
        },
    }
}

fn build_tables(spec: &SyntheticSpec, domain: Domain, label: Sentiment) -> (TokenTable, TokenTable) {
    let w = weights_for(domain);
    let dom = match domain {
        Domain::Source => "src",
        Domain::Target => "tgt",
    };
    let group = |words: Vec<String>, total_mass: f64| -> Vec<(String, f64)> {
        if words.is_empty() || total_mass <= 0.0 {
            return Vec::new();
        }
        let each = total_mass / words.len() as f64;
        words.into_iter().map(|word| (word, each)).collect()
    };
    let (matching_shared, opposite_shared) = match label {
        Sentiment::Positive => (
            named("shpos", spec.shared_positive),
            named("shneg", spec.shared_negative),
        ),
        Sentiment::Negative => (
            named("shneg", spec.shared_negative),
            named("shpos", spec.shared_positive),
        ),
    };
    let matching_flips: Vec<String> = (0..spec.flip_words)
        .filter(|&i| flip_polarity(i, domain) == label)
        .map(|i| format!("flip{i:02}"))
        .collect();
    let mut shared: Vec<(String, f64)> = Vec::new();
    shared.extend(group(named("shneu", spec.shared_neutral), w.shared_neutral));
    shared.extend(group(matching_shared, w.shared_sentiment));
    shared.extend(group(matching_flips, w.flip));
    shared.extend(group(opposite_shared, w.shared_noise));

    let (matching_domain, opposite_domain) = match label {
        Sentiment::Positive => (
            named(&format!("{dom}pos"), spec.domain_positive),
            named(&format!("{dom}neg"), spec.domain_negative),
        ),
        Sentiment::Negative => (
            named(&format!("{dom}neg"), spec.domain_negative),
            named(&format!("{dom}pos"), spec.domain_positive),
        ),
    };
    let mut exclusive: Vec<(String, f64)> = Vec::new();
    exclusive.extend(group(named(&format!("{dom}neu"), spec.domain_neutral), w.domain_neutral));
    exclusive.extend(group(matching_domain, w.domain_sentiment));
    exclusive.extend(group(opposite_domain, w.domain_noise));

    (TokenTable::new(shared), TokenTable::new(exclusive))
}

fn gen_document(
    id: String,
    tables: &(TokenTable, TokenTable),
    label: Option<Sentiment>,
    spec: &SyntheticSpec,
    rng: &mut ChaCha8Rng,
) -> Document {
    let (shared, exclusive) = tables;
    let n_sentences = rng.random_range(spec.min_sentences..=spec.max_sentences);
    let sentences = (0..n_sentences)
        .map(|_| {
            let n_tokens = rng.random_range(spec.min_tokens..=spec.max_tokens);
            let tokens = (0..n_tokens)
                .map(|pos| {
                    // Odd positions draw shared words; with no shared
                    // vocabulary planted the domains stay fully disjoint.
                    let table = if pos % 2 == 1 && !shared.words.is_empty() {
                        shared
                    } else {
                        exclusive
                    };
                    Token::new(table.draw(rng)).expect("generated words are valid tokens")
                })
                .collect();
            Sentence::new(tokens).expect("sentences are non-empty")
        })
        .collect();
    Document {
        id,
        sentences,
        label,
    }
}

/// In-memory generation of all four corpora (labeled and unlabeled per
/// domain). Deterministic for a fixed spec.
pub struct SyntheticCorpora {
    pub source_unlabeled: DomainCorpus,
    pub target_unlabeled: DomainCorpus,
    pub source_labeled: DomainCorpus,
    pub target_labeled: DomainCorpus,
}

pub fn gen_corpora(spec: &SyntheticSpec) -> Result<SyntheticCorpora> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labeled = |domain: Domain, rng: &mut ChaCha8Rng| -> Result<DomainCorpus> {
        let dom = match domain {
            Domain::Source => "src",
            Domain::Target => "tgt",
        };
        let pos_table = build_tables(spec, domain, Sentiment::Positive);
        let neg_table = build_tables(spec, domain, Sentiment::Negative);
        let mut docs = Vec::new();
        for i in 0..spec.labeled_per_class {
            docs.push(gen_document(
                format!("{dom}-pos-{i:04}"),
                &pos_table,
                Some(Sentiment::Positive),
                spec,
                rng,
            ));
        }
        for i in 0..spec.labeled_per_class {
            docs.push(gen_document(
                format!("{dom}-neg-{i:04}"),
                &neg_table,
                Some(Sentiment::Negative),
                spec,
                rng,
            ));
        }
        DomainCorpus::new(domain, docs)
    };
    let unlabeled = |domain: Domain, rng: &mut ChaCha8Rng| -> Result<DomainCorpus> {
        let dom = match domain {
            Domain::Source => "src",
            Domain::Target => "tgt",
        };
        let pos_table = build_tables(spec, domain, Sentiment::Positive);
        let neg_table = build_tables(spec, domain, Sentiment::Negative);
        let docs = (0..spec.unlabeled_docs)
            .map(|i| {
                let table = if rng.random::<bool>() {
                    &pos_table
                } else {
                    &neg_table
                };
                gen_document(format!("{dom}-u-{i:04}"), table, None, spec, rng)
            })
            .collect();
        DomainCorpus::new(domain, docs)
    };
    let source_labeled = labeled(Domain::Source, &mut rng)?;
    let target_labeled = labeled(Domain::Target, &mut rng)?;
    let source_unlabeled = unlabeled(Domain::Source, &mut rng)?;
    let target_unlabeled = unlabeled(Domain::Target, &mut rng)?;
    Ok(SyntheticCorpora {
        source_unlabeled,
        target_unlabeled,
        source_labeled,
        target_labeled,
    })
}

#[derive(Debug, Clone)]
pub struct SyntheticPaths {
    pub source_unlabeled: PathBuf,
    pub target_unlabeled: PathBuf,
    pub source_labeled: PathBuf,
    pub target_labeled: PathBuf,
    pub answer_key: PathBuf,
}

/// Generate and write the corpora plus the answer key.
pub fn gen_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<SyntheticPaths> {
    let corpora = gen_corpora(spec)?;
    fs::create_dir_all(out_dir)?;
    let paths = SyntheticPaths {
        source_unlabeled: out_dir.join("source_unlabeled.tsv"),
        target_unlabeled: out_dir.join("target_unlabeled.tsv"),
        source_labeled: out_dir.join("source_labeled.tsv"),
        target_labeled: out_dir.join("target_labeled.tsv"),
        answer_key: out_dir.join("answer_key.tsv"),
    };
    write_corpus(&corpora.source_unlabeled, &paths.source_unlabeled)?;
    write_corpus(&corpora.target_unlabeled, &paths.target_unlabeled)?;
    write_corpus(&corpora.source_labeled, &paths.source_labeled)?;
    write_corpus(&corpora.target_labeled, &paths.target_labeled)?;
    write_answer_key(spec, &paths.answer_key)?;
    Ok(paths)
}

/// `word<TAB>role<TAB>source_polarity<TAB>target_polarity` with polarity
/// in {+1, -1, 0}.
pub fn write_answer_key(spec: &SyntheticSpec, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let mut row = |word: &str, role: &str, sp: i8, tp: i8| -> Result<()> {
        writeln!(out, "{word}\t{role}\t{sp:+}\t{tp:+}")?;
        Ok(())
    };
    for w in named("shpos", spec.shared_positive) {
        row(&w, "shared", 1, 1)?;
    }
    for w in named("shneg", spec.shared_negative) {
        row(&w, "shared", -1, -1)?;
    }
    for w in named("shneu", spec.shared_neutral) {
        row(&w, "shared", 0, 0)?;
    }
    for i in 0..spec.flip_words {
        let sp = if flip_polarity(i, Domain::Source) == Sentiment::Positive { 1 } else { -1 };
        row(&format!("flip{i:02}"), "shared", sp, -sp)?;
    }
    for (dom, role) in [("src", "source_only"), ("tgt", "target_only")] {
        for w in named(&format!("{dom}pos"), spec.domain_positive) {
            let (sp, tp) = if dom == "src" { (1, 0) } else { (0, 1) };
            row(&w, role, sp, tp)?;
        }
        for w in named(&format!("{dom}neg"), spec.domain_negative) {
            let (sp, tp) = if dom == "src" { (-1, 0) } else { (0, -1) };
            row(&w, role, sp, tp)?;
        }
        for w in named(&format!("{dom}neu"), spec.domain_neutral) {
            row(&w, role, 0, 0)?;
        }
    }
    Ok(())
}

/// Parsed answer-key entry.
#[derive(Debug, Clone)]
pub struct AnswerKeyEntry {
    pub word: String,
    pub role: String,
    pub source_polarity: i8,
    pub target_polarity: i8,
}

pub fn read_answer_key(path: &Path) -> Result<Vec<AnswerKeyEntry>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 4 {
            return Err(Error::parse(path, lineno + 1, "expected 4 answer-key columns"));
        }
        let parse_pol = |s: &str| -> Result<i8> {
            match s {
                "+1" | "1" => Ok(1),
                "-1" => Ok(-1),
                "+0" | "-0" | "0" => Ok(0),
                other => Err(Error::parse(path, lineno + 1, format!("bad polarity `{other}`"))),
            }
        };
        out.push(AnswerKeyEntry {
            word: parts[0].to_string(),
            role: parts[1].to_string(),
            source_polarity: parse_pol(parts[2])?,
            target_polarity: parse_pol(parts[3])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            labeled_per_class: 10,
            unlabeled_docs: 20,
            ..SyntheticSpec::default()
        };
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let p1 = gen_synthetic(&spec, dir1.path()).unwrap();
        let p2 = gen_synthetic(&spec, dir2.path()).unwrap();
        for (a, b) in [
            (&p1.source_unlabeled, &p2.source_unlabeled),
            (&p1.target_unlabeled, &p2.target_unlabeled),
            (&p1.source_labeled, &p2.source_labeled),
            (&p1.target_labeled, &p2.target_labeled),
            (&p1.answer_key, &p2.answer_key),
        ] {
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let base = SyntheticSpec {
            labeled_per_class: 5,
            unlabeled_docs: 5,
            ..SyntheticSpec::default()
        };
        let other = SyntheticSpec { seed: 8, ..base.clone() };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let p1 = gen_synthetic(&base, d1.path()).unwrap();
        let p2 = gen_synthetic(&other, d2.path()).unwrap();
        assert_ne!(
            fs::read(&p1.source_labeled).unwrap(),
            fs::read(&p2.source_labeled).unwrap()
        );
    }

    #[test]
    fn corpora_respect_domain_exclusivity() {
        let spec = SyntheticSpec {
            labeled_per_class: 20,
            unlabeled_docs: 50,
            ..SyntheticSpec::default()
        };
        let c = gen_corpora(&spec).unwrap();
        let words_of = |corpus: &DomainCorpus| -> std::collections::HashSet<String> {
            corpus
                .documents
                .iter()
                .flat_map(|d| d.sentences.iter())
                .flat_map(|s| s.tokens().iter().map(|t| t.text().to_string()))
                .collect()
        };
        let mut source_words = words_of(&c.source_unlabeled);
        source_words.extend(words_of(&c.source_labeled));
        let mut target_words = words_of(&c.target_unlabeled);
        target_words.extend(words_of(&c.target_labeled));
        assert!(source_words.iter().all(|w| !w.starts_with("tgt")));
        assert!(target_words.iter().all(|w| !w.starts_with("src")));
        // Flip word present on both sides.
        assert!(source_words.contains("flip00"));
        assert!(target_words.contains("flip00"));
    }

    #[test]
    fn flip_word_tracks_label_per_domain() {
        let spec = SyntheticSpec {
            labeled_per_class: 60,
            unlabeled_docs: 10,
            ..SyntheticSpec::default()
        };
        let c = gen_corpora(&spec).unwrap();
        let count_in = |corpus: &DomainCorpus, label: Sentiment| -> usize {
            corpus
                .documents
                .iter()
                .filter(|d| d.label == Some(label))
                .filter(|d| {
                    d.sentences
                        .iter()
                        .any(|s| s.tokens().iter().any(|t| t.text() == "flip00"))
                })
                .count()
        };
        // flip00 is positive in the source, negative in the target.
        assert!(count_in(&c.source_labeled, Sentiment::Positive) > 0);
        assert_eq!(count_in(&c.source_labeled, Sentiment::Negative), 0);
        assert!(count_in(&c.target_labeled, Sentiment::Negative) > 0);
        assert_eq!(count_in(&c.target_labeled, Sentiment::Positive), 0);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let spec = SyntheticSpec {
            min_tokens: 5,
            max_tokens: 2,
            ..SyntheticSpec::default()
        };
        assert!(gen_corpora(&spec).is_err());
        let spec = SyntheticSpec {
            labeled_per_class: 0,
            ..SyntheticSpec::default()
        };
        assert!(gen_corpora(&spec).is_err());
    }

    #[test]
    fn answer_key_roundtrip() {
        let spec = SyntheticSpec::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("key.tsv");
        write_answer_key(&spec, &path).unwrap();
        let entries = read_answer_key(&path).unwrap();
        let shared: Vec<&AnswerKeyEntry> =
            entries.iter().filter(|e| e.role == "shared").collect();
        assert_eq!(shared.len(), 8 + 8 + 32 + 2);
        let flip: Vec<&AnswerKeyEntry> = entries
            .iter()
            .filter(|e| e.source_polarity != 0 && e.source_polarity == -e.target_polarity)
            .collect();
        assert_eq!(flip.len(), 2);
        assert_eq!(flip[0].word, "flip00");
        assert_eq!(flip[1].word, "flip01");
    }
}

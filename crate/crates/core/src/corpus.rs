//! Corpus ingestion and unigram/bigram feature extraction.
//!
//! The corpus file format is one document per line,
//! `doc_id<TAB>label<TAB>text` with label `+1`, `-1` or `?` (unlabeled).
//! Sentences inside `text` are separated by ` . ` markers and tokens by
//! single spaces, as emitted by an upstream tokenizer. A lowercasing
//! whitespace tokenizer is provided for raw text.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stopwords::StopwordSet;

pub const BIGRAM_SEPARATOR: char = '_';

/// Which side of the domain pair a corpus or feature belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Source => write!(f, "source"),
            Domain::Target => write!(f, "target"),
        }
    }
}

/// Binary sentiment label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sentiment {
    Positive,
    Negative,
}

impl Sentiment {
    pub fn value(self) -> f64 {
        match self {
            Sentiment::Positive => 1.0,
            Sentiment::Negative => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Positive => "+1",
            Sentiment::Negative => "-1",
        }
    }

    pub fn parse(s: &str) -> Option<Sentiment> {
        match s {
            "+1" | "1" => Some(Sentiment::Positive),
            "-1" => Some(Sentiment::Negative),
            _ => None,
        }
    }
}

/// A single lowercase token. Non-empty and free of whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token(String);

impl Token {
    pub fn new(text: &str) -> Option<Token> {
        let t = text.to_lowercase();
        if t.is_empty() || t.chars().any(char::is_whitespace) {
            None
        } else {
            Some(Token(t))
        }
    }

    pub fn text(&self) -> &str {
        &self.0
    }
}

/// An ordered, non-empty sequence of tokens.
#[derive(Debug, Clone)]
pub struct Sentence {
    tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Option<Sentence> {
        if tokens.is_empty() {
            None
        } else {
            Some(Sentence { tokens })
        }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A sentence-segmented document, optionally sentiment-labeled.
#[derive(Debug, Clone)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
    pub label: Option<Sentiment>,
}

/// All documents of one domain.
#[derive(Debug, Clone)]
pub struct DomainCorpus {
    pub domain: Domain,
    pub documents: Vec<Document>,
}

impl DomainCorpus {
    pub fn new(domain: Domain, documents: Vec<Document>) -> Result<DomainCorpus> {
        if documents.is_empty() {
            return Err(Error::InvalidInput(format!("{domain} corpus is empty")));
        }
        Ok(DomainCorpus { domain, documents })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }
}

/// Dense index of an interned feature; the surface form lives in the
/// [`Vocabulary`], which maintains the index<->surface bijection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureId(pub u32);

impl FeatureId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One emission of a feature inside a document: which sentence it came
/// from and its token position after stop-word removal. A bigram sits at
/// the position of its first token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureOccurrence {
    pub feature: FeatureId,
    pub sentence: usize,
    pub position: usize,
}

/// Interned unigram/bigram features with per-domain occurrence counts.
///
/// Only features that survive stop-word and frequency filtering are
/// retained. The stop-word set used at build time is kept so that frozen
/// extraction applies identical position arithmetic.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    index: HashMap<String, u32>,
    count_source: Vec<u64>,
    count_target: Vec<u64>,
    stopwords: StopwordSet,
    min_count: u64,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn surface(&self, id: FeatureId) -> &str {
        &self.surfaces[id.index()]
    }

    pub fn lookup(&self, surface: &str) -> Option<FeatureId> {
        self.index.get(surface).copied().map(FeatureId)
    }

    pub fn count_source(&self, id: FeatureId) -> u64 {
        self.count_source[id.index()]
    }

    pub fn count_target(&self, id: FeatureId) -> u64 {
        self.count_target[id.index()]
    }

    pub fn count_in(&self, id: FeatureId, domain: Domain) -> u64 {
        match domain {
            Domain::Source => self.count_source(id),
            Domain::Target => self.count_target(id),
        }
    }

    pub fn total_count(&self, id: FeatureId) -> u64 {
        self.count_source(id) + self.count_target(id)
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn stopwords(&self) -> &StopwordSet {
        &self.stopwords
    }

    pub fn ids(&self) -> impl Iterator<Item = FeatureId> + '_ {
        (0..self.surfaces.len() as u32).map(FeatureId)
    }
}

/// Lowercasing whitespace tokenizer for raw text. A standalone `.` token
/// ends the current sentence.
pub fn tokenize_raw(text: &str) -> Vec<Sentence> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for raw in text.split_whitespace() {
        if raw == "." {
            if let Some(s) = Sentence::new(std::mem::take(&mut current)) {
                sentences.push(s);
            }
            continue;
        }
        if let Some(tok) = Token::new(raw) {
            current.push(tok);
        }
    }
    if let Some(s) = Sentence::new(current) {
        sentences.push(s);
    }
    sentences
}

/// Load one domain's corpus file.
pub fn load_corpus(path: &Path, domain: Domain) -> Result<DomainCorpus> {
    let text = fs::read_to_string(path)?;
    let mut documents = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let id = parts.next().unwrap_or("").trim();
        let label_str = parts.next();
        let body = parts.next();
        let (label_str, body) = match (label_str, body) {
            (Some(l), Some(b)) => (l.trim(), b),
            _ => {
                return Err(Error::parse(
                    path,
                    lineno,
                    "expected `doc_id<TAB>label<TAB>text`",
                ))
            }
        };
        if id.is_empty() {
            return Err(Error::parse(path, lineno, "empty document id"));
        }
        if !seen_ids.insert(id.to_string()) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate document id `{id}`"),
            ));
        }
        let label = match label_str {
            "?" => None,
            other => match Sentiment::parse(other) {
                Some(l) => Some(l),
                None => {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("label must be +1, -1 or ?, got `{other}`"),
                    ))
                }
            },
        };
        let sentences = tokenize_raw(body);
        if sentences.is_empty() {
            return Err(Error::parse(path, lineno, "document has no tokens"));
        }
        documents.push(Document {
            id: id.to_string(),
            sentences,
            label,
        });
    }
    if documents.is_empty() {
        return Err(Error::parse(path, 0, "corpus file contains no documents"));
    }
    DomainCorpus::new(domain, documents)
}

/// Write a corpus back out in the documented format.
pub fn write_corpus(corpus: &DomainCorpus, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for doc in &corpus.documents {
        let label = match doc.label {
            Some(l) => l.as_str(),
            None => "?",
        };
        let text = doc
            .sentences
            .iter()
            .map(|s| {
                s.tokens()
                    .iter()
                    .map(Token::text)
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join(" . ");
        writeln!(out, "{}\t{}\t{}", doc.id, label, text)?;
    }
    Ok(())
}

/// Raw surface emissions for one sentence: every non-stop-word unigram at
/// its post-filtering position, plus every originally adjacent bigram
/// whose members are both non-stop words, at its first token's position.
/// Ordered by position, unigram before bigram at equal positions.
fn sentence_surfaces(sentence: &Sentence, stopwords: &StopwordSet) -> Vec<(String, usize)> {
    let tokens = sentence.tokens();
    let mut out = Vec::new();
    let mut filtered_pos = 0usize;
    let mut prev: Option<(usize, &str)> = None; // filtered position + text of previous original token
    for tok in tokens {
        if stopwords.contains(tok.text()) {
            prev = None;
            continue;
        }
        out.push((tok.text().to_string(), filtered_pos));
        if let Some((ppos, ptext)) = prev {
            out.push((format!("{ptext}{BIGRAM_SEPARATOR}{}", tok.text()), ppos));
        }
        prev = Some((filtered_pos, tok.text()));
        filtered_pos += 1;
    }
    out.sort_by_key(|&(_, pos)| pos); // stable: keeps unigram before its bigram
    out
}

/// Count every candidate feature for both corpora, filter by total count,
/// and freeze the result. Errors if nothing survives.
pub fn build_vocabulary(
    source: &DomainCorpus,
    target: &DomainCorpus,
    min_count: u64,
    stopwords: StopwordSet,
) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::InvalidInput("min_count must be >= 1".into()));
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidInput(
            "both corpora must be non-empty to build a vocabulary".into(),
        ));
    }
    let mut counts: HashMap<String, (u64, u64)> = HashMap::new();
    for (corpus, is_source) in [(source, true), (target, false)] {
        for doc in &corpus.documents {
            for sentence in &doc.sentences {
                for (surface, _) in sentence_surfaces(sentence, &stopwords) {
                    let entry = counts.entry(surface).or_insert((0, 0));
                    if is_source {
                        entry.0 += 1;
                    } else {
                        entry.1 += 1;
                    }
                }
            }
        }
    }
    let mut retained: Vec<(String, u64, u64)> = counts
        .into_iter()
        .filter(|&(_, (s, t))| s + t >= min_count)
        .map(|(surface, (s, t))| (surface, s, t))
        .collect();
    if retained.is_empty() {
        return Err(Error::InvalidInput(format!(
            "vocabulary is empty after filtering (min_count={min_count})"
        )));
    }
    retained.sort_by(|a, b| a.0.cmp(&b.0));
    let mut surfaces = Vec::with_capacity(retained.len());
    let mut count_source = Vec::with_capacity(retained.len());
    let mut count_target = Vec::with_capacity(retained.len());
    let mut index = HashMap::with_capacity(retained.len());
    for (i, (surface, s, t)) in retained.into_iter().enumerate() {
        index.insert(surface.clone(), i as u32);
        surfaces.push(surface);
        count_source.push(s);
        count_target.push(t);
    }
    Ok(Vocabulary {
        surfaces,
        index,
        count_source,
        count_target,
        stopwords,
        min_count,
    })
}

/// Emit every known feature occurrence of a document against a frozen
/// vocabulary. Pure function of the document: unknown surfaces are
/// skipped, positions count tokens after stop-word removal.
pub fn extract_features(doc: &Document, vocab: &Vocabulary) -> Vec<FeatureOccurrence> {
    let mut out = Vec::new();
    for (sentence_idx, sentence) in doc.sentences.iter().enumerate() {
        for (surface, position) in sentence_surfaces(sentence, vocab.stopwords()) {
            if let Some(feature) = vocab.lookup(&surface) {
                out.push(FeatureOccurrence {
                    feature,
                    sentence: sentence_idx,
                    position,
                });
            }
        }
    }
    out
}

/// The set of distinct features present in a document.
pub fn document_features(doc: &Document, vocab: &Vocabulary) -> HashSet<FeatureId> {
    extract_features(doc, vocab)
        .into_iter()
        .map(|o| o.feature)
        .collect()
}

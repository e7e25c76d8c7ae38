//! Cross-domain word representation learning and unsupervised cross-domain
//! sentiment classification.
//!
//! Given unlabeled corpora for a source and a target domain, the crate
//! selects pivot features by NPMI, learns four embedding tables (pivots and
//! non-pivots, per domain) by minimizing a pair of ranking hinge losses tied
//! together by a pivot regularizer, and classifies target-domain reviews
//! with a source-trained linear model whose decision score is expanded
//! through embedding similarity.

pub mod classifier;
pub mod config;
pub mod cooc;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod pivots;
pub mod stopwords;
pub mod synth;
pub mod trainer;

pub use corpus::{
    build_vocabulary, extract_features, load_corpus, tokenize_raw, Document, Domain,
    DomainCorpus, FeatureId, FeatureOccurrence, Sentence, Sentiment, Token, Vocabulary,
};
pub use error::{Error, Result};
pub use stopwords::StopwordSet;

/// Deterministically derive a stream seed from a base seed and an index
/// (splitmix64 finalizer over their combination).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

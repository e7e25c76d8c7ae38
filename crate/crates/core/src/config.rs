//! Pipeline configuration: a plain `key = value` text file whose keys
//! mirror the CLI flags. Every training hyperparameter has a default.

use std::fs;
use std::path::{Path, PathBuf};

use crate::classifier::Similarity;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub source_unlabeled: PathBuf,
    pub target_unlabeled: PathBuf,
    pub source_labeled: PathBuf,
    pub target_labeled: PathBuf,
    pub out_dir: PathBuf,
    /// Optional stop-word list path; the bundled list applies otherwise.
    pub stopwords: Option<PathBuf>,
    pub min_count: u64,
    pub n_pivots: usize,
    pub n_source_nonpivots: usize,
    pub n_target_nonpivots: usize,
    pub train: TrainConfig,
    /// Logistic-regression regularization strength.
    pub l2: f64,
    pub similarity: Similarity,
    pub use_bias: bool,
    /// Per-class fraction of labeled data used for classifier training.
    pub train_fraction: f64,
    pub confidence: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            source_unlabeled: PathBuf::new(),
            target_unlabeled: PathBuf::new(),
            source_labeled: PathBuf::new(),
            target_labeled: PathBuf::new(),
            out_dir: PathBuf::from("out"),
            stopwords: None,
            min_count: 50,
            n_pivots: 500,
            n_source_nonpivots: 500,
            n_target_nonpivots: 500,
            train: TrainConfig::default(),
            l2: 1.0,
            similarity: Similarity::Cosine,
            use_bias: false,
            train_fraction: 0.8,
            confidence: 0.95,
        }
    }
}

impl PipelineConfig {
    /// Shrink to desk scale: n = 50, 50 pivots/non-pivots per category,
    /// min_count = 2.
    pub fn apply_desk(&mut self) {
        self.train.n = 50;
        self.n_pivots = 50;
        self.n_source_nonpivots = 50;
        self.n_target_nonpivots = 50;
        self.min_count = 2;
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        for (name, path) in [
            ("source_unlabeled", &self.source_unlabeled),
            ("target_unlabeled", &self.target_unlabeled),
            ("source_labeled", &self.source_labeled),
            ("target_labeled", &self.target_labeled),
        ] {
            if path.as_os_str().is_empty() {
                return Err(Error::InvalidInput(format!("config key `{name}` is required")));
            }
        }
        if self.l2 < 0.0 {
            return Err(Error::InvalidInput("l2 must be >= 0".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidInput("train_fraction must be in (0, 1)".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidInput("confidence must be in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn set_key(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value
                .parse::<T>()
                .map_err(|_| format!("bad value `{value}` for key `{key}`"))
        }
        match key {
            "source_unlabeled" => self.source_unlabeled = PathBuf::from(value),
            "target_unlabeled" => self.target_unlabeled = PathBuf::from(value),
            "source_labeled" => self.source_labeled = PathBuf::from(value),
            "target_labeled" => self.target_labeled = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "stopwords" => self.stopwords = Some(PathBuf::from(value)),
            "min_count" => self.min_count = num(key, value)?,
            "n_pivots" => self.n_pivots = num(key, value)?,
            "n_source_nonpivots" => self.n_source_nonpivots = num(key, value)?,
            "n_target_nonpivots" => self.n_target_nonpivots = num(key, value)?,
            "lambda" => self.train.lambda = num(key, value)?,
            "n" => self.train.n = num(key, value)?,
            "k" => self.train.k = num(key, value)?,
            "window" => self.train.window = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "max_epochs" => self.train.max_epochs = num(key, value)?,
            "base_lr" => self.train.base_lr = num(key, value)?,
            "adagrad_eps" => self.train.adagrad_eps = num(key, value)?,
            "seed" => self.train.seed = num(key, value)?,
            "l2" => self.l2 = num(key, value)?,
            "similarity" => {
                self.similarity = Similarity::parse(value)
                    .ok_or_else(|| format!("similarity must be cosine, dot or kronecker, got `{value}`"))?
            }
            "use_bias" => {
                self.use_bias = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    other => return Err(format!("bad boolean `{other}` for use_bias")),
                }
            }
            "train_fraction" => self.train_fraction = num(key, value)?,
            "confidence" => self.confidence = num(key, value)?,
            other => return Err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    /// Parse a `key = value` file. `#` starts a comment; blank lines are
    /// skipped. Relative paths are resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path)?;
        let mut config = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, lineno, "expected `key = value`"))?;
            config
                .set_key(key.trim(), value.trim())
                .map_err(|msg| Error::parse(path, lineno, msg))?;
        }
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.source_unlabeled,
            &mut config.target_unlabeled,
            &mut config.source_labeled,
            &mut config.target_labeled,
            &mut config.out_dir,
        ] {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&p);
            }
        }
        if let Some(p) = &mut config.stopwords {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
        Ok(config)
    }

    /// Serialize back to the `key = value` format.
    pub fn to_file(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "source_unlabeled = {}", self.source_unlabeled.display())?;
        writeln!(out, "target_unlabeled = {}", self.target_unlabeled.display())?;
        writeln!(out, "source_labeled = {}", self.source_labeled.display())?;
        writeln!(out, "target_labeled = {}", self.target_labeled.display())?;
        writeln!(out, "out_dir = {}", self.out_dir.display())?;
        if let Some(s) = &self.stopwords {
            writeln!(out, "stopwords = {}", s.display())?;
        }
        writeln!(out, "min_count = {}", self.min_count)?;
        writeln!(out, "n_pivots = {}", self.n_pivots)?;
        writeln!(out, "n_source_nonpivots = {}", self.n_source_nonpivots)?;
        writeln!(out, "n_target_nonpivots = {}", self.n_target_nonpivots)?;
        writeln!(out, "lambda = {}", self.train.lambda)?;
        writeln!(out, "n = {}", self.train.n)?;
        writeln!(out, "k = {}", self.train.k)?;
        writeln!(out, "window = {}", self.train.window)?;
        writeln!(out, "batch_size = {}", self.train.batch_size)?;
        writeln!(out, "max_epochs = {}", self.train.max_epochs)?;
        writeln!(out, "base_lr = {}", self.train.base_lr)?;
        writeln!(out, "adagrad_eps = {}", self.train.adagrad_eps)?;
        writeln!(out, "seed = {}", self.train.seed)?;
        writeln!(out, "l2 = {}", self.l2)?;
        writeln!(out, "similarity = {}", self.similarity.as_str())?;
        writeln!(out, "use_bias = {}", self.use_bias)?;
        writeln!(out, "train_fraction = {}", self.train_fraction)?;
        writeln!(out, "confidence = {}", self.confidence)?;
        Ok(())
    }
}

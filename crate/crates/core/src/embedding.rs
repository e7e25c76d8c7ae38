//! The four embedding tables (pivots and non-pivots, per domain), their
//! Gaussian initialization, and model persistence.
//!
//! Binary model file layout (little-endian):
//! magic `XDWE`, version u32, then n, K, N_S, N_T as u32, then the pivot,
//! source non-pivot and target non-pivot surfaces (u32 byte length +
//! UTF-8), then the four tables row-major as f32: C_S, C_T, W_S, W_T.
//! In-memory arithmetic stays in f64; the f32 file representation loses
//! at most ~6e-8 relative precision per entry.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Domain, Vocabulary};
use crate::error::{Error, Result};
use crate::pivots::PivotSelection;

const MAGIC: &[u8; 4] = b"XDWE";
const VERSION: u32 = 1;

/// Which of the four parameter tables a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Table {
    SourcePivot,
    TargetPivot,
    SourceNonPivot,
    TargetNonPivot,
}

#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    n: usize,
    pivot_surfaces: Vec<String>,
    source_nonpivot_surfaces: Vec<String>,
    target_nonpivot_surfaces: Vec<String>,
    c_s: Array2<f64>,
    c_t: Array2<f64>,
    w_s: Array2<f64>,
    w_t: Array2<f64>,
}

/// Initialize every row of all four tables i.i.d. N(0, 1) per coordinate;
/// deterministic for a fixed seed.
pub fn init_model(
    selection: &PivotSelection,
    vocab: &Vocabulary,
    n: usize,
    seed: u64,
) -> Result<EmbeddingModel> {
    if n < 1 {
        return Err(Error::InvalidInput("dimensionality n must be >= 1".into()));
    }
    let surfaces = |ids: &[crate::corpus::FeatureId]| -> Vec<String> {
        ids.iter().map(|&f| vocab.surface(f).to_string()).collect()
    };
    let pivot_surfaces = surfaces(selection.pivots());
    let source_nonpivot_surfaces = surfaces(selection.source_nonpivots());
    let target_nonpivot_surfaces = surfaces(selection.target_nonpivots());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = |rows: usize, cols: usize| -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
    };
    let k = pivot_surfaces.len();
    let c_s = gaussian(k, n);
    let c_t = gaussian(k, n);
    let w_s = gaussian(source_nonpivot_surfaces.len(), n);
    let w_t = gaussian(target_nonpivot_surfaces.len(), n);
    Ok(EmbeddingModel {
        n,
        pivot_surfaces,
        source_nonpivot_surfaces,
        target_nonpivot_surfaces,
        c_s,
        c_t,
        w_s,
        w_t,
    })
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn n_pivots(&self) -> usize {
        self.pivot_surfaces.len()
    }

    pub fn n_source_nonpivots(&self) -> usize {
        self.source_nonpivot_surfaces.len()
    }

    pub fn n_target_nonpivots(&self) -> usize {
        self.target_nonpivot_surfaces.len()
    }

    pub fn pivot_surfaces(&self) -> &[String] {
        &self.pivot_surfaces
    }

    pub fn source_nonpivot_surfaces(&self) -> &[String] {
        &self.source_nonpivot_surfaces
    }

    pub fn target_nonpivot_surfaces(&self) -> &[String] {
        &self.target_nonpivot_surfaces
    }

    pub fn table(&self, t: Table) -> &Array2<f64> {
        match t {
            Table::SourcePivot => &self.c_s,
            Table::TargetPivot => &self.c_t,
            Table::SourceNonPivot => &self.w_s,
            Table::TargetNonPivot => &self.w_t,
        }
    }

    pub fn table_mut(&mut self, t: Table) -> &mut Array2<f64> {
        match t {
            Table::SourcePivot => &mut self.c_s,
            Table::TargetPivot => &mut self.c_t,
            Table::SourceNonPivot => &mut self.w_s,
            Table::TargetNonPivot => &mut self.w_t,
        }
    }

    pub fn pivot_vec(&self, domain: Domain, row: usize) -> ArrayView1<'_, f64> {
        match domain {
            Domain::Source => self.c_s.row(row),
            Domain::Target => self.c_t.row(row),
        }
    }

    pub fn nonpivot_vec(&self, domain: Domain, row: usize) -> ArrayView1<'_, f64> {
        match domain {
            Domain::Source => self.w_s.row(row),
            Domain::Target => self.w_t.row(row),
        }
    }

    pub fn row_mut(&mut self, t: Table, row: usize) -> ArrayViewMut1<'_, f64> {
        self.table_mut(t).row_mut(row)
    }

    /// All entries of all four tables are finite.
    pub fn is_finite(&self) -> bool {
        [&self.c_s, &self.c_t, &self.w_s, &self.w_t]
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        out.write_all(MAGIC)?;
        for v in [
            VERSION,
            self.n as u32,
            self.n_pivots() as u32,
            self.n_source_nonpivots() as u32,
            self.n_target_nonpivots() as u32,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        for list in [
            &self.pivot_surfaces,
            &self.source_nonpivot_surfaces,
            &self.target_nonpivot_surfaces,
        ] {
            for s in list {
                let bytes = s.as_bytes();
                out.write_all(&(bytes.len() as u32).to_le_bytes())?;
                out.write_all(bytes)?;
            }
        }
        for table in [&self.c_s, &self.c_t, &self.w_s, &self.w_t] {
            for &v in table.iter() {
                out.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EmbeddingModel> {
        let mut input = BufReader::new(fs::File::open(path)?);
        let bad = |msg: &str| Error::parse(path, 0, msg);
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a model file (bad magic)"));
        }
        let read_u32 = |input: &mut BufReader<fs::File>| -> Result<u32> {
            let mut b = [0u8; 4];
            input.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported model version {version}")));
        }
        let n = read_u32(&mut input)? as usize;
        let k = read_u32(&mut input)? as usize;
        let n_s = read_u32(&mut input)? as usize;
        let n_t = read_u32(&mut input)? as usize;
        let read_surfaces = |input: &mut BufReader<fs::File>, count: usize| -> Result<Vec<String>> {
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let mut b = [0u8; 4];
                input.read_exact(&mut b)?;
                let len = u32::from_le_bytes(b) as usize;
                let mut buf = vec![0u8; len];
                input.read_exact(&mut buf)?;
                out.push(String::from_utf8(buf).map_err(|_| {
                    Error::parse(path, 0, "surface is not valid UTF-8")
                })?);
            }
            Ok(out)
        };
        let pivot_surfaces = read_surfaces(&mut input, k)?;
        let source_nonpivot_surfaces = read_surfaces(&mut input, n_s)?;
        let target_nonpivot_surfaces = read_surfaces(&mut input, n_t)?;
        let read_table = |input: &mut BufReader<fs::File>, rows: usize| -> Result<Array2<f64>> {
            let mut data = Vec::with_capacity(rows * n);
            let mut b = [0u8; 4];
            for _ in 0..rows * n {
                input.read_exact(&mut b)?;
                data.push(f32::from_le_bytes(b) as f64);
            }
            Array2::from_shape_vec((rows, n), data)
                .map_err(|e| Error::parse(path, 0, e.to_string()))
        };
        let c_s = read_table(&mut input, k)?;
        let c_t = read_table(&mut input, k)?;
        let w_s = read_table(&mut input, n_s)?;
        let w_t = read_table(&mut input, n_t)?;
        let model = EmbeddingModel {
            n,
            pivot_surfaces,
            source_nonpivot_surfaces,
            target_nonpivot_surfaces,
            c_s,
            c_t,
            w_s,
            w_t,
        };
        if !model.is_finite() {
            return Err(Error::NonFinite("model file contains non-finite entries".into()));
        }
        Ok(model)
    }

    /// Text export: `word<TAB>domain<TAB>role<TAB>v1 v2 ... vn`. Pivots
    /// appear twice, once per domain.
    pub fn export_text(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        let fmt_row = |row: ArrayView1<f64>| -> String {
            row.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        for (i, s) in self.pivot_surfaces.iter().enumerate() {
            writeln!(out, "{s}\tsource\tpivot\t{}", fmt_row(self.c_s.row(i)))?;
            writeln!(out, "{s}\ttarget\tpivot\t{}", fmt_row(self.c_t.row(i)))?;
        }
        for (i, s) in self.source_nonpivot_surfaces.iter().enumerate() {
            writeln!(out, "{s}\tsource\tnonpivot\t{}", fmt_row(self.w_s.row(i)))?;
        }
        for (i, s) in self.target_nonpivot_surfaces.iter().enumerate() {
            writeln!(out, "{s}\ttarget\tnonpivot\t{}", fmt_row(self.w_t.row(i)))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, tokenize_raw, Document, DomainCorpus};
    use crate::pivots::{select, NpmiStats};
    use crate::stopwords::StopwordSet;

    fn doc(id: &str, text: &str) -> Document {
        Document {
            id: id.into(),
            sentences: tokenize_raw(text),
            label: None,
        }
    }

    fn small_selection() -> (Vocabulary, PivotSelection) {
        let source = DomainCorpus::new(
            Domain::Source,
            vec![doc("s0", "c w v . w2 c2"), doc("s1", "c w2 . v c2 w")],
        )
        .unwrap();
        let target = DomainCorpus::new(
            Domain::Target,
            vec![doc("t0", "c z y . z2 c2"), doc("t1", "c z2 . y c2 z")],
        )
        .unwrap();
        let vocab = build_vocabulary(&source, &target, 2, StopwordSet::empty()).unwrap();
        let stats = NpmiStats::build(&source, &target, &vocab);
        let selection = select(&vocab, &stats, 2, 3, 3).unwrap();
        (vocab, selection)
    }

    #[test]
    fn init_is_deterministic() {
        let (vocab, selection) = small_selection();
        let a = init_model(&selection, &vocab, 8, 13).unwrap();
        let b = init_model(&selection, &vocab, 8, 13).unwrap();
        assert_eq!(a.table(Table::SourcePivot), b.table(Table::SourcePivot));
        assert_eq!(a.table(Table::TargetNonPivot), b.table(Table::TargetNonPivot));
        let c = init_model(&selection, &vocab, 8, 14).unwrap();
        assert_ne!(a.table(Table::SourcePivot), c.table(Table::SourcePivot));
    }

    #[test]
    fn init_row_length_matches_n() {
        let (vocab, selection) = small_selection();
        let m = init_model(&selection, &vocab, 300, 1).unwrap();
        assert_eq!(m.table(Table::SourcePivot).ncols(), 300);
        assert_eq!(m.dim(), 300);
    }

    #[test]
    fn init_moments_match_standard_gaussian() {
        let (vocab, selection) = small_selection();
        // 2 pivots * 2 + 3 + 3 rows = 10 rows; n chosen so we get 1e5 draws.
        let m = init_model(&selection, &vocab, 10_000, 7).unwrap();
        let mut values: Vec<f64> = Vec::new();
        for t in [
            Table::SourcePivot,
            Table::TargetPivot,
            Table::SourceNonPivot,
            Table::TargetNonPivot,
        ] {
            values.extend(m.table(t).iter().copied());
        }
        let n = values.len() as f64;
        assert!(n >= 1e5);
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        // 3 standard errors: se(mean) = 1/sqrt(n), se(var) ~ sqrt(2/n).
        assert!(mean.abs() < 3.0 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "var {var}");
    }

    #[test]
    fn save_load_roundtrip_within_f32_precision() {
        let (vocab, selection) = small_selection();
        let m = init_model(&selection, &vocab, 16, 3).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        m.save(f.path()).unwrap();
        let back = EmbeddingModel::load(f.path()).unwrap();
        assert_eq!(back.dim(), 16);
        assert_eq!(back.pivot_surfaces(), m.pivot_surfaces());
        for t in [
            Table::SourcePivot,
            Table::TargetPivot,
            Table::SourceNonPivot,
            Table::TargetNonPivot,
        ] {
            for (a, b) in m.table(t).iter().zip(back.table(t).iter()) {
                let rel = (a - b).abs() / a.abs().max(1e-30);
                assert!(rel <= 1e-7, "round-trip drift {rel}");
            }
        }
    }

    #[test]
    fn save_is_byte_deterministic() {
        let (vocab, selection) = small_selection();
        let m = init_model(&selection, &vocab, 16, 3).unwrap();
        let f1 = tempfile::NamedTempFile::new().unwrap();
        let f2 = tempfile::NamedTempFile::new().unwrap();
        m.save(f1.path()).unwrap();
        m.save(f2.path()).unwrap();
        assert_eq!(
            std::fs::read(f1.path()).unwrap(),
            std::fs::read(f2.path()).unwrap()
        );
    }

    #[test]
    fn load_rejects_garbage() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), b"not a model").unwrap();
        assert!(EmbeddingModel::load(f.path()).is_err());
    }

    #[test]
    fn text_export_shape() {
        let (vocab, selection) = small_selection();
        let m = init_model(&selection, &vocab, 4, 3).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        m.export_text(f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // 2 pivots twice + 3 + 3 non-pivots
        assert_eq!(lines.len(), 2 * 2 + 3 + 3);
        let parts: Vec<&str> = lines[0].split('\t').collect();
        assert_eq!(parts.len(), 4);
        assert_eq!(parts[1], "source");
        assert_eq!(parts[2], "pivot");
        assert_eq!(parts[3].split(' ').count(), 4);
    }
}

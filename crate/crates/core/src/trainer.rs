//! Embedding training: ranking hinge losses over both domains tied
//! together by the pivot regularizer, minimized with mini-batch
//! subgradient descent under AdaGrad step sizes.

use std::collections::{BTreeSet, HashMap};

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cooc::CoocInstance;
use crate::corpus::{Domain, Vocabulary};
use crate::derive_seed;
use crate::embedding::{init_model, EmbeddingModel, Table};
use crate::error::{Error, Result};
use crate::pivots::PivotSelection;

/// Early stop when the epoch objective improves by less than this
/// relative amount for `EARLY_STOP_PATIENCE` consecutive epochs.
const EARLY_STOP_REL: f64 = 1e-4;
const EARLY_STOP_PATIENCE: usize = 3;

/// Stream index separating the epoch-shuffle RNG from the init RNG.
const SHUFFLE_STREAM: u64 = 0x51AF;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Pivot-regularizer coefficient.
    pub lambda: f64,
    /// Embedding dimensionality.
    pub n: usize,
    /// Negatives sampled per (pivot, non-pivot) pair.
    pub k: usize,
    /// Contextual window in tokens.
    pub window: usize,
    /// Instances per mini batch.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// AdaGrad base step size.
    pub base_lr: f64,
    pub adagrad_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            n: 300,
            k: 5,
            window: 10,
            batch_size: 50,
            max_epochs: 100,
            base_lr: 0.1,
            adagrad_eps: 1e-8,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::InvalidInput("lambda must be >= 0".into()));
        }
        if self.n < 1 {
            return Err(Error::InvalidInput("n must be >= 1".into()));
        }
        if self.k < 1 {
            return Err(Error::InvalidInput("k must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidInput("batch_size must be >= 1".into()));
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::InvalidInput("base_lr must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-parameter running sums of squared gradients, one accumulator per
/// table entry.
#[derive(Debug, Clone)]
pub struct AdaGradState {
    c_s: Array2<f64>,
    c_t: Array2<f64>,
    w_s: Array2<f64>,
    w_t: Array2<f64>,
}

impl AdaGradState {
    pub fn zeros_like(model: &EmbeddingModel) -> AdaGradState {
        AdaGradState {
            c_s: Array2::zeros(model.table(Table::SourcePivot).dim()),
            c_t: Array2::zeros(model.table(Table::TargetPivot).dim()),
            w_s: Array2::zeros(model.table(Table::SourceNonPivot).dim()),
            w_t: Array2::zeros(model.table(Table::TargetNonPivot).dim()),
        }
    }

    pub fn row_mut(&mut self, t: Table, row: usize) -> ArrayViewMut1<'_, f64> {
        match t {
            Table::SourcePivot => self.c_s.row_mut(row),
            Table::TargetPivot => self.c_t.row_mut(row),
            Table::SourceNonPivot => self.w_s.row_mut(row),
            Table::TargetNonPivot => self.w_t.row_mut(row),
        }
    }
}

/// One ranking hinge term: `max(0, 1 - c.w + c.w*)`.
pub fn hinge_term(
    c: ArrayView1<f64>,
    w: ArrayView1<f64>,
    wstar: ArrayView1<f64>,
) -> Result<f64> {
    if c.len() != w.len() || c.len() != wstar.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: c={}, w={}, w*={}",
            c.len(),
            w.len(),
            wstar.len()
        )));
    }
    Ok((1.0 - c.dot(&w) + c.dot(&wstar)).max(0.0))
}

/// Pivot regularizer: half the summed squared distances between each
/// pivot's source and target rows.
pub fn regularizer(model: &EmbeddingModel) -> f64 {
    let c_s = model.table(Table::SourcePivot);
    let c_t = model.table(Table::TargetPivot);
    let mut total = 0.0;
    for (rs, rt) in c_s.rows().into_iter().zip(c_t.rows()) {
        let mut d2 = 0.0;
        for (a, b) in rs.iter().zip(rt.iter()) {
            let d = a - b;
            d2 += d * d;
        }
        total += d2;
    }
    0.5 * total
}

/// Gradient of the (unscaled) regularizer w.r.t. both pivot tables:
/// `(C_S - C_T, C_T - C_S)`.
pub fn regularizer_gradient(model: &EmbeddingModel) -> (Array2<f64>, Array2<f64>) {
    let diff = model.table(Table::SourcePivot) - model.table(Table::TargetPivot);
    let neg = -&diff;
    (diff, neg)
}

/// An instance with ids resolved to table rows.
#[derive(Debug, Clone)]
struct RowInstance {
    domain: Domain,
    c: usize,
    w: usize,
    negs: Vec<usize>,
}

fn resolve(instance: &CoocInstance, selection: &PivotSelection) -> Result<RowInstance> {
    let c = selection
        .pivot_row(instance.pivot)
        .ok_or_else(|| Error::InvalidInput("instance pivot is not a selected pivot".into()))?;
    let w = selection
        .nonpivot_row(instance.positive, instance.domain)
        .ok_or_else(|| {
            Error::InvalidInput("instance positive is not a non-pivot of its domain".into())
        })?;
    let negs = instance
        .negatives
        .iter()
        .map(|&f| {
            selection.nonpivot_row(f, instance.domain).ok_or_else(|| {
                Error::InvalidInput("instance negative is not a non-pivot of its domain".into())
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(RowInstance {
        domain: instance.domain,
        c,
        w,
        negs,
    })
}

fn tables_for(domain: Domain) -> (Table, Table) {
    match domain {
        Domain::Source => (Table::SourcePivot, Table::SourceNonPivot),
        Domain::Target => (Table::TargetPivot, Table::TargetNonPivot),
    }
}

/// The overall objective: both domains' hinge sums plus `lambda` times the
/// pivot regularizer.
pub fn objective(
    model: &EmbeddingModel,
    instances: &[CoocInstance],
    selection: &PivotSelection,
    lambda: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for instance in instances {
        let row = resolve(instance, selection)?;
        total += hinge_sum(model, &row);
    }
    Ok(total + lambda * regularizer(model))
}

fn hinge_sum(model: &EmbeddingModel, row: &RowInstance) -> f64 {
    let (ct, wt) = tables_for(row.domain);
    let c = model.table(ct).row(row.c);
    let w = model.table(wt).row(row.w);
    let cw = c.dot(&w);
    let mut total = 0.0;
    for &neg in &row.negs {
        let cn = c.dot(&model.table(wt).row(neg));
        total += (1.0 - cw + cn).max(0.0);
    }
    total
}

/// Sparse per-row gradient contributions, merged by (table, row) and
/// ordered for deterministic application.
#[derive(Debug, Clone)]
pub struct SparseGrad {
    entries: Vec<(Table, usize, Array1<f64>)>,
}

impl SparseGrad {
    pub fn entries(&self) -> &[(Table, usize, Array1<f64>)] {
        &self.entries
    }

    pub fn get(&self, table: Table, row: usize) -> Option<&Array1<f64>> {
        self.entries
            .iter()
            .find(|(t, r, _)| *t == table && *r == row)
            .map(|(_, _, g)| g)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.entries
            .iter()
            .all(|(_, _, g)| g.iter().all(|v| v.abs() <= tol))
    }
}

/// Subgradients of the overall objective for one instance, expanded over
/// its negatives. For each (c, w, w*) triple with a violated margin
/// (`c.(w - w*) < 1`) the hinge contributes `-c` to w, `+c` to w*, and
/// `w* - w` to c; satisfied margins (including exactly 1) contribute
/// nothing. The `lambda (c_S - c_T)` (or mirrored) pull on the instance's
/// pivot row is added once, matching finite differences of
/// [`objective`] over this single instance.
pub fn subgradients(
    instance: &CoocInstance,
    model: &EmbeddingModel,
    selection: &PivotSelection,
    lambda: f64,
) -> Result<SparseGrad> {
    let row = resolve(instance, selection)?;
    let mut acc: HashMap<(Table, usize), Array1<f64>> = HashMap::new();
    accumulate_hinge(model, &row, &mut acc);
    if lambda != 0.0 {
        let c_s = model.table(Table::SourcePivot).row(row.c);
        let c_t = model.table(Table::TargetPivot).row(row.c);
        let (ct, _) = tables_for(row.domain);
        let pull = match row.domain {
            Domain::Source => (&c_s - &c_t) * lambda,
            Domain::Target => (&c_t - &c_s) * lambda,
        };
        add_grad(&mut acc, ct, row.c, model.dim(), &pull.view());
    }
    let mut entries: Vec<(Table, usize, Array1<f64>)> = acc
        .into_iter()
        .map(|((t, r), g)| (t, r, g))
        .collect();
    entries.sort_by_key(|&(t, r, _)| (t, r));
    Ok(SparseGrad { entries })
}

fn add_grad(
    acc: &mut HashMap<(Table, usize), Array1<f64>>,
    table: Table,
    row: usize,
    n: usize,
    grad: &ArrayView1<f64>,
) {
    let entry = acc
        .entry((table, row))
        .or_insert_with(|| Array1::zeros(n));
    *entry += grad;
}

/// Hinge-part gradients of one resolved instance against the current
/// parameters, accumulated into `acc`.
fn accumulate_hinge(
    model: &EmbeddingModel,
    row: &RowInstance,
    acc: &mut HashMap<(Table, usize), Array1<f64>>,
) {
    let n = model.dim();
    let (ct, wt) = tables_for(row.domain);
    let c = model.table(ct).row(row.c);
    let w = model.table(wt).row(row.w);
    let cw = c.dot(&w);
    for &neg in &row.negs {
        let wn = model.table(wt).row(neg);
        let margin = cw - c.dot(&wn);
        if margin < 1.0 {
            let neg_c = -&c;
            add_grad(acc, wt, row.w, n, &neg_c.view());
            add_grad(acc, wt, neg, n, &c);
            let c_pull = &wn - &w;
            add_grad(acc, ct, row.c, n, &c_pull.view());
        }
    }
}

/// One AdaGrad update: `accum += g^2` elementwise, then
/// `param -= base_lr * g / (sqrt(accum) + eps)`.
pub fn adagrad_step(
    mut param: ArrayViewMut1<f64>,
    grad: ArrayView1<f64>,
    mut accum: ArrayViewMut1<f64>,
    base_lr: f64,
    eps: f64,
) {
    for ((p, &g), a) in param.iter_mut().zip(grad.iter()).zip(accum.iter_mut()) {
        *a += g * g;
        *p -= base_lr * g / (a.sqrt() + eps);
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    /// Objective after initialization (index 0) and after each epoch.
    pub objective_trace: Vec<f64>,
    pub epochs_run: usize,
    pub early_stopped: bool,
}

/// Learn the four tables from both domains' instance streams. Batches are
/// drawn from the seeded shuffle of the union; gradients in a batch are
/// taken against the batch-start parameters and applied once, and the
/// regularizer pull on a pivot side is applied at most once per batch.
pub fn train(
    source_instances: &[CoocInstance],
    target_instances: &[CoocInstance],
    selection: &PivotSelection,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut model = init_model(selection, vocab, config.n, config.seed)?;
    let rows: Vec<RowInstance> = source_instances
        .iter()
        .chain(target_instances.iter())
        .map(|inst| resolve(inst, selection))
        .collect::<Result<Vec<_>>>()?;
    let lambda = config.lambda;
    let mut accum = AdaGradState::zeros_like(&model);
    let mut trace = vec![full_objective(&model, &rows, lambda)];
    if !trace[0].is_finite() {
        return Err(Error::NonFinite(format!(
            "objective is {} before training",
            trace[0]
        )));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SHUFFLE_STREAM));
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut epochs_run = 0;
    let mut early_stopped = false;
    let mut streak = 0usize;
    for _epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let mut grads: HashMap<(Table, usize), Array1<f64>> = HashMap::new();
            let mut reg_touched: BTreeSet<(Domain, usize)> = BTreeSet::new();
            for &idx in batch {
                let row = &rows[idx];
                accumulate_hinge(&model, row, &mut grads);
                reg_touched.insert((row.domain, row.c));
            }
            if lambda != 0.0 {
                for &(domain, i) in &reg_touched {
                    let diff = &model.table(Table::SourcePivot).row(i)
                        - &model.table(Table::TargetPivot).row(i);
                    let (ct, _) = tables_for(domain);
                    let pull = match domain {
                        Domain::Source => &diff * lambda,
                        Domain::Target => &diff * (-lambda),
                    };
                    add_grad(&mut grads, ct, i, model.dim(), &pull.view());
                }
            }
            let mut keys: Vec<(Table, usize)> = grads.keys().copied().collect();
            keys.sort();
            for key in keys {
                let g = &grads[&key];
                adagrad_step(
                    model.row_mut(key.0, key.1),
                    g.view(),
                    accum.row_mut(key.0, key.1),
                    config.base_lr,
                    config.adagrad_eps,
                );
            }
        }
        epochs_run += 1;
        let obj = full_objective(&model, &rows, lambda);
        if !obj.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective is {obj} after epoch {epochs_run}"
            )));
        }
        let prev = *trace.last().unwrap();
        trace.push(obj);
        let rel_improvement = (prev - obj) / prev.abs().max(1e-12);
        if rel_improvement < EARLY_STOP_REL {
            streak += 1;
        } else {
            streak = 0;
        }
        if streak >= EARLY_STOP_PATIENCE {
            early_stopped = true;
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        objective_trace: trace,
        epochs_run,
        early_stopped,
    })
}

fn full_objective(model: &EmbeddingModel, rows: &[RowInstance], lambda: f64) -> f64 {
    let hinge: f64 = rows.iter().map(|r| hinge_sum(model, r)).sum();
    hinge + lambda * regularizer(model)
}

/// Mean distance between each pivot's source and target rows; the
/// quantity the regularizer pulls down.
pub fn mean_pivot_gap(model: &EmbeddingModel) -> f64 {
    let c_s = model.table(Table::SourcePivot);
    let c_t = model.table(Table::TargetPivot);
    let k = c_s.nrows();
    if k == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (rs, rt) in c_s.rows().into_iter().zip(c_t.rows()) {
        let d2: f64 = rs
            .iter()
            .zip(rt.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += d2.sqrt();
    }
    total / k as f64
}

/// Largest per-pivot distance between the two pivot tables.
pub fn max_pivot_gap(model: &EmbeddingModel) -> f64 {
    let c_s = model.table(Table::SourcePivot);
    let c_t = model.table(Table::TargetPivot);
    c_s.rows()
        .into_iter()
        .zip(c_t.rows())
        .map(|(rs, rt)| {
            rs.iter()
                .zip(rt.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, tokenize_raw, Document, DomainCorpus};
    use crate::pivots::{select, NpmiStats};
    use crate::stopwords::StopwordSet;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::Rng;

    fn doc(id: &str, text: &str) -> Document {
        Document {
            id: id.into(),
            sentences: tokenize_raw(text),
            label: None,
        }
    }

    /// 2 pivots (c, c2), 3 non-pivots per domain.
    fn fixture() -> (Vocabulary, PivotSelection) {
        let source = DomainCorpus::new(
            Domain::Source,
            vec![
                doc("s0", "c w v . w2 c2"),
                doc("s1", "c w2 . v c2 w"),
                doc("s2", "w v w2 . c c2"),
            ],
        )
        .unwrap();
        let target = DomainCorpus::new(
            Domain::Target,
            vec![
                doc("t0", "c z y . z2 c2"),
                doc("t1", "c z2 . y c2 z"),
                doc("t2", "z y z2 . c c2"),
            ],
        )
        .unwrap();
        let vocab = build_vocabulary(&source, &target, 2, StopwordSet::empty()).unwrap();
        let stats = NpmiStats::build(&source, &target, &vocab);
        let selection = select(&vocab, &stats, 2, 3, 3).unwrap();
        (vocab, selection)
    }

    fn instance(
        selection: &PivotSelection,
        domain: Domain,
        pivot_row: usize,
        positive_row: usize,
        neg_rows: &[usize],
    ) -> CoocInstance {
        let nps = selection.nonpivots_in(domain);
        CoocInstance {
            domain,
            pivot: selection.pivots()[pivot_row],
            positive: nps[positive_row],
            negatives: neg_rows.iter().map(|&r| nps[r]).collect(),
        }
    }

    fn zeroed_model(vocab: &Vocabulary, selection: &PivotSelection, n: usize) -> EmbeddingModel {
        let mut m = init_model(selection, vocab, n, 1).unwrap();
        for t in [
            Table::SourcePivot,
            Table::TargetPivot,
            Table::SourceNonPivot,
            Table::TargetNonPivot,
        ] {
            m.table_mut(t).fill(0.0);
        }
        m
    }

    #[test]
    fn hinge_satisfied_margin_is_zero() {
        let c = array![1.0, 0.0];
        let w = array![2.0, 0.0];
        let ws = array![0.0, 0.0];
        assert_eq!(hinge_term(c.view(), w.view(), ws.view()).unwrap(), 0.0);
    }

    #[test]
    fn hinge_zero_pivot_is_one() {
        let c = array![0.0, 0.0];
        let w = array![3.0, -2.0];
        let ws = array![-5.0, 9.0];
        assert_eq!(hinge_term(c.view(), w.view(), ws.view()).unwrap(), 1.0);
    }

    #[test]
    fn hinge_violated_margin_value() {
        let c = array![1.0, 0.0];
        let w = array![0.5, 0.0];
        let ws = array![0.2, 0.0];
        assert_relative_eq!(
            hinge_term(c.view(), w.view(), ws.view()).unwrap(),
            0.7,
            max_relative = 1e-15
        );
    }

    #[test]
    fn hinge_rejects_dimension_mismatch() {
        let c = array![1.0, 0.0];
        let w = array![0.5];
        let ws = array![0.2, 0.0];
        assert!(hinge_term(c.view(), w.view(), ws.view()).is_err());
    }

    #[test]
    fn regularizer_zero_for_identical_tables() {
        let (vocab, selection) = fixture();
        let mut m = init_model(&selection, &vocab, 6, 5).unwrap();
        let cs = m.table(Table::SourcePivot).clone();
        m.table_mut(Table::TargetPivot).assign(&cs);
        assert_eq!(regularizer(&m), 0.0);
    }

    #[test]
    fn regularizer_single_unit_difference() {
        let (vocab, selection) = fixture();
        let mut m = zeroed_model(&vocab, &selection, 2);
        m.table_mut(Table::SourcePivot)[[0, 0]] = 1.0;
        assert_relative_eq!(regularizer(&m), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn regularizer_quadratic_homogeneity() {
        let (vocab, selection) = fixture();
        let m1 = init_model(&selection, &vocab, 6, 5).unwrap();
        let mut m2 = m1.clone();
        // Double every pivot difference by moving C_S away from C_T.
        let cs = m1.table(Table::SourcePivot).clone();
        let ct = m1.table(Table::TargetPivot).clone();
        m2.table_mut(Table::SourcePivot).assign(&(&cs + (&cs - &ct)));
        assert_relative_eq!(regularizer(&m2), 4.0 * regularizer(&m1), max_relative = 1e-12);
    }

    #[test]
    fn objective_empty_is_zero() {
        let (vocab, selection) = fixture();
        let m = zeroed_model(&vocab, &selection, 2);
        assert_eq!(objective(&m, &[], &selection, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn objective_single_instance_and_regularizer_add() {
        let (vocab, selection) = fixture();
        let mut m = zeroed_model(&vocab, &selection, 2);
        m.table_mut(Table::SourcePivot)[[0, 0]] = 1.0;
        m.table_mut(Table::SourceNonPivot)[[0, 0]] = 0.5;
        m.table_mut(Table::SourceNonPivot)[[1, 0]] = 0.2;
        let inst = instance(&selection, Domain::Source, 0, 0, &[1]);
        let lam0 = objective(&m, std::slice::from_ref(&inst), &selection, 0.0).unwrap();
        assert_relative_eq!(lam0, 0.7, max_relative = 1e-15);
        // lambda = 1: pivot row 0 differs by (1,0) and row 1 by nothing,
        // so R = 0.5 and the total is 1.2.
        let lam1 = objective(&m, std::slice::from_ref(&inst), &selection, 1.0).unwrap();
        assert_relative_eq!(lam1, 1.2, max_relative = 1e-15);
    }

    #[test]
    fn subgradients_zero_when_margin_satisfied() {
        let (vocab, selection) = fixture();
        let mut m = zeroed_model(&vocab, &selection, 2);
        m.table_mut(Table::SourcePivot)[[0, 0]] = 1.0;
        m.table_mut(Table::SourceNonPivot)[[0, 0]] = 2.0; // c.w = 2 >= 1 + c.w*
        let inst = instance(&selection, Domain::Source, 0, 0, &[1]);
        let g = subgradients(&inst, &m, &selection, 0.0).unwrap();
        assert!(g.is_zero(0.0));
    }

    #[test]
    fn subgradients_sign_structure_when_violated() {
        let (vocab, selection) = fixture();
        let mut m = zeroed_model(&vocab, &selection, 2);
        m.table_mut(Table::SourcePivot)[[0, 0]] = 1.0;
        let inst = instance(&selection, Domain::Source, 0, 0, &[1]);
        let g = subgradients(&inst, &m, &selection, 0.0).unwrap();
        let gw = g.get(Table::SourceNonPivot, 0).unwrap();
        let gn = g.get(Table::SourceNonPivot, 1).unwrap();
        assert_eq!(gw, &array![-1.0, 0.0]);
        assert_eq!(gn, &array![1.0, 0.0]);
    }

    #[test]
    fn subgradients_include_regularizer_pull() {
        let (vocab, selection) = fixture();
        let mut m = zeroed_model(&vocab, &selection, 2);
        m.table_mut(Table::SourcePivot)[[0, 0]] = 1.0;
        m.table_mut(Table::SourceNonPivot)[[0, 0]] = 2.0; // satisfied margin
        let inst = instance(&selection, Domain::Source, 0, 0, &[1]);
        let g = subgradients(&inst, &m, &selection, 0.5).unwrap();
        let gc = g.get(Table::SourcePivot, 0).unwrap();
        assert_eq!(gc, &array![0.5, 0.0]); // lambda (c_S - c_T)
    }

    /// Central finite differences of `objective` over a single instance
    /// match the emitted subgradient rows at non-kink points.
    #[test]
    fn subgradients_match_finite_differences() {
        let (vocab, selection) = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let h = 1e-6;
        let mut checked = 0;
        for trial in 0..60 {
            let n = 4;
            let mut m = init_model(&selection, &vocab, n, trial).unwrap();
            for t in [
                Table::SourcePivot,
                Table::TargetPivot,
                Table::SourceNonPivot,
                Table::TargetNonPivot,
            ] {
                m.table_mut(t).mapv_inplace(|v| v * 0.7);
            }
            let domain = if rng.random::<bool>() {
                Domain::Source
            } else {
                Domain::Target
            };
            let inst = instance(
                &selection,
                domain,
                rng.random_range(0..2),
                rng.random_range(0..3),
                &[rng.random_range(0..3), rng.random_range(0..3)],
            );
            let lambda = [0.0, 0.3, 2.0][rng.random_range(0..3)];
            if near_kink(&m, &inst, &selection) {
                continue;
            }
            let grads = subgradients(&inst, &m, &selection, lambda).unwrap();
            for (table, row, grad) in grads.entries() {
                for coord in 0..n {
                    let fd = {
                        let mut plus = m.clone();
                        plus.table_mut(*table)[[*row, coord]] += h;
                        let mut minus = m.clone();
                        minus.table_mut(*table)[[*row, coord]] -= h;
                        let op = objective(&plus, std::slice::from_ref(&inst), &selection, lambda)
                            .unwrap();
                        let om = objective(&minus, std::slice::from_ref(&inst), &selection, lambda)
                            .unwrap();
                        (op - om) / (2.0 * h)
                    };
                    let a = grad[coord];
                    let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
                    assert!(err < 1e-5, "table {table:?} row {row} coord {coord}: analytic {a} vs fd {fd}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 100, "too few comparisons ran ({checked})");
    }

    fn near_kink(m: &EmbeddingModel, inst: &CoocInstance, sel: &PivotSelection) -> bool {
        let c_row = sel.pivot_row(inst.pivot).unwrap();
        let w_row = sel.nonpivot_row(inst.positive, inst.domain).unwrap();
        let (ct, wt) = match inst.domain {
            Domain::Source => (Table::SourcePivot, Table::SourceNonPivot),
            Domain::Target => (Table::TargetPivot, Table::TargetNonPivot),
        };
        let c = m.table(ct).row(c_row);
        let w = m.table(wt).row(w_row);
        inst.negatives.iter().any(|&f| {
            let nrow = sel.nonpivot_row(f, inst.domain).unwrap();
            let margin = c.dot(&w) - c.dot(&m.table(wt).row(nrow));
            (margin - 1.0).abs() < 1e-4
        })
    }

    #[test]
    fn adagrad_first_step_is_sign_scaled() {
        let mut param = array![0.0, 0.0];
        let mut accum = array![0.0, 0.0];
        let grad = array![5.0, -3.0];
        adagrad_step(param.view_mut(), grad.view(), accum.view_mut(), 0.1, 1e-8);
        assert_relative_eq!(param[0], -0.1, max_relative = 1e-6);
        assert_relative_eq!(param[1], 0.1, max_relative = 1e-6);
        assert_eq!(accum, array![25.0, 9.0]);
    }

    #[test]
    fn adagrad_zero_gradient_is_identity() {
        let mut param = array![1.5, -2.5];
        let mut accum = array![4.0, 9.0];
        let grad = array![0.0, 0.0];
        adagrad_step(param.view_mut(), grad.view(), accum.view_mut(), 0.1, 1e-8);
        assert_eq!(param, array![1.5, -2.5]);
        assert_eq!(accum, array![4.0, 9.0]);
    }

    #[test]
    fn adagrad_two_step_cumulative_decrease() {
        let mut param = array![0.0];
        let mut accum = array![0.0];
        let grad = array![1.0];
        adagrad_step(param.view_mut(), grad.view(), accum.view_mut(), 0.1, 0.0);
        adagrad_step(param.view_mut(), grad.view(), accum.view_mut(), 0.1, 0.0);
        assert_relative_eq!(param[0], -0.17071067811865476, max_relative = 1e-12);
    }

    fn fixture_instances(
        selection: &PivotSelection,
        count: usize,
        seed: u64,
    ) -> (Vec<CoocInstance>, Vec<CoocInstance>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mk = |domain: Domain| -> Vec<CoocInstance> {
            (0..count)
                .map(|_| {
                    instance(
                        selection,
                        domain,
                        rng.random_range(0..2),
                        rng.random_range(0..3),
                        &[rng.random_range(0..3), rng.random_range(0..3)],
                    )
                })
                .collect()
        };
        (mk(Domain::Source), mk(Domain::Target))
    }

    #[test]
    fn train_zero_epochs_returns_initialized_model() {
        let (vocab, selection) = fixture();
        let (src, tgt) = fixture_instances(&selection, 10, 3);
        let config = TrainConfig {
            n: 5,
            max_epochs: 0,
            seed: 11,
            ..TrainConfig::default()
        };
        let out = train(&src, &tgt, &selection, &vocab, &config).unwrap();
        let fresh = init_model(&selection, &vocab, 5, 11).unwrap();
        assert_eq!(out.model.table(Table::SourcePivot), fresh.table(Table::SourcePivot));
        assert_eq!(out.epochs_run, 0);
        assert_eq!(out.objective_trace.len(), 1);
    }

    #[test]
    fn train_is_deterministic() {
        let (vocab, selection) = fixture();
        let (src, tgt) = fixture_instances(&selection, 40, 3);
        let config = TrainConfig {
            n: 6,
            max_epochs: 8,
            batch_size: 7,
            seed: 21,
            ..TrainConfig::default()
        };
        let a = train(&src, &tgt, &selection, &vocab, &config).unwrap();
        let b = train(&src, &tgt, &selection, &vocab, &config).unwrap();
        for t in [
            Table::SourcePivot,
            Table::TargetPivot,
            Table::SourceNonPivot,
            Table::TargetNonPivot,
        ] {
            assert_eq!(a.model.table(t), b.model.table(t));
        }
        assert_eq!(a.objective_trace, b.objective_trace);
    }

    #[test]
    fn train_reduces_objective() {
        // Consistent instances: pivot p predicts non-pivot p, row 2 is
        // always the negative, so all margins are jointly satisfiable.
        let (vocab, selection) = fixture();
        let mk = |domain: Domain| -> Vec<CoocInstance> {
            (0..40)
                .map(|i| instance(&selection, domain, i % 2, i % 2, &[2]))
                .collect()
        };
        let (src, tgt) = (mk(Domain::Source), mk(Domain::Target));
        let config = TrainConfig {
            n: 6,
            max_epochs: 60,
            lambda: 0.1,
            seed: 2,
            ..TrainConfig::default()
        };
        let out = train(&src, &tgt, &selection, &vocab, &config).unwrap();
        let first = out.objective_trace[0];
        let last = *out.objective_trace.last().unwrap();
        assert!(last < first * 0.2, "objective {first} -> {last}");
    }

    #[test]
    fn train_aborts_on_numerical_blowup() {
        let (vocab, selection) = fixture();
        let (src, tgt) = fixture_instances(&selection, 40, 3);
        let config = TrainConfig {
            n: 4,
            max_epochs: 50,
            base_lr: 1e160,
            seed: 5,
            ..TrainConfig::default()
        };
        match train(&src, &tgt, &selection, &vocab, &config) {
            Err(Error::NonFinite(_)) => {}
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn objective_is_lambda_r_when_all_margins_satisfied() {
        let (vocab, selection) = fixture();
        let mut m = init_model(&selection, &vocab, 2, 9).unwrap();
        // Big positive c.w for the positive, zero for negatives.
        m.table_mut(Table::SourcePivot).fill(0.0);
        m.table_mut(Table::SourcePivot)[[0, 0]] = 1.0;
        m.table_mut(Table::SourcePivot)[[1, 0]] = 1.0;
        m.table_mut(Table::SourceNonPivot).fill(0.0);
        m.table_mut(Table::SourceNonPivot)[[0, 0]] = 5.0;
        let inst = instance(&selection, Domain::Source, 0, 0, &[1, 2]);
        let lambda = 3.0;
        let got = objective(&m, std::slice::from_ref(&inst), &selection, lambda).unwrap();
        assert_relative_eq!(got, lambda * regularizer(&m), max_relative = 1e-12);
    }

    /// Midpoint convexity in a single row, everything else fixed.
    #[test]
    fn objective_convex_per_row() {
        let (vocab, selection) = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (src, tgt) = fixture_instances(&selection, 25, 8);
        let all: Vec<CoocInstance> = src.into_iter().chain(tgt).collect();
        let tables = [
            Table::SourcePivot,
            Table::TargetPivot,
            Table::SourceNonPivot,
            Table::TargetNonPivot,
        ];
        for trial in 0..40u64 {
            let base = init_model(&selection, &vocab, 4, trial).unwrap();
            let table = tables[rng.random_range(0..4)];
            let row = rng.random_range(0..base.table(table).nrows());
            let lambda = [0.0, 1.0][rng.random_range(0..2)];
            let mut a = base.clone();
            let mut b = base.clone();
            let mut mid = base.clone();
            for coord in 0..4 {
                let va: f64 = rng.random_range(-2.0..2.0);
                let vb: f64 = rng.random_range(-2.0..2.0);
                a.table_mut(table)[[row, coord]] = va;
                b.table_mut(table)[[row, coord]] = vb;
                mid.table_mut(table)[[row, coord]] = 0.5 * (va + vb);
            }
            let fa = objective(&a, &all, &selection, lambda).unwrap();
            let fb = objective(&b, &all, &selection, lambda).unwrap();
            let fm = objective(&mid, &all, &selection, lambda).unwrap();
            assert!(
                fm <= 0.5 * (fa + fb) + 1e-9,
                "midpoint convexity violated: f(mid)={fm}, (f(a)+f(b))/2={}",
                0.5 * (fa + fb)
            );
        }
    }
}

//! Accuracy evaluation with exact binomial confidence intervals, the NA
//! (no-adaptation) and InDomain baselines, and the predictions file.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::classifier::{train_logreg, LinearModel, ReviewVector};
use crate::corpus::{Sentiment, Vocabulary};
use crate::error::{Error, Result};

/// Accuracy of one method with its Clopper-Pearson 95% interval.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub n_correct: u64,
    pub n_total: u64,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl EvalReport {
    pub fn from_counts(method: &str, n_correct: u64, n_total: u64, confidence: f64) -> Result<EvalReport> {
        let (ci_low, ci_high) = clopper_pearson(n_correct, n_total, confidence)?;
        Ok(EvalReport {
            method: method.to_string(),
            n_correct,
            n_total,
            accuracy: n_correct as f64 / n_total as f64,
            ci_low,
            ci_high,
        })
    }

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.method, self.n_correct, self.n_total, self.accuracy, self.ci_low, self.ci_high
        )
    }
}

/// One scored prediction: `doc_id<TAB>gold<TAB>pred<TAB>psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub doc_id: String,
    pub gold: Sentiment,
    pub pred: Sentiment,
    pub psi: f64,
}

pub fn write_predictions(predictions: &[Prediction], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for p in predictions {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            p.doc_id,
            p.gold.as_str(),
            p.pred.as_str(),
            p.psi
        )?;
    }
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 4 {
            return Err(Error::parse(path, lineno, "expected `doc_id<TAB>gold<TAB>pred<TAB>psi`"));
        }
        let gold = Sentiment::parse(parts[1])
            .ok_or_else(|| Error::parse(path, lineno, format!("bad gold label `{}`", parts[1])))?;
        let pred = Sentiment::parse(parts[2])
            .ok_or_else(|| Error::parse(path, lineno, format!("bad predicted label `{}`", parts[2])))?;
        let psi: f64 = parts[3]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad score `{}`", parts[3])))?;
        out.push(Prediction {
            doc_id: parts[0].to_string(),
            gold,
            pred,
            psi,
        });
    }
    if out.is_empty() {
        return Err(Error::parse(path, 0, "predictions file is empty"));
    }
    Ok(out)
}

/// Score a prediction list into a report.
pub fn evaluate_predictions(
    method: &str,
    predictions: &[Prediction],
    confidence: f64,
) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput("no predictions to evaluate".into()));
    }
    let n_correct = predictions.iter().filter(|p| p.gold == p.pred).count() as u64;
    EvalReport::from_counts(method, n_correct, predictions.len() as u64, confidence)
}

/// NA baseline: source-trained classifier applied to target test reviews
/// by exact feature match.
pub fn baseline_na(
    source_train: &[ReviewVector],
    target_test: &[ReviewVector],
    vocab: &Vocabulary,
    l2: f64,
    seed: u64,
    confidence: f64,
) -> Result<(EvalReport, Vec<Prediction>, LinearModel)> {
    if target_test.is_empty() {
        return Err(Error::InvalidInput("target test set is empty".into()));
    }
    let theta = train_logreg(source_train, l2, seed, vocab.len())?;
    let predictions = raw_predictions(&theta, target_test)?;
    let report = evaluate_predictions("NA", &predictions, confidence)?;
    Ok((report, predictions, theta))
}

/// InDomain reference: classifier trained on target labeled data, applied
/// to target test reviews.
pub fn baseline_indomain(
    target_train: &[ReviewVector],
    target_test: &[ReviewVector],
    vocab: &Vocabulary,
    l2: f64,
    seed: u64,
    confidence: f64,
) -> Result<(EvalReport, Vec<Prediction>, LinearModel)> {
    if target_test.is_empty() {
        return Err(Error::InvalidInput("target test set is empty".into()));
    }
    let theta = train_logreg(target_train, l2, seed, vocab.len())?;
    let predictions = raw_predictions(&theta, target_test)?;
    let report = evaluate_predictions("InDomain", &predictions, confidence)?;
    Ok((report, predictions, theta))
}

fn raw_predictions(theta: &LinearModel, test: &[ReviewVector]) -> Result<Vec<Prediction>> {
    test.iter()
        .map(|r| {
            let gold = r.label.ok_or_else(|| {
                Error::InvalidInput(format!("test review `{}` is unlabeled", r.doc_id))
            })?;
            let psi = theta.raw_score(r);
            let pred = if psi > 0.0 {
                Sentiment::Positive
            } else {
                Sentiment::Negative
            };
            Ok(Prediction {
                doc_id: r.doc_id.clone(),
                gold,
                pred,
                psi,
            })
        })
        .collect()
}

/// Exact Clopper-Pearson binomial interval from beta-distribution
/// quantiles: low = BetaInv(alpha/2; k, n-k+1), high =
/// BetaInv(1-alpha/2; k+1, n-k), with exact 0/1 endpoints at the
/// boundaries.
pub fn clopper_pearson(n_correct: u64, n_total: u64, confidence: f64) -> Result<(f64, f64)> {
    if n_total < 1 {
        return Err(Error::InvalidInput("n_total must be >= 1".into()));
    }
    if n_correct > n_total {
        return Err(Error::InvalidInput(format!(
            "n_correct ({n_correct}) exceeds n_total ({n_total})"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidInput(format!(
            "confidence must be in (0, 1), got {confidence}"
        )));
    }
    let alpha = 1.0 - confidence;
    let k = n_correct as f64;
    let n = n_total as f64;
    let low = if n_correct == 0 {
        0.0
    } else {
        beta_quantile(alpha / 2.0, k, n - k + 1.0)?
    };
    let high = if n_correct == n_total {
        1.0
    } else {
        beta_quantile(1.0 - alpha / 2.0, k + 1.0, n - k)?
    };
    Ok((low, high))
}

/// Invert the regularized incomplete beta by bisection to 1e-10.
fn beta_quantile(p: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("quantile level {p} out of range")));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if incomplete_beta(mid, a, b)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Regularized incomplete beta I_x(a, b) by the continued-fraction
/// expansion (Lentz's method), with the symmetry transform for fast
/// convergence.
pub fn incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidInput("beta parameters must be positive".into()));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidInput(format!("x = {x} outside [0, 1]")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(x, a, b) / a)
    } else {
        Ok(1.0 - front * beta_cf(1.0 - x, b, a) / b)
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 coefficients).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i as f64) + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}


#[cfg(test)]
mod oracle_tests {
    use super::*;
    use statrs::distribution::{Beta, ContinuousCDF};

    /// The hand-rolled incomplete beta and its bisection inverse agree
    /// with statrs across a parameter grid.
    #[test]
    fn incomplete_beta_matches_statrs() {
        for &(a, b) in &[(1.0, 1.0), (2.0, 5.0), (160.0, 41.0), (161.0, 40.0), (0.5, 0.5)] {
            let dist = Beta::new(a, b).unwrap();
            for i in 1..20 {
                let x = i as f64 / 20.0;
                let ours = incomplete_beta(x, a, b).unwrap();
                let reference = dist.cdf(x);
                assert!(
                    (ours - reference).abs() < 1e-10,
                    "I_{x}({a},{b}): {ours} vs {reference}"
                );
            }
        }
    }

    #[test]
    fn quantiles_match_statrs_inverse_cdf() {
        for &(k, n) in &[(160u64, 200u64), (5, 10), (99, 100), (1, 50)] {
            let (low, high) = clopper_pearson(k, n, 0.95).unwrap();
            let kf = k as f64;
            let nf = n as f64;
            if k > 0 {
                let reference = Beta::new(kf, nf - kf + 1.0).unwrap().inverse_cdf(0.025);
                assert!((low - reference).abs() < 1e-8, "low {low} vs {reference}");
            }
            if k < n {
                let reference = Beta::new(kf + 1.0, nf - kf).unwrap().inverse_cdf(0.975);
                assert!((high - reference).abs() < 1e-8, "high {high} vs {reference}");
            }
        }
    }
}

#[cfg(test)]
mod proptests {
    use super::clopper_pearson;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn interval_contains_estimate_and_widens_with_confidence(
            n in 1u64..500,
            frac in 0.0f64..=1.0,
            c1 in 0.5f64..0.98,
            bump in 0.001f64..0.019,
        ) {
            let k = ((n as f64) * frac).round() as u64;
            let k = k.min(n);
            let (lo1, hi1) = clopper_pearson(k, n, c1).unwrap();
            let p = k as f64 / n as f64;
            prop_assert!(lo1 <= p + 1e-12 && p <= hi1 + 1e-12);
            prop_assert!((0.0..=1.0).contains(&lo1) && (0.0..=1.0).contains(&hi1));
            let (lo2, hi2) = clopper_pearson(k, n, c1 + bump).unwrap();
            prop_assert!(lo2 <= lo1 + 1e-9 && hi1 <= hi2 + 1e-9);
        }
    }
}

//! Classification metrics and paired significance tests.
//!
//! Conventions:
//! * labels are 1..=5; macro-F1 averages over all five classes, present or
//!   not, and a class with a zero precision/recall denominator scores 0;
//! * McNemar uses the continuity-corrected statistic `(|b-c|-1)^2/(b+c)`
//!   against χ²(1);
//! * Wilcoxon discards zero differences, ranks `|d|` with average ranks for
//!   ties and reports `W = min(W+, W-)`. Up to [`WILCOXON_EXACT_MAX_N`]
//!   non-zero pairs the two-sided p-value is exact (the null distribution of
//!   W+ over all 2^n sign assignments); above that a tie- and
//!   continuity-corrected normal approximation is used.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::ensemble::EnsembleRecord;
use crate::error::{Error, Result};

pub const LABELS: [u8; 5] = [1, 2, 3, 4, 5];
pub const WILCOXON_EXACT_MAX_N: usize = 25;

fn check_lengths<A, B>(a: &[A], b: &[B]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("metric inputs"));
    }
    Ok(())
}

fn check_labels(xs: &[u8]) -> Result<()> {
    match xs.iter().find(|l| !LABELS.contains(l)) {
        Some(&l) => Err(Error::InvalidLabel(i64::from(l))),
        None => Ok(()),
    }
}

pub fn accuracy(pred: &[u8], truth: &[u8]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

pub fn rmse(pred: &[u8], truth: &[u8]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let se: f64 = pred
        .iter()
        .zip(truth)
        .map(|(&p, &t)| (f64::from(p) - f64::from(t)).powi(2))
        .sum();
    Ok((se / pred.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub per_class: BTreeMap<u8, f64>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

pub fn f1_scores(pred: &[u8], truth: &[u8]) -> Result<F1Scores> {
    check_lengths(pred, truth)?;
    check_labels(pred)?;
    check_labels(truth)?;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut per_class = BTreeMap::new();
    let mut weighted = 0.0;
    for label in LABELS {
        let tp = pred
            .iter()
            .zip(truth)
            .filter(|&(&p, &t)| p == label && t == label)
            .count();
        let predicted = pred.iter().filter(|&&p| p == label).count();
        let support = truth.iter().filter(|&&t| t == label).count();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        weighted += f1 * support as f64;
        per_class.insert(label, f1);
    }
    Ok(F1Scores {
        macro_f1: per_class.values().sum::<f64>() / LABELS.len() as f64,
        weighted_f1: weighted / truth.len() as f64,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub f1_per_class: BTreeMap<u8, f64>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub rmse: f64,
    pub n: usize,
}

pub fn evaluate(pred: &[u8], truth: &[u8]) -> Result<EvalReport> {
    let f1 = f1_scores(pred, truth)?;
    Ok(EvalReport {
        accuracy: accuracy(pred, truth)?,
        f1_per_class: f1.per_class,
        macro_f1: f1.macro_f1,
        weighted_f1: f1.weighted_f1,
        rmse: rmse(pred, truth)?,
        n: pred.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    McnemarCc,
    WilcoxonExact,
    WilcoxonNormal,
}

impl std::fmt::Display for TestMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestMethod::McnemarCc => "continuity-corrected",
            TestMethod::WilcoxonExact => "exact",
            TestMethod::WilcoxonNormal => "normal approximation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: TestMethod,
    /// Wilcoxon only: positive and negative rank sums.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_minus: Option<f64>,
}

/// Upper tail of χ² with one degree of freedom.
pub fn chi2_1df_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(1.0).expect("valid dof").sf(x).clamp(0.0, 1.0)
}

pub fn mcnemar(correct_a: &[bool], correct_b: &[bool]) -> Result<PairedTestResult> {
    if correct_a.len() != correct_b.len() {
        return Err(Error::LengthMismatch {
            left: correct_a.len(),
            right: correct_b.len(),
        });
    }
    let b = correct_a.iter().zip(correct_b).filter(|&(&a, &b)| a && !b).count();
    let c = correct_a.iter().zip(correct_b).filter(|&(&a, &b)| !a && b).count();
    Ok(mcnemar_from_counts(b, c))
}

/// McNemar from the discordant counts `b` (A right, B wrong) and `c`.
pub fn mcnemar_from_counts(b: usize, c: usize) -> PairedTestResult {
    let (statistic, p_value) = if b + c == 0 {
        (0.0, 1.0)
    } else {
        let diff = (b as f64 - c as f64).abs() - 1.0;
        let chi2 = diff * diff / (b + c) as f64;
        (chi2, chi2_1df_sf(chi2))
    };
    PairedTestResult {
        statistic,
        p_value,
        n_effective: b + c,
        method: TestMethod::McnemarCc,
        w_plus: None,
        w_minus: None,
    }
}

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn wilcoxon_signed_rank(err_a: &[f64], err_b: &[f64]) -> Result<PairedTestResult> {
    if err_a.len() != err_b.len() {
        return Err(Error::LengthMismatch {
            left: err_a.len(),
            right: err_b.len(),
        });
    }
    let diffs: Vec<f64> = err_a
        .iter()
        .zip(err_b)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(PairedTestResult {
            statistic: 0.0,
            p_value: 1.0,
            n_effective: 0,
            method: TestMethod::WilcoxonExact,
            w_plus: Some(0.0),
            w_minus: Some(0.0),
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let w_minus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d < 0.0)
        .map(|(_, r)| r)
        .sum();
    let w = w_plus.min(w_minus);

    let (p_value, method) = if n <= WILCOXON_EXACT_MAX_N {
        (exact_signed_rank_p(&ranks, w), TestMethod::WilcoxonExact)
    } else {
        (normal_signed_rank_p(&abs, w), TestMethod::WilcoxonNormal)
    };
    Ok(PairedTestResult {
        statistic: w,
        p_value,
        n_effective: n,
        method,
        w_plus: Some(w_plus),
        w_minus: Some(w_minus),
    })
}

/// `min(1, 2 P(W+ <= w))` under the null, counting sign assignments. Average
/// ranks are multiples of 1/2, so doubled ranks index the count table
/// exactly.
fn exact_signed_rank_p(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let limit = (w * 2.0).round() as usize;
    let tail: u64 = counts[..=limit.min(total)].iter().sum();
    let p = 2.0 * tail as f64 / 2f64.powi(ranks.len() as i32);
    p.min(1.0)
}

fn normal_signed_rank_p(abs_diffs: &[f64], w: f64) -> f64 {
    let n = abs_diffs.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = abs_diffs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    (2.0 * std_normal.sf(z)).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub count: usize,
    #[serde(default)]
    pub macro_f1: Option<f64>,
    #[serde(default)]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Keyed by `n_unique`; every value `1..=n_models` is present.
    pub per_stratum: BTreeMap<usize, Stratum>,
    /// Records with at least one valid prediction.
    pub n: usize,
    /// Records without any valid prediction.
    pub excluded: usize,
}

pub fn stratify_by_consistency(
    records: &[EnsembleRecord],
    truth: &HashMap<String, u8>,
    n_models: usize,
) -> Result<ConsistencyReport> {
    let mut groups: BTreeMap<usize, (Vec<u8>, Vec<u8>)> = (1..=n_models).map(|k| (k, (vec![], vec![]))).collect();
    let mut excluded = 0;
    for r in records {
        let t = *truth
            .get(&r.sample_id)
            .ok_or_else(|| Error::Config(format!("no ground truth for sample {}", r.sample_id)))?;
        match r.median_rating {
            Some(m) => {
                let g = groups.entry(r.n_unique).or_default();
                g.0.push(m);
                g.1.push(t);
            }
            None => excluded += 1,
        }
    }
    let mut per_stratum = BTreeMap::new();
    let mut n = 0;
    for (k, (pred, gold)) in groups {
        n += pred.len();
        let stratum = if pred.is_empty() {
            Stratum {
                count: 0,
                macro_f1: None,
                accuracy: None,
            }
        } else {
            Stratum {
                count: pred.len(),
                macro_f1: Some(f1_scores(&pred, &gold)?.macro_f1),
                accuracy: Some(accuracy(&pred, &gold)?),
            }
        };
        per_stratum.insert(k, stratum);
    }
    Ok(ConsistencyReport {
        per_stratum,
        n,
        excluded,
    })
}

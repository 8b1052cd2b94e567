//! Run-level reports: per-model and ensemble metrics, side-by-side run
//! comparison with paired tests, and plain-text tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleRecord;
use crate::error::{Error, Result};
use crate::inference::{Prediction, SampleFailure};
use crate::metrics::{self, ConsistencyReport, EvalReport, PairedTestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelColumn {
    pub model_id: String,
    pub eval: EvalReport,
    pub parse_failures: usize,
    pub missing: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub rmse: f64,
}

impl From<&EvalReport> for MetricTriple {
    fn from(e: &EvalReport) -> Self {
        Self {
            accuracy: e.accuracy,
            macro_f1: e.macro_f1,
            rmse: e.rmse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub models: Vec<ModelColumn>,
    /// Arithmetic mean of the base-model metrics.
    pub average: MetricTriple,
    pub ensemble: EvalReport,
    /// Records with no valid prediction, left out of the ensemble scores.
    pub ensemble_excluded: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kshot: Option<ModelColumn>,
    pub failures: Vec<SampleFailure>,
}

/// Scores a model on the samples it produced a valid rating for.
pub fn model_column(model_id: &str, predictions: &[Prediction], truth: &HashMap<String, u8>) -> Result<ModelColumn> {
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    let mut parse_failures = 0;
    for p in predictions {
        let t = *truth
            .get(&p.sample_id)
            .ok_or_else(|| Error::Config(format!("no ground truth for sample {}", p.sample_id)))?;
        match p.rating {
            Some(r) => {
                pred.push(r);
                gold.push(t);
            }
            None => parse_failures += 1,
        }
    }
    Ok(ModelColumn {
        model_id: model_id.to_string(),
        eval: metrics::evaluate(&pred, &gold)?,
        parse_failures,
        missing: truth.len().saturating_sub(predictions.len()),
    })
}

pub fn truth_map(records: &[EnsembleRecord]) -> HashMap<String, u8> {
    records.iter().map(|r| (r.sample_id.clone(), r.label)).collect()
}

/// Median predictions and truth for records that have a median.
pub fn ensemble_pairs(records: &[EnsembleRecord]) -> (Vec<u8>, Vec<u8>) {
    records
        .iter()
        .filter_map(|r| r.median_rating.map(|m| (m, r.label)))
        .unzip()
}

pub fn build_run_report(
    records: &[EnsembleRecord],
    per_model: &[(String, Vec<Prediction>)],
    kshot: Option<(String, Vec<Prediction>)>,
    failures: Vec<SampleFailure>,
) -> Result<RunReport> {
    let truth = truth_map(records);
    let models = per_model
        .iter()
        .map(|(id, preds)| model_column(id, preds, &truth))
        .collect::<Result<Vec<_>>>()?;
    if models.is_empty() {
        return Err(Error::Empty("run has no models"));
    }
    let n = models.len() as f64;
    let average = MetricTriple {
        accuracy: models.iter().map(|m| m.eval.accuracy).sum::<f64>() / n,
        macro_f1: models.iter().map(|m| m.eval.macro_f1).sum::<f64>() / n,
        rmse: models.iter().map(|m| m.eval.rmse).sum::<f64>() / n,
    };
    let (pred, gold) = ensemble_pairs(records);
    let kshot = kshot.map(|(id, preds)| model_column(&id, &preds, &truth)).transpose()?;
    Ok(RunReport {
        models,
        average,
        ensemble: metrics::evaluate(&pred, &gold)?,
        ensemble_excluded: records.len() - pred.len(),
        kshot,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: EvalReport,
    pub b: EvalReport,
    /// `b - a` for each metric.
    pub delta: MetricTriple,
    pub mcnemar: PairedTestResult,
    pub wilcoxon: PairedTestResult,
    pub n_excluded: usize,
}

/// Paired comparison of two runs' ensemble predictions. Both runs must cover
/// the same test samples.
pub fn compare_records(a: &[EnsembleRecord], b: &[EnsembleRecord]) -> Result<Comparison> {
    let b_by_id: HashMap<&str, &EnsembleRecord> = b.iter().map(|r| (r.sample_id.as_str(), r)).collect();
    if a.len() != b.len() || a.iter().any(|r| !b_by_id.contains_key(r.sample_id.as_str())) {
        return Err(Error::RunMismatch("runs were evaluated on different test sets".into()));
    }
    let mut pa = Vec::new();
    let mut pb = Vec::new();
    let mut gold = Vec::new();
    for ra in a {
        let rb = b_by_id[ra.sample_id.as_str()];
        if ra.label != rb.label {
            return Err(Error::RunMismatch(format!(
                "sample {} has different labels",
                ra.sample_id
            )));
        }
        if let (Some(x), Some(y)) = (ra.median_rating, rb.median_rating) {
            pa.push(x);
            pb.push(y);
            gold.push(ra.label);
        }
    }
    let ea = metrics::evaluate(&pa, &gold)?;
    let eb = metrics::evaluate(&pb, &gold)?;
    let correct = |p: &[u8]| p.iter().zip(&gold).map(|(x, t)| x == t).collect::<Vec<_>>();
    let abs_err = |p: &[u8]| {
        p.iter()
            .zip(&gold)
            .map(|(&x, &t)| (f64::from(x) - f64::from(t)).abs())
            .collect::<Vec<_>>()
    };
    Ok(Comparison {
        delta: MetricTriple {
            accuracy: eb.accuracy - ea.accuracy,
            macro_f1: eb.macro_f1 - ea.macro_f1,
            rmse: eb.rmse - ea.rmse,
        },
        mcnemar: metrics::mcnemar(&correct(&pa), &correct(&pb))?,
        wilcoxon: metrics::wilcoxon_signed_rank(&abs_err(&pa), &abs_err(&pb))?,
        n_excluded: a.len() - gold.len(),
        a: ea,
        b: eb,
    })
}

fn cell(v: f64) -> String {
    format!("{v:>7.3}")
}

/// Rows Acc./F1/RMSE; columns per model, Avg., Ens and optionally k-shot.
pub fn format_run_table(report: &RunReport) -> String {
    let mut out = String::new();
    let mut header = format!("{:<6}", "");
    for m in &report.models {
        write!(header, "{:>7}", m.model_id).unwrap();
    }
    write!(header, "{:>7}{:>7}", "Avg.", "Ens").unwrap();
    if let Some(k) = &report.kshot {
        write!(header, "{:>9}", k.model_id).unwrap();
    }
    out.push_str(header.trim_end());
    out.push('\n');
    type Row<'a> = (&'a str, fn(&EvalReport) -> f64, f64);
    let rows: [Row; 3] = [
        ("Acc.", |e| e.accuracy, report.average.accuracy),
        ("F1", |e| e.macro_f1, report.average.macro_f1),
        ("RMSE", |e| e.rmse, report.average.rmse),
    ];
    for (name, get, avg) in rows {
        let mut line = format!("{name:<6}");
        for m in &report.models {
            line.push_str(&cell(get(&m.eval)));
        }
        line.push_str(&cell(avg));
        line.push_str(&cell(get(&report.ensemble)));
        if let Some(k) = &report.kshot {
            write!(line, "  {}", cell(get(&k.eval))).unwrap();
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Per-class F1 by model, plus macro and support-weighted F1.
pub fn format_f1_table(report: &RunReport) -> String {
    let mut out = format!("{:<8}", "Labels");
    for l in metrics::LABELS {
        write!(out, "{l:>7}").unwrap();
    }
    out.push_str("  Macro Weighted\n");
    let mut rows: Vec<(&str, &EvalReport)> = report.models.iter().map(|m| (m.model_id.as_str(), &m.eval)).collect();
    rows.push(("Ens", &report.ensemble));
    for (name, e) in rows {
        write!(out, "{name:<8}").unwrap();
        for l in metrics::LABELS {
            out.push_str(&cell(e.f1_per_class.get(&l).copied().unwrap_or(0.0)));
        }
        writeln!(out, "{}{}", cell(e.macro_f1), cell(e.weighted_f1)).unwrap();
    }
    out
}

pub fn format_consistency(report: &ConsistencyReport) -> String {
    let mut out = format!("{:<10}", "n_unique");
    for k in report.per_stratum.keys() {
        write!(out, "{k:>7}").unwrap();
    }
    out.push('\n');
    let fmt_opt = |v: Option<f64>| v.map_or(format!("{:>7}", "-"), cell);
    type Row<'a> = (&'a str, Box<dyn Fn(&metrics::Stratum) -> String + 'a>);
    let rows: [Row; 3] = [
        ("Samples", Box::new(|s| format!("{:>7}", s.count))),
        ("F1", Box::new(|s| fmt_opt(s.macro_f1))),
        ("Acc.", Box::new(|s| fmt_opt(s.accuracy))),
    ];
    for (name, f) in rows {
        write!(out, "{name:<10}").unwrap();
        for s in report.per_stratum.values() {
            out.push_str(&f(s));
        }
        out.push('\n');
    }
    out
}

pub fn format_comparison(label_a: &str, label_b: &str, c: &Comparison) -> String {
    let mut out = String::new();
    writeln!(out, "{:<6}{:>12}{:>12}{:>10}", "", label_a, label_b, "delta").unwrap();
    let rows = [
        ("Acc.", c.a.accuracy, c.b.accuracy, c.delta.accuracy),
        ("F1", c.a.macro_f1, c.b.macro_f1, c.delta.macro_f1),
        ("RMSE", c.a.rmse, c.b.rmse, c.delta.rmse),
    ];
    for (name, a, b, d) in rows {
        writeln!(out, "{name:<6}{a:>12.3}{b:>12.3}{d:>+10.3}").unwrap();
    }
    writeln!(
        out,
        "McNemar chi2 = {:.3}, p = {:.4} (discordant = {})",
        c.mcnemar.statistic, c.mcnemar.p_value, c.mcnemar.n_effective
    )
    .unwrap();
    writeln!(
        out,
        "Wilcoxon W = {}, p = {:.4} (n = {}, {})",
        c.wilcoxon.statistic, c.wilcoxon.p_value, c.wilcoxon.n_effective, c.wilcoxon.method
    )
    .unwrap();
    out
}

/// Relative change of `ours` over `baseline`, in percent.
pub fn lift(ours: f64, baseline: f64) -> f64 {
    (ours - baseline) / baseline * 100.0
}

pub fn label_counts(labels: impl IntoIterator<Item = u8>) -> BTreeMap<u8, usize> {
    let mut h: BTreeMap<u8, usize> = metrics::LABELS.iter().map(|&l| (l, 0)).collect();
    for l in labels {
        *h.entry(l).or_default() += 1;
    }
    h
}

//! Corpus ingestion, seeded pool/test split and summary statistics.
//!
//! Input is JSON Lines. Each line is an object with `text` and numeric
//! `stars`, and optionally `id` (or `review_id`), `user_id`, `business_id`
//! and `categories`. Lines without an id get `line-<n>` (1-based line number).

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// One labeled review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue_id: Option<String>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: u8) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label,
            user_id: None,
            venue_id: None,
        }
    }
}

/// Why a well-formed line was not turned into a [`Sample`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RejectReason {
    EmptyText,
    LabelOutOfRange,
    CategoryFiltered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: RejectReason,
}

/// Result of loading a corpus: accepted samples in file order plus the rows
/// that were skipped.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub samples: Vec<Sample>,
    pub rejected: Vec<Rejection>,
}

impl Corpus {
    pub fn rejected_count(&self, reason: RejectReason) -> usize {
        self.rejected.iter().filter(|r| r.reason == reason).count()
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Keep only rows whose comma-separated `categories` field contains this
    /// entry (case-sensitive, whitespace-trimmed).
    pub filter_category: Option<String>,
}

pub fn load_corpus(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), opts).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses JSONL from any reader. A malformed line aborts the whole load.
pub fn parse_corpus(reader: impl BufRead, opts: &LoadOptions) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: &str| Error::MalformedLine {
            line: lineno,
            reason: reason.to_string(),
        };
        let obj: Value = serde_json::from_str(&line).map_err(|e| malformed(&e.to_string()))?;
        let obj = obj.as_object().ok_or_else(|| malformed("not a JSON object"))?;

        let text = obj
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("missing string field `text`"))?;
        let stars = obj
            .get("stars")
            .and_then(Value::as_f64)
            .ok_or_else(|| malformed("missing numeric field `stars`"))?;
        let id = match obj.get("id").or_else(|| obj.get("review_id")) {
            None | Some(Value::Null) => format!("line-{lineno}"),
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            Some(_) => return Err(malformed("`id` must be a string or number")),
        };
        let opt_str = |key: &str| obj.get(key).and_then(Value::as_str).map(str::to_string);

        if let Some(cat) = &opts.filter_category {
            let keep = obj
                .get("categories")
                .and_then(Value::as_str)
                .is_some_and(|c| c.split(',').any(|t| t.trim() == cat));
            if !keep {
                corpus.rejected.push(Rejection {
                    line: lineno,
                    reason: RejectReason::CategoryFiltered,
                });
                continue;
            }
        }
        if text.trim().is_empty() {
            corpus.rejected.push(Rejection {
                line: lineno,
                reason: RejectReason::EmptyText,
            });
            continue;
        }
        let label = match stars {
            s if s.fract() == 0.0 && (1.0..=5.0).contains(&s) => s as u8,
            _ => {
                corpus.rejected.push(Rejection {
                    line: lineno,
                    reason: RejectReason::LabelOutOfRange,
                });
                continue;
            }
        };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        corpus.samples.push(Sample {
            id,
            text: text.to_string(),
            label,
            user_id: opt_str("user_id"),
            venue_id: opt_str("business_id"),
        });
    }
    Ok(corpus)
}

/// Writes samples back out in the same JSONL schema `load_corpus` reads.
pub fn write_samples(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        id: &'a str,
        text: &'a str,
        stars: u8,
        #[serde(skip_serializing_if = "Option::is_none")]
        user_id: Option<&'a str>,
        #[serde(skip_serializing_if = "Option::is_none")]
        business_id: Option<&'a str>,
    }
    let mut buf = Vec::new();
    for s in samples {
        let row = Row {
            id: &s.id,
            text: &s.text,
            stars: s.label,
            user_id: s.user_id.as_deref(),
            business_id: s.venue_id.as_deref(),
        };
        serde_json::to_writer(&mut buf, &row)?;
        buf.push(b'\n');
    }
    crate::io::write_atomic(path.as_ref(), &buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub pool_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// 18,000 pool / 1,000 test.
    pub fn standard(seed: u64) -> Self {
        Self {
            pool_size: 18_000,
            test_size: 1_000,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub pool: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Unstratified seeded split: Fisher–Yates shuffle of the corpus order, then
/// the first `pool_size` go to the pool and the next `test_size` to the test
/// set. Remaining samples are unused.
pub fn split_corpus(samples: &[Sample], spec: &SplitSpec) -> Result<Split> {
    if spec.pool_size == 0 || spec.test_size == 0 {
        return Err(Error::Config("pool_size and test_size must be positive".into()));
    }
    let required = spec.pool_size + spec.test_size;
    if required > samples.len() {
        return Err(Error::InsufficientSamples {
            required,
            available: samples.len(),
        });
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    SplitMix64::new(spec.seed).shuffle(&mut order);
    let pick = |r: &[usize]| r.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        pool: pick(&order[..spec.pool_size]),
        test: pick(&order[spec.pool_size..required]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n: usize,
    pub n_users: usize,
    pub n_venues: usize,
    pub rating_mean: f64,
    pub rating_std: f64,
    pub chars_mean: f64,
    pub chars_std: f64,
}

/// Mean and sample standard deviation (divisor n−1; 0 when n = 1).
pub(crate) fn mean_std(xs: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Summary statistics; character counts are Unicode scalar values.
pub fn summarize(samples: &[Sample]) -> Result<CorpusStats> {
    if samples.is_empty() {
        return Err(Error::Empty("cannot summarize an empty sample list"));
    }
    let ratings: Vec<f64> = samples.iter().map(|s| f64::from(s.label)).collect();
    let chars: Vec<f64> = samples.iter().map(|s| s.text.chars().count() as f64).collect();
    let (rating_mean, rating_std) = mean_std(ratings.iter().copied());
    let (chars_mean, chars_std) = mean_std(chars.iter().copied());
    let distinct = |f: fn(&Sample) -> Option<&String>| samples.iter().filter_map(f).collect::<HashSet<_>>().len();
    Ok(CorpusStats {
        n: samples.len(),
        n_users: distinct(|s| s.user_id.as_ref()),
        n_venues: distinct(|s| s.venue_id.as_ref()),
        rating_mean,
        rating_std,
        chars_mean,
        chars_std,
    })
}

/// Stable fingerprint of a sample set: SHA-256 over the sorted ids.
pub fn sample_id_hash(samples: &[Sample]) -> String {
    use sha2::{Digest, Sha256};
    let mut ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    ids.sort_unstable();
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

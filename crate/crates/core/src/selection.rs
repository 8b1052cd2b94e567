//! One-shot exemplar selection.
//!
//! CRE: cluster the pool's sentence embeddings with k-means (k = number of
//! exemplars) and take, from each cluster, the member nearest to its
//! centroid. RSE: uniform draw without replacement.
//!
//! Both strategies first sort the pool by sample id, so the selection does
//! not depend on ingestion order.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::embedding::{squared_distance, Embedding};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const MAX_ITERATIONS: usize = 300;
pub const CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Cre,
    Rse,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Cre => "CRE",
            Strategy::Rse => "RSE",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cre" => Ok(Strategy::Cre),
            "rse" => Ok(Strategy::Rse),
            _ => Err(Error::Config(format!("unknown strategy {s:?} (expected cre or rse)"))),
        }
    }
}

/// The selected exemplars. `examples[i]` is assigned to base model i+1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSet {
    pub strategy: Strategy,
    pub k: usize,
    pub seed: u64,
    pub examples: Vec<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_assignments: Option<BTreeMap<String, usize>>,
}

impl ExampleSet {
    pub fn pairs(&self) -> Vec<(&str, u8)> {
        self.examples.iter().map(|s| (s.text.as_str(), s.label)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Vec<Embedding>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
}

impl KMeansResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

fn check_dims(vectors: &[Embedding]) -> Result<usize> {
    let dim = vectors.first().map_or(0, Embedding::dim);
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.dim(),
            });
        }
    }
    Ok(dim)
}

/// Index drawn with probability proportional to `weights`; uniform when all
/// weights are zero.
fn weighted_index(rng: &mut SplitMix64, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.below_usize(weights.len());
    }
    let target = rng.next_f64() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    // Rounding left target at or past the final sum.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Greedy k-means++: each new centre is the best of `2 + ln k` D²-weighted
/// candidates by resulting potential.
fn kmeans_pp(points: &[&[f64]], k: usize, rng: &mut SplitMix64) -> Vec<Vec<f64>> {
    let trials = 2 + (k as f64).ln().floor() as usize;
    let first = rng.below_usize(points.len());
    let mut centers = vec![points[first].to_vec()];
    let mut closest: Vec<f64> = points.iter().map(|p| squared_distance(p, points[first])).collect();
    while centers.len() < k {
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let cand = weighted_index(rng, &closest);
            let next: Vec<f64> = points
                .iter()
                .zip(&closest)
                .map(|(p, &d)| d.min(squared_distance(p, points[cand])))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|(b, _, _)| potential < *b) {
                best = Some((potential, cand, next));
            }
        }
        let (_, idx, next) = best.expect("at least two trials");
        centers.push(points[idx].to_vec());
        closest = next;
    }
    centers
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm with greedy k-means++ seeding and Euclidean distance.
///
/// Stops when no centroid moves more than [`CONVERGENCE_TOL`] or after
/// [`MAX_ITERATIONS`]. A cluster left empty by the assignment step receives
/// the point farthest from its current centroid (taken from a cluster with at
/// least two members), so every returned cluster is non-empty.
pub fn kmeans(vectors: &[Embedding], k: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if vectors.len() < k {
        return Err(Error::InsufficientSamples {
            required: k,
            available: vectors.len(),
        });
    }
    let dim = check_dims(vectors)?;
    let points: Vec<&[f64]> = vectors.iter().map(|v| v.values.as_slice()).collect();
    let mut rng = SplitMix64::new(seed);
    let mut centroids = kmeans_pp(&points, k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut dists = vec![0.0f64; points.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            assignments[i] = c;
            dists[i] = d;
        }
        trace.push(dists.iter().sum());
        repair_empty_clusters(&mut assignments, &mut dists, &points, &mut centroids);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p.iter()).for_each(|(s, x)| *s += x);
        }
        let mut shift = 0.0f64;
        for ((centroid, sum), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            let updated: Vec<f64> = sum.into_iter().map(|s| s / n as f64).collect();
            shift = shift.max(squared_distance(centroid, &updated).sqrt());
            *centroid = updated;
        }
        if shift < CONVERGENCE_TOL {
            break;
        }
    }

    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum();
    debug_assert!(trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12));
    Ok(KMeansResult {
        centroids: centroids.into_iter().map(Embedding::new).collect(),
        assignments,
        inertia,
        iterations,
        inertia_trace: trace,
    })
}

fn repair_empty_clusters(assignments: &mut [usize], dists: &mut [f64], points: &[&[f64]], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for i in 0..assignments.len() {
            if counts[assignments[i]] < 2 {
                continue;
            }
            if donor.is_none_or(|d| dists[i] > dists[d]) {
                donor = Some(i);
            }
        }
        let i = donor.expect("len(points) >= k guarantees a cluster with two members");
        counts[assignments[i]] -= 1;
        assignments[i] = empty;
        counts[empty] = 1;
        dists[i] = 0.0;
        centroids[empty] = points[i].to_vec();
    }
}

/// Positions of `pool` sorted by sample id.
fn canonical_order(pool: &[Sample]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| pool[a].id.cmp(&pool[b].id));
    order
}

/// Centroid-based representative examples.
pub fn select_cre(pool: &[Sample], vectors: &[Embedding], k: usize, seed: u64) -> Result<ExampleSet> {
    if pool.len() != vectors.len() {
        return Err(Error::LengthMismatch {
            left: pool.len(),
            right: vectors.len(),
        });
    }
    let order = canonical_order(pool);
    let ordered: Vec<Embedding> = order.iter().map(|&i| vectors[i].clone()).collect();
    let km = kmeans(&ordered, k, seed)?;

    // Canonical order is ascending id, so the first strict minimum wins ties.
    let mut best: Vec<Option<(f64, usize)>> = vec![None; k];
    for (pos, (&cluster, v)) in km.assignments.iter().zip(&ordered).enumerate() {
        let d = v.squared_distance(&km.centroids[cluster]);
        if best[cluster].is_none_or(|(bd, _)| d < bd) {
            best[cluster] = Some((d, pos));
        }
    }
    let examples = best
        .into_iter()
        .map(|b| pool[order[b.expect("clusters are non-empty").1]].clone())
        .collect();
    let cluster_assignments = order
        .iter()
        .zip(&km.assignments)
        .map(|(&i, &c)| (pool[i].id.clone(), c))
        .collect();
    Ok(ExampleSet {
        strategy: Strategy::Cre,
        k,
        seed,
        examples,
        cluster_assignments: Some(cluster_assignments),
    })
}

/// Randomly sampled examples, in draw order.
pub fn select_rse(pool: &[Sample], k: usize, seed: u64) -> Result<ExampleSet> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if pool.len() < k {
        return Err(Error::InsufficientSamples {
            required: k,
            available: pool.len(),
        });
    }
    let order = canonical_order(pool);
    let drawn = SplitMix64::new(seed).sample_indices(pool.len(), k);
    Ok(ExampleSet {
        strategy: Strategy::Rse,
        k,
        seed,
        examples: drawn.into_iter().map(|j| pool[order[j]].clone()).collect(),
        cluster_assignments: None,
    })
}

/// Exemplar label counts over 1..=5, zeros included.
pub fn label_histogram(set: &ExampleSet) -> BTreeMap<u8, usize> {
    let mut h: BTreeMap<u8, usize> = (1..=5).map(|l| (l, 0)).collect();
    for s in &set.examples {
        *h.entry(s.label).or_default() += 1;
    }
    h
}

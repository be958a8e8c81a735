//! Decision accuracy metrics and speedup histograms.

use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Whether the optimization should be applied for a labeled speedup.
/// A speedup of exactly 1 counts as "do not optimize".
pub fn oracle_decision(speedup: f64) -> bool {
    speedup > 1.0
}

fn check_lengths(pred: &[bool], speedups: &[f64]) -> Result<()> {
    if pred.len() != speedups.len() {
        return Err(Error::InvalidInput(format!("{} decisions but {} speedups", pred.len(), speedups.len())));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("no instances to score".into()));
    }
    Ok(())
}

pub fn count_accuracy(pred: &[bool], speedups: &[f64]) -> Result<f64> {
    check_lengths(pred, speedups)?;
    let hits = pred.iter().zip(speedups).filter(|(p, s)| **p == oracle_decision(**s)).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Score of one decision: achieved speedup over the best achievable, where
/// not optimizing achieves 1.
pub fn decision_score(optimize: bool, speedup: f64) -> f64 {
    let chosen = if optimize { speedup } else { 1.0 };
    let best = speedup.max(1.0);
    (chosen / best).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyWeighted {
    pub accuracy: f64,
    pub min_score: f64,
    pub max_score: f64,
}

pub fn penalty_weighted_accuracy(pred: &[bool], speedups: &[f64]) -> Result<PenaltyWeighted> {
    check_lengths(pred, speedups)?;
    if let Some(s) = speedups.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidInput(format!("speedup {s} is not a finite non-negative number")));
    }
    let scores: Vec<f64> = pred.iter().zip(speedups).map(|(p, s)| decision_score(*p, *s)).collect();
    // Summing sorted scores keeps the result independent of input order.
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(PenaltyWeighted {
        accuracy: sorted.iter().sum::<f64>() / scores.len() as f64,
        min_score: sorted[0],
        max_score: sorted[sorted.len() - 1],
    })
}

/// Counts indexed `[oracle][decision]`, with `true` = optimize at index 1.
pub type Confusion = [[usize; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub count_accuracy: f64,
    pub penalty_weighted_accuracy: f64,
    pub min_score: f64,
    pub max_score: f64,
    pub n: usize,
    pub confusion: Confusion,
}

impl EvalReport {
    pub fn new(pred: &[bool], speedups: &[f64]) -> Result<Self> {
        let count = count_accuracy(pred, speedups)?;
        let pw = penalty_weighted_accuracy(pred, speedups)?;
        let mut confusion = [[0; 2]; 2];
        for (p, s) in pred.iter().zip(speedups) {
            confusion[usize::from(oracle_decision(*s))][usize::from(*p)] += 1;
        }
        Ok(EvalReport {
            count_accuracy: count,
            penalty_weighted_accuracy: pw.accuracy,
            min_score: pw.min_score,
            max_score: pw.max_score,
            n: pred.len(),
            confusion,
        })
    }

    /// Machine-readable `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let c = &self.confusion;
        let mut s = String::new();
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "count_accuracy={}", self.count_accuracy);
        let _ = writeln!(s, "penalty_weighted_accuracy={}", self.penalty_weighted_accuracy);
        let _ = writeln!(s, "min_score={}", self.min_score);
        let _ = writeln!(s, "max_score={}", self.max_score);
        let _ = writeln!(s, "oracle_skip_predicted_skip={}", c[0][0]);
        let _ = writeln!(s, "oracle_skip_predicted_optimize={}", c[0][1]);
        let _ = writeln!(s, "oracle_optimize_predicted_skip={}", c[1][0]);
        let _ = writeln!(s, "oracle_optimize_predicted_optimize={}", c[1][1]);
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.confusion;
        writeln!(f, "instances:                  {}", self.n)?;
        writeln!(f, "count-based accuracy:       {:.4}", self.count_accuracy)?;
        writeln!(f, "penalty-weighted accuracy:  {:.4}", self.penalty_weighted_accuracy)?;
        writeln!(f, "score range:                [{:.4}, {:.4}]", self.min_score, self.max_score)?;
        writeln!(f, "confusion (rows: oracle, cols: decision)")?;
        writeln!(f, "                 skip  optimize")?;
        writeln!(f, "  skip      {:>9} {:>9}", c[0][0], c[0][1])?;
        write!(f, "  optimize  {:>9} {:>9}", c[1][0], c[1][1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bucket {
    /// `-inf` for the underflow bucket.
    pub low: f64,
    /// `+inf` for the overflow bucket.
    pub high: f64,
    pub count: usize,
}

/// Powers of two from 1/32 to 32.
pub fn default_edges() -> Vec<f64> {
    (-5..=5).map(|k| 2f64.powi(k)).collect()
}

/// Counts per half-open bucket `[e_k, e_{k+1})`, plus underflow and
/// overflow buckets at either end.
pub fn speedup_histogram(speedups: &[f64], edges: &[f64]) -> Result<Vec<Bucket>> {
    if edges.iter().any(|e| e.is_nan()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("histogram edges must be strictly increasing".into()));
    }
    let mut bounds = Vec::with_capacity(edges.len() + 2);
    bounds.push(f64::NEG_INFINITY);
    bounds.extend_from_slice(edges);
    bounds.push(f64::INFINITY);
    let mut buckets: Vec<Bucket> = bounds.windows(2).map(|w| Bucket { low: w[0], high: w[1], count: 0 }).collect();
    for &s in speedups {
        // Number of edges <= s is the bucket index.
        let k = edges.partition_point(|e| *e <= s);
        buckets[k].count += 1;
    }
    Ok(buckets)
}

pub fn histogram_csv(buckets: &[Bucket]) -> String {
    let mut s = String::from("bucket_low,bucket_high,count\n");
    for b in buckets {
        let _ = writeln!(s, "{},{},{}", b.low, b.high, b.count);
    }
    s
}

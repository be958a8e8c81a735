//! Exhaustive greedy CART regression tree, written directly from the
//! textbook definition: at every node try every feature and every midpoint
//! between consecutive distinct values, partition the rows explicitly and
//! score the split by the children's summed squared error around their own
//! means. Ties go to the lowest feature, then the lowest threshold; costs
//! within a relative 1e-9 count as tied.

use lmtune::dataset::{build_dataset, SamplingSpec};
use lmtune::forest;
use lmtune::{DeviceDescriptor, NUM_FEATURES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub enum Tree {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: Box<Tree>, right: Box<Tree> },
}

impl Tree {
    pub fn predict(&self, x: &[f64; NUM_FEATURES]) -> f64 {
        match self {
            Tree::Leaf(v) => *v,
            Tree::Split { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

fn mean(y: &[f64], rows: &[usize]) -> f64 {
    let mut sorted = rows.to_vec();
    sorted.sort_unstable();
    sorted.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64
}

fn sse(y: &[f64], rows: &[usize]) -> f64 {
    let mu = mean(y, rows);
    rows.iter().map(|&i| (y[i] - mu).powi(2)).sum()
}

pub fn fit(x: &[[f64; NUM_FEATURES]], y: &[f64]) -> Tree {
    let rows: Vec<usize> = (0..x.len()).collect();
    grow(x, y, &rows)
}

#[allow(clippy::needless_range_loop)]
fn grow(x: &[[f64; NUM_FEATURES]], y: &[f64], rows: &[usize]) -> Tree {
    let parent = sse(y, rows);
    let tol = 1e-9 * (1.0 + parent);
    let mut best: Option<(f64, usize, f64)> = None;
    if rows.len() >= 2 {
        for f in 0..NUM_FEATURES {
            let mut values: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for w in values.windows(2) {
                let mut t = (w[0] + w[1]) / 2.0;
                if t >= w[1] {
                    t = w[0];
                }
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
                let cost = sse(y, &l) + sse(y, &r);
                if best.is_none_or(|(b, _, _)| cost < b - tol) {
                    best = Some((cost, f, t));
                }
            }
        }
    }
    match best {
        Some((cost, feature, threshold)) if parent - cost > tol => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][feature] <= threshold);
            Tree::Split {
                feature,
                threshold,
                left: Box::new(grow(x, y, &l)),
                right: Box::new(grow(x, y, &r)),
            }
        }
        _ => Tree::Leaf(mean(y, rows)),
    }
}

pub type Rows = (Vec<[f64; NUM_FEATURES]>, Vec<f64>);

/// Five small datasets: real labeled rows, an integer grid with ties,
/// heavy duplicates, continuous noise, and a constant target.
pub fn datasets() -> Vec<Rows> {
    let mut out = Vec::new();
    let spec = SamplingSpec { num_tuples: 2, max_instances: 200, seed: 5, ..Default::default() };
    let ds = build_dataset(&spec, &DeviceDescriptor::default()).unwrap();
    out.push(ds.rows.iter().map(|r| (r.features.to_array(), forest::log_target(r.speedup))).unzip());

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x: Vec<[f64; NUM_FEATURES]> = (0..150).map(|_| std::array::from_fn(|_| f64::from(rng.gen_range(0..6u8)))).collect();
    let y = x.iter().map(|r| r[1] - 0.5 * r[4] + if r[9] > 2.0 { 1.0 } else { 0.0 }).collect();
    out.push((x, y));

    let x: Vec<[f64; NUM_FEATURES]> = (0..120).map(|_| std::array::from_fn(|_| f64::from(rng.gen_range(0..2u8)))).collect();
    let y = (0..120).map(|_| f64::from(rng.gen_range(-3..4i8))).collect();
    out.push((x, y));

    let x: Vec<[f64; NUM_FEATURES]> = (0..200).map(|_| std::array::from_fn(|_| rng.gen_range(-1e3..1e3))).collect();
    let y = x.iter().map(|r| (r[0] / 300.0).sin() + rng.gen_range(-0.1..0.1)).collect();
    out.push((x, y));

    let x: Vec<[f64; NUM_FEATURES]> = (0..60).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0))).collect();
    out.push((x, vec![0.25; 60]));
    out
}

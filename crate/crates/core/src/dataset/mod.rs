//! Training-data generation: compile-time tuple sampling, pattern and loop
//! expansion, launch sweeps, and cost-model labeling.

mod io;
pub mod sampling;

pub use io::{instance_key, parse_instance, read_rows, write_rows, write_skip_log, CSV_HEADER};
pub use sampling::{CompileTuple, Distribution, ParamRange, SamplingSpec};

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::access::{extract_features, FeatureVector};
use crate::cost::label_speedup;
use crate::device::DeviceDescriptor;
use crate::error::Result;
use crate::kernel_model::{HomeAccessPattern, KernelInstance, LaunchConfig, LaunchLimits, TemplateParams};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledInstance {
    pub instance: KernelInstance,
    pub features: FeatureVector,
    pub speedup: f64,
    pub beneficial: bool,
}

impl LabeledInstance {
    pub fn new(instance: KernelInstance, features: FeatureVector, speedup: f64) -> Self {
        LabeledInstance { instance, features, speedup, beneficial: speedup > 1.0 }
    }
}

/// One instance that could not be labeled, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub instance: KernelInstance,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub rows: Vec<LabeledInstance>,
    pub skipped: Vec<Skipped>,
    /// Distinct kernels (template parameter sets) after deduplication.
    pub kernels: usize,
}

/// SplitMix64 finalizer, for deriving independent stream seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// All 7 patterns × 4 N values × 4 M values for one compile-time tuple.
pub fn expand_patterns(tuple: &CompileTuple, spec: &SamplingSpec) -> Vec<TemplateParams> {
    let mut out = Vec::with_capacity(HomeAccessPattern::ALL.len() * 16);
    for pattern in HomeAccessPattern::ALL {
        let ns = if pattern.long_i_loop() { &spec.long_trip_counts } else { &spec.short_trip_counts };
        let ms = if pattern.long_j_loop() { &spec.long_trip_counts } else { &spec.short_trip_counts };
        for &n in ns {
            for &m in ms {
                out.push(TemplateParams {
                    in_h: spec.in_h,
                    in_w: spec.in_w,
                    out_h: spec.out_h,
                    out_w: spec.out_w,
                    pattern,
                    n,
                    m,
                    stencil: tuple.stencil,
                    num_comp_ilb: tuple.comp_ilb,
                    num_comp_ep: tuple.comp_ep,
                    num_coal_ilb: tuple.coal_ilb,
                    num_coal_ep: tuple.coal_ep,
                    num_uncoal_ilb: tuple.uncoal_ilb,
                    num_uncoal_ep: tuple.uncoal_ep,
                });
            }
        }
    }
    out
}

fn powers_of_two_dividing(v: u32) -> Vec<u32> {
    (0..32).map(|k| 1u32 << k).take_while(|&p| p <= v).filter(|p| v.is_multiple_of(*p)).collect()
}

/// Every power-of-two grid and workgroup geometry the limits allow for
/// `params`' output array, ordered by `(grid_y, grid_x, wg_y, wg_x)`.
pub fn enumerate_launch_configs(params: &TemplateParams, limits: &LaunchLimits) -> Vec<LaunchConfig> {
    let mut out = Vec::new();
    let gxs = powers_of_two_dividing(params.out_w);
    let gys = powers_of_two_dividing(params.out_h);
    for &gy in &gys {
        for &gx in &gxs {
            if u64::from(gx) * u64::from(gy) < limits.min_grid_size {
                continue;
            }
            for wy in gys.iter().copied().take_while(|&w| w <= gy) {
                for wx in gxs.iter().copied().take_while(|&w| w <= gx) {
                    if u64::from(wx) * u64::from(wy) <= limits.max_wg_size {
                        out.push(LaunchConfig::new(gx, gy, wx, wy));
                    }
                }
            }
        }
    }
    out
}

/// Distinct kernels of the spec, in tuple-major order.
pub fn sample_kernels(spec: &SamplingSpec) -> Vec<TemplateParams> {
    let mut seen = HashSet::new();
    sampling::sample_compile_tuples(spec)
        .iter()
        .flat_map(|t| expand_patterns(t, spec))
        .filter(|p| seen.insert(*p))
        .collect()
}

/// Kernel instances the spec selects: every launch configuration of every
/// kernel when that fits in `max_instances`, otherwise a seeded subsample
/// with an equal share per pattern and an equal share per kernel within a
/// pattern.
pub fn select_instances(spec: &SamplingSpec, kernels: &[TemplateParams], exec: Execution) -> Vec<KernelInstance> {
    // The sweep depends only on the output geometry, so kernels share lists.
    let mut sweeps: HashMap<(u32, u32), Vec<LaunchConfig>> = HashMap::new();
    for k in kernels {
        sweeps
            .entry((k.out_h, k.out_w))
            .or_insert_with(|| enumerate_launch_configs(k, &spec.limits));
    }
    let configs: Vec<&[LaunchConfig]> = kernels.iter().map(|k| sweeps[&(k.out_h, k.out_w)].as_slice()).collect();
    let total: usize = configs.iter().map(|c| c.len()).sum();
    let quotas: Vec<usize> = if total <= spec.max_instances {
        configs.iter().map(|c| c.len()).collect()
    } else {
        kernel_quotas(spec, kernels, &configs)
    };

    let picked: Vec<Vec<KernelInstance>> = par::map_range(exec, kernels.len(), |k| {
        let all = configs[k];
        let take = quotas[k].min(all.len());
        let idx: Vec<usize> = if take < all.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 0x1000 + k as u64));
            let mut idx = rand::seq::index::sample(&mut rng, all.len(), take).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..all.len()).collect()
        };
        idx.into_iter().map(|i| KernelInstance::new(kernels[k], all[i])).collect()
    });
    picked.into_iter().flatten().collect()
}

fn kernel_quotas(spec: &SamplingSpec, kernels: &[TemplateParams], configs: &[&[LaunchConfig]]) -> Vec<usize> {
    let mut quotas = vec![0usize; kernels.len()];
    let present: Vec<HomeAccessPattern> =
        HomeAccessPattern::ALL.into_iter().filter(|p| kernels.iter().any(|k| k.pattern == *p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 0x51));
    // Capacity a pattern leaves unused (too few configurations) flows to
    // the patterns after it.
    for (pi, pattern) in present.iter().enumerate() {
        let remaining = spec.max_instances - quotas.iter().sum::<usize>();
        let mut left = remaining.div_ceil(present.len() - pi);
        let mut members: Vec<usize> = (0..kernels.len()).filter(|&k| kernels[k].pattern == *pattern).collect();
        members.shuffle(&mut rng);
        // Water-filling: each round gives every unsaturated kernel an equal
        // share of what is left.
        loop {
            let open: Vec<usize> = members.iter().copied().filter(|&k| quotas[k] < configs[k].len()).collect();
            if left == 0 || open.is_empty() {
                break;
            }
            let share = (left / open.len()).max(1);
            for &k in &open {
                if left == 0 {
                    break;
                }
                let add = share.min(configs[k].len() - quotas[k]).min(left);
                quotas[k] += add;
                left -= add;
            }
        }
    }
    quotas
}

/// Labels one instance.
pub fn label_instance(instance: &KernelInstance, dev: &DeviceDescriptor) -> Result<LabeledInstance> {
    let features = extract_features(instance, dev)?;
    Ok(LabeledInstance::new(*instance, features, label_speedup(instance, dev)))
}

pub fn build_dataset(spec: &SamplingSpec, dev: &DeviceDescriptor) -> Result<Dataset> {
    build_dataset_with(spec, dev, Execution::default())
}

pub fn build_dataset_with(spec: &SamplingSpec, dev: &DeviceDescriptor, exec: Execution) -> Result<Dataset> {
    spec.validate()?;
    dev.validate().map_err(crate::Error::Config)?;
    let kernels = sample_kernels(spec);
    let instances = select_instances(spec, &kernels, exec);
    let labeled = par::map(exec, &instances, |inst| label_instance(inst, dev));
    let mut ds = Dataset { kernels: kernels.len(), ..Default::default() };
    for (inst, res) in instances.iter().zip(labeled) {
        match res {
            Ok(row) => ds.rows.push(row),
            Err(e) => ds.skipped.push(Skipped { instance: *inst, reason: e.to_string() }),
        }
    }
    Ok(ds)
}

/// Seeded random split: `round(fraction · n)` rows for training (at least
/// one, at most `n - 1` when `n ≥ 2`), the rest held out. Both halves keep
/// the original row order.
pub fn split_train_test(rows: &[LabeledInstance], fraction: f64, seed: u64) -> (Vec<LabeledInstance>, Vec<LabeledInstance>) {
    let n = rows.len();
    let k = ((fraction * n as f64).round() as usize).clamp(n.min(1), n.saturating_sub(1).max(n.min(1)));
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, SPLIT_STREAM));
    let mut chosen = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, k) {
        chosen[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = rows.iter().zip(&chosen).partition(|(_, c)| **c);
    (train.into_iter().map(|(r, _)| *r).collect(), test.into_iter().map(|(r, _)| *r).collect())
}

const SPLIT_STREAM: u64 = 0x5EED_5917;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_model::validate_instance;

    #[test]
    fn split_sizes() {
        let spec = SamplingSpec { num_tuples: 1, max_instances: 200, ..Default::default() };
        let ds = build_dataset(&spec, &DeviceDescriptor::default()).unwrap();
        let n = ds.rows.len();
        let (tr, te) = split_train_test(&ds.rows, 0.10, 4);
        assert_eq!(tr.len(), (n as f64 * 0.1).round() as usize);
        assert_eq!(tr.len() + te.len(), n);
        assert_eq!(split_train_test(&ds.rows, 0.10, 4), (tr, te));
        let (tr, te) = split_train_test(&ds.rows[..2], 0.01, 4);
        assert_eq!((tr.len(), te.len()), (1, 1));
    }

    #[test]
    fn expansion_counts_and_value_sets() {
        let spec = SamplingSpec { num_tuples: 1, ..Default::default() };
        let tuples = sampling::sample_compile_tuples(&spec);
        let kernels = expand_patterns(&tuples[0], &spec);
        assert_eq!(kernels.len(), 112);
        for k in &kernels {
            let long = [8, 16, 32, 64];
            let short = [1, 2, 4, 8];
            let (ns, ms) = match k.pattern {
                HomeAccessPattern::XYReuse => (long, long),
                HomeAccessPattern::XReuseRow | HomeAccessPattern::YReuseRow => (long, short),
                HomeAccessPattern::XReuseCol | HomeAccessPattern::YReuseCol => (short, long),
                _ => (short, short),
            };
            assert!(ns.contains(&k.n) && ms.contains(&k.m), "{k:?}");
            assert_eq!((k.in_h, k.in_w), (2048, 2048));
        }
        let spec = SamplingSpec::default();
        let all: usize = sampling::sample_compile_tuples(&spec).iter().map(|t| expand_patterns(t, &spec).len()).sum();
        assert_eq!(all, 11_200);
    }

    #[test]
    fn launch_sweep_bounds() {
        let p = TemplateParams::default();
        let limits = LaunchLimits::default();
        let configs = enumerate_launch_configs(&p, &limits);
        assert!(!configs.iter().any(|c| c.grid_x == 16 && c.grid_y == 16));
        assert!(configs.iter().any(|c| c.wg_x == 32 && c.wg_y == 32));
        assert!(!configs.iter().any(|c| c.wg_x == 64 && c.wg_y == 32));
        for c in &configs {
            validate_instance(&KernelInstance::new(p, *c)).unwrap();
        }
        let set: HashSet<_> = configs.iter().collect();
        assert_eq!(set.len(), configs.len());
    }

    #[test]
    fn selection_respects_cap_and_strata() {
        let spec = SamplingSpec { num_tuples: 3, max_instances: 700, ..Default::default() };
        let kernels = sample_kernels(&spec);
        let picked = select_instances(&spec, &kernels, Execution::Sequential);
        assert_eq!(picked.len(), 700);
        for pattern in HomeAccessPattern::ALL {
            let n = picked.iter().filter(|i| i.params.pattern == pattern).count();
            assert_eq!(n, 100, "{pattern}");
        }
        let unique: HashSet<_> = picked.iter().collect();
        assert_eq!(unique.len(), picked.len());
        let again = select_instances(&spec, &kernels, Execution::Parallel);
        assert_eq!(picked, again);
    }

    #[test]
    fn small_dataset_is_labeled_consistently() {
        let spec = SamplingSpec { num_tuples: 2, max_instances: 300, seed: 5, ..Default::default() };
        let dev = DeviceDescriptor::default();
        let ds = build_dataset(&spec, &dev).unwrap();
        assert!(ds.skipped.is_empty());
        assert_eq!(ds.rows.len(), 300);
        for r in &ds.rows {
            assert_eq!(r.beneficial, r.speedup > 1.0);
            r.features.check(32).unwrap();
        }
    }

    #[test]
    fn seed_mixing_separates_streams() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_ne!(mix_seed(1, 0), mix_seed(2, 0));
        assert_eq!(mix_seed(9, 3), mix_seed(9, 3));
    }
}

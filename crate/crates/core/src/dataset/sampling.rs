//! Compile-time parameter sampling.
//!
//! Each integer parameter has an inclusive range and a target average. The
//! default [`Distribution::MeanMatched`] draws from the maximum-entropy
//! distribution on the range with that average, `p(k) ∝ exp(λ·k)`; with
//! [`Distribution::Uniform`] the average is ignored.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel_model::{LaunchLimits, StencilPattern, StencilShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Distribution {
    #[default]
    MeanMatched,
    Uniform,
}

impl Distribution {
    pub fn name(self) -> &'static str {
        match self {
            Distribution::MeanMatched => "mean-matched",
            Distribution::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean-matched" => Ok(Distribution::MeanMatched),
            "uniform" => Ok(Distribution::Uniform),
            other => Err(Error::Config(format!("unknown sampling distribution `{other}`"))),
        }
    }
}

/// Inclusive integer range with a target average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRange {
    pub lo: u32,
    pub hi: u32,
    pub mean: f64,
}

impl ParamRange {
    pub const fn new(lo: u32, hi: u32, mean: f64) -> Self {
        ParamRange { lo, hi, mean }
    }

    fn uniform(lo: u32, hi: u32) -> Self {
        ParamRange { lo, hi, mean: (f64::from(lo) + f64::from(hi)) / 2.0 }
    }

    /// Probabilities of `lo..=hi` under the given distribution.
    pub fn weights(&self, dist: Distribution) -> Vec<f64> {
        let n = (self.hi - self.lo + 1) as usize;
        let lambda = match dist {
            Distribution::Uniform => 0.0,
            Distribution::MeanMatched => self.tilt(),
        };
        let raw: Vec<f64> = (0..n).map(|k| (lambda * k as f64).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    fn mean_for(&self, lambda: f64) -> f64 {
        let n = self.hi - self.lo + 1;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..n {
            let w = (lambda * f64::from(k)).exp();
            num += w * f64::from(k);
            den += w;
        }
        f64::from(self.lo) + num / den
    }

    /// Exponent `λ` whose tilted distribution has the target mean, by
    /// bisection (the mean is increasing in `λ`).
    fn tilt(&self) -> f64 {
        if self.hi == self.lo {
            return 0.0;
        }
        let (mut a, mut b) = (-50.0f64, 50.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if self.mean_for(mid) < self.mean {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    pub fn expected(&self, dist: Distribution) -> f64 {
        self.weights(dist).iter().enumerate().map(|(k, w)| w * (f64::from(self.lo) + k as f64)).sum()
    }
}

/// How compile-time tuples, trip counts and launch sweeps are drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    pub num_tuples: usize,
    pub distribution: Distribution,
    pub radius: ParamRange,
    pub comp_ilb: ParamRange,
    pub comp_ep: ParamRange,
    pub coal_ilb: ParamRange,
    pub coal_ep: ParamRange,
    pub uncoal_ilb: ParamRange,
    pub uncoal_ep: ParamRange,
    /// Trip counts for loops that sweep a long edge of a reuse tile.
    pub long_trip_counts: Vec<u32>,
    pub short_trip_counts: Vec<u32>,
    pub in_h: u32,
    pub in_w: u32,
    pub out_h: u32,
    pub out_w: u32,
    pub limits: LaunchLimits,
    pub max_instances: usize,
    pub seed: u64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec {
            num_tuples: 100,
            distribution: Distribution::MeanMatched,
            radius: ParamRange::uniform(0, 2),
            comp_ilb: ParamRange::new(5, 44, 19.0),
            comp_ep: ParamRange::new(1, 48, 23.0),
            coal_ilb: ParamRange::new(0, 13, 3.0),
            coal_ep: ParamRange::new(0, 13, 5.0),
            uncoal_ilb: ParamRange::new(0, 4, 0.8),
            uncoal_ep: ParamRange::new(0, 4, 0.8),
            long_trip_counts: vec![8, 16, 32, 64],
            short_trip_counts: vec![1, 2, 4, 8],
            in_h: 2048,
            in_w: 2048,
            out_h: 2048,
            out_w: 2048,
            limits: LaunchLimits::default(),
            max_instances: 50_000,
            seed: 1,
        }
    }
}

impl SamplingSpec {
    pub fn ranges(&self) -> [(&'static str, &ParamRange); 7] {
        [
            ("radius", &self.radius),
            ("comp_ilb", &self.comp_ilb),
            ("comp_ep", &self.comp_ep),
            ("coal_ilb", &self.coal_ilb),
            ("coal_ep", &self.coal_ep),
            ("uncoal_ilb", &self.uncoal_ilb),
            ("uncoal_ep", &self.uncoal_ep),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in self.ranges() {
            if r.lo > r.hi {
                return Err(Error::Config(format!("sampling.{name}: empty range {}..{}", r.lo, r.hi)));
            }
            if self.distribution == Distribution::MeanMatched
                && r.lo < r.hi
                && !(f64::from(r.lo) < r.mean && r.mean < f64::from(r.hi))
            {
                return Err(Error::Config(format!(
                    "sampling.{name}: mean {} must lie strictly inside {}..{}",
                    r.mean, r.lo, r.hi
                )));
            }
        }
        if self.num_tuples == 0 {
            return Err(Error::Config("sampling.num_tuples must be at least 1".into()));
        }
        if self.max_instances == 0 {
            return Err(Error::Config("sampling.max_instances must be at least 1".into()));
        }
        if self.long_trip_counts.is_empty() || self.short_trip_counts.is_empty() {
            return Err(Error::Config("trip-count value sets must be non-empty".into()));
        }
        if self.long_trip_counts.iter().chain(&self.short_trip_counts).any(|&v| v == 0) {
            return Err(Error::Config("trip counts must be at least 1".into()));
        }
        for (name, v) in [("in_h", self.in_h), ("in_w", self.in_w), ("out_h", self.out_h), ("out_w", self.out_w)] {
            if v == 0 {
                return Err(Error::Config(format!("sampling.{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Every compile-time knob except the home access pattern and trip counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CompileTuple {
    pub stencil: StencilPattern,
    pub comp_ilb: u32,
    pub comp_ep: u32,
    pub coal_ilb: u32,
    pub coal_ep: u32,
    pub uncoal_ilb: u32,
    pub uncoal_ep: u32,
}

struct Sampler {
    lo: u32,
    cdf: Vec<f64>,
}

impl Sampler {
    fn new(range: &ParamRange, dist: Distribution) -> Self {
        let mut acc = 0.0;
        let cdf = range
            .weights(dist)
            .into_iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Sampler { lo: range.lo, cdf }
    }

    fn draw(&self, rng: &mut impl Rng) -> u32 {
        let u: f64 = rng.gen();
        let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.lo + k as u32
    }
}

/// `num_tuples` independent draws, reproducible from `seed`.
pub fn sample_compile_tuples(spec: &SamplingSpec) -> Vec<CompileTuple> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.distribution;
    let radius = Sampler::new(&spec.radius, d);
    let comp_ilb = Sampler::new(&spec.comp_ilb, d);
    let comp_ep = Sampler::new(&spec.comp_ep, d);
    let coal_ilb = Sampler::new(&spec.coal_ilb, d);
    let coal_ep = Sampler::new(&spec.coal_ep, d);
    let uncoal_ilb = Sampler::new(&spec.uncoal_ilb, d);
    let uncoal_ep = Sampler::new(&spec.uncoal_ep, d);
    (0..spec.num_tuples)
        .map(|_| {
            let shape = StencilShape::ALL[rng.gen_range(0..StencilShape::ALL.len())];
            CompileTuple {
                stencil: StencilPattern::new(shape, radius.draw(&mut rng)),
                comp_ilb: comp_ilb.draw(&mut rng),
                comp_ep: comp_ep.draw(&mut rng),
                coal_ilb: coal_ilb.draw(&mut rng),
                coal_ep: coal_ep.draw(&mut rng),
                uncoal_ilb: uncoal_ilb.draw(&mut rng),
                uncoal_ep: uncoal_ep.draw(&mut rng),
            }
        })
        .collect()
}

//! Run configuration: a flat `key = value` file with `device.`, `sampling.`,
//! `forest.` and `paths.` sections, plus `LMT_*` environment overrides.
//!
//! ```text
//! # comments and blank lines are ignored
//! train_fraction = 0.1
//! device.warp_size = 32
//! sampling.comp_ilb_mean = 19
//! sampling.long_trip_counts = 8,16,32,64
//! forest.max_depth = none
//! paths.dataset = out/dataset.csv
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::{Distribution, ParamRange, SamplingSpec};
use crate::device::DeviceDescriptor;
use crate::error::{Error, Result};
use crate::forest::Hyperparams;

pub const ENV_PREFIX: &str = "LMT_";

/// Output and input locations, relative to the working directory unless absolute.
#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub dataset: PathBuf,
    pub skip_log: PathBuf,
    pub model: PathBuf,
    pub report: PathBuf,
    /// Report as `key=value` lines.
    pub metrics: PathBuf,
    pub histogram: PathBuf,
    pub kernels: PathBuf,
}

impl Paths {
    /// Default file names under `dir`.
    pub fn under(dir: &Path) -> Self {
        Paths {
            dataset: dir.join("dataset.csv"),
            skip_log: dir.join("skipped.tsv"),
            model: dir.join("model.txt"),
            report: dir.join("report.txt"),
            metrics: dir.join("metrics.kv"),
            histogram: dir.join("histogram.csv"),
            kernels: dir.join("kernels"),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Paths::under(Path::new("out"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub device: DeviceDescriptor,
    pub sampling: SamplingSpec,
    pub train_fraction: f64,
    pub hyperparams: Hyperparams,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            device: DeviceDescriptor::default(),
            sampling: SamplingSpec::default(),
            train_fraction: 0.10,
            hyperparams: Hyperparams::default(),
            paths: Paths::default(),
        }
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn list(key: &str, v: &str) -> Result<Vec<u32>> {
    v.split(',').map(|s| value(key, s.trim())).collect()
}

fn range_field(r: &mut ParamRange, field: &str, key: &str, v: &str) -> Result<bool> {
    match field {
        "min" => r.lo = value(key, v)?,
        "max" => r.hi = value(key, v)?,
        "mean" => r.mean = value(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let unknown = || Error::Config(format!("unknown key `{key}`"));
        let (section, name) = key.split_once('.').unwrap_or(("", key));
        match section {
            "" => match name {
                "train_fraction" => self.train_fraction = value(key, v)?,
                _ => return Err(unknown()),
            },
            "device" => {
                let d = &mut self.device;
                match name {
                    "transaction_bytes" => d.transaction_bytes = value(key, v)?,
                    "warp_size" => d.warp_size = value(key, v)?,
                    "element_bytes" => d.element_bytes = value(key, v)?,
                    "lmem_capacity_bytes" => d.lmem_capacity_bytes = value(key, v)?,
                    "max_warps_per_sm" => d.max_warps_per_sm = value(key, v)?,
                    "max_workgroups_per_sm" => d.max_workgroups_per_sm = value(key, v)?,
                    "register_file_per_sm" => d.register_file_per_sm = value(key, v)?,
                    "max_regs_per_thread" => d.max_regs_per_thread = value(key, v)?,
                    "dram_latency_cycles" => d.dram_latency_cycles = value(key, v)?,
                    "issue_cycles_per_op" => d.issue_cycles_per_op = value(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "sampling" => {
                let s = &mut self.sampling;
                match name {
                    "num_tuples" => s.num_tuples = value(key, v)?,
                    "distribution" => s.distribution = Distribution::parse(v)?,
                    "long_trip_counts" => s.long_trip_counts = list(key, v)?,
                    "short_trip_counts" => s.short_trip_counts = list(key, v)?,
                    "in_h" => s.in_h = value(key, v)?,
                    "in_w" => s.in_w = value(key, v)?,
                    "out_h" => s.out_h = value(key, v)?,
                    "out_w" => s.out_w = value(key, v)?,
                    "min_grid_size" => s.limits.min_grid_size = value(key, v)?,
                    "max_wg_size" => s.limits.max_wg_size = value(key, v)?,
                    "max_instances" => s.max_instances = value(key, v)?,
                    "seed" => s.seed = value(key, v)?,
                    _ => {
                        let (param, field) = name.rsplit_once('_').ok_or_else(unknown)?;
                        let r = match param {
                            "radius" => &mut s.radius,
                            "comp_ilb" => &mut s.comp_ilb,
                            "comp_ep" => &mut s.comp_ep,
                            "coal_ilb" => &mut s.coal_ilb,
                            "coal_ep" => &mut s.coal_ep,
                            "uncoal_ilb" => &mut s.uncoal_ilb,
                            "uncoal_ep" => &mut s.uncoal_ep,
                            _ => return Err(unknown()),
                        };
                        if !range_field(r, field, key, v)? {
                            return Err(unknown());
                        }
                    }
                }
            }
            "forest" => {
                let h = &mut self.hyperparams;
                match name {
                    "num_trees" => h.num_trees = value(key, v)?,
                    "features_per_node" => h.features_per_node = value(key, v)?,
                    "max_depth" => h.max_depth = if v == "none" { None } else { Some(value(key, v)?) },
                    "min_samples_leaf" => h.min_samples_leaf = value(key, v)?,
                    "bootstrap" => h.bootstrap = value(key, v)?,
                    "seed" => h.seed = value(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "paths" => {
                let p = &mut self.paths;
                let slot = match name {
                    "dataset" => &mut p.dataset,
                    "skip_log" => &mut p.skip_log,
                    "model" => &mut p.model,
                    "report" => &mut p.report,
                    "metrics" => &mut p.metrics,
                    "histogram" => &mut p.histogram,
                    "kernels" => &mut p.kernels,
                    _ => return Err(unknown()),
                };
                *slot = PathBuf::from(v);
            }
            _ => return Err(unknown()),
        }
        Ok(())
    }

    /// Applies every setting in a config file body.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, found `{line}`", i + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `LMT_<SECTION>_<KEY>` overrides, e.g. `LMT_DEVICE_WARP_SIZE`
    /// sets `device.warp_size` and `LMT_TRAIN_FRACTION` sets `train_fraction`.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (k, v) in vars {
            let rest = k[ENV_PREFIX.len()..].to_ascii_lowercase();
            let key = match rest.split_once('_') {
                Some((section, name)) if ["device", "sampling", "forest", "paths"].contains(&section) => {
                    format!("{section}.{name}")
                }
                _ => rest,
            };
            self.set(&key, &v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("environment variable {k}: {m}")),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate().map_err(|m| Error::Config(format!("device: {m}")))?;
        self.sampling.validate()?;
        self.hyperparams.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} must lie strictly between 0 and 1", self.train_fraction)));
        }
        Ok(())
    }
}

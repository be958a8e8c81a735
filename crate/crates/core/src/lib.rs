//! Auto-tuning toolkit for the GPU local-memory caching optimization.
//!
//! The pipeline generates synthetic kernel instances from a parameterized
//! template ([`kernel_model`], [`codegen`]), extracts an 18-entry feature
//! vector ([`access`]), labels each instance with an analytical speedup
//! ([`cost`]), builds datasets ([`dataset`]), trains a random forest on
//! log-speedup ([`forest`]) and scores its decisions ([`eval`]).

pub mod access;
pub mod codegen;
pub mod config;
pub mod cost;
pub mod dataset;
pub mod device;
pub mod error;
pub mod eval;
pub mod forest;
pub mod kernel_model;
pub mod par;

pub use access::{extract_features, FeatureVector, Footprint, FEATURE_NAMES, NUM_FEATURES};
pub use cost::{label_speedup, Variant};
pub use device::DeviceDescriptor;
pub use error::{Error, Result};
pub use kernel_model::{
    HomeAccessPattern, KernelInstance, LaunchConfig, LaunchLimits, StencilPattern, StencilShape, TemplateParams,
};
pub use par::Execution;

//! Consensus-based non-linear aggregation of image denoising filters.
//!
//! A bank of classical filters (the *machines*) is run on a noisy image;
//! each output pixel is then the average of the noisy intensities at the
//! pixels on which enough machines agree. See [`aggregate`] for the
//! weighting rule.

pub mod aggregate;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod image;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod pool;
pub mod scene;
pub mod tuner;

pub use aggregate::{
    aggregate_image, aggregate_pixel, aggregate_with_bank, consensus_count, consensus_weight, Alpha,
    CobraParams, MachineOutputs, Window,
};
pub use error::{Error, Result};
pub use filters::{apply_bank, DenoiseFilter, FilterBank, FilterKind};
pub use image::{clamp, extract_patch, Image, Patch, PixelIndex};
pub use io::{load_image, save_image};
pub use noise::{apply_noise, NoiseKind, NoiseSpec};
pub use pool::{aggregate_from_pool, Aggregator, PoolSweep, ReferencePool};

#![no_std]
extern crate alloc;

pub mod assessment;
pub mod classical;
pub mod data;
pub mod distribution;
pub mod error;
pub mod gibbs;
pub mod heterogeneity;
pub mod math;
pub mod mixing;
pub mod model;
pub mod optimize;
pub mod quadrature;

pub use error::{Error, Result};
pub use mixing::{LatentIntegrator, MixingFamily};

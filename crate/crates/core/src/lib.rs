// `!(x > 0.0)` is how NaN inputs get rejected throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod attractor;
pub mod cli;
pub mod error;
pub mod maps;
mod fft;
pub mod herman;
pub mod perturb;
pub mod stats;
pub mod trigpoly;

pub use error::{Error, Result};
pub use trigpoly::{GridFn, HolderNorm, TrigPoly};

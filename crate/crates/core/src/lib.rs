//! Named entity linking with latent relations between mentions.
//!
//! A document is a fully connected conditional random field over its
//! mentions. Local scores tie each candidate entity to the mention's
//! context; pairwise scores mix `K` latent bilinear relations with weights
//! computed from the mentions' contexts, normalized either over relations
//! ([`params::Mode::RelNorm`]) or over mentions with a padding mention
//! ([`params::Mode::MentNorm`]). Max-marginals come from unrolled max-product
//! loopy belief propagation and are combined with the prior by a small
//! network. Everything is differentiable end to end through [`autodiff`].
//!
//! The runnable programs under `examples/` walk through each stage.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod params;
pub mod score;
pub mod training;

pub use config::{Config, KeyValues};
pub use error::{Error, Result};

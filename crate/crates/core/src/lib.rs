//! Desk-scale one-shot neural architecture search with supernet shifting.
//!
//! The pipeline has two stages. A weight-sharing supernet is trained by
//! sampling one path per step ([`train`]). An evolutionary search then
//! ranks architectures by their inherited accuracy while nudging the shared
//! weights toward the architectures it keeps sampling ([`search`]). The
//! same machinery adapts a trained supernet to a new dataset ([`transfer`]).
//!
//! ```
//! use shiftnas::data::{synthetic, SyntheticPreset};
//! use shiftnas::search::{search, EAConfig};
//! use shiftnas::space::{Dims, Preset, SearchSpace};
//! use shiftnas::supernet::Supernet;
//! use shiftnas::train::{train, TrainConfig};
//!
//! let data = synthetic(SyntheticPreset::Rings, 1);
//! let dims = Dims { input_dim: 16, hidden_dim: 8, num_classes: 3 };
//! let mut net = Supernet::init(SearchSpace::preset(Preset::Tiny, dims), 1).unwrap();
//! train(&mut net, &data, &TrainConfig { steps: 50, ..TrainConfig::default() }).unwrap();
//! let cfg = EAConfig { population_t: 4, iterations: 1, ..EAConfig::default() };
//! let result = search(&mut net, &data, &cfg, &[]).unwrap();
//! assert!(result.best.accuracy() >= 0.0);
//! ```

pub mod cli;
pub mod config;
pub mod data;
mod error;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod search;
pub mod space;
pub mod supernet;
pub mod train;
pub mod transfer;

pub use error::{Error, Result};

//! Follower count estimation from behaviorally similar users, and detection
//! of accounts whose displayed count departs from that estimate.
//!
//! The pipeline: [`model`] loads user traces, [`features`] embeds each user,
//! [`neighborhood`] estimates follower counts from a reference population,
//! and [`detection`] turns estimates into verdicts. [`clustering`] groups
//! users by unfollow behavior and [`synth`] generates labeled corpora.

pub mod clustering;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod model;
pub mod neighborhood;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use features::{FeatureVector, NormalizationModel};
pub use model::{Corpus, Label, UserSnapshot, UserTrace};
pub use neighborhood::{Backend, NeighborIndex, NeighborSet, Prediction, Predictor};

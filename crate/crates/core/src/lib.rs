//! Numerical core for short-term voltage stability assessment with a
//! data-augmented recurrent classifier.
//!
//! The crate is `no_std` and needs only `alloc`. It contains:
//!
//! * [`tensor`], [`graph`], [`optim`], [`loss`]: dense arrays, a
//!   define-then-run reverse-mode autodiff graph, Adam and the training losses.
//! * [`datagen`]: the contingency scenario grid, a surrogate trajectory
//!   simulator, the domain-knowledge pre-labeling rule, windowing, noise and
//!   stratified splitting.
//! * [`labeling`]: semi-supervised fuzzy c-means, silhouette coefficient,
//!   COP-k-means and cluster-to-class resolution.
//! * [`augment`]: the conditional least-squares GAN and the WD/MMD/FID
//!   fidelity metrics.
//! * [`classifier`]: BiGRU with attention pooling plus GRU/LSTM baselines.
//! * [`metrics`]: confusion counts, MCC/F1/accuracy and ROC/AUC.
//!
//! Enable the `std` feature for runtime SIMD dispatch in matrix products and
//! for timed single-window assessment.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod augment;
pub mod classifier;
pub mod datagen;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod labeling;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{Bindings, Graph, Mode, NodeId};
pub use params::ParamSet;
pub use tensor::DenseArray;

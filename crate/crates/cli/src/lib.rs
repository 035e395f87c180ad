//! File formats, configuration and pipeline stages behind the `dlban` command.
//!
//! Stages share one output directory:
//!
//! | stage | writes |
//! |---|---|
//! | generate | `scenarios.csv`, `trajectories.csv`, `windows.csv` |
//! | label | `labeled.csv`, `labeled_partition.csv`, `label_report.json` |
//! | augment | `augmented.csv` (+ partition), `gan.ckpt`, `gan_history.csv`, `gan_fidelity.csv`, `gan_report.json` |
//! | train | `model_<variant>_<dataset>.ckpt`, `curve_<variant>_<dataset>.csv` |
//! | eval | `eval_<variant>_<dataset>.json`, `roc_<variant>_<dataset>.csv` |
//! | sweep-otw | `sweep_otw_<variant>.csv` |
//! | noise | `noise_<variant>_<dataset>.csv`, `noise_<variant>_<dataset>.json` |
//!
//! Cross-entropy augmentation writes the same files with a `cgan` prefix
//! and the dataset stem `cgan_augmented`.

pub mod checkpoint;
pub mod config;
mod error;
pub mod io;
pub mod pipeline;

pub use error::{CliError, Result};

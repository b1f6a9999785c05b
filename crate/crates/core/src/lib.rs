//! Handwritten Chinese character recognition: direction-decomposed feature
//! maps over online and offline samples, a convolutional classifier, a
//! statistical baseline, and unsupervised writer adaptation.
//!
//! The crate is organized along the recognition pipeline:
//!
//! * [`sample_io`]: sample containers and file formats, plus a deterministic
//!   synthetic-writer generator for experiments.
//! * [`shape_norm`]: gray-level and shape normalization (coordinate maps).
//! * [`directmap`]: direction decomposition and feature-map extraction.
//! * [`convnet`]: the convolutional network, training, and checkpoints.
//! * [`baseline`]: blur sampling, Box-Cox, PCA/FDA, NPC and MQDF.
//! * [`adaptation`]: style transfer mapping for writer adaptation.
//! * [`pipeline`]: end-to-end sample-to-feature-map glue.

pub mod adaptation;
pub mod baseline;
pub mod convnet;
pub mod directmap;
pub mod error;
pub mod sample_io;
pub mod shape_norm;

pub use error::{Error, Result};

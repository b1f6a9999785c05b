//! Eleven-layer convolutional classifier over direction maps.
//!
//! The full architecture stacks eight 3x3 convolutions (50 to 400 channels
//! in steps of 50, leaky ReLU, 2x2 max-pooling after every second one) on a
//! 900- and a 200-unit fully connected layer and a softmax output. Training
//! is plain mini-batch SGD with momentum, per-layer dropout, L2 weight decay
//! and a plateau-driven learning-rate schedule; inputs are multiplied by a
//! contrast-derived rescale constant estimated once and frozen. Everything
//! is generic over [`Scalar`] so the same code trains in f32 or f64 from a
//! shared initialization stream.

mod arch;
mod forward;
mod params;
mod scalar;
mod train;

pub use arch::{Architecture, TrainConfig};
pub use forward::{
    backward, forward, forward_tape, gradient, gradient_with_stats, logits, logits_from_source,
    nll, softmax, source_features, BatchStats, Mode, Tape,
};
pub use params::{parse_checkpoint, serialize_checkpoint, LayerParam, NetworkParams};
#[cfg(test)]
pub(crate) use params::tiny_arch;
pub use scalar::Scalar;
pub use train::{
    estimate_rescale, fit, fit_with, predict, top_n, EpochLog, PlateauAction, PlateauSchedule,
    RescaleConstant, RESCALE_SUBSAMPLE,
};

//! Writer adaptation. A small affine map on the bottleneck features absorbs
//! one writer's style without touching the trained network, solved in closed
//! form from confidence-weighted self-training rounds.

mod selftrain;
mod transform;

pub use selftrain::{
    adapt_unsupervised, adapt_unsupervised_features, class_means, error_reduction_rate,
    AdaptConfig, AdaptOutcome, ClassMeans,
};
pub use transform::{beta_from_tilde, parse_stm, serialize_stm, solve_stm, StyleTransform};

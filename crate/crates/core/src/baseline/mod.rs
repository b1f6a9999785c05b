//! Traditional statistical recognition pipeline: Gaussian-blur sampling of
//! direction maps into a 512-dimensional feature vector, square-root power
//! transform, PCA or FDA dimensionality reduction, and nearest-prototype or
//! modified-quadratic-discriminant classification.

mod blur;
mod classify;
mod projection;

pub use blur::{blur_sample, blur_sigma, boxcox, GRID, STEP};
pub use classify::{MqdfClass, MqdfModel, NpcModel, DEFAULT_MQDF_K, EIGEN_FLOOR_RATIO};
pub use projection::{fit_projection, Projection, ProjectionKind, FDA_EPSILON};

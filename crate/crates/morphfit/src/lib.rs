//! Separation of rigid pose from non-rigid deformation in 3D landmark data.
//!
//! The toolkit fits a similarity transform (scale, rotation, translation)
//! together with a PCA shape deformation to observed 3D landmarks under a
//! heavy-tailed Student's-t error model, so that gross localization errors
//! are down-weighted automatically. A coupled linear dynamical system filters
//! landmark sequences over time, and a small software rasterizer turns fitted
//! shapes into dense frontal depth maps and resampled images.
//!
//! Main entry points:
//! - [`fit::robust_fit`]: per-frame pose + deformation estimation.
//! - [`filter::track_sequence`]: temporal tracking with the coupled filter.
//! - [`warp`]: depth rasterization and image frontalization.
//! - [`bench`]: the simulated outlier-robustness benchmark.
//! - [`metrics::zncc_score`]: region correlation score for evaluation.

pub mod bench;
pub mod error;
pub mod filter;
pub mod fit;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod shape;
pub mod special;
pub mod warp;

pub use error::{Error, Result};
pub use fit::{FitConfig, FitResult, RobustFitState};
pub use geometry::{Mat3, Quat, RigidSimilarity, Vec3};
pub use shape::{CompositeModel, DeformationSampler, ShapeEmbedding, ShapeModel};

//! Point-cloud classification through 3D-to-2D mappings.
//!
//! A cloud `x` is turned into an image by a mapper `h` (basic projection,
//! hierarchical graph drawing, or a z-buffer depth map) and classified by a
//! small convolutional network `g`. Mappers whose pixel placement is
//! quantized block input gradients; mappers that write point coordinates into
//! pixel intensities leak them. The [`attack`] module measures the difference
//! with a single-step FGSM attack.

pub mod attack;
pub mod cloud;
mod error;
pub mod graphdraw;
pub mod image;
pub mod net;
pub mod pipeline;
pub mod project;
pub mod render;

pub use attack::{attack_success_rate, AttackReport, Pipeline, PointGradient};
pub use cloud::{AugmentConfig, Mesh, PointCloud, ShapeKind};
pub use error::{Error, Result};
pub use graphdraw::{ClusterHierarchy, GraphDrawConfig, GridEmbedding};
pub use net::{Dataset, Tensor, TinyNet, TrainConfig};
pub use pipeline::Mapper;
pub use project::{GradPath, LeakLink, MappedImage};
pub use render::{AdaIn, AdaInParams, ZBufferConfig};

/// A 3D coordinate.
pub type Point3 = [f64; 3];

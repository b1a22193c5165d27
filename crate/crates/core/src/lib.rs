//! Geometry and numerics for turning a text prompt or an image into a
//! navigable 3D scene: panorama composition from perspective views, depth
//! lifting, moving-scene alignment and fusion, camera-set construction and
//! forward Gaussian splat rendering.
//!
//! Every generative step sits behind a trait in [`generators`] with a
//! deterministic stub and an HTTP client.

pub mod bundle;
pub mod depthalign;
pub mod error;
pub mod generators;
pub mod geometry;
pub mod io;
pub mod json;
pub mod knn;
pub mod panorama;
pub mod pipeline;
pub mod pointcloud;
pub mod projection;
pub mod raster;
pub mod splat;

pub use error::{Error, Result};

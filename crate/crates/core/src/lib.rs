//! Fisheye-native 3D Gaussian splatting.
//!
//! This crate trains and renders scenes represented as anisotropic 3D
//! Gaussians directly through a Kannala-Brandt fisheye camera, without an
//! intermediate undistortion or cubemap step. The projection of each
//! Gaussian is linearized with the analytic Jacobian of the fisheye
//! projection, so wide fields of view (up to ~180 degrees) rasterize with
//! correct peripheral shapes.
//!
//! The main pieces:
//!
//! - [`camera`]: Kannala-Brandt intrinsics, world-to-camera poses, the
//!   analytic projection Jacobian and its derivative w.r.t. the camera-space
//!   point.
//! - [`scene`]: the Gaussian scene model (positions, rotations, log-scales,
//!   opacity logits, SH coefficients), densification and pruning, PLY export.
//! - [`render`]: tile-based forward rasterization and the full analytic
//!   backward pass.
//! - [`loss`]: L1, SSIM (with analytic gradient), PSNR and field-of-view
//!   boundary masks.
//! - [`graph`]: covisibility graph over views and angle-driven view
//!   selection for multi-view training batches.
//! - [`train`]: Adam-based training loop with single-view, random
//!   multi-view, and covisibility-driven multi-view strategies.
//! - [`colmap`], [`img`], [`checkpoint`]: dataset and state I/O.
//! - [`synth`]: analytic sphere-scene renderer used to build synthetic
//!   datasets with exact ground truth.
//!
//! All geometry and image math is `f64`.

pub mod camera;
pub mod checkpoint;
pub mod colmap;
pub mod config;
pub mod graph;
pub mod img;
pub mod loss;
pub mod render;
pub mod scene;
pub mod sh;
pub mod synth;
pub mod train;

pub use camera::{CamPoint, CameraError, CameraPose, FisheyeIntrinsics};
pub use render::{render, render_backward, RenderOptions, RenderedImage, SceneGradients};
pub use scene::{Gaussian, SceneModel};

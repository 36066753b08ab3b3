//! Deterministic multi-scale scene generation: orthographic image cascade,
//! tiled unbounded sampling, height lifting, multi-view texture inpainting and
//! baking, evaluation metrics and a spatial QA data engine.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bake;
pub mod camera;
pub mod cascade;
pub mod encoding;
pub mod error;
pub mod export;
pub mod geom;
pub mod grid;
pub mod io;
pub mod lift;
pub mod mesh;
pub mod metrics;
pub mod multiview;
pub mod noise;
pub mod pipeline;
pub mod qa;
pub mod render;
pub mod sampler;
pub mod scenes;
pub mod tiler;

pub use error::{Error, Result};
pub use grid::{bilinear_sample, PixelRect, RasterGrid};
pub use noise::NoiseField;

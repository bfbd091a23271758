//! Voxel-based absolute multi-person 3D pose estimation from abstract geometry
//! representations (2D joint heatmaps plus root-anchored box maps), trained on
//! procedurally synthesized scenes.
//!
//! Pipeline: [`synth`] renders AGR for random cameras and poses; [`ren`] estimates root
//! depth, lifts heatmaps into a depth-gated coarse volume and finds roots; [`pen`] decodes
//! full poses from a fine volume around each root; [`eval`] scores predictions.
//! [`train`] and [`protocol`] tie the stages together.

pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gradsuite;
pub mod io;
pub mod model;
pub mod nn;
pub mod pen;
pub mod protocol;
pub mod ren;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod volume;

pub use error::{Error, Result};
pub use scalar::{DType, Scalar};

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type ParamSet32 = nn::ParamSet<f32>;
pub type ParamSet64 = nn::ParamSet<f64>;
pub type VoxelVolume32 = volume::VoxelVolume<f32>;
pub type VoxelVolume64 = volume::VoxelVolume<f64>;
pub type AgrSample32 = synth::AgrSample<f32>;
pub type AgrSample64 = synth::AgrSample<f64>;
pub type Model32 = model::Model<f32>;
pub type Model64 = model::Model<f64>;

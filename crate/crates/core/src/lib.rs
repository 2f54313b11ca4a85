//! Simulation and fitting toolkit for complex Fano resonances of Mössbauer
//! nuclei embedded in thin-film X-ray cavities.
//!
//! Numerical code is generic over the scalar type; the aliases below fix it
//! to `f64` (and `f32` for the closed-form model).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fitting;
pub mod grid;
pub mod layersim;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod optimize;
pub mod scalar;
pub mod scanfile;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Real;

pub type CavityParams = model::CavityParams<f64>;
pub type NuclearEnsemble = model::NuclearEnsemble<f64>;
pub type FanoProfile = model::FanoProfile<f64>;
pub type DetuningState = model::DetuningState<f64>;
pub type Material = layersim::Material<f64>;
pub type Layer = layersim::Layer<f64>;
pub type LayerStack = layersim::LayerStack<f64>;
pub type OptimizerConfig = optimize::OptimizerConfig<f64>;
pub type BareCavityFit = fitting::BareCavityFit<f64>;
pub type FanoFit = fitting::FanoFit<f64>;
pub type QTrajectory = trajectory::QTrajectory<f64>;
pub type LineFit = trajectory::LineFit<f64>;
pub type ArcFit = trajectory::ArcFit<f64>;

pub type CavityParams32 = model::CavityParams<f32>;
pub type NuclearEnsemble32 = model::NuclearEnsemble<f32>;
pub type FanoProfile32 = model::FanoProfile<f32>;
pub type DetuningState32 = model::DetuningState<f32>;

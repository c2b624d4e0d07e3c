//! Heat transfer through a thin layer of grains between a fluid and a solid:
//! a resolved micro model, two effective (upscaled) models, and the cell problems
//! that feed them.

pub mod cell;
pub mod config;
pub mod effective;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod micro;
pub mod params;
pub mod scalar;
pub mod studies;

pub use error::{Error, Result};

/// `f64` instantiations of the generic core.
pub type Field = grid::Field<f64>;
pub type SparseSystem = grid::SparseSystem<f64>;
pub type MicroSystem = micro::MicroSystem<f64>;
pub type MicroSimulation = micro::MicroSimulation<f64>;
pub type MicroRun = micro::MicroRun<f64>;
pub type CellOperator = cell::CellOperator<f64>;
pub type CellProblemState = cell::CellProblemState<f64>;
pub type EffectiveModel = effective::EffectiveModel<f64>;
pub type EffectiveState = effective::EffectiveState<f64>;
pub type EffectiveRun = effective::EffectiveRun<f64>;

//! Homogenized models: macro heat equation with an interface unknown on `Σ`, closed by a
//! bank of grain cell problems (disconnected grains) or an interface heat equation
//! (connected grains), coupled by a relaxed fixed-point iteration per time step.

mod bank;
mod coupling;
mod interface;
mod macro_op;

pub use bank::{bank_points, CellBank, TensorInterp};
pub use coupling::{
    compute_e, coupled_time_step, run, run_from, CellSpec, Closure, EffectiveConfig, EffectiveLedgerRow, EffectiveModel,
    EffectiveRun, EffectiveState, GrainModel, GrainState, InterfaceSpec, IterationReport,
};
pub use interface::{interface_pde_step, InterfaceOperator};
pub use macro_op::{macro_step_given_exchange, MacroOperator};

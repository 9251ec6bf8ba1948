//! Discretised Wiener space: grids, Brownian ensembles, Cameron-Martin
//! directions and the shift `ω ↦ ω + εh`.

mod direction;
mod ensemble;
mod grid;
mod integral;
pub mod io;
mod shift;

pub use direction::{inner_h, Direction};
pub use ensemble::{sample_ensemble, PathSource, WienerEnsemble};
pub use grid::{make_grid, Grid};
pub use integral::{
    cm_weight, shifted_stochastic_integral_identity, wiener_integral, Adaptedness, ShiftIdentity,
    StepProcess,
};
pub use shift::{shift, ShiftedEnsemble};

//! Backward SDE solvers on a declared Markov state: regression-based
//! backward Euler, Picard iteration, and closed-form oracles for affine and
//! quadratic drivers.

mod oracle;
mod regression;
mod solver;
mod spec;
mod state;

pub use oracle::{
    affine_oracle, quadratic_oracle, sup_grid_relative_l2, z_sup_grid_relative_l2, OracleSolution, NESTED_BUDGET,
};
pub use regression::{FeatureMap, RegressionBasis};
pub(crate) use regression::Projector;
pub use solver::{relative_l2_gap, solve_backward, solve_picard, BackwardSolution, PicardSolution, StepFit};
pub(crate) use spec::with_scratch;
pub(crate) use solver::{check_setup, collect_increments, project_z};
pub use spec::{
    BsdeSpec, DfPairing, Driver, DriverFn, DriverGrad, DriverKind, Regime, ScalarTerminal, StateFn, StateGrad,
    Terminal, XiPairing,
};
pub use state::{MarkovState, StateField, StateVariable};

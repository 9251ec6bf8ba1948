//! Cylindrical functionals with analytic gradients, the Skorohod operator on
//! product elements, Gâteaux quotients and their convergence and duality
//! harnesses.

mod convergence;
mod duality;
mod functional;

pub use convergence::{
    central_convergence_test, central_quotient, convergence_test, default_schedule, dyadic_schedule,
    gateaux_quotient, roundoff_floor, validate_schedule, ConvergenceReport, Tolerance,
    REPORT_SCHEMA_VERSION,
};
pub use duality::{
    cameron_martin_gap, default_test_matrix, duality_residual, test_matrix, PairedResidual,
};
pub use functional::{
    eval, gradient_pairing, skorohod_product, CylindricalFunctional, GradientPairing, Growth,
    PathFunctional, ScalarFn,
};

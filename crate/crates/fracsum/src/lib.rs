//! Variable-order Caputo fractional derivatives and 1D sub-diffusion
//! solvers, with an exponential-sum fast path that collapses the dense
//! convolution history to O(log²n) memory and O(n·log²n) work.
//!
//! The crate has five layers:
//!
//! - [`gamma`]: Γ(x) on the small positive arguments the formulas need.
//! - [`esa`]: exponential-sum approximation of the power kernel t^(−γ) —
//!   order functions, certified parameter selection, weights.
//! - [`caputo`]: the variable-order Caputo derivative of a time series, by
//!   the direct L1 formula (O(n²) reference), by the fast ESA recursion,
//!   and by adaptive quadrature of the defining integral (oracle).
//! - [`diffusion`]: implicit finite-difference solvers for
//!   ∂^α(t)u/∂t^α(t) = u_xx + f on [0, x_R] × [0, T] with homogeneous
//!   Dirichlet boundaries — an L1 scheme and a fast ESA scheme with
//!   per-node history compression.
//! - [`verification`]: manufactured problems with exact solutions, error
//!   metrics, refinement studies, and CSV/Markdown convergence tables.

pub mod caputo;
pub mod diffusion;
pub mod error;
pub mod esa;
pub mod gamma;
pub mod verification;

pub use caputo::{
    caputo_oracle, fast_derivative_series, fast_derivative_step, l1_derivative, l1_weights,
    EsaHistory, HistoryStepper, TimeGrid,
};
pub use diffusion::{
    scheme_coefficients, solve_fast_direct, solve_fast_esa, solve_l1, stability_check,
    tridiagonal_solve, DiffusionProblem, SchemeCoefficients, SolveOptions, Solution, SpatialGrid,
    StabilityReport,
};
pub use error::{Error, Result};
pub use esa::{
    approx_kernel, kernel_weights, max_kernel_error, select_parameters, AlphaFamily, EpsilonRule,
    EsaParams, OrderFunction,
};
pub use verification::{
    example1, example2, max_error, ode_refinement_study, order_estimate, pde_refinement_study,
    sine_problem, solve_ode_fast, solve_ode_l1, ConvergenceTable, ManufacturedOde,
    ManufacturedPde, OdeSolution, Scheme, StudyRow,
};

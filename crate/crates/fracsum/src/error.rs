//! Error type shared by every module of the crate.

/// Everything that can go wrong while configuring or running the solvers.
///
/// Numerical routines in this crate are total once their inputs pass
/// validation, so errors concentrate at construction and parameter
/// selection; the variants say which contract was violated.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The kernel-compression accuracy must satisfy 0 < ε ≤ 1/e.
    #[error("expected accuracy must satisfy 0 < eps <= 1/e, got {0}")]
    InvalidEpsilon(f64),

    /// Order bounds must be strictly inside (0, 1) and ordered.
    #[error("order bounds must satisfy 0 < lo <= hi < 1, got [{lo}, {hi}]")]
    InvalidOrderBounds { lo: f64, hi: f64 },

    /// The order function escaped its certified bounds at some time.
    #[error("order function left [{lo}, {hi}]: alpha({t}) = {value}")]
    OrderOutOfBounds { t: f64, value: f64, lo: f64, hi: f64 },

    /// Parameter selection produced an empty exponent window: the kernel
    /// cannot be compressed at this accuracy / step-size combination.
    #[error("kernel cannot be compressed: empty exponent window (n_lo = {n_lo}, n_hi = {n_hi})")]
    EmptyWindow { n_lo: i64, n_hi: i64 },

    /// The certification loop could not push the kernel error below ε.
    #[error("kernel accuracy {requested:e} unreachable; best certified error {achieved:e}")]
    AccuracyUnreachable { requested: f64, achieved: f64 },

    /// Gamma was asked for an argument outside its supported interval.
    #[error("gamma argument {0} outside supported interval (0, 3.5]")]
    GammaDomain(f64),

    /// A slice argument had the wrong length.
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A grid parameter was degenerate (zero counts, non-positive sizes...).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Adaptive quadrature hit its depth limit before reaching tolerance.
    #[error("quadrature failed to reach tolerance {tol:e} (residual estimate {residual:e})")]
    QuadratureDivergence { tol: f64, residual: f64 },

    /// The tridiagonal solver was handed a matrix it cannot guarantee.
    #[error("tridiagonal system not strictly diagonally dominant at row {row}")]
    NotDiagonallyDominant { row: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

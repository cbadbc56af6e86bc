//! Variable-order Caputo derivatives of time series.
//!
//! The derivative of order α(t) ∈ (0, 1) is
//!
//! ```text
//! D^α(t) u(t) = (1/Γ(1−α(t))) ∫₀ᵗ u′(τ) (t−τ)^(−α(t)) dτ,
//! ```
//!
//! evaluated here three ways:
//!
//! - [`l1_derivative`]: the direct L1 formula — replace u′ by the piecewise
//!   slope and integrate the kernel segment-exactly.  Θ(n²) arithmetic,
//!   the reference the fast path is measured against.
//! - [`fast_derivative_series`]: the fast ESA algorithm — the history part
//!   of the integral is pushed through the compressed kernel, turning the
//!   dense convolution into N_ε exponential moments advanced by an O(N_ε)
//!   recursion per step.  O(n·N_ε) work, O(N_ε) history storage.
//! - [`caputo_oracle`]: adaptive quadrature of the defining integral with
//!   the endpoint singularity removed by substitution — the high-accuracy
//!   oracle used in tests.

use crate::error::{Error, Result};
use crate::esa::{kernel_weights, kernel_weights_into, select_parameters, EsaParams, OrderFunction};
use crate::gamma::gamma_pos;

/// Uniform time grid t_k = k·Δt for k = 0…n with Δt = T/n.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n: usize,
    dt: f64,
}

impl TimeGrid {
    /// Grid with n steps on [0, horizon].
    pub fn new(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || n == 0 {
            return Err(Error::InvalidGrid(format!(
                "need horizon > 0 and n >= 1, got horizon = {horizon}, n = {n}"
            )));
        }
        Ok(Self {
            horizon,
            n,
            dt: horizon / n as f64,
        })
    }

    /// Final time T.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps n.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Step size Δt = T/n.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Node t_k = k·Δt.
    pub fn t(&self, k: usize) -> f64 {
        debug_assert!(k <= self.n);
        k as f64 * self.dt
    }
}

/// L1 kernel weights a_l = (k−l)^(1−α_k) − (k−l−1)^(1−α_k) for l = 0…k−1.
///
/// The weights are positive, increasing in l (the kernel singularity sits
/// at the current time, so recent slopes weigh most), and a_{k−1} = 1.
pub fn l1_weights(k: usize, alpha_k: f64) -> Vec<f64> {
    assert!(k >= 1, "L1 weights need a level k >= 1");
    let e = 1.0 - alpha_k;
    (0..k)
        .map(|l| {
            let j = (k - l) as f64;
            j.powf(e) - (j - 1.0).powf(e)
        })
        .collect()
}

/// Multiplier Δt^(−α_k)/Γ(2−α_k) shared by the L1 formula and the local
/// (one-step) part of the fast formula.  Both paths compute it through this
/// function so their k = 1 values agree bitwise.
#[inline]
fn l1_scale(dt: f64, alpha_k: f64) -> f64 {
    dt.powf(-alpha_k) / gamma_pos(2.0 - alpha_k)
}

/// Direct L1 evaluation of the Caputo derivative at every t_k, k = 1…n.
///
/// `u` holds samples u(t_k) for k = 0…n.  Returns D_k for k = 1…n:
///
/// ```text
/// D_k = (Δt^(−α_k)/Γ(2−α_k)) · Σ_{l=0}^{k−1} a_l^k · (u_{l+1} − u_l),
/// ```
///
/// the slope form of the usual weight-difference formula (identical
/// algebraically, and exact for constant u without cancellation).
/// Θ(n²) arithmetic, Θ(n) auxiliary storage.
pub fn l1_derivative(u: &[f64], alpha: &OrderFunction, grid: &TimeGrid) -> Result<Vec<f64>> {
    let n = grid.n();
    if u.len() != n + 1 {
        return Err(Error::LengthMismatch {
            what: "sampled series",
            expected: n + 1,
            got: u.len(),
        });
    }
    let dt = grid.dt();
    // (k−l)^(1−α_k) is exp((1−α_k)·ln j): cache the logs, they are the only
    // k-independent piece of the weight table.
    let mut lnj = vec![0.0; n + 1];
    for (j, slot) in lnj.iter_mut().enumerate().skip(1) {
        *slot = (j as f64).ln();
    }
    let mut pw = vec![0.0; n + 1];
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let ak = alpha.at(grid.t(k));
        let e = 1.0 - ak;
        pw[0] = 0.0;
        for j in 1..=k {
            pw[j] = (e * lnj[j]).exp();
        }
        let mut acc = 0.0;
        for l in 0..k {
            let a = pw[k - l] - pw[k - l - 1];
            acc += a * (u[l + 1] - u[l]);
        }
        out.push(acc * l1_scale(dt, ak));
    }
    Ok(out)
}

/// Running exponential history moments v_{k,i} of one derivative stream.
///
/// At level k the moments represent the compressed memory of the solution
/// on [0, t_{k−1}]; they start at zero (v_{1,i} = 0) and are advanced by
/// [`HistoryStepper::advance`] in O(N_ε) per step, independent of k.
#[derive(Debug, Clone)]
pub struct EsaHistory {
    level: usize,
    moments: Vec<f64>,
}

impl EsaHistory {
    /// History at level 1: all moments zero.
    pub fn new(params: &EsaParams) -> Self {
        Self {
            level: 1,
            moments: vec![0.0; params.n_terms()],
        }
    }

    /// Current level k.
    pub fn level(&self) -> usize {
        self.level
    }

    /// Moments v_{k,i}, one per exponent.
    pub fn moments(&self) -> &[f64] {
        &self.moments
    }
}

/// Precomputed per-exponent decay and gain factors of the history recursion
///
/// ```text
/// v_{k,i} = e^(−x_i) · v_{k−1,i} + g_i · (u_{k−1} − u_{k−2}),
/// x_i = λ_i·Δt/T,   g_i = (e^(−x_i) − e^(−2x_i)) / x_i.
/// ```
///
/// Both factors depend only on (params, grid), so they are computed once
/// per stream rather than once per step.
#[derive(Debug, Clone)]
pub struct HistoryStepper {
    decay: Vec<f64>,
    gain: Vec<f64>,
}

impl HistoryStepper {
    pub fn new(params: &EsaParams, grid: &TimeGrid) -> Self {
        let ratio = grid.dt() / params.horizon();
        let mut decay = Vec::with_capacity(params.n_terms());
        let mut gain = Vec::with_capacity(params.n_terms());
        for &lam in params.exponents() {
            let x = lam * ratio;
            let d = (-x).exp();
            // g = e^(−x)·(1 − e^(−x))/x, written with expm1 because the
            // bracket cancels catastrophically for the tiny x of the
            // smallest exponents (x reaches ~1e-33); as x → 0, g → 1.
            let g = d * (-(-x).exp_m1()) / x;
            decay.push(d);
            gain.push(g);
        }
        Self { decay, gain }
    }

    /// Advance a history from level k−1 to k using the two newest samples
    /// u_{k−1}, u_{k−2}.  Nothing older is needed — that is the whole point.
    pub fn advance(&self, hist: &mut EsaHistory, u_prev: f64, u_prev2: f64) {
        let du = u_prev - u_prev2;
        for ((v, &d), &g) in hist
            .moments
            .iter_mut()
            .zip(&self.decay)
            .zip(&self.gain)
        {
            *v = d * *v + g * du;
        }
        hist.level += 1;
    }

    /// Per-exponent decay factors e^(−λ_i·Δt/T).
    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    /// Per-exponent gain factors g_i.
    pub fn gain(&self) -> &[f64] {
        &self.gain
    }
}

fn step_with_weights(
    theta: &[f64],
    hist: &EsaHistory,
    u_k: f64,
    u_km1: f64,
    alpha_k: f64,
    params: &EsaParams,
    grid: &TimeGrid,
) -> f64 {
    let local = (u_k - u_km1) * l1_scale(grid.dt(), alpha_k);
    if hist.level <= 1 {
        return local;
    }
    let hsum: f64 = theta.iter().zip(&hist.moments).map(|(t, v)| t * v).sum();
    params.horizon().powf(-alpha_k) / gamma_pos(1.0 - alpha_k) * hsum + local
}

/// One fast-formula derivative value at the history's current level:
///
/// ```text
/// D_k ≈ (T^(−α_k)/Γ(1−α_k)) · Σ_i θ_{k,i} v_{k,i}
///       + (u_k − u_{k−1}) · Δt^(−α_k)/Γ(2−α_k).
/// ```
///
/// At level 1 the history term is absent and the value equals the L1 one
/// bitwise (identical arithmetic path).
pub fn fast_derivative_step(
    hist: &EsaHistory,
    u_k: f64,
    u_km1: f64,
    alpha_k: f64,
    params: &EsaParams,
    grid: &TimeGrid,
) -> f64 {
    if hist.level <= 1 {
        return (u_k - u_km1) * l1_scale(grid.dt(), alpha_k);
    }
    let theta = kernel_weights(params, alpha_k);
    step_with_weights(&theta, hist, u_k, u_km1, alpha_k, params, grid)
}

/// Fast ESA evaluation of the Caputo derivative at every t_k, k = 1…n.
///
/// Selects certified kernel parameters for the given accuracy, then marches
/// the history recursion.  O(n·N_ε) arithmetic, O(N_ε) history storage; the
/// maximum deviation from [`l1_derivative`] is O(ε).
///
/// Returns the derivative series together with the parameters it used.
pub fn fast_derivative_series(
    u: &[f64],
    alpha: &OrderFunction,
    grid: &TimeGrid,
    epsilon: f64,
) -> Result<(Vec<f64>, EsaParams)> {
    let n = grid.n();
    if u.len() != n + 1 {
        return Err(Error::LengthMismatch {
            what: "sampled series",
            expected: n + 1,
            got: u.len(),
        });
    }
    let params = select_parameters(epsilon, alpha, grid.horizon(), grid.dt())?;
    let stepper = HistoryStepper::new(&params, grid);
    let mut hist = EsaHistory::new(&params);
    let mut theta = vec![0.0; params.n_terms()];
    let mut out = Vec::with_capacity(n);

    let a1 = alpha.at(grid.t(1));
    out.push((u[1] - u[0]) * l1_scale(grid.dt(), a1));
    for k in 2..=n {
        stepper.advance(&mut hist, u[k - 1], u[k - 2]);
        let ak = alpha.at(grid.t(k));
        kernel_weights_into(&params, ak, &mut theta);
        out.push(step_with_weights(
            &theta, &hist, u[k], u[k - 1], ak, &params, grid,
        ));
    }
    Ok((out, params))
}

const ORACLE_TOL: f64 = 1e-12;
const ORACLE_MAX_DEPTH: u32 = 30;

/// High-accuracy quadrature of the defining Caputo integral at one time.
///
/// The substitution t−τ = σ^(1/(1−α)) removes the endpoint singularity
/// exactly — the transformed integrand is just u′(t − σ^(1/(1−α))) — and
/// adaptive Simpson integration drives the absolute error of the returned
/// derivative below 1e-12.  The order is frozen at α(t) (the outer time),
/// matching the definition.
pub fn caputo_oracle(
    u_prime: &(impl Fn(f64) -> f64 + ?Sized),
    alpha: &OrderFunction,
    t: f64,
) -> Result<f64> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::InvalidGrid(format!("oracle needs t > 0, got {t}")));
    }
    let a = alpha.at(t);
    let beta = 1.0 - a;
    let upper = t.powf(beta);
    let inv_beta = 1.0 / beta;
    // τ = t − σ^(1/β) can land a few ulps past the endpoints; clamp so the
    // caller's u′ is only consulted inside [0, t].
    let f = |sigma: f64| u_prime((t - sigma.powf(inv_beta)).clamp(0.0, t));
    let prefactor = 1.0 / (beta * gamma_pos(beta));
    let j = adaptive_simpson(&f, 0.0, upper, ORACLE_TOL / prefactor)?;
    Ok(prefactor * j)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, ORACLE_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let d = left + right - whole;
    if d.abs() <= 15.0 * tol {
        return Ok(left + right + d / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureDivergence {
            tol,
            residual: d.abs() / 15.0,
        });
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

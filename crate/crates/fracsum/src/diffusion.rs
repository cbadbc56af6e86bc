//! Implicit finite-difference solvers for the variable-order sub-diffusion
//! equation
//!
//! ```text
//! D^α(t) u = ∂²u/∂x² + f(x,t)   on (0, x_R) × (0, T],
//! u(0,t) = u(x_R,t) = 0,        u(x,0) = φ(x),
//! ```
//!
//! with the time derivative taken in the variable-order Caputo sense.  Two
//! schemes share one spatial discretization (centred second differences,
//! backward-implicit coupling, one tridiagonal solve per step):
//!
//! - [`solve_l1`]: the direct scheme — the L1 derivative keeps every past
//!   level, so a step costs O(mk) and the march O(mn²).
//! - [`solve_fast_esa`]: the fast scheme — each interior node carries N_ε
//!   exponential history moments instead of its trajectory, so a step costs
//!   O(mN_ε) and the march O(mn·N_ε) with O(m·N_ε) auxiliary storage.
//!
//! [`solve_fast_direct`] re-derives the fast scheme's per-level weights
//! explicitly ([`scheme_coefficients`]) and marches with them; it is
//! quadratic and exists only so the O(n)-per-step recursion can be tested
//! against the analyzed form of the scheme.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::caputo::{HistoryStepper, TimeGrid};
use crate::error::{Error, Result};
use crate::esa::{kernel_weights_into, select_parameters, EsaParams, OrderFunction};
use crate::gamma::gamma_pos;

/// Uniform spatial grid x_j = j·Δx for j = 0…m with Δx = x_R/m.
///
/// Interior nodes are j = 1…m−1; the boundary nodes carry the homogeneous
/// Dirichlet data.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    right: f64,
    m: usize,
    dx: f64,
}

impl SpatialGrid {
    /// Grid with m cells on [0, right].
    pub fn new(right: f64, m: usize) -> Result<Self> {
        if !(right > 0.0 && right.is_finite()) || m < 2 {
            return Err(Error::InvalidGrid(format!(
                "need right > 0 and m >= 2, got right = {right}, m = {m}"
            )));
        }
        Ok(Self {
            right,
            m,
            dx: right / m as f64,
        })
    }

    /// Right endpoint x_R.
    pub fn right(&self) -> f64 {
        self.right
    }

    /// Number of cells m (m+1 nodes, m−1 interior).
    pub fn m(&self) -> usize {
        self.m
    }

    /// Cell width Δx = x_R/m.
    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Node x_j = j·Δx.
    pub fn x(&self, j: usize) -> f64 {
        debug_assert!(j <= self.m);
        j as f64 * self.dx
    }
}

/// One initial-boundary-value problem: grids, order function, source f(x,t)
/// and initial profile φ(x).  Boundary data is identically zero.
pub struct DiffusionProblem<'a> {
    pub spatial: SpatialGrid,
    pub time: TimeGrid,
    pub alpha: &'a OrderFunction,
    pub source: &'a (dyn Fn(f64, f64) -> f64 + Sync),
    pub initial: &'a (dyn Fn(f64) -> f64 + Sync),
}

impl<'a> DiffusionProblem<'a> {
    pub fn new(
        spatial: SpatialGrid,
        time: TimeGrid,
        alpha: &'a OrderFunction,
        source: &'a (dyn Fn(f64, f64) -> f64 + Sync),
        initial: &'a (dyn Fn(f64) -> f64 + Sync),
    ) -> Self {
        Self {
            spatial,
            time,
            alpha,
            source,
            initial,
        }
    }

    /// φ sampled on all nodes, boundaries forced to zero.
    fn initial_field(&self) -> Vec<f64> {
        let m = self.spatial.m();
        let mut u0: Vec<f64> = (0..=m).map(|j| (self.initial)(self.spatial.x(j))).collect();
        u0[0] = 0.0;
        u0[m] = 0.0;
        u0
    }

    /// Δx²·f(x_j, t_k) for interior j, written into `rhs`.
    fn forcing_into(&self, k: usize, rhs: &mut [f64]) {
        let t = self.time.t(k);
        let dx2 = self.spatial.dx() * self.spatial.dx();
        for (jj, slot) in rhs.iter_mut().enumerate() {
            *slot = dx2 * (self.source)(self.spatial.x(jj + 1), t);
        }
    }
}

/// Knobs shared by the solvers.
#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// Worker threads for the per-node history work in the fast solver;
    /// 0 means sequential.  The result is bitwise identical either way.
    pub threads: usize,
    /// Store u^k for every k divisible by this (plus k = 0 and k = n).
    /// `None` keeps only the rolling two levels the schemes need.
    pub snapshot_every: Option<usize>,
}

/// Outcome of one solve: the final field, optional snapshots, and the
/// counters the complexity claims are tested against.
#[derive(Debug, Clone)]
pub struct Solution {
    final_field: Vec<f64>,
    snapshots: Vec<(usize, Vec<f64>)>,
    max_sup_norm: f64,
    wall: Duration,
    aux_scalars: usize,
    n_eps: Option<usize>,
}

impl Solution {
    /// u^n on all nodes (boundary entries are exactly zero).
    pub fn final_field(&self) -> &[f64] {
        &self.final_field
    }

    /// u^n on the interior nodes j = 1…m−1.
    pub fn interior(&self) -> &[f64] {
        &self.final_field[1..self.final_field.len() - 1]
    }

    /// Stored (k, u^k) pairs in ascending k, empty unless requested.
    pub fn snapshots(&self) -> &[(usize, Vec<f64>)] {
        &self.snapshots
    }

    /// max over k = 0…n of ‖u^k‖_∞.
    pub fn max_sup_norm(&self) -> f64 {
        self.max_sup_norm
    }

    /// Wall-clock time of the march.
    pub fn wall(&self) -> Duration {
        self.wall
    }

    /// Number of f64 scalars of working storage the march held at once
    /// (grids, the problem closures and stored snapshots excluded).
    pub fn aux_scalars(&self) -> usize {
        self.aux_scalars
    }

    /// Number of exponential-sum terms, for the fast path only.
    pub fn n_eps(&self) -> Option<usize> {
        self.n_eps
    }

    /// CSV export, header `x,t,u`, one row per stored node; every stored
    /// snapshot is emitted, then the final level if not already stored.
    /// Values carry 17 significant digits so round-trips are bit-faithful.
    pub fn to_csv(&self, spatial: &SpatialGrid, time: &TimeGrid) -> String {
        let mut out = String::from("x,t,u\n");
        let mut emit = |k: usize, field: &[f64]| {
            let t = time.t(k);
            for (j, &u) in field.iter().enumerate() {
                out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", spatial.x(j), t, u));
            }
        };
        for (k, field) in &self.snapshots {
            emit(*k, field);
        }
        if self.snapshots.last().map(|(k, _)| *k) != Some(time.n()) {
            emit(time.n(), &self.final_field);
        }
        out
    }
}

/// Solve a tridiagonal system by the Thomas algorithm.
///
/// Row i reads sub[i−1]·x_{i−1} + diag[i]·x_i + sup[i]·x_{i+1} = rhs[i].
/// The matrix must be strictly diagonally dominant by rows — true by
/// construction for the schemes here, whose diagonal is 2+s_k > 2 — which
/// makes the elimination stable without pivoting.  O(len) time.
pub fn tridiagonal_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::InvalidGrid("empty tridiagonal system".into()));
    }
    if sub.len() != n - 1 {
        return Err(Error::LengthMismatch {
            what: "subdiagonal",
            expected: n - 1,
            got: sub.len(),
        });
    }
    if sup.len() != n - 1 {
        return Err(Error::LengthMismatch {
            what: "superdiagonal",
            expected: n - 1,
            got: sup.len(),
        });
    }
    if rhs.len() != n {
        return Err(Error::LengthMismatch {
            what: "right-hand side",
            expected: n,
            got: rhs.len(),
        });
    }
    for i in 0..n {
        let lower = if i > 0 { sub[i - 1].abs() } else { 0.0 };
        let upper = if i < n - 1 { sup[i].abs() } else { 0.0 };
        // Strict comparison so NaN bands fail dominance instead of passing.
        let dominant = diag[i].abs() > lower + upper;
        if !dominant {
            return Err(Error::NotDiagonallyDominant { row: i });
        }
    }
    if n == 1 {
        return Ok(vec![rhs[0] / diag[0]]);
    }
    let mut c = vec![0.0; n - 1];
    let mut d = vec![0.0; n];
    let mut x = vec![0.0; n];
    thomas_core(sub, diag, sup, rhs, &mut c, &mut d, &mut x);
    Ok(x)
}

/// Elimination/back-substitution core; `c` and `d` are scratch.  Split out
/// so the steppers can reuse their buffers across levels — the checked
/// wrapper above and this core must stay arithmetically identical.
fn thomas_core(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &[f64],
    c: &mut [f64],
    d: &mut [f64],
    x: &mut [f64],
) {
    let n = diag.len();
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let w = diag[i] - sub[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = sup[i] / w;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / w;
    }
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
}

/// s_k = Δx²·Δt^(−α_k)/Γ(2−α_k), the diagonal shift of level k's system.
fn step_scale(dx: f64, dt: f64, alpha_k: f64) -> f64 {
    dx * dx * dt.powf(-alpha_k) / gamma_pos(2.0 - alpha_k)
}

/// Bookkeeping shared by the marches: norm tracking and snapshot storage.
struct March {
    snapshots: Vec<(usize, Vec<f64>)>,
    every: Option<usize>,
    max_norm: f64,
    n: usize,
}

impl March {
    fn new(u0: &[f64], every: Option<usize>, n: usize) -> Self {
        let mut s = Self {
            snapshots: Vec::new(),
            every,
            max_norm: sup_norm(u0),
            n,
        };
        if every.is_some() {
            s.snapshots.push((0, u0.to_vec()));
        }
        s
    }

    fn record(&mut self, k: usize, field: &[f64]) {
        self.max_norm = self.max_norm.max(sup_norm(field));
        if let Some(every) = self.every {
            if (every > 0 && k.is_multiple_of(every)) || k == self.n {
                self.snapshots.push((k, field.to_vec()));
            }
        }
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, &x| acc.max(x.abs()))
}

/// March the L1 scheme: the full history sum on the right, one tridiagonal
/// solve per level.  O(mn²) time, O(mn) storage (every level is retained).
pub fn solve_l1(problem: &DiffusionProblem, opts: &SolveOptions) -> Result<Solution> {
    let start = Instant::now();
    let m = problem.spatial.m();
    let n = problem.time.n();
    let dt = problem.time.dt();
    let mi = m - 1;

    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    levels.push(problem.initial_field());
    let mut march = March::new(&levels[0], opts.snapshot_every, n);

    // ln j table: the weights (k−l)^(1−α_k) − (k−l−1)^(1−α_k) are rebuilt
    // every level because α_k changes, but the logs never do.
    let mut lnj = vec![0.0; n + 1];
    for (j, slot) in lnj.iter_mut().enumerate().skip(1) {
        *slot = (j as f64).ln();
    }
    let mut pw = vec![0.0; n + 1];
    let mut hist = vec![0.0; mi];
    let mut rhs = vec![0.0; mi];
    let mut c = vec![0.0; mi];
    let mut d = vec![0.0; mi];
    let mut unew = vec![0.0; m + 1];

    for k in 1..=n {
        let ak = problem.alpha.at(problem.time.t(k));
        let e = 1.0 - ak;
        pw[0] = 0.0;
        for j in 1..=k {
            pw[j] = (e * lnj[j]).exp();
        }
        // Grouped L1 history: Σ_{l=1}^{k−1} (a_l − a_{l−1}) u^l + a_0 u^0,
        // with a_l = pw[k−l] − pw[k−l−1]; accumulated level-major so the
        // inner loop streams each retained level once.
        let a0 = pw[k] - pw[k - 1];
        for (jj, h) in hist.iter_mut().enumerate() {
            *h = a0 * levels[0][jj + 1];
        }
        for l in 1..k {
            let coeff = (pw[k - l] - pw[k - l - 1]) - (pw[k - l + 1] - pw[k - l]);
            let ul = &levels[l];
            for (jj, h) in hist.iter_mut().enumerate() {
                *h += coeff * ul[jj + 1];
            }
        }
        let sk = step_scale(problem.spatial.dx(), dt, ak);
        problem.forcing_into(k, &mut rhs);
        for (r, &h) in rhs.iter_mut().zip(&hist) {
            *r += sk * h;
        }
        solve_level(sk, &rhs, &mut c, &mut d, &mut unew[1..m]);
        unew[0] = 0.0;
        unew[m] = 0.0;
        march.record(k, &unew);
        levels.push(unew.clone());
    }

    let aux = (n + 1) * (m + 1)   // retained levels
        + 2 * (n + 1)             // ln table + weight powers
        + 4 * mi                  // history, rhs, elimination scratch
        + (m + 1);                // assembly buffer
    Ok(Solution {
        final_field: levels.pop().expect("n >= 1 levels"),
        snapshots: march.snapshots,
        max_sup_norm: march.max_norm,
        wall: start.elapsed(),
        aux_scalars: aux,
        n_eps: None,
    })
}

/// Solve one level's system −u_{j−1} + (2+s_k)u_j − u_{j+1} = rhs_j.
fn solve_level(sk: f64, rhs: &[f64], c: &mut [f64], d: &mut [f64], x: &mut [f64]) {
    let mi = rhs.len();
    let diag = 2.0 + sk;
    // Thomas algorithm specialized to constant bands (−1, 2+s_k, −1);
    // arithmetically identical to `thomas_core` with those inputs.
    c[0] = -1.0 / diag;
    d[0] = rhs[0] / diag;
    for i in 1..mi {
        let w = diag + c[i - 1];
        if i < mi - 1 {
            c[i] = -1.0 / w;
        }
        d[i] = (rhs[i] + d[i - 1]) / w;
    }
    x[mi - 1] = d[mi - 1];
    for i in (0..mi - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
}

/// March the fast ESA scheme: every interior node keeps N_ε exponential
/// history moments; each level advances them all, contracts them with the
/// level's kernel weights and solves one tridiagonal system.  O(mn·N_ε)
/// time, O(m·N_ε) auxiliary storage, and no retained trajectory.
pub fn solve_fast_esa(
    problem: &DiffusionProblem,
    epsilon: f64,
    opts: &SolveOptions,
) -> Result<Solution> {
    let start = Instant::now();
    let m = problem.spatial.m();
    let n = problem.time.n();
    let dx = problem.spatial.dx();
    let dt = problem.time.dt();
    let mi = m - 1;

    let params = select_parameters(epsilon, problem.alpha, problem.time.horizon(), dt)?;
    let n_eps = params.n_terms();
    let stepper = HistoryStepper::new(&params, &problem.time);

    // Node-major moment bank: node j's N_ε moments are contiguous, so the
    // hot per-level pass streams the bank exactly once.
    let mut bank = vec![0.0; mi * n_eps];
    let mut theta = vec![0.0; n_eps];
    let mut hsum = vec![0.0; mi];
    let mut du = vec![0.0; mi];
    let mut rhs = vec![0.0; mi];
    let mut c = vec![0.0; mi];
    let mut d = vec![0.0; mi];

    let mut u_prev = problem.initial_field();
    let mut u_prev2 = vec![0.0; m + 1];
    let mut unew = vec![0.0; m + 1];
    let mut march = March::new(&u_prev, opts.snapshot_every, n);

    let pool = if opts.threads > 0 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(opts.threads)
                .build()
                .map_err(|e| Error::InvalidGrid(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let t_scale_base = problem.time.horizon();
    for k in 1..=n {
        let ak = problem.alpha.at(problem.time.t(k));
        let sk = step_scale(dx, dt, ak);
        problem.forcing_into(k, &mut rhs);

        if k >= 2 {
            for (slot, (&a, &b)) in du.iter_mut().zip(u_prev[1..m].iter().zip(&u_prev2[1..m])) {
                *slot = a - b;
            }
            kernel_weights_into(&params, ak, &mut theta);
            let decay = stepper.decay();
            let gain = stepper.gain();
            let theta_ref: &[f64] = &theta;
            // Advance the moments and contract with θ in one pass per node;
            // nodes are independent, so the parallel split cannot change
            // any result bit.
            let node_pass = |chunk: &mut [f64], duj: f64| -> f64 {
                let mut acc = 0.0;
                for ((v, (&dc, &g)), &th) in chunk
                    .iter_mut()
                    .zip(decay.iter().zip(gain))
                    .zip(theta_ref)
                {
                    *v = dc * *v + g * duj;
                    acc += th * *v;
                }
                acc
            };
            match &pool {
                Some(pool) => pool.install(|| {
                    bank.par_chunks_mut(n_eps)
                        .zip(du.par_iter())
                        .zip(hsum.par_iter_mut())
                        .with_min_len(32)
                        .for_each(|((chunk, &duj), h)| *h = node_pass(chunk, duj));
                }),
                None => {
                    for ((chunk, &duj), h) in
                        bank.chunks_mut(n_eps).zip(du.iter()).zip(hsum.iter_mut())
                    {
                        *h = node_pass(chunk, duj);
                    }
                }
            }
            let hist_scale = dx * dx * t_scale_base.powf(-ak) / gamma_pos(1.0 - ak);
            for ((r, &up), &h) in rhs.iter_mut().zip(&u_prev[1..m]).zip(&hsum) {
                *r += sk * up - hist_scale * h;
            }
        } else {
            for (r, &up) in rhs.iter_mut().zip(&u_prev[1..m]) {
                *r += sk * up;
            }
        }

        solve_level(sk, &rhs, &mut c, &mut d, &mut unew[1..m]);
        unew[0] = 0.0;
        unew[m] = 0.0;
        march.record(k, &unew);
        std::mem::swap(&mut u_prev2, &mut u_prev);
        std::mem::swap(&mut u_prev, &mut unew);
    }

    let aux = mi * n_eps        // moment bank
        + 4 * n_eps             // decay, gain, θ buffer (+ exponents)
        + 5 * mi                // du, hsum, rhs, elimination scratch
        + 3 * (m + 1);          // rolling levels + assembly buffer
    Ok(Solution {
        final_field: u_prev,
        snapshots: march.snapshots,
        max_sup_norm: march.max_norm,
        wall: start.elapsed(),
        aux_scalars: aux,
        n_eps: Some(n_eps),
    })
}

/// The per-level weights of the fast scheme written in its analyzed form
///
/// ```text
/// Δt^(−α_k)/Γ(2−α_k) · (u^k − Σ_{l=0}^{k−1} b_l^k u^l)  ≈  D^α(t_k) u,
/// ```
///
/// together with the correction ε_k and the diagonal shift s_k.
#[derive(Debug, Clone)]
pub struct SchemeCoefficients {
    level: usize,
    b: Vec<f64>,
    correction: f64,
    scale: f64,
}

impl SchemeCoefficients {
    /// Level k ≥ 1.
    pub fn level(&self) -> usize {
        self.level
    }

    /// b_l^k for l = 0…k−1.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// ε_k (zero at k = 1).
    pub fn correction(&self) -> f64 {
        self.correction
    }

    /// s_k = Δx²Δt^(−α_k)/Γ(2−α_k).
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Expand the fast scheme's history recursion into explicit level weights
/// b_l^k at one level.  O(k·N_ε) — analysis and testing only, never on the
/// production path.
///
/// The weights come from the closed-form segment integrals
/// ∫ e^(−λ_i(t_k−τ)/T) dτ over [t_l, t_{l+1}] and satisfy (k ≥ 2):
/// b_l^k > 0 for l ≤ k−2, Σ_l b_l^k = 1, and b_{k−1}^k + ε_k > 0.
pub fn scheme_coefficients(
    params: &EsaParams,
    alpha: &OrderFunction,
    k: usize,
    grid: &TimeGrid,
    dx: f64,
) -> SchemeCoefficients {
    assert!(k >= 1 && k <= grid.n(), "level k = {k} outside 1..={}", grid.n());
    let dt = grid.dt();
    let horizon = grid.horizon();
    let ak = alpha.at(grid.t(k));
    let scale = step_scale(dx, dt, ak);
    if k == 1 {
        return SchemeCoefficients {
            level: 1,
            b: vec![1.0],
            correction: 0.0,
            scale,
        };
    }
    let mut theta = vec![0.0; params.n_terms()];
    kernel_weights_into(params, ak, &mut theta);
    let ck = horizon.powf(-ak) * dt.powf(ak - 1.0) * (1.0 - ak);
    let t_k = grid.t(k);
    // I_l = Σ_i θ_i ∫ over [t_l, t_{l+1}] of e^(−λ_i(t_k−τ)/T) dτ, via the
    // expm1 form of the segment integral (the naive difference of two
    // nearby exponentials loses 10 digits for the small exponents).
    let seg_integral = |l: usize| -> f64 {
        theta
            .iter()
            .zip(params.exponents())
            .map(|(&th, &lam)| {
                th * (horizon / lam)
                    * (-lam * (t_k - grid.t(l + 1)) / horizon).exp()
                    * (-(-lam * dt / horizon).exp_m1())
            })
            .sum()
    };
    let i_vals: Vec<f64> = (0..k - 1).map(seg_integral).collect();
    let mut b = Vec::with_capacity(k);
    b.push(ck * i_vals[0]);
    for l in 1..k - 1 {
        b.push(ck * (i_vals[l] - i_vals[l - 1]));
    }
    b.push(1.0 - ck * i_vals[k - 2]);
    let epsilon = params.epsilon();
    let correction = (epsilon / (1.0 + epsilon)) * ck * i_vals[k - 2];
    SchemeCoefficients {
        level: k,
        b,
        correction,
        scale,
    }
}

/// March the fast scheme from its explicit b-coefficients instead of the
/// history recursion: level k's right-hand side is s_k·Σ_l b_l^k u^l plus
/// the forcing.  O(mn²·N_ε) — the cross-check tying [`solve_fast_esa`] to
/// the analyzed form; every level is stored as a snapshot.
pub fn solve_fast_direct(problem: &DiffusionProblem, epsilon: f64) -> Result<Solution> {
    let start = Instant::now();
    let m = problem.spatial.m();
    let n = problem.time.n();
    let dt = problem.time.dt();
    let mi = m - 1;
    let params = select_parameters(epsilon, problem.alpha, problem.time.horizon(), dt)?;

    let mut levels: Vec<Vec<f64>> = vec![problem.initial_field()];
    let mut march = March::new(&levels[0], Some(1), n);
    let mut rhs = vec![0.0; mi];
    let mut c = vec![0.0; mi];
    let mut d = vec![0.0; mi];
    let mut unew = vec![0.0; m + 1];

    for k in 1..=n {
        let coeffs = scheme_coefficients(&params, problem.alpha, k, &problem.time, problem.spatial.dx());
        let sk = coeffs.scale();
        problem.forcing_into(k, &mut rhs);
        for (l, &bl) in coeffs.b().iter().enumerate() {
            let ul = &levels[l];
            for (r, &u) in rhs.iter_mut().zip(&ul[1..m]) {
                *r += sk * bl * u;
            }
        }
        solve_level(sk, &rhs, &mut c, &mut d, &mut unew[1..m]);
        unew[0] = 0.0;
        unew[m] = 0.0;
        march.record(k, &unew);
        levels.push(unew.clone());
    }

    let aux = (n + 1) * (m + 1) + 3 * params.n_terms() + 3 * mi + (m + 1);
    Ok(Solution {
        final_field: levels.pop().expect("n >= 1 levels"),
        snapshots: march.snapshots,
        max_sup_norm: march.max_norm,
        wall: start.elapsed(),
        aux_scalars: aux,
        n_eps: Some(params.n_terms()),
    })
}

/// Both sides of the a-priori stability bound of the fast scheme.
#[derive(Debug, Clone, Copy)]
pub struct StabilityReport {
    /// max_k ‖f(·, t_k)‖_∞ over interior nodes.
    pub c_f: f64,
    /// max_k Γ(1−α_k).
    pub c_gamma: f64,
    /// e^T‖u^0‖_∞ + c_f·c_γ·(e^T/(1−ε))·T^ᾱ.
    pub bound: f64,
    /// max_k ‖u^k‖_∞ actually reached by the march.
    pub max_norm: f64,
    /// bound − max_norm; nonnegative when the solve respects the theory.
    pub slack: f64,
}

/// Evaluate the unconditional-stability bound
///
/// ```text
/// ‖u^k‖_∞ ≤ e^T ‖u^0‖_∞ + c_f c_γ (e^T/(1−ε)) T^ᾱ
/// ```
///
/// against the largest sup-norm the solve actually produced.  A negative
/// slack would falsify the implementation, not the estimate.
pub fn stability_check(
    problem: &DiffusionProblem,
    solution: &Solution,
    epsilon: f64,
) -> StabilityReport {
    let n = problem.time.n();
    let m = problem.spatial.m();
    let mut c_f = 0.0f64;
    let mut c_gamma = 0.0f64;
    for k in 1..=n {
        let t = problem.time.t(k);
        for j in 1..m {
            c_f = c_f.max((problem.source)(problem.spatial.x(j), t).abs());
        }
        c_gamma = c_gamma.max(gamma_pos(1.0 - problem.alpha.at(t)));
    }
    let u0_norm = sup_norm(&problem.initial_field());
    let horizon = problem.time.horizon();
    let e_t = horizon.exp();
    let bound = e_t * u0_norm
        + c_f * c_gamma * (e_t / (1.0 - epsilon)) * horizon.powf(problem.alpha.hi());
    let max_norm = solution.max_sup_norm();
    StabilityReport {
        c_f,
        c_gamma,
        bound,
        max_norm,
        slack: bound - max_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esa::AlphaFamily;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    // The manufactured problem used throughout: exact solution
    // u = 10x²(1−x)(t+1)² on [0,1]×[0,1], which forces
    // f = 20x²(1−x)·(t^(2−α)/Γ(3−α) + t^(1−α)/Γ(2−α)) − 20(t+1)²(1−3x).
    fn poly_exact(x: f64, t: f64) -> f64 {
        10.0 * x * x * (1.0 - x) * (t + 1.0) * (t + 1.0)
    }

    fn poly_source(alpha: &OrderFunction) -> impl Fn(f64, f64) -> f64 + Sync + '_ {
        move |x: f64, t: f64| {
            let a = alpha.at(t);
            20.0 * x * x * (1.0 - x)
                * (t.powf(2.0 - a) / gamma_pos(3.0 - a) + t.powf(1.0 - a) / gamma_pos(2.0 - a))
                - 20.0 * (t + 1.0) * (t + 1.0) * (1.0 - 3.0 * x)
        }
    }

    fn poly_initial(x: f64) -> f64 {
        poly_exact(x, 0.0)
    }

    fn grids(m: usize, n: usize) -> (SpatialGrid, TimeGrid) {
        (SpatialGrid::new(1.0, m).unwrap(), TimeGrid::new(1.0, n).unwrap())
    }

    fn final_error(solution: &Solution, spatial: &SpatialGrid, t: f64) -> f64 {
        solution
            .final_field()
            .iter()
            .enumerate()
            .map(|(j, &u)| (u - poly_exact(spatial.x(j), t)).abs())
            .fold(0.0, f64::max)
    }

    fn dense_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            let (pivot_part, below) = a.split_at_mut(col + 1);
            let pivot_row = &pivot_part[col];
            let pivot_b = b[col];
            for (row, rhs) in below.iter_mut().zip(&mut b[col + 1..]) {
                let factor = row[col] / pivot_row[col];
                for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= factor * p;
                }
                *rhs -= factor * pivot_b;
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut s = b[row];
            for col in row + 1..n {
                s -= a[row][col] * x[col];
            }
            x[row] = s / a[row][row];
        }
        x
    }

    #[test]
    fn spatial_grid_invariants() {
        let g = SpatialGrid::new(2.0, 8).unwrap();
        assert_relative_eq!(g.m() as f64 * g.dx(), g.right(), max_relative = 1e-14);
        assert_eq!(g.x(0), 0.0);
        assert!(SpatialGrid::new(1.0, 1).is_err());
        assert!(SpatialGrid::new(-1.0, 8).is_err());
    }

    #[test]
    fn thomas_identity_system_returns_rhs() {
        let rhs = [3.0, -1.0, 2.5, 0.0];
        let x = tridiagonal_solve(&[0.0; 3], &[1.0; 4], &[0.0; 3], &rhs).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn thomas_matches_dense_oracle_on_random_dominant_system() {
        // Fixed pseudo-random values; dominance enforced by construction.
        let sub = [0.4, -0.7, 0.2, 0.9];
        let sup = [-0.3, 0.8, -0.5, 0.1];
        let diag = [2.1, -2.4, 2.9, 2.2, 1.8];
        let rhs = [1.0, -2.0, 0.5, 3.0, -1.5];
        let x = tridiagonal_solve(&sub, &diag, &sup, &rhs).unwrap();
        let mut a = vec![vec![0.0; 5]; 5];
        for i in 0..5 {
            a[i][i] = diag[i];
            if i > 0 {
                a[i][i - 1] = sub[i - 1];
            }
            if i < 4 {
                a[i][i + 1] = sup[i];
            }
        }
        let mut b = rhs.to_vec();
        let dense = dense_solve(&mut a, &mut b);
        for (xi, di) in x.iter().zip(&dense) {
            assert_abs_diff_eq!(xi, di, epsilon = 1e-12);
        }
    }

    #[test]
    fn thomas_scheme_system_has_tiny_residual() {
        // A system shaped exactly like one solver level: bands (−1, 2+s, −1).
        let s = 0.37;
        let mi = 9;
        let rhs: Vec<f64> = (0..mi).map(|i| ((i * i) as f64).sin()).collect();
        let sub = vec![-1.0; mi - 1];
        let sup = vec![-1.0; mi - 1];
        let diag = vec![2.0 + s; mi];
        let x = tridiagonal_solve(&sub, &diag, &sup, &rhs).unwrap();
        let norm = rhs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for i in 0..mi {
            let mut lhs = (2.0 + s) * x[i];
            if i > 0 {
                lhs -= x[i - 1];
            }
            if i < mi - 1 {
                lhs -= x[i + 1];
            }
            assert_abs_diff_eq!(lhs, rhs[i], epsilon = 1e-12 * norm);
        }
    }

    #[test]
    fn thomas_rejects_bad_shapes_and_weak_diagonals() {
        assert!(tridiagonal_solve(&[], &[], &[], &[]).is_err());
        assert!(tridiagonal_solve(&[1.0], &[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]).is_err());
        let r = tridiagonal_solve(&[1.0], &[1.0, 3.0], &[2.0], &[0.0, 0.0]);
        assert!(matches!(r, Err(Error::NotDiagonallyDominant { row: 0 })), "{r:?}");
    }

    #[test]
    fn specialized_level_solve_matches_general_thomas_bitwise() {
        let s = 1.234e-2;
        let mi = 17;
        let rhs: Vec<f64> = (0..mi).map(|i| (i as f64 * 0.7).cos()).collect();
        let general = tridiagonal_solve(&vec![-1.0; mi - 1], &vec![2.0 + s; mi], &vec![-1.0; mi - 1], &rhs)
            .unwrap();
        let (mut c, mut d, mut x) = (vec![0.0; mi], vec![0.0; mi], vec![0.0; mi]);
        solve_level(s, &rhs, &mut c, &mut d, &mut x);
        // Same recurrences up to the sign folding of the constant bands;
        // agreement must be exact to the last ulp-or-two.
        for (a, b) in x.iter().zip(&general) {
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }
    }

    #[test]
    fn zero_data_stays_exactly_zero() {
        let alpha = OrderFunction::sin5(0.05, 1.0).unwrap();
        let (spatial, time) = grids(10, 20);
        let zero2 = |_: f64, _: f64| 0.0;
        let zero1 = |_: f64| 0.0;
        let problem = DiffusionProblem::new(spatial, time, &alpha, &zero2, &zero1);
        let opts = SolveOptions {
            snapshot_every: Some(1),
            ..Default::default()
        };
        for sol in [
            solve_l1(&problem, &opts).unwrap(),
            solve_fast_esa(&problem, 1e-6, &opts).unwrap(),
        ] {
            assert_eq!(sol.max_sup_norm(), 0.0);
            assert!(sol
                .snapshots()
                .iter()
                .all(|(_, field)| field.iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn l1_matches_hand_assembled_dense_solve_at_tiny_scale() {
        // m = 4, n = 2: assemble each level's 3×3 system from scratch with
        // its own weight arithmetic and solve densely.
        let time = TimeGrid::new(1.0, 2).unwrap();
        let alpha = OrderFunction::sin5(time.dt(), 1.0).unwrap();
        let spatial = SpatialGrid::new(1.0, 4).unwrap();
        let src = poly_source(&alpha);
        let init = poly_initial;
        let problem = DiffusionProblem::new(spatial.clone(), time.clone(), &alpha, &src, &init);
        let opts = SolveOptions {
            snapshot_every: Some(1),
            ..Default::default()
        };
        let sol = solve_l1(&problem, &opts).unwrap();

        let (dx, dt) = (spatial.dx(), time.dt());
        let u0: Vec<f64> = (0..=4).map(|j| poly_initial(spatial.x(j))).collect();
        // Level 1.
        let a1 = alpha.at(dt);
        let s1 = dx * dx * dt.powf(-a1) / gamma_pos(2.0 - a1);
        let mut mat: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| {
                        if i == j {
                            2.0 + s1
                        } else if (i as i64 - j as i64).abs() == 1 {
                            -1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let mut rhs1: Vec<f64> = (1..4)
            .map(|j| s1 * u0[j] + dx * dx * src(spatial.x(j), dt))
            .collect();
        let u1 = dense_solve(&mut mat, &mut rhs1);
        // Level 2: weights a_0 = 2^(1−α) − 1, a_1 = 1 at order α(t_2).
        let a2 = alpha.at(2.0 * dt);
        let s2 = dx * dx * dt.powf(-a2) / gamma_pos(2.0 - a2);
        let w0 = 2.0f64.powf(1.0 - a2) - 1.0;
        let mut mat2: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| {
                        if i == j {
                            2.0 + s2
                        } else if (i as i64 - j as i64).abs() == 1 {
                            -1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let mut rhs2: Vec<f64> = (1..4)
            .map(|j| {
                s2 * ((1.0 - w0) * u1[j - 1] + w0 * u0[j]) + dx * dx * src(spatial.x(j), 2.0 * dt)
            })
            .collect();
        let u2 = dense_solve(&mut mat2, &mut rhs2);

        let snap1 = &sol.snapshots()[1].1;
        for (j, &v) in u1.iter().enumerate() {
            assert_abs_diff_eq!(snap1[j + 1], v, epsilon = 1e-12);
        }
        for (j, &v) in u2.iter().enumerate() {
            assert_abs_diff_eq!(sol.final_field()[j + 1], v, epsilon = 1e-12);
        }
    }

    #[test]
    fn solvers_converge_on_the_manufactured_problem() {
        // Frozen small-scale values (m = 50, n = 200, ε = Δt²):
        // L1 final error 4.752232e-6, fast 9.004605e-6.
        let time = TimeGrid::new(1.0, 200).unwrap();
        let alpha = OrderFunction::sin5(time.dt(), 1.0).unwrap();
        let spatial = SpatialGrid::new(1.0, 50).unwrap();
        let src = poly_source(&alpha);
        let init = poly_initial;
        let problem = DiffusionProblem::new(spatial.clone(), time.clone(), &alpha, &src, &init);
        let opts = SolveOptions::default();
        let sol_l1 = solve_l1(&problem, &opts).unwrap();
        let eps = time.dt() * time.dt();
        let sol_fast = solve_fast_esa(&problem, eps, &opts).unwrap();
        assert_relative_eq!(final_error(&sol_l1, &spatial, 1.0), 4.752232e-6, max_relative = 1e-4);
        assert_relative_eq!(final_error(&sol_fast, &spatial, 1.0), 9.004605e-6, max_relative = 1e-4);
        assert_eq!(sol_fast.n_eps(), Some(98));
        assert_eq!(sol_l1.n_eps(), None);
    }

    #[test]
    fn fast_tracks_l1_linearly_in_epsilon() {
        // max_{j,k} |u_fast − u_L1| must shrink proportionally to ε.
        let time = TimeGrid::new(1.0, 100).unwrap();
        let alpha = OrderFunction::sin5(time.dt(), 1.0).unwrap();
        let spatial = SpatialGrid::new(1.0, 20).unwrap();
        let src = poly_source(&alpha);
        let init = poly_initial;
        let problem = DiffusionProblem::new(spatial, time, &alpha, &src, &init);
        let opts = SolveOptions {
            snapshot_every: Some(1),
            ..Default::default()
        };
        let l1 = solve_l1(&problem, &opts).unwrap();
        let mut gaps = Vec::new();
        for eps in [4e-4, 2e-4, 1e-4] {
            let fast = solve_fast_esa(&problem, eps, &opts).unwrap();
            let gap = l1
                .snapshots()
                .iter()
                .zip(fast.snapshots())
                .flat_map(|((_, a), (_, b))| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            assert!(gap <= 2.0 * eps, "gap {gap} vs eps {eps}");
            gaps.push(gap / eps);
        }
        // The normalized gaps estimate the constant C; halving ε twice must
        // leave it of the same size.
        let (lo, hi) = (
            gaps.iter().fold(f64::INFINITY, |a, &b| a.min(b)),
            gaps.iter().fold(0.0f64, |a, &b| a.max(b)),
        );
        assert!(hi / lo <= 4.0, "C estimates spread too far: {gaps:?}");
    }

    #[test]
    fn parallel_solve_is_bitwise_identical_to_sequential() {
        let time = TimeGrid::new(1.0, 60).unwrap();
        let alpha = OrderFunction::linear(time.dt(), 1.0).unwrap();
        let spatial = SpatialGrid::new(1.0, 30).unwrap();
        let src = poly_source(&alpha);
        let init = poly_initial;
        let problem = DiffusionProblem::new(spatial, time, &alpha, &src, &init);
        let seq = solve_fast_esa(&problem, 1e-6, &SolveOptions::default()).unwrap();
        let par = solve_fast_esa(
            &problem,
            1e-6,
            &SolveOptions {
                threads: 3,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in seq.final_field().iter().zip(par.final_field()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn scheme_coefficients_satisfy_the_weight_laws() {
        let time = TimeGrid::new(1.0, 50).unwrap();
        let alpha = OrderFunction::sin5(time.dt(), 1.0).unwrap();
        let eps = time.dt() * time.dt();
        let params = select_parameters(eps, &alpha, 1.0, time.dt()).unwrap();
        let dx = 0.02;

        let c1 = scheme_coefficients(&params, &alpha, 1, &time, dx);
        assert_eq!(c1.b(), &[1.0]);
        assert_eq!(c1.correction(), 0.0);

        for k in [2usize, 3, 7, 25, 50] {
            let c = scheme_coefficients(&params, &alpha, k, &time, dx);
            assert_eq!(c.b().len(), k);
            assert_eq!(c.level(), k);
            let b = c.b();
            assert!(b[..k - 1].iter().all(|&v| v > 0.0), "k = {k}: {b:?}");
            let sum: f64 = b.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
            let ek = c.correction();
            assert!(b[k - 1] + ek > 0.0);
            assert!(b[k - 1].abs() <= b[k - 1] + 2.0 * ek);
            assert!(sum + 2.0 * ek <= 1.0 + 2.0 * eps);
            // Sharper lower bound from the weight analysis: the last weight
            // plus its correction dominates the L1 value 2 − 2^(1−α_k).
            let ak = alpha.at(time.t(k));
            assert!(
                b[k - 1] + ek >= 2.0 - 2f64.powf(1.0 - ak),
                "k = {k}: {} vs {}",
                b[k - 1] + ek,
                2.0 - 2f64.powf(1.0 - ak)
            );
            let sk = dx * dx * time.dt().powf(-ak) / gamma_pos(2.0 - ak);
            assert_relative_eq!(c.scale(), sk, max_relative = 1e-15);
        }
    }

    #[test]
    fn recursive_and_direct_fast_marches_agree() {
        // The O(N_ε)-per-step recursion and the explicit b-coefficient march
        // are algebraically the same scheme; trajectories must agree to
        // 1e-11 relative at small scale.
        let time = TimeGrid::new(1.0, 50).unwrap();
        let alpha = OrderFunction::sin5(time.dt(), 1.0).unwrap();
        let spatial = SpatialGrid::new(1.0, 20).unwrap();
        let src = poly_source(&alpha);
        let init = poly_initial;
        let problem = DiffusionProblem::new(spatial, time, &alpha, &src, &init);
        let opts = SolveOptions {
            snapshot_every: Some(1),
            ..Default::default()
        };
        let rec = solve_fast_esa(&problem, 1e-6, &opts).unwrap();
        let dir = solve_fast_direct(&problem, 1e-6).unwrap();
        assert_eq!(rec.snapshots().len(), dir.snapshots().len());
        let scale = rec.max_sup_norm();
        for ((ka, a), (kb, b)) in rec.snapshots().iter().zip(dir.snapshots()) {
            assert_eq!(ka, kb);
            for (x, y) in a.iter().zip(b) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-11 * scale);
            }
        }
    }

    #[test]
    fn homogeneous_profile_obeys_the_discrete_maximum_principle() {
        // f ≡ 0, φ ≥ 0: each level is bounded by (1+2ε)^k‖u^0‖_∞.
        let time = TimeGrid::new(1.0, 80).unwrap();
        let alpha = OrderFunction::sin5(time.dt(), 1.0).unwrap();
        let spatial = SpatialGrid::new(1.0, 25).unwrap();
        let zero2 = |_: f64, _: f64| 0.0;
        let bump = |x: f64| x * (1.0 - x);
        let problem = DiffusionProblem::new(spatial, time, &alpha, &zero2, &bump);
        let eps = 1e-6;
        let sol = solve_fast_esa(
            &problem,
            eps,
            &SolveOptions {
                snapshot_every: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        let u0_norm = sup_norm(&sol.snapshots()[0].1);
        for (k, field) in sol.snapshots() {
            let bound = (1.0 + 2.0 * eps).powi(*k as i32) * u0_norm;
            assert!(
                sup_norm(field) <= bound * (1.0 + 1e-13),
                "level {k}: {} > {bound}",
                sup_norm(field)
            );
        }
    }

    #[test]
    fn stability_bound_holds_with_positive_slack() {
        let time = TimeGrid::new(1.0, 200).unwrap();
        let alpha = OrderFunction::sin5(time.dt(), 1.0).unwrap();
        let spatial = SpatialGrid::new(1.0, 50).unwrap();
        let src = poly_source(&alpha);
        let init = poly_initial;
        let problem = DiffusionProblem::new(spatial, time.clone(), &alpha, &src, &init);
        let eps = time.dt() * time.dt();
        let sol = solve_fast_esa(&problem, eps, &SolveOptions::default()).unwrap();
        let report = stability_check(&problem, &sol, eps);
        assert!(report.slack > 0.0, "{report:?}");
        assert!(report.c_f > 0.0 && report.c_gamma >= 1.0);

        // Scaling f and φ by 10 scales both sides; the slack scales too.
        let src10 = |x: f64, t: f64| 10.0 * src(x, t);
        let init10 = |x: f64| 10.0 * poly_initial(x);
        let spatial10 = SpatialGrid::new(1.0, 50).unwrap();
        let problem10 = DiffusionProblem::new(spatial10, time, &alpha, &src10, &init10);
        let sol10 = solve_fast_esa(&problem10, eps, &SolveOptions::default()).unwrap();
        let report10 = stability_check(&problem10, &sol10, eps);
        assert!(report10.slack > 0.0);
        assert_relative_eq!(report10.bound, 10.0 * report.bound, max_relative = 1e-10);
        assert_relative_eq!(report10.max_norm, 10.0 * report.max_norm, max_relative = 1e-9);
    }

    #[test]
    fn zero_problem_stability_report_is_trivial() {
        let time = TimeGrid::new(1.0, 20).unwrap();
        let alpha = OrderFunction::sin5(time.dt(), 1.0).unwrap();
        let spatial = SpatialGrid::new(1.0, 8).unwrap();
        let zero2 = |_: f64, _: f64| 0.0;
        let zero1 = |_: f64| 0.0;
        let problem = DiffusionProblem::new(spatial, time, &alpha, &zero2, &zero1);
        let sol = solve_fast_esa(&problem, 1e-6, &SolveOptions::default()).unwrap();
        let report = stability_check(&problem, &sol, 1e-6);
        assert_eq!(report.max_norm, 0.0);
        assert_eq!(report.c_f, 0.0);
        assert!(report.bound >= 0.0 && report.slack >= 0.0);
    }

    #[test]
    fn fast_auxiliary_storage_is_bank_plus_linear_overhead() {
        let time = TimeGrid::new(1.0, 50).unwrap();
        let alpha = OrderFunction::sin5(time.dt(), 1.0).unwrap();
        let spatial = SpatialGrid::new(1.0, 40).unwrap();
        let src = poly_source(&alpha);
        let init = poly_initial;
        let m = spatial.m();
        let problem = DiffusionProblem::new(spatial, time, &alpha, &src, &init);
        let sol = solve_fast_esa(&problem, 1e-6, &SolveOptions::default()).unwrap();
        let n_eps = sol.n_eps().unwrap();
        let bank = (m - 1) * n_eps;
        assert!(sol.aux_scalars() >= bank);
        assert!(
            sol.aux_scalars() - bank <= 4 * n_eps + 9 * (m + 1),
            "aux {} vs bank {bank}",
            sol.aux_scalars()
        );
    }

    #[test]
    fn boundary_entries_are_always_zero() {
        let time = TimeGrid::new(1.0, 30).unwrap();
        let alpha = OrderFunction::linear(time.dt(), 1.0).unwrap();
        let spatial = SpatialGrid::new(1.0, 12).unwrap();
        let src = poly_source(&alpha);
        // φ deliberately violates the boundary data; the solver clamps it.
        let bad_init = |x: f64| x + 1.0;
        let problem = DiffusionProblem::new(spatial, time, &alpha, &src, &bad_init);
        let opts = SolveOptions {
            snapshot_every: Some(7),
            ..Default::default()
        };
        for sol in [
            solve_l1(&problem, &opts).unwrap(),
            solve_fast_esa(&problem, 1e-4, &opts).unwrap(),
        ] {
            assert_eq!(sol.final_field()[0], 0.0);
            assert_eq!(*sol.final_field().last().unwrap(), 0.0);
            assert_eq!(sol.interior().len(), 11);
            for (_, field) in sol.snapshots() {
                assert_eq!(field[0], 0.0);
                assert_eq!(*field.last().unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn csv_export_round_trips_and_orders_rows() {
        let time = TimeGrid::new(1.0, 4).unwrap();
        let alpha = OrderFunction::sin5(time.dt(), 1.0).unwrap();
        let spatial = SpatialGrid::new(1.0, 3).unwrap();
        let src = poly_source(&alpha);
        let init = poly_initial;
        let problem = DiffusionProblem::new(spatial.clone(), time.clone(), &alpha, &src, &init);
        let sol = solve_fast_esa(
            &problem,
            1e-4,
            &SolveOptions {
                snapshot_every: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        let csv = sol.to_csv(&spatial, &time);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("x,t,u"));
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        // Snapshots at k = 0, 2, 4: three levels of four nodes each.
        assert_eq!(rows.len(), 3 * 4);
        assert_eq!(rows[0][1], 0.0);
        assert_eq!(rows[11][1], 1.0);
        // Bit-faithful round-trip of the final level.
        for (j, row) in rows[8..].iter().enumerate() {
            assert_eq!(row[2].to_bits(), sol.final_field()[j].to_bits());
        }
        // Without snapshots only the final level is emitted.
        let bare = solve_fast_esa(&problem, 1e-4, &SolveOptions::default()).unwrap();
        assert_eq!(bare.to_csv(&spatial, &time).lines().count(), 1 + 4);
    }

    #[test]
    fn both_alpha_families_reproduce_frozen_linear_preset_errors() {
        // Companion frozen values for α = 1 − 0.8t at m = 50, n = 200:
        // L1 4.430284e-6, fast 1.080668e-5, N_ε = 121.
        let time = TimeGrid::new(1.0, 200).unwrap();
        let alpha = AlphaFamily::Linear.instantiate(time.dt(), 1.0).unwrap();
        let spatial = SpatialGrid::new(1.0, 50).unwrap();
        let src = poly_source(&alpha);
        let init = poly_initial;
        let problem = DiffusionProblem::new(spatial.clone(), time.clone(), &alpha, &src, &init);
        let sol_l1 = solve_l1(&problem, &SolveOptions::default()).unwrap();
        let eps = time.dt() * time.dt();
        let sol_fast = solve_fast_esa(&problem, eps, &SolveOptions::default()).unwrap();
        assert_relative_eq!(final_error(&sol_l1, &spatial, 1.0), 4.430284e-6, max_relative = 1e-4);
        assert_relative_eq!(final_error(&sol_fast, &spatial, 1.0), 1.080668e-5, max_relative = 1e-4);
        assert_eq!(sol_fast.n_eps(), Some(121));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn thomas_solves_random_dominant_systems(
            diag_extra in proptest::collection::vec(0.1f64..2.0, 6),
            off in proptest::collection::vec(-1.0f64..1.0, 10),
            rhs in proptest::collection::vec(-5.0f64..5.0, 6),
        ) {
            let n = 6;
            let sub: Vec<f64> = off[..n - 1].to_vec();
            let sup: Vec<f64> = off[n - 1..].to_vec();
            let diag: Vec<f64> = (0..n)
                .map(|i| {
                    let lower = if i > 0 { sub[i - 1].abs() } else { 0.0 };
                    let upper = if i < n - 1 { sup[i].abs() } else { 0.0 };
                    lower + upper + diag_extra[i]
                })
                .collect();
            let x = tridiagonal_solve(&sub, &diag, &sup, &rhs).unwrap();
            let norm = rhs.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
            for i in 0..n {
                let mut lhs = diag[i] * x[i];
                if i > 0 { lhs += sub[i - 1] * x[i - 1]; }
                if i < n - 1 { lhs += sup[i] * x[i + 1]; }
                prop_assert!((lhs - rhs[i]).abs() <= 1e-10 * norm);
            }
        }

        #[test]
        fn scheme_weights_sum_to_one_for_random_levels(k in 2usize..40) {
            let time = TimeGrid::new(1.0, 40).unwrap();
            let alpha = OrderFunction::sin5(time.dt(), 1.0).unwrap();
            let params = select_parameters(1e-4, &alpha, 1.0, time.dt()).unwrap();
            let c = scheme_coefficients(&params, &alpha, k, &time, 0.05);
            let sum: f64 = c.b().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
    }
}

//! Manufactured-solution problems, error metrics and refinement studies.
//!
//! Everything here exists to measure the solvers against known answers:
//! two canonical test problems (a temporal ODE with exact solution t² and
//! a diffusion problem with exact solution 10x²(1−x)(t+1)²), a third
//! manufactured problem with a non-polynomial spatial profile, the
//! final-time sup-norm error Err(Δx,Δt) = ‖E^n‖_∞, the order estimator
//! Order_t = log₂(Err_r/Err_{r+1}), and schedule-driven refinement studies
//! that produce [`ConvergenceTable`]s with timing and storage counters.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use crate::caputo::{caputo_oracle, EsaHistory, HistoryStepper, TimeGrid};
use crate::diffusion::{
    solve_fast_esa, solve_l1, DiffusionProblem, SolveOptions, Solution, SpatialGrid,
};
use crate::error::{Error, Result};
use crate::esa::{kernel_weights_into, select_parameters, AlphaFamily, EpsilonRule, OrderFunction};
use crate::gamma::gamma_pos;

type Scalar1 = Box<dyn Fn(f64) -> f64 + Send + Sync>;
type Scalar2 = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type Scalar3 = Box<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A temporal test problem D^α(t) u(t) = source(t) with known exact
/// solution.  The source handle receives (t, α(t)) so one problem serves
/// every order function.
pub struct ManufacturedOde {
    horizon: f64,
    source: Scalar2,
    exact: Scalar1,
    exact_prime: Scalar1,
}

impl ManufacturedOde {
    /// Final time T.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Right-hand side at (t, α(t)).
    pub fn source(&self, t: f64, alpha_t: f64) -> f64 {
        (self.source)(t, alpha_t)
    }

    /// Exact solution u(t).
    pub fn exact(&self, t: f64) -> f64 {
        (self.exact)(t)
    }

    /// Exact derivative u′(t), consumed by the quadrature oracle.
    pub fn exact_prime(&self, t: f64) -> f64 {
        (self.exact_prime)(t)
    }

    /// |D^α u(t) − source(t)| with the derivative taken by the quadrature
    /// oracle — the consistency check that the stored source really is the
    /// derivative of the stored solution.
    pub fn residual(&self, alpha: &OrderFunction, t: f64) -> Result<f64> {
        let d = caputo_oracle(&|tau| self.exact_prime(tau), alpha, t)?;
        Ok((d - self.source(t, alpha.at(t))).abs())
    }
}

/// The ODE test problem with exact solution u(t) = t², i.e.
/// D^α(t) u = 2t^(2−α(t))/Γ(3−α(t)) on [0, 1].
pub fn example1() -> ManufacturedOde {
    ManufacturedOde {
        horizon: 1.0,
        source: Box::new(|t, a| 2.0 * t.powf(2.0 - a) / gamma_pos(3.0 - a)),
        exact: Box::new(|t| t * t),
        exact_prime: Box::new(|t| 2.0 * t),
    }
}

/// A diffusion test problem with known exact solution.  As with the ODE,
/// the source handle receives the current order as its last argument.
pub struct ManufacturedPde {
    width: f64,
    horizon: f64,
    source: Scalar3,
    initial: Scalar1,
    exact: Scalar2,
    exact_dt: Scalar2,
    exact_dxx: Scalar2,
}

impl ManufacturedPde {
    /// Right endpoint x_R.
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Final time T.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// f(x, t) given α(t).
    pub fn source(&self, x: f64, t: f64, alpha_t: f64) -> f64 {
        (self.source)(x, t, alpha_t)
    }

    /// φ(x) = u(x, 0).
    pub fn initial(&self, x: f64) -> f64 {
        (self.initial)(x)
    }

    /// Exact solution u(x, t).
    pub fn exact(&self, x: f64, t: f64) -> f64 {
        (self.exact)(x, t)
    }

    /// Exact time derivative ∂u/∂t, consumed by the quadrature oracle.
    pub fn exact_dt(&self, x: f64, t: f64) -> f64 {
        (self.exact_dt)(x, t)
    }

    /// Exact second space derivative ∂²u/∂x².
    pub fn exact_dxx(&self, x: f64, t: f64) -> f64 {
        (self.exact_dxx)(x, t)
    }

    /// |D^α u − ∂²u/∂x² − f| at one (x, t), the time derivative evaluated
    /// by the quadrature oracle.  Near zero iff the stored pieces are
    /// mutually consistent.
    pub fn residual(&self, alpha: &OrderFunction, x: f64, t: f64) -> Result<f64> {
        let d = caputo_oracle(&|tau| self.exact_dt(x, tau), alpha, t)?;
        Ok((d - self.exact_dxx(x, t) - self.source(x, t, alpha.at(t))).abs())
    }
}

/// The diffusion test problem with exact solution u = 10x²(1−x)(t+1)² on
/// [0,1]×[0,1], which forces φ = 10x²(1−x) and
///
/// ```text
/// f = 20x²(1−x)·[t^(2−α)/Γ(3−α) + t^(1−α)/Γ(2−α)] − 20(t+1)²(1−3x).
/// ```
pub fn example2() -> ManufacturedPde {
    ManufacturedPde {
        width: 1.0,
        horizon: 1.0,
        source: Box::new(|x, t, a| {
            20.0 * x * x * (1.0 - x)
                * (t.powf(2.0 - a) / gamma_pos(3.0 - a) + t.powf(1.0 - a) / gamma_pos(2.0 - a))
                - 20.0 * (t + 1.0) * (t + 1.0) * (1.0 - 3.0 * x)
        }),
        initial: Box::new(|x| 10.0 * x * x * (1.0 - x)),
        exact: Box::new(|x, t| 10.0 * x * x * (1.0 - x) * (t + 1.0) * (t + 1.0)),
        exact_dt: Box::new(|x, t| 20.0 * x * x * (1.0 - x) * (t + 1.0)),
        exact_dxx: Box::new(|x, t| 20.0 * (1.0 - 3.0 * x) * (t + 1.0) * (t + 1.0)),
    }
}

/// A companion diffusion problem with exact solution u = sin(πx)(t+1)².
///
/// The polynomial problem above is cubic in x, which the centred second
/// difference reproduces exactly — its spatial error is invisible.  This
/// profile has a nonzero fourth derivative, so spatial refinement sweeps
/// against it actually see the Δx² term.
pub fn sine_problem() -> ManufacturedPde {
    let pi = std::f64::consts::PI;
    ManufacturedPde {
        width: 1.0,
        horizon: 1.0,
        source: Box::new(move |x, t, a| {
            (pi * x).sin()
                * (2.0 * t.powf(2.0 - a) / gamma_pos(3.0 - a)
                    + 2.0 * t.powf(1.0 - a) / gamma_pos(2.0 - a)
                    + pi * pi * (t + 1.0) * (t + 1.0))
        }),
        initial: Box::new(move |x| (pi * x).sin()),
        exact: Box::new(move |x, t| (pi * x).sin() * (t + 1.0) * (t + 1.0)),
        exact_dt: Box::new(move |x, t| 2.0 * (pi * x).sin() * (t + 1.0)),
        exact_dxx: Box::new(move |x, t| -pi * pi * (pi * x).sin() * (t + 1.0) * (t + 1.0)),
    }
}

/// One ODE march: the solution values at every node plus the counters.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    /// u_k for k = 0…n.
    pub values: Vec<f64>,
    /// f64 scalars of working storage held at once.
    pub aux_scalars: usize,
    /// Exponential-sum terms (fast march only).
    pub n_eps: Option<usize>,
}

impl OdeSolution {
    /// u_n, the value the final-time error is measured at.
    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("marches store at least u_0")
    }
}

/// March the ODE with the direct L1 formula: solving the scheme for u_k
/// gives u_k = Δt^(α_k)Γ(2−α_k)·source(t_k) + history, with the history the
/// weight-grouped sum over all retained levels.  O(n²) time, O(n) storage.
pub fn solve_ode_l1(
    problem: &ManufacturedOde,
    alpha: &OrderFunction,
    grid: &TimeGrid,
) -> OdeSolution {
    let n = grid.n();
    let dt = grid.dt();
    let mut lnj = vec![0.0; n + 1];
    for (j, slot) in lnj.iter_mut().enumerate().skip(1) {
        *slot = (j as f64).ln();
    }
    let mut pw = vec![0.0; n + 1];
    let mut u = vec![0.0; n + 1];
    u[0] = problem.exact(0.0);
    for k in 1..=n {
        let tk = grid.t(k);
        let ak = alpha.at(tk);
        let e = 1.0 - ak;
        pw[0] = 0.0;
        for j in 1..=k {
            pw[j] = (e * lnj[j]).exp();
        }
        let a0 = pw[k] - pw[k - 1];
        let mut hist = a0 * u[0];
        for l in 1..k {
            let coeff = (pw[k - l] - pw[k - l - 1]) - (pw[k - l + 1] - pw[k - l]);
            hist += coeff * u[l];
        }
        u[k] = dt.powf(ak) * gamma_pos(2.0 - ak) * problem.source(tk, ak) + hist;
    }
    OdeSolution {
        values: u,
        aux_scalars: 3 * (n + 1),
        n_eps: None,
    }
}

/// March the ODE with the fast formula: u_k = u_{k−1} +
/// Δt^(α_k)Γ(2−α_k)·(source(t_k) − history term), the history carried by
/// the exponential moments.  O(n·N_ε) time; the march itself needs only
/// O(N_ε) state beyond the returned series.
pub fn solve_ode_fast(
    problem: &ManufacturedOde,
    alpha: &OrderFunction,
    grid: &TimeGrid,
    epsilon: f64,
) -> Result<OdeSolution> {
    let n = grid.n();
    let dt = grid.dt();
    let params = select_parameters(epsilon, alpha, grid.horizon(), dt)?;
    let stepper = HistoryStepper::new(&params, grid);
    let mut hist = EsaHistory::new(&params);
    let mut theta = vec![0.0; params.n_terms()];
    let mut u = vec![0.0; n + 1];
    u[0] = problem.exact(0.0);
    for k in 1..=n {
        let tk = grid.t(k);
        let ak = alpha.at(tk);
        let local_inv = dt.powf(ak) * gamma_pos(2.0 - ak);
        let rhs = problem.source(tk, ak);
        if k == 1 {
            u[1] = u[0] + local_inv * rhs;
            continue;
        }
        stepper.advance(&mut hist, u[k - 1], u[k - 2]);
        kernel_weights_into(&params, ak, &mut theta);
        let hsum: f64 = theta.iter().zip(hist.moments()).map(|(t, v)| t * v).sum();
        let history = grid.horizon().powf(-ak) / gamma_pos(1.0 - ak) * hsum;
        u[k] = u[k - 1] + local_inv * (rhs - history);
    }
    Ok(OdeSolution {
        values: u,
        aux_scalars: (n + 1) + 4 * params.n_terms(),
        n_eps: Some(params.n_terms()),
    })
}

/// Err(Δx,Δt) = max over interior nodes of |u(x_j, t_n) − u_j^n|: the
/// final-level sup-norm error against an exact solution handle.
pub fn max_error(
    solution: &Solution,
    spatial: &SpatialGrid,
    time: &TimeGrid,
    exact: &dyn Fn(f64, f64) -> f64,
) -> f64 {
    let t_n = time.t(time.n());
    let m = spatial.m();
    solution.final_field()[1..m]
        .iter()
        .enumerate()
        .map(|(jj, &u)| (u - exact(spatial.x(jj + 1), t_n)).abs())
        .fold(0.0, f64::max)
}

/// log₂(coarse/fine), defined only when both errors are finite and
/// positive — zero or failed rows leave the order column empty.
pub fn order_estimate(coarse: f64, fine: f64) -> Option<f64> {
    if coarse.is_finite() && fine.is_finite() && coarse > 0.0 && fine > 0.0 {
        Some((coarse / fine).log2())
    } else {
        None
    }
}

/// Which solver a study row exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    L1,
    Fast,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::L1 => "l1",
            Scheme::Fast => "fast",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Scheme::L1),
            "fast" => Ok(Scheme::Fast),
            other => Err(Error::InvalidGrid(format!(
                "unknown scheme {other:?} (expected \"l1\" or \"fast\")"
            ))),
        }
    }
}

/// One refinement-study row.  `m` is 0 for temporal-only (ODE) rows;
/// `epsilon` and `n_eps` are present only for the fast scheme; `err` is
/// `None` when the row's solve failed (the row is kept, flagged empty).
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub scheme: Scheme,
    pub alpha: String,
    pub n: usize,
    pub m: usize,
    pub epsilon: Option<f64>,
    pub err: Option<f64>,
    pub order: Option<f64>,
    pub seconds: f64,
    pub aux_scalars: usize,
    pub n_eps: Option<usize>,
}

/// Rows of a refinement study, with CSV and Markdown emitters.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceTable {
    rows: Vec<StudyRow>,
}

impl ConvergenceTable {
    pub fn rows(&self) -> &[StudyRow] {
        &self.rows
    }

    /// Append the rows of another table (e.g. to interleave schemes).
    pub fn extend(&mut self, other: ConvergenceTable) {
        self.rows.extend(other.rows);
    }

    /// CSV with header `scheme,alpha,n,m,epsilon,err,order,seconds,aux_scalars,n_eps`.
    /// Optional cells are left empty.  Everything except `seconds` is
    /// deterministic for a fixed problem and schedule.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,alpha,n,m,epsilon,err,order,seconds,aux_scalars,n_eps\n");
        for r in &self.rows {
            let eps = r.epsilon.map(|v| format!("{v:.16e}")).unwrap_or_default();
            let err = r.err.map(|v| format!("{v:.16e}")).unwrap_or_default();
            let order = r.order.map(|v| format!("{v:.6}")).unwrap_or_default();
            let n_eps = r.n_eps.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.6},{},{}",
                r.scheme.label(),
                r.alpha,
                r.n,
                r.m,
                eps,
                err,
                order,
                r.seconds,
                r.aux_scalars,
                n_eps
            );
        }
        out
    }

    /// Markdown table with the same columns, for reports.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| scheme | alpha | n | m | epsilon | Err | Order_t | seconds | aux_scalars | N_eps |\n\
             |---|---|---|---|---|---|---|---|---|---|\n",
        );
        for r in &self.rows {
            let eps = r.epsilon.map(|v| format!("{v:.2e}")).unwrap_or_else(|| "-".into());
            let err = r.err.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into());
            let order = r.order.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
            let n_eps = r.n_eps.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {:.3} | {} | {} |",
                r.scheme.label(),
                r.alpha,
                r.n,
                r.m,
                eps,
                err,
                order,
                r.seconds,
                r.aux_scalars,
                n_eps
            );
        }
        out
    }
}

fn median_seconds(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    samples[samples.len() / 2]
}

/// Order column value for consecutive rows: defined when exactly one of
/// (n, m) doubles while the other is fixed, and both errors are usable.
fn chained_order(prev: &StudyRow, cur: &StudyRow) -> Option<f64> {
    let doubling =
        (cur.n == 2 * prev.n && cur.m == prev.m) || (cur.m == 2 * prev.m && cur.n == prev.n);
    match (doubling, prev.err, cur.err) {
        (true, Some(a), Some(b)) => order_estimate(a, b),
        _ => None,
    }
}

/// Run one scheme over a chain of step counts on the ODE problem and
/// tabulate Err = |u(T) − u_n|, orders across doubled n, median-of-`reps`
/// timings and the storage counters.
pub fn ode_refinement_study(
    problem: &ManufacturedOde,
    family: AlphaFamily,
    scheme: Scheme,
    ns: &[usize],
    eps: EpsilonRule,
    reps: usize,
) -> Result<ConvergenceTable> {
    let reps = reps.max(1);
    let mut table = ConvergenceTable::default();
    for &n in ns {
        let grid = TimeGrid::new(problem.horizon(), n)?;
        let alpha = family.instantiate(grid.dt(), problem.horizon())?;
        let epsilon = (scheme == Scheme::Fast).then(|| eps.resolve(grid.dt()));
        let mut outcome: Option<OdeSolution> = None;
        let mut seconds = Vec::with_capacity(reps);
        for _ in 0..reps {
            let clock = Instant::now();
            let run = match scheme {
                Scheme::L1 => Ok(solve_ode_l1(problem, &alpha, &grid)),
                Scheme::Fast => solve_ode_fast(problem, &alpha, &grid, epsilon.unwrap()),
            };
            seconds.push(clock.elapsed().as_secs_f64());
            match run {
                Ok(sol) => outcome = Some(sol),
                Err(_) => {
                    outcome = None;
                    break;
                }
            }
        }
        let mut row = StudyRow {
            scheme,
            alpha: family.label(),
            n,
            m: 0,
            epsilon,
            err: None,
            order: None,
            seconds: median_seconds(seconds),
            aux_scalars: 0,
            n_eps: None,
        };
        if let Some(sol) = outcome {
            row.err = Some((sol.final_value() - problem.exact(grid.t(n))).abs());
            row.aux_scalars = sol.aux_scalars;
            row.n_eps = sol.n_eps;
        }
        row.order = table.rows.last().and_then(|prev| chained_order(prev, &row));
        table.rows.push(row);
    }
    Ok(table)
}

/// Run one scheme over a (n, m) schedule on a diffusion problem and
/// tabulate the final-time errors, orders across the doubled parameter,
/// timings and counters.  A failed solve flags its row and the chain of
/// orders skips it.
pub fn pde_refinement_study(
    problem: &ManufacturedPde,
    family: AlphaFamily,
    scheme: Scheme,
    schedule: &[(usize, usize)],
    eps: EpsilonRule,
    opts: &SolveOptions,
    reps: usize,
) -> Result<ConvergenceTable> {
    let reps = reps.max(1);
    let mut table = ConvergenceTable::default();
    for &(n, m) in schedule {
        let time = TimeGrid::new(problem.horizon(), n)?;
        let spatial = SpatialGrid::new(problem.width(), m)?;
        let alpha = family.instantiate(time.dt(), problem.horizon())?;
        let epsilon = (scheme == Scheme::Fast).then(|| eps.resolve(time.dt()));
        let source = |x: f64, t: f64| problem.source(x, t, alpha.at(t));
        let initial = |x: f64| problem.initial(x);
        let dp = DiffusionProblem::new(spatial.clone(), time.clone(), &alpha, &source, &initial);
        let mut outcome: Option<Solution> = None;
        let mut seconds = Vec::with_capacity(reps);
        for _ in 0..reps {
            let clock = Instant::now();
            let run = match scheme {
                Scheme::L1 => solve_l1(&dp, opts),
                Scheme::Fast => solve_fast_esa(&dp, epsilon.unwrap(), opts),
            };
            seconds.push(clock.elapsed().as_secs_f64());
            match run {
                Ok(sol) => outcome = Some(sol),
                Err(_) => {
                    outcome = None;
                    break;
                }
            }
        }
        let mut row = StudyRow {
            scheme,
            alpha: family.label(),
            n,
            m,
            epsilon,
            err: None,
            order: None,
            seconds: median_seconds(seconds),
            aux_scalars: 0,
            n_eps: None,
        };
        if let Some(sol) = outcome {
            row.err = Some(max_error(&sol, &spatial, &time, &|x, t| problem.exact(x, t)));
            row.aux_scalars = sol.aux_scalars();
            row.n_eps = sol.n_eps();
        }
        row.order = table.rows.last().and_then(|prev| chained_order(prev, &row));
        table.rows.push(row);
    }
    Ok(table)
}

//! Least squares under linear inequality constraints, by a primal active-set
//! method.
//!
//! Solves `min ||y - X b||²  s.t.  C b >= l` for a design with few columns and
//! possibly many constraint rows. Columns are scaled to unit norm and the
//! design is reduced to its `R` factor once, so each active-set iteration
//! costs `O(p³ + m p)` regardless of the number of observations.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LsqError {
    #[error("design matrix is rank deficient (column {column} is collinear with earlier columns)")]
    RankDeficient { column: usize },
    #[error("starting point violates constraint {row} by {violation:e}")]
    InfeasibleStart { row: usize, violation: f64 },
    #[error("active-set iteration did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular KKT system")]
    SingularKkt,
}

#[derive(Debug, Clone, Copy)]
pub struct LsqOptions {
    pub max_iterations: usize,
    /// Relative pivot below which an `R` diagonal marks rank deficiency.
    pub rank_tol: f64,
    /// Tolerance on constraint satisfaction (in units of unit-norm rows).
    pub feas_tol: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            rank_tol: 1e-10,
            feas_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LsqSolution {
    pub coef: DVector<f64>,
    pub residual_ss: f64,
    /// Constraint rows active at the solution with their multipliers (for the
    /// rows after column scaling and normalization to unit length).
    pub active: Vec<(usize, f64)>,
    pub iterations: usize,
    /// Scaled KKT residual: stationarity, primal infeasibility and dual
    /// infeasibility, whichever is largest.
    pub kkt_residual: f64,
    /// `(X'X)^{-1}` in the original coordinates, for standard errors.
    pub inverse_gram: DMatrix<f64>,
}

/// Reduced form of a least-squares problem: `||y - X b||² = ||d - R D b||² + rss0`.
struct Reduced {
    r: DMatrix<f64>,
    d: DVector<f64>,
    scale: DVector<f64>,
}

fn reduce(x: &DMatrix<f64>, y: &DVector<f64>, rank_tol: f64) -> Result<Reduced, LsqError> {
    let p = x.ncols();
    if x.nrows() != y.len() {
        return Err(LsqError::Dimension(format!(
            "design has {} rows, target {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < p {
        return Err(LsqError::RankDeficient { column: x.nrows() });
    }
    let scale = DVector::from_iterator(p, x.column_iter().map(|c| c.norm()));
    if let Some(j) = scale.iter().position(|s| *s == 0.0 || !s.is_finite()) {
        return Err(LsqError::RankDeficient { column: j });
    }
    let mut xs = x.clone();
    for (j, mut col) in xs.column_iter_mut().enumerate() {
        col /= scale[j];
    }
    let qr = xs.qr();
    let r = qr.r();
    let rmax = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(j) = r.diagonal().iter().position(|v| v.abs() <= rank_tol * rmax) {
        return Err(LsqError::RankDeficient { column: j });
    }
    let d = qr.q().transpose() * y;
    Ok(Reduced { r, d, scale })
}

/// Unconstrained least squares with rank checking.
pub fn solve_ols(x: &DMatrix<f64>, y: &DVector<f64>, opts: &LsqOptions) -> Result<LsqSolution, LsqError> {
    let red = reduce(x, y, opts.rank_tol)?;
    let u = red.r.solve_upper_triangular(&red.d).ok_or(LsqError::SingularKkt)?;
    finish(x, y, &red, u, Vec::new(), 0, 0.0)
}

fn finish(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    red: &Reduced,
    u: DVector<f64>,
    active: Vec<(usize, f64)>,
    iterations: usize,
    kkt_residual: f64,
) -> Result<LsqSolution, LsqError> {
    let coef = u.component_div(&red.scale);
    let resid = y - x * &coef;
    let rinv = red.r.clone().try_inverse().ok_or(LsqError::SingularKkt)?;
    let scaled_inv = &rinv * rinv.transpose();
    let p = coef.len();
    let inverse_gram = DMatrix::from_fn(p, p, |i, j| scaled_inv[(i, j)] / (red.scale[i] * red.scale[j]));
    Ok(LsqSolution {
        coef,
        residual_ss: resid.norm_squared(),
        active,
        iterations,
        kkt_residual,
        inverse_gram,
    })
}

/// Active-set solve of `min ||y - X b||²  s.t.  C b >= l`, starting from the
/// feasible point `start`.
pub fn solve_inequality_lsq(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &DMatrix<f64>,
    lower: &DVector<f64>,
    start: &DVector<f64>,
    opts: &LsqOptions,
) -> Result<LsqSolution, LsqError> {
    let p = x.ncols();
    let m = c.nrows();
    if c.ncols() != p || lower.len() != m || start.len() != p {
        return Err(LsqError::Dimension(
            "constraint matrix, bounds and start must match the design".into(),
        ));
    }
    let red = reduce(x, y, opts.rank_tol)?;

    // constraints in scaled coordinates u = D b, rows normalized
    let mut a = c.clone();
    for (j, mut col) in a.column_iter_mut().enumerate() {
        col /= red.scale[j];
    }
    let mut l = lower.clone();
    for i in 0..m {
        let n = a.row(i).norm();
        if n > 0.0 {
            a.row_mut(i).scale_mut(1.0 / n);
            l[i] /= n;
        }
    }

    let h = red.r.transpose() * &red.r;
    let f = red.r.transpose() * &red.d;
    let fscale = f.amax().max(1.0);

    let mut u = start.component_mul(&red.scale);
    let slack = |u: &DVector<f64>, i: usize| a.row(i).dot(&u.transpose()) - l[i];
    for i in 0..m {
        let s = slack(&u, i);
        if s < -opts.feas_tol {
            return Err(LsqError::InfeasibleStart { row: i, violation: -s });
        }
    }

    let mut working: Vec<usize> = Vec::new();
    let mut in_working = vec![false; m];
    for it in 1..=opts.max_iterations {
        let (step, lambda) = eqp(&h, &f, &a, &working, &u)?;
        let step_norm = step.amax();
        if step_norm <= 1e-13 * (1.0 + u.amax()) {
            // stationary on the working set: check multipliers
            let (imin, lmin) =
                lambda
                    .iter()
                    .enumerate()
                    .fold((usize::MAX, 0.0), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
            if imin == usize::MAX || lmin >= -1e-12 * fscale {
                u += &step;
                let active: Vec<(usize, f64)> = working.iter().copied().zip(lambda.iter().copied()).collect();
                let kkt = kkt_residual(&h, &f, &a, &l, &u, &active, fscale);
                return finish(x, y, &red, u, active, it, kkt);
            }
            let row = working.remove(imin);
            in_working[row] = false;
            continue;
        }
        // ratio test over constraints that the step moves toward
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in (0..m).filter(|i| !in_working[*i]) {
            let ap = a.row(i).dot(&step.transpose());
            if ap < -1e-15 {
                let t = (-slack(&u, i)).min(0.0) / ap;
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        u += alpha * &step;
        if let Some(i) = blocking {
            working.push(i);
            in_working[i] = true;
        }
    }
    Err(LsqError::NoConvergence(opts.max_iterations))
}

/// Equality-constrained step: minimize over `s` with `A_W s = 0`.
fn eqp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    working: &[usize],
    u: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), LsqError> {
    let p = h.nrows();
    let w = working.len();
    let mut k = DMatrix::zeros(p + w, p + w);
    k.view_mut((0, 0), (p, p)).copy_from(h);
    for (j, &row) in working.iter().enumerate() {
        for i in 0..p {
            k[(i, p + j)] = -a[(row, i)];
            k[(p + j, i)] = a[(row, i)];
        }
    }
    let mut rhs = DVector::zeros(p + w);
    rhs.rows_mut(0, p).copy_from(&(f - h * u));
    let sol = k.full_piv_lu().solve(&rhs).ok_or(LsqError::SingularKkt)?;
    Ok((sol.rows(0, p).into_owned(), sol.rows(p, w).into_owned()))
}

fn kkt_residual(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    active: &[(usize, f64)],
    fscale: f64,
) -> f64 {
    let mut grad = h * u - f;
    for (i, lam) in active {
        grad -= *lam * a.row(*i).transpose();
    }
    let stationarity = grad.amax() / fscale;
    let primal = (0..a.nrows())
        .map(|i| (l[i] - a.row(i).dot(&u.transpose())).max(0.0))
        .fold(0.0, f64::max);
    let dual = active.iter().map(|(_, lam)| (-lam).max(0.0)).fold(0.0, f64::max) / fscale;
    stationarity.max(primal).max(dual)
}

//! Small dense numerical kernels shared by the fitting modules: linear
//! solves, nonlinear least squares, simplex minimization, non-negative least
//! squares, and a symmetric eigensolver. Problem sizes here are tiny (a
//! handful of parameters), so everything is plain `Vec`-backed and
//! deterministic.

use crate::scalar::Float;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("singular linear system")]
    SingularSystem,
    #[error("nonlinear least squares did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Solve `A x = b` in place by Gaussian elimination with partial pivoting.
pub fn solve_dense<F: Float>(a: &mut [Vec<F>], b: &mut [F]) -> Result<Vec<F>, OptimError> {
    let n = b.len();
    for row in a.iter() {
        if row.len() != n {
            return Err(OptimError::Dimension("matrix is not square".into()));
        }
    }
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() == F::zero() {
            return Err(OptimError::SingularSystem);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= factor * v;
            }
            let bv = b[col];
            b[row] -= factor * bv;
        }
    }
    let mut x = vec![F::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Invert a symmetric positive (semi)definite matrix via `solve_dense` on the
/// identity columns. Fails on singularity.
pub fn invert<F: Float>(m: &[Vec<F>]) -> Result<Vec<Vec<F>>, OptimError> {
    let n = m.len();
    let mut out = vec![vec![F::zero(); n]; n];
    for col in 0..n {
        let mut a: Vec<Vec<F>> = m.to_vec();
        let mut e = vec![F::zero(); n];
        e[col] = F::one();
        let x = solve_dense(&mut a, &mut e)?;
        for row in 0..n {
            out[row][col] = x[row];
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LmOptions<F> {
    pub max_iterations: usize,
    /// Relative step-size convergence threshold (applies once the damping
    /// has relaxed; heavily damped micro-steps do not count as converged).
    pub step_tolerance: F,
    /// Relative cost-reduction convergence threshold.
    pub cost_tolerance: F,
    /// Forward-difference step for the numeric Jacobian, relative to
    /// `|x_j| + 1`; parameters are assumed O(1)-scaled.
    pub jacobian_step: F,
}

impl<F: Float> Default for LmOptions<F> {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: F::c(1e-10),
            cost_tolerance: F::c(1e-14),
            jacobian_step: F::c(1e-7),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit<F> {
    pub params: Vec<F>,
    /// Parameter covariance, `s² (JᵀJ)⁻¹` with `s² = RSS/(m−n)`.
    pub covariance: Vec<Vec<F>>,
    pub residual_norm: F,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped Gauss-Newton (Levenberg-Marquardt) least squares with a numeric
/// forward-difference Jacobian.
///
/// `residuals(params, out)` fills `out` with the residual vector. Returns the
/// best iterate even on non-convergence, flagged through `converged`.
pub fn levenberg_marquardt<F, R>(
    mut residuals: R,
    x0: &[F],
    m: usize,
    opts: &LmOptions<F>,
) -> Result<LmFit<F>, OptimError>
where
    F: Float,
    R: FnMut(&[F], &mut [F]),
{
    let n = x0.len();
    if m < n {
        return Err(OptimError::Dimension(format!(
            "{m} residuals cannot constrain {n} parameters"
        )));
    }
    let mut x = x0.to_vec();
    let mut r = vec![F::zero(); m];
    residuals(&x, &mut r);
    let mut cost = dot(&r, &r);

    let mut lambda = F::c(1e-3);
    let mut converged = false;
    let mut iterations = 0;

    let mut jac = vec![vec![F::zero(); n]; m];
    let mut r_pert = vec![F::zero(); m];

    while iterations < opts.max_iterations {
        iterations += 1;

        // forward-difference Jacobian; the unit floor keeps the step
        // resolvable for parameters sitting at zero
        for j in 0..n {
            let h = opts.jacobian_step * (x[j].abs() + F::one());
            let mut xp = x.clone();
            xp[j] += h;
            residuals(&xp, &mut r_pert);
            for i in 0..m {
                jac[i][j] = (r_pert[i] - r[i]) / h;
            }
        }

        // column scales: λ damps each parameter relative to its sensitivity;
        // insensitive (e.g. frozen) columns get a floored scale so the
        // damped system stays full-rank and simply leaves them in place
        let mut diag = vec![F::zero(); n];
        let mut max_norm = F::zero();
        for (j, d) in diag.iter_mut().enumerate() {
            let mut norm = F::zero();
            for row in jac.iter() {
                norm += row[j] * row[j];
            }
            *d = norm.sqrt();
            max_norm = max_norm.max(*d);
        }
        for d in diag.iter_mut() {
            *d = d.max(max_norm * F::c(1e-10)).max(F::c(1e-290));
        }

        let mut improved = false;
        for _ in 0..40 {
            let Some(step) = damped_step(&jac, &r, &diag, lambda) else {
                lambda *= F::c(10.0);
                continue;
            };
            let xt: Vec<F> = x.iter().zip(&step).map(|(&a, &s)| a + s).collect();
            residuals(&xt, &mut r_pert);
            let cost_t = dot(&r_pert, &r_pert);
            // gain ratio against the linear model ‖r + J s‖²
            let mut predicted = F::zero();
            for (i, row) in jac.iter().enumerate() {
                let js = dot(row, &step);
                predicted += (r[i] + js) * (r[i] + js);
            }
            let pred_reduction = cost - predicted;
            if cost_t < cost {
                let actual = cost - cost_t;
                let rel_step = step
                    .iter()
                    .zip(&x)
                    .map(|(&s, &xi)| (s / (xi.abs() + F::one())).abs())
                    .fold(F::zero(), F::max);
                let gain = if pred_reduction > F::zero() {
                    actual / pred_reduction
                } else {
                    F::zero()
                };
                x = xt;
                r.copy_from_slice(&r_pert);
                cost = cost_t;
                if gain > F::c(0.75) {
                    lambda = (lambda * F::c(0.2)).max(F::c(1e-14));
                } else if gain < F::c(0.25) {
                    lambda *= F::c(3.0);
                }
                improved = true;
                // converged when the model itself is out of reduction, or
                // the step is tiny while the damping is relaxed
                if actual <= opts.cost_tolerance * cost.max(F::c(1e-300))
                    && pred_reduction <= opts.cost_tolerance * cost.max(F::c(1e-300))
                {
                    converged = true;
                }
                if rel_step < opts.step_tolerance && lambda < F::one() {
                    converged = true;
                }
                break;
            }
            lambda *= F::c(10.0);
            if lambda > F::c(1e15) {
                break;
            }
        }
        if converged {
            break;
        }
        if !improved {
            // no descent at any damping: stationary to working precision
            converged = true;
            break;
        }
    }

    // covariance from the final Jacobian
    for j in 0..n {
        let h = opts.jacobian_step * (x[j].abs() + F::one());
        let mut xp = x.clone();
        xp[j] += h;
        residuals(&xp, &mut r_pert);
        for i in 0..m {
            jac[i][j] = (r_pert[i] - r[i]) / h;
        }
    }
    let mut jtj = vec![vec![F::zero(); n]; n];
    for i in 0..m {
        for a in 0..n {
            for b in a..n {
                jtj[a][b] += jac[i][a] * jac[i][b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            jtj[a][b] = jtj[b][a];
        }
    }
    let dof = if m > n { m - n } else { 1 };
    let s2 = cost / F::c(dof as f64);
    let covariance = match invert(&jtj) {
        Ok(inv) => inv
            .into_iter()
            .map(|row| row.into_iter().map(|v| v * s2).collect())
            .collect(),
        Err(_) => vec![vec![F::infinity(); n]; n],
    };

    Ok(LmFit { params: x, covariance, residual_norm: cost.sqrt(), iterations, converged })
}

fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Solve the damped least-squares step `min ‖J s + r‖² + λ‖D s‖²` by
/// Householder QR on the stacked matrix `[J; √λ D]`. Avoids squaring the
/// Jacobian's condition number, which matters in the long curved valleys of
/// comb fits.
fn damped_step<F: Float>(jac: &[Vec<F>], r: &[F], diag: &[F], lambda: F) -> Option<Vec<F>> {
    let m = jac.len();
    let n = diag.len();
    let rows = m + n;
    let mut a = vec![vec![F::zero(); n]; rows];
    let mut b = vec![F::zero(); rows];
    for i in 0..m {
        a[i].copy_from_slice(&jac[i]);
        b[i] = -r[i];
    }
    let sl = lambda.sqrt();
    for j in 0..n {
        a[m + j][j] = sl * diag[j];
    }
    // Householder elimination
    for k in 0..n {
        let mut norm = F::zero();
        for row in a.iter().take(rows).skip(k) {
            norm += row[k] * row[k];
        }
        let norm = norm.sqrt();
        if norm == F::zero() {
            return None;
        }
        let alpha = if a[k][k] >= F::zero() { -norm } else { norm };
        let mut v = vec![F::zero(); rows - k];
        v[0] = a[k][k] - alpha;
        for i in k + 1..rows {
            v[i - k] = a[i][k];
        }
        let vnorm2 = dot(&v, &v);
        if vnorm2 == F::zero() {
            continue;
        }
        a[k][k] = alpha;
        for i in k + 1..rows {
            a[i][k] = F::zero();
        }
        for j in k + 1..n {
            let mut proj = F::zero();
            for i in k..rows {
                proj += v[i - k] * a[i][j];
            }
            let scale = F::c(2.0) * proj / vnorm2;
            for i in k..rows {
                a[i][j] -= scale * v[i - k];
            }
        }
        let mut proj = F::zero();
        for i in k..rows {
            proj += v[i - k] * b[i];
        }
        let scale = F::c(2.0) * proj / vnorm2;
        for i in k..rows {
            b[i] -= scale * v[i - k];
        }
    }
    // back-substitution on R
    let mut s = vec![F::zero(); n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in k + 1..n {
            acc -= a[k][j] * s[j];
        }
        if a[k][k] == F::zero() {
            return None;
        }
        s[k] = acc / a[k][k];
    }
    Some(s)
}

// ---------------------------------------------------------------------------
// Nelder-Mead
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NmOptions<F> {
    pub max_evaluations: usize,
    /// Terminate when the simplex spread falls below this times parameter scale.
    pub x_tolerance: F,
    /// Terminate when the relative spread in function values falls below this.
    pub f_tolerance: F,
}

impl<F: Float> Default for NmOptions<F> {
    fn default() -> Self {
        Self { max_evaluations: 4000, x_tolerance: F::c(1e-10), f_tolerance: F::c(1e-14) }
    }
}

#[derive(Debug, Clone)]
pub struct NmResult<F> {
    pub params: Vec<F>,
    pub value: F,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder-Mead downhill simplex with per-parameter initial steps and the
/// adaptive coefficients of Gao & Han.
pub fn nelder_mead<F, G>(mut f: G, x0: &[F], steps: &[F], opts: &NmOptions<F>) -> NmResult<F>
where
    F: Float,
    G: FnMut(&[F]) -> F,
{
    let n = x0.len();
    let nf = F::c(n as f64);
    // adaptive coefficients
    let alpha = F::one();
    let beta = F::one() + F::c(2.0) / nf;
    let gamma = F::c(0.75) - F::one() / (F::c(2.0) * nf);
    let delta = F::one() - F::one() / nf;

    let mut evals = 0usize;
    let mut simplex: Vec<(Vec<F>, F)> = Vec::with_capacity(n + 1);
    let v0 = f(x0);
    evals += 1;
    simplex.push((x0.to_vec(), v0));
    for j in 0..n {
        let mut x = x0.to_vec();
        x[j] += steps[j];
        let v = f(&x);
        evals += 1;
        simplex.push((x, v));
    }

    let mut converged = false;
    while evals < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));

        let best = simplex[0].1;
        let worst = simplex[n].1;
        let fspread = (worst - best).abs() / (best.abs() + worst.abs() + F::c(1e-300));
        let xspread = (0..n)
            .map(|j| {
                let mx = simplex.iter().map(|(x, _)| x[j]).fold(F::neg_infinity(), F::max);
                let mn = simplex.iter().map(|(x, _)| x[j]).fold(F::infinity(), F::min);
                (mx - mn) / (steps[j].abs() + F::c(1e-300))
            })
            .fold(F::zero(), F::max);
        if fspread < opts.f_tolerance || xspread < opts.x_tolerance {
            converged = true;
            break;
        }

        // centroid of all but worst
        let mut centroid = vec![F::zero(); n];
        for (x, _) in simplex.iter().take(n) {
            for j in 0..n {
                centroid[j] += x[j];
            }
        }
        for c in centroid.iter_mut() {
            *c /= nf;
        }

        let reflect: Vec<F> =
            (0..n).map(|j| centroid[j] + alpha * (centroid[j] - simplex[n].0[j])).collect();
        let fr = f(&reflect);
        evals += 1;

        if fr < simplex[0].1 {
            let expand: Vec<F> =
                (0..n).map(|j| centroid[j] + beta * (reflect[j] - centroid[j])).collect();
            let fe = f(&expand);
            evals += 1;
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<F> = if fr < simplex[n].1 {
                (0..n).map(|j| centroid[j] + gamma * (reflect[j] - centroid[j])).collect()
            } else {
                (0..n).map(|j| centroid[j] - gamma * (centroid[j] - simplex[n].0[j])).collect()
            };
            let fc = f(&contract);
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (contract, fc);
            } else {
                // shrink toward best
                let best_x = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for j in 0..n {
                        entry.0[j] = best_x[j] + delta * (entry.0[j] - best_x[j]);
                    }
                    entry.1 = f(&entry.0);
                    evals += 1;
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (params, value) = simplex.swap_remove(0);
    NmResult { params, value, evaluations: evals, converged }
}

// ---------------------------------------------------------------------------
// Non-negative least squares (Lawson-Hanson active set)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NnlsFit<F> {
    pub coefficients: Vec<F>,
    /// True for coefficients clamped at zero by the constraint.
    pub clamped: Vec<bool>,
    pub residual_norm: F,
}

/// Minimize `‖A x − y‖` subject to `x ≥ 0`.
pub fn nnls<F: Float>(a: &[Vec<F>], y: &[F]) -> Result<NnlsFit<F>, OptimError> {
    let m = a.len();
    if m != y.len() {
        return Err(OptimError::Dimension("row count mismatch".into()));
    }
    let n = if m == 0 { 0 } else { a[0].len() };
    let mut passive = vec![false; n];
    let mut x = vec![F::zero(); n];

    let residual = |x: &[F]| -> Vec<F> {
        (0..m)
            .map(|i| {
                let mut acc = y[i];
                for j in 0..n {
                    acc -= a[i][j] * x[j];
                }
                acc
            })
            .collect()
    };

    let tol = F::c(1e-12);
    for _outer in 0..(3 * n + 10) {
        // gradient w = Aᵀ (y − A x)
        let r = residual(&x);
        let mut w = vec![F::zero(); n];
        for j in 0..n {
            for i in 0..m {
                w[j] += a[i][j] * r[i];
            }
        }
        // most-violated zero coefficient
        let mut best: Option<(usize, F)> = None;
        let wmax_scale = w.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
        for j in 0..n {
            if !passive[j] && w[j] > tol * (F::one() + wmax_scale)
                && best.map(|(_, bw)| w[j] > bw).unwrap_or(true) {
                    best = Some((j, w[j]));
                }
        }
        let Some((enter, _)) = best else { break };
        passive[enter] = true;

        // inner loop: solve unconstrained on passive set, retreat if negative
        for _inner in 0..(3 * n + 10) {
            let active: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let k = active.len();
            let mut ata = vec![vec![F::zero(); k]; k];
            let mut aty = vec![F::zero(); k];
            for (p, &jp) in active.iter().enumerate() {
                for i in 0..m {
                    aty[p] += a[i][jp] * y[i];
                }
                for (q, &jq) in active.iter().enumerate().skip(p) {
                    let mut acc = F::zero();
                    for i in 0..m {
                        acc += a[i][jp] * a[i][jq];
                    }
                    ata[p][q] = acc;
                    ata[q][p] = acc;
                }
            }
            let mut rhs = aty.clone();
            let z = solve_dense(&mut ata, &mut rhs)?;
            if z.iter().all(|&v| v > F::zero()) {
                for (p, &j) in active.iter().enumerate() {
                    x[j] = z[p];
                }
                break;
            }
            // step toward z until the first coefficient hits zero
            let mut alpha = F::one();
            for (p, &j) in active.iter().enumerate() {
                if z[p] <= F::zero() {
                    let denom = x[j] - z[p];
                    if denom > F::zero() {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            for (p, &j) in active.iter().enumerate() {
                x[j] = x[j] + alpha * (z[p] - x[j]);
                if x[j] <= tol {
                    x[j] = F::zero();
                    passive[j] = false;
                }
            }
        }
    }

    let r = residual(&x);
    Ok(NnlsFit {
        clamped: (0..n).map(|j| !passive[j]).collect(),
        coefficients: x,
        residual_norm: dot(&r, &r).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Straight-line regression and symmetric eigensolver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct LineFit<F> {
    pub slope: F,
    pub intercept: F,
    pub sigma_slope: F,
    pub sigma_intercept: F,
}

/// Ordinary least squares for `y = intercept + slope·x` with 1σ uncertainties
/// from the residual scatter.
pub fn linear_fit<F: Float>(x: &[F], y: &[F]) -> Result<LineFit<F>, OptimError> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(OptimError::Dimension("need at least two points".into()));
    }
    let nf = F::c(n as f64);
    let mx = x.iter().fold(F::zero(), |a, &v| a + v) / nf;
    let my = y.iter().fold(F::zero(), |a, &v| a + v) / nf;
    let mut sxx = F::zero();
    let mut sxy = F::zero();
    for i in 0..n {
        let dx = x[i] - mx;
        sxx += dx * dx;
        sxy += dx * (y[i] - my);
    }
    if sxx == F::zero() {
        return Err(OptimError::SingularSystem);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut rss = F::zero();
    for i in 0..n {
        let r = y[i] - intercept - slope * x[i];
        rss += r * r;
    }
    let dof = if n > 2 { n - 2 } else { 1 };
    let s2 = rss / F::c(dof as f64);
    Ok(LineFit {
        slope,
        intercept,
        sigma_slope: (s2 / sxx).sqrt(),
        sigma_intercept: (s2 * (F::one() / nf + mx * mx / sxx)).sqrt(),
    })
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as columns).
pub fn jacobi_eigen<F: Float>(m: &[Vec<F>]) -> (Vec<F>, Vec<Vec<F>>) {
    let n = m.len();
    let mut a: Vec<Vec<F>> = m.to_vec();
    let mut v = vec![vec![F::zero(); n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = F::one();
    }
    for _sweep in 0..100 {
        let mut off = F::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off < F::c(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < F::c(1e-300) {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (F::c(2.0) * a[p][q]);
                let t = {
                    let s = if theta >= F::zero() { F::one() } else { -F::one() };
                    s / (theta.abs() + (theta * theta + F::one()).sqrt())
                };
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eig: Vec<F> = (0..n).map(|i| a[i][i]).collect();
    (eig, v)
}

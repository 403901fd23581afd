//! Damped least-squares (Levenberg-Marquardt) with box constraints.
//!
//! The implementation is deliberately small: numerical central-difference
//! Jacobians, Marquardt diagonal scaling, parameter clamping to a box, and
//! a covariance estimate from the final Jacobian. It is meant for the
//! low-dimensional, smooth problems in this crate rather than as a general
//! solver.

use nalgebra::{DMatrix, DVector};

use crate::error::FitError;

/// Termination settings.
#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    /// Hard iteration cap; exceeding it is an error carrying the best state.
    pub max_iterations: usize,
    /// Relative cost-reduction threshold for convergence.
    pub ftol: f64,
    /// Relative step-size threshold for convergence.
    pub xtol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-10,
            xtol: 1e-10,
        }
    }
}

/// Inclusive box constraints on the parameters.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    /// Unconstrained box of dimension `n`.
    pub fn free(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn clamp(&self, p: &mut [f64]) {
        for (i, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }
}

/// Outcome of a least-squares solve.
#[derive(Debug, Clone)]
pub struct LmResult {
    /// Best parameters found.
    pub params: Vec<f64>,
    /// One-sigma uncertainties (square roots of the covariance diagonal).
    pub sigma: Vec<f64>,
    /// Parameter covariance, `(J^T J)^{-1}` scaled by the reduced residual
    /// variance. Pseudo-inverted when rank deficient.
    pub covariance: DMatrix<f64>,
    /// Set when `J^T J` was rank deficient at the solution, meaning at
    /// least one parameter is unconstrained by the data.
    pub singular_covariance: bool,
    /// Euclidean norm of the residual vector at the solution.
    pub residual_norm: f64,
    /// Iterations actually used.
    pub iterations: usize,
    /// Residual count.
    pub n_points: usize,
}

impl LmResult {
    /// Degrees of freedom of the fit.
    pub fn dof(&self) -> usize {
        self.n_points.saturating_sub(self.params.len())
    }
}

fn cost_of(r: &DVector<f64>) -> f64 {
    let c = 0.5 * r.norm_squared();
    if c.is_finite() {
        c
    } else {
        f64::INFINITY
    }
}

/// Minimize the sum of squared residuals of `f` over the box `bounds`,
/// starting from `p0`.
///
/// Preconditions: at least as many residuals as parameters, a finite start
/// inside the box, and finite residuals at the start.
pub fn least_squares<F>(
    mut f: F,
    p0: &[f64],
    bounds: Option<Bounds>,
    cfg: &LmConfig,
) -> Result<LmResult, FitError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = p0.len();
    if n == 0 {
        return Err(FitError::InvalidInput("no parameters to fit".into()));
    }
    if p0.iter().any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput(
            "initial guess contains non-finite values".into(),
        ));
    }
    let bounds = bounds.unwrap_or_else(|| Bounds::free(n));
    if bounds.lower.len() != n || bounds.upper.len() != n {
        return Err(FitError::InvalidInput(
            "bounds dimension does not match the parameter count".into(),
        ));
    }
    if bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .any(|(lo, hi)| lo > hi)
    {
        return Err(FitError::InvalidInput("lower bound exceeds upper".into()));
    }
    if !bounds.contains(p0) {
        return Err(FitError::InvalidInput(
            "initial guess lies outside the bounds".into(),
        ));
    }

    let mut p = DVector::from_column_slice(p0);
    let mut r = DVector::from_vec(f(p.as_slice()));
    let m = r.len();
    if m < n {
        return Err(FitError::InvalidInput(format!(
            "{m} residuals cannot constrain {n} parameters"
        )));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput(
            "residuals are non-finite at the initial guess".into(),
        ));
    }

    // Finite-difference scales frozen at the start so step sizes do not
    // collapse when a parameter passes through zero.
    let scales: Vec<f64> = p0.iter().map(|v| v.abs().max(1.0)).collect();

    let mut cost = cost_of(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..cfg.max_iterations {
        iterations = iter + 1;
        let jac = jacobian(&mut f, p.as_slice(), &scales, &bounds, m);
        let a = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;

        let mut accepted = false;
        while lambda < 1e14 {
            let mut damped = a.clone();
            let floor = 1e-14 * a.diagonal().amax().max(1e-300);
            for j in 0..n {
                damped[(j, j)] += lambda * damped[(j, j)].max(floor);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&grad));
            let mut trial = (&p + &delta).as_slice().to_vec();
            bounds.clamp(&mut trial);
            let trial_r = DVector::from_vec(f(&trial));
            if trial_r.len() != m {
                return Err(FitError::InvalidInput(
                    "residual length changed between evaluations".into(),
                ));
            }
            let trial_cost = cost_of(&trial_r);
            if trial_cost < cost {
                let step_norm = p
                    .as_slice()
                    .iter()
                    .zip(&trial)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let reduction = cost - trial_cost;
                p = DVector::from_vec(trial);
                r = trial_r;
                let prev = cost;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-14);
                accepted = true;
                if reduction <= cfg.ftol * prev.max(f64::MIN_POSITIVE)
                    || step_norm <= cfg.xtol * (p.norm() + cfg.xtol)
                {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }

        if !accepted {
            // Damping exhausted: no descent direction representable, the
            // point is as converged as arithmetic allows.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let result = finalize(&mut f, p.as_slice(), &r, &scales, &bounds, iterations);
    if converged {
        Ok(result)
    } else {
        Err(FitError::NonConvergence {
            iterations,
            residual_norm: result.residual_norm,
            best: Box::new(result),
        })
    }
}

/// Convenience wrapper for fitting a scalar model `y = model(x, params)` to
/// data, with optional per-point standard deviations used as weights.
pub fn fit_curve<M>(
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    model: M,
    p0: &[f64],
    bounds: Option<Bounds>,
    cfg: &LmConfig,
) -> Result<LmResult, FitError>
where
    M: Fn(f64, &[f64]) -> f64,
{
    if x.len() != y.len() {
        return Err(FitError::InvalidInput(
            "x and y lengths do not match".into(),
        ));
    }
    if let Some(s) = sigma {
        if s.len() != x.len() {
            return Err(FitError::InvalidInput(
                "sigma length does not match the data".into(),
            ));
        }
        if s.iter().any(|&v| !(v > 0.0)) {
            return Err(FitError::InvalidInput(
                "sigmas must be strictly positive".into(),
            ));
        }
    }
    let residuals = |p: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(i, (&xi, &yi))| {
                let w = sigma.map_or(1.0, |s| 1.0 / s[i]);
                (model(xi, p) - yi) * w
            })
            .collect()
    };
    least_squares(residuals, p0, bounds, cfg)
}

fn jacobian<F>(
    f: &mut F,
    p: &[f64],
    scales: &[f64],
    bounds: &Bounds,
    m: usize,
) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = p.len();
    let rel = f64::EPSILON.cbrt();
    let mut jac = DMatrix::zeros(m, n);
    let mut work = p.to_vec();
    for j in 0..n {
        let h = rel * scales[j];
        let hi = (p[j] + h).min(bounds.upper[j]);
        let lo = (p[j] - h).max(bounds.lower[j]);
        let denom = hi - lo;
        if denom <= 0.0 {
            continue;
        }
        work[j] = hi;
        let r_hi = f(&work);
        work[j] = lo;
        let r_lo = f(&work);
        work[j] = p[j];
        for i in 0..m.min(r_hi.len()).min(r_lo.len()) {
            jac[(i, j)] = (r_hi[i] - r_lo[i]) / denom;
        }
    }
    jac
}

fn finalize<F>(
    f: &mut F,
    p: &[f64],
    r: &DVector<f64>,
    scales: &[f64],
    bounds: &Bounds,
    iterations: usize,
) -> LmResult
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = p.len();
    let m = r.len();
    let jac = jacobian(f, p, scales, bounds, m);
    let a = jac.transpose() * &jac;

    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.amax();
    let tol = (n as f64) * f64::EPSILON * max_sv.max(f64::MIN_POSITIVE);
    let singular = svd.singular_values.iter().any(|&s| s <= tol);
    let pinv = svd
        .pseudo_inverse(tol)
        .unwrap_or_else(|_| DMatrix::zeros(n, n));

    let dof = m.saturating_sub(n);
    let s2 = if dof > 0 {
        r.norm_squared() / dof as f64
    } else {
        0.0
    };
    let covariance = pinv * s2;
    let sigma = (0..n)
        .map(|i| covariance[(i, i)].max(0.0).sqrt())
        .collect();

    LmResult {
        params: p.to_vec(),
        sigma,
        covariance,
        singular_covariance: singular,
        residual_norm: r.norm(),
        iterations,
        n_points: m,
    }
}

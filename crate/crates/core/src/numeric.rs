//! Small numerical kernels shared by the physics modules: compensated
//! summation, Richardson-extrapolated derivatives, weighted linear least
//! squares, and a damped Gauss-Newton (Levenberg-Marquardt style) fitter
//! with box-constrained parameters.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("design matrix is rank-deficient ({0})")]
    RankDeficient(String),
}

/// Neumaier-compensated summation. Tracks the running error term so that
/// long alternating sums stay accurate to the last few ulps.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Sum an iterator with compensated accumulation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Central-difference derivative with Richardson extrapolation and step
/// halving. The callback may fail (e.g. range errors near a boundary); the
/// first failure aborts the whole estimate.
///
/// Halving stops once two consecutive Richardson estimates agree to
/// `rel_tol` (relative to the estimate magnitude, with an absolute floor).
pub fn richardson_derivative<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    x: f64,
    h0: f64,
    rel_tol: f64,
) -> Result<f64, E> {
    let mut h = h0;
    let mut d_prev = (f(x + h)? - f(x - h)?) / (2.0 * h);
    let mut prev_refined: Option<f64> = None;
    let mut best = d_prev;
    let mut best_err = f64::INFINITY;
    for _ in 0..16 {
        h *= 0.5;
        let d = (f(x + h)? - f(x - h)?) / (2.0 * h);
        let refined = (4.0 * d - d_prev) / 3.0;
        if let Some(prev) = prev_refined {
            let err = (refined - prev).abs();
            let scale = refined.abs().max(1e-300);
            if err <= rel_tol * scale {
                return Ok(refined);
            }
            if err < best_err {
                best = refined;
                best_err = err;
            } else if err > 4.0 * best_err {
                // successive estimates are diverging: the stencil has hit
                // the floating-point noise floor
                break;
            }
        } else {
            best = refined;
        }
        prev_refined = Some(refined);
        d_prev = d;
    }
    Ok(best)
}

/// One Richardson refinement at a fixed step: central differences at `h`
/// and `h/2` combined to fourth order. Used where the step is prescribed.
pub fn richardson_fixed_step<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    x: f64,
    h: f64,
) -> Result<f64, E> {
    let d1 = (f(x + h)? - f(x - h)?) / (2.0 * h);
    let d2 = (f(x + h / 2.0)? - f(x - h / 2.0)?) / h;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// Weighted linear least squares: minimizes Σ ((y_i - Σ_k a_k x_ik)/σ_i)².
///
/// Returns the coefficient vector and its covariance matrix (JᵀWJ)⁻¹.
pub fn weighted_linear_fit(
    rows: &[Vec<f64>],
    y: &[f64],
    sigma: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>), NumericError> {
    assert_eq!(rows.len(), y.len());
    assert_eq!(rows.len(), sigma.len());
    let k = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.len() < k || k == 0 {
        return Err(NumericError::RankDeficient(format!(
            "{} rows for {} coefficients",
            rows.len(),
            k
        )));
    }
    let mut design = DMatrix::zeros(rows.len(), k);
    let mut rhs = DVector::zeros(rows.len());
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), k);
        let w = 1.0 / sigma[i].max(f64::MIN_POSITIVE);
        for (j, v) in row.iter().enumerate() {
            design[(i, j)] = v * w;
        }
        rhs[i] = y[i] * w;
    }
    let normal = design.transpose() * &design;
    let moment = design.transpose() * rhs;
    let chol = normal
        .clone()
        .cholesky()
        .ok_or_else(|| NumericError::RankDeficient("normal equations not SPD".into()))?;
    let coeffs = chol.solve(&moment);
    let cov = chol.inverse();
    Ok((coeffs, cov))
}

/// Options for [`levenberg_marquardt`].
#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative step-size tolerance on the parameter vector.
    pub step_tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-10,
            initial_lambda: 1e-3,
        }
    }
}

/// One accepted or rejected damping step of the fitter.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub lambda: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// (JᵀJ)⁻¹ at the solution, with weights folded into J.
    pub covariance: DMatrix<f64>,
    pub cost: f64,
    pub converged: bool,
    pub iterations: Vec<IterationRecord>,
}

/// Damped Gauss-Newton minimizer of ½‖r(p)‖² with box projection.
///
/// `residuals` returns the weighted residual vector; `jacobian` its
/// derivative matrix (∂r_i/∂p_j). Steps solve (JᵀJ + λ·diag(JᵀJ))δ = -Jᵀr,
/// the parameter vector is clamped to `[lower, upper]` after each step, and
/// λ is adapted on accept/reject. Accepted iterations strictly decrease the
/// cost, which the iteration log records.
pub fn levenberg_marquardt(
    initial: &[f64],
    lower: &[f64],
    upper: &[f64],
    mut residuals: impl FnMut(&[f64]) -> DVector<f64>,
    mut jacobian: impl FnMut(&[f64]) -> DMatrix<f64>,
    opts: &LmOptions,
) -> LmResult {
    let n = initial.len();
    let clamp = |p: &mut [f64]| {
        for i in 0..n {
            p[i] = p[i].clamp(lower[i], upper[i]);
        }
    };
    let mut params = initial.to_vec();
    clamp(&mut params);
    let mut r = residuals(&params);
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = opts.initial_lambda;
    let mut log = Vec::new();
    let mut converged = false;

    for iteration in 0..opts.max_iterations {
        let jac = jacobian(&params);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut accepted = false;

        // inner damping loop: grow lambda until a step is accepted
        for _ in 0..32 {
            let mut damped = jtj.clone();
            for i in 0..n {
                let d = jtj[(i, i)];
                damped[(i, i)] = d + lambda * d.max(1e-12);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&jtr)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = params
                .iter()
                .zip(step.iter())
                .map(|(p, s)| p + s)
                .collect();
            clamp(&mut trial);
            let r_trial = residuals(&trial);
            let cost_trial = 0.5 * r_trial.norm_squared();
            if cost_trial < cost {
                let step_norm: f64 = params
                    .iter()
                    .zip(trial.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let param_norm: f64 = trial.iter().map(|p| p * p).sum::<f64>().sqrt();
                params = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda * 0.25).max(1e-14);
                accepted = true;
                log.push(IterationRecord {
                    iteration,
                    cost,
                    lambda,
                    accepted: true,
                });
                if step_norm <= opts.step_tolerance * (1.0 + param_norm) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            log.push(IterationRecord {
                iteration,
                cost: cost_trial,
                lambda,
                accepted: false,
            });
            if lambda > 1e14 {
                break;
            }
        }
        if converged {
            break;
        }
        if !accepted {
            // no descent at any damping: either at the optimum or pinned
            // against the bounds
            converged = cost.is_finite();
            break;
        }
    }

    let jac = jacobian(&params);
    let jtj = jac.transpose() * &jac;
    let covariance = jtj
        .clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    LmResult {
        params,
        covariance,
        cost,
        converged,
        iterations: log,
    }
}

//! Bounded local refinement on the projected manifold: damped Gauss–Newton
//! (Levenberg–Marquardt) steps over β with finite-difference Jacobians,
//! reflect-then-clip box handling, and robust stopping.
//!
//! The residual being minimized is the *projected* one — the linear
//! coefficients α*(β) are re-solved by the rank-guarded least-squares solve
//! at every residual and every finite-difference probe, so the solver only
//! ever sees the collapsed nonlinear program over β.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::expr::EvalError;
use crate::varpro::{project, Projection, ProjectionConfig, SeparableForm};

/// Local solve failure that is an *error*, as opposed to penalty-encoded
/// badness.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    /// Every dataset row was invalid at the requested β.
    #[error("β lies in a fully invalid region")]
    InvalidRegion,
}

/// Why a local solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TerminationReason {
    /// ‖J̃ᵀr̃‖∞ fell below the gradient tolerance.
    #[serde(rename = "gradient")]
    Gradient,
    /// The (damped) step shrank below the relative step tolerance.
    #[serde(rename = "step")]
    Step,
    /// The best loss improved by less than the relative loss tolerance over
    /// three consecutive iterations.
    #[serde(rename = "loss-plateau")]
    LossPlateau,
    /// The iteration cap was reached.
    #[serde(rename = "max-iter")]
    MaxIterations,
    /// The start lay in a penalty region and five escalating-damping
    /// attempts produced no accepted step.
    #[serde(rename = "invalid-start")]
    InvalidStart,
    /// The cooperative wall-clock deadline expired.
    #[serde(rename = "budget")]
    Budget,
}

/// Tuning for one local solve.
#[derive(Debug, Clone)]
pub struct LocalSolveConfig {
    pub max_iterations: usize,
    /// Initial damping λ_β.
    pub initial_damping: f64,
    /// Multiplicative damping control ν (> 1).
    pub damping_factor: f64,
    /// Diagonal floor η added (λ-scaled) to zero-leverage coordinates.
    pub diagonal_floor: f64,
    /// Finite-difference step h_j = fd_relative_step · max(1, |β_j|).
    pub fd_relative_step: f64,
    /// Stop when ‖J̃ᵀr̃‖∞ ≤ gradient_tol.
    pub gradient_tol: f64,
    /// Stop when ‖Δβ‖₂ ≤ step_tol · (1 + ‖β‖₂).
    pub step_tol: f64,
    /// Stop when the best loss decreases by < loss_tol (relative) over
    /// three consecutive iterations.
    pub loss_tol: f64,
    /// Per-coordinate inclusive box for β.
    pub bounds: Vec<(f64, f64)>,
    /// Optional cooperative deadline checked between iterations.
    pub deadline: Option<Instant>,
}

impl LocalSolveConfig {
    /// Defaults with the given box bounds.
    pub fn with_bounds(bounds: Vec<(f64, f64)>) -> Self {
        LocalSolveConfig {
            max_iterations: 100,
            initial_damping: 1e-3,
            damping_factor: 2.0,
            diagonal_floor: 1e-10,
            fd_relative_step: 1e-6,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            loss_tol: 1e-14,
            bounds,
            deadline: None,
        }
    }

    fn assert_valid(&self, d_beta: usize) {
        assert!(self.damping_factor > 1.0, "ν must exceed 1");
        assert!(self.diagonal_floor > 0.0, "η must be positive");
        assert!(self.gradient_tol > 0.0 && self.step_tol > 0.0 && self.loss_tol > 0.0);
        assert!(self.fd_relative_step > 0.0);
        assert_eq!(self.bounds.len(), d_beta, "one bound pair per β coordinate");
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            assert!(
                lo.is_finite() && hi.is_finite() && lo <= hi,
                "bounds[{i}] must be finite with lo ≤ hi"
            );
        }
    }
}

/// Outcome of one local solve.
#[derive(Debug, Clone, Serialize)]
pub struct LocalSolveResult {
    /// Best β found (always within bounds).
    pub beta_hat: Vec<f64>,
    /// Projected loss at `beta_hat`.
    pub final_loss: f64,
    /// Outer iterations executed.
    pub iterations: usize,
    pub termination: TerminationReason,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Finite-difference Jacobian of the projected residual, with per-column
/// fallback flags.
#[derive(Debug, Clone)]
pub struct ProjectedJacobian {
    /// n×d_β matrix J̃.
    pub matrix: DMatrix<f64>,
    /// `true` for columns that could not be probed (all shrinks landed in
    /// invalid regions) and were zeroed.
    pub zeroed_columns: Vec<bool>,
}

/// Builds the full-length projected residual r̃ at β: `y − c − Φα*` on valid
/// rows; rows excluded as non-finite carry the RMS of the valid residuals,
/// so that ‖r̃‖²/n equals the projected loss exactly.
pub fn projected_residual(
    form: &SeparableForm,
    dataset: &Dataset,
    beta: &[f64],
    projection: &ProjectionConfig,
) -> Result<Vec<f64>, SolveError> {
    let p = project(form, dataset, beta, projection)?;
    if !p.valid {
        return Err(SolveError::InvalidRegion);
    }
    Ok(residual_from_projection(&p, dataset.targets()))
}

/// Residual assembly shared by the public entry point and the solver loop.
fn residual_from_projection(p: &Projection, y: &[f64]) -> Vec<f64> {
    let filler = p.loss.sqrt();
    y.iter()
        .enumerate()
        .map(|(i, &yi)| {
            if p.row_valid[i] && p.predictions[i].is_finite() {
                yi - p.predictions[i]
            } else {
                filler
            }
        })
        .collect()
}

/// Central finite-difference Jacobian of r̃ with α* re-solved at every
/// probe. Probes falling outside the box use a one-sided difference; probes
/// landing in invalid regions shrink h ×10 up to three times before the
/// column is zeroed and flagged.
pub fn projected_jacobian(
    form: &SeparableForm,
    dataset: &Dataset,
    beta: &[f64],
    local: &LocalSolveConfig,
    projection: &ProjectionConfig,
) -> Result<ProjectedJacobian, SolveError> {
    let base = projected_residual(form, dataset, beta, projection)?;
    jacobian_with_base(form, dataset, beta, &base, local, projection)
}

fn jacobian_with_base(
    form: &SeparableForm,
    dataset: &Dataset,
    beta: &[f64],
    base_residual: &[f64],
    local: &LocalSolveConfig,
    projection: &ProjectionConfig,
) -> Result<ProjectedJacobian, SolveError> {
    let n = dataset.n_rows();
    let d_beta = beta.len();
    let mut matrix = DMatrix::zeros(n, d_beta);
    let mut zeroed = vec![false; d_beta];

    // A probe is usable when the projection is valid; invalid probes count
    // as misses and trigger the shrink schedule.
    let try_residual = |point: &[f64]| -> Result<Option<Vec<f64>>, SolveError> {
        let p = project(form, dataset, point, projection).map_err(SolveError::from)?;
        if p.valid {
            Ok(Some(residual_from_projection(&p, dataset.targets())))
        } else {
            Ok(None)
        }
    };

    for j in 0..d_beta {
        let (lo, hi) = local.bounds[j];
        let h0 = local.fd_relative_step * beta[j].abs().max(1.0);
        let mut column: Option<Vec<f64>> = None;
        for shrink in 0..4 {
            let h = h0 / 10f64.powi(shrink);
            let up_ok = beta[j] + h <= hi;
            let down_ok = beta[j] - h >= lo;
            let mut plus = beta.to_vec();
            let mut minus = beta.to_vec();
            let diff = if up_ok && down_ok {
                plus[j] += h;
                minus[j] -= h;
                match (try_residual(&plus)?, try_residual(&minus)?) {
                    (Some(rp), Some(rm)) => Some(
                        rp.iter()
                            .zip(&rm)
                            .map(|(a, b)| (a - b) / (2.0 * h))
                            .collect::<Vec<f64>>(),
                    ),
                    _ => None,
                }
            } else if up_ok {
                plus[j] += h;
                try_residual(&plus)?.map(|rp| {
                    rp.iter()
                        .zip(base_residual)
                        .map(|(a, b)| (a - b) / h)
                        .collect::<Vec<f64>>()
                })
            } else if down_ok {
                minus[j] -= h;
                try_residual(&minus)?.map(|rm| {
                    base_residual
                        .iter()
                        .zip(&rm)
                        .map(|(a, b)| (a - b) / h)
                        .collect::<Vec<f64>>()
                })
            } else {
                // Interval narrower than h on both sides; shrink further.
                None
            };
            if let Some(col) = diff {
                column = Some(col);
                break;
            }
        }
        match column {
            Some(col) => {
                for (i, v) in col.into_iter().enumerate() {
                    matrix[(i, j)] = v;
                }
            }
            None => zeroed[j] = true,
        }
    }
    Ok(ProjectedJacobian {
        matrix,
        zeroed_columns: zeroed,
    })
}

/// One damped Gauss–Newton step:
///
/// ```text
/// Δβ = −(J̃ᵀJ̃ + λ·(diag(J̃ᵀJ̃) + η·I))⁻¹ · J̃ᵀ r̃
/// ```
///
/// The λ-scaled η floor keeps the system positive definite even when a β
/// coordinate exerts no leverage (an all-zero Jacobian column), in which
/// case that coordinate's step component is 0. Returns `None` when the
/// factorization fails (caller escalates λ and retries).
pub fn lm_step(jacobian: &DMatrix<f64>, residual: &[f64], lambda: f64, eta: f64) -> Option<Vec<f64>> {
    let d = jacobian.ncols();
    if d == 0 {
        return Some(Vec::new());
    }
    let r = DVector::from_column_slice(residual);
    let g = jacobian.tr_mul(&r);
    let mut a = jacobian.tr_mul(jacobian);
    for i in 0..d {
        let dii = a[(i, i)];
        a[(i, i)] = dii + lambda * (dii + eta);
    }
    let chol = a.cholesky()?;
    let step = chol.solve(&(-g));
    if step.iter().all(|v| v.is_finite()) {
        Some(step.iter().copied().collect())
    } else {
        None
    }
}

/// Reflects a trial point into the box coordinatewise, then clips whatever
/// over-reflection remains.
fn reflect_into_bounds(point: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in point.iter_mut().zip(bounds) {
        if *v < *lo {
            *v = *lo + (*lo - *v);
        } else if *v > *hi {
            *v = *hi - (*v - *hi);
        }
        *v = v.clamp(*lo, *hi);
    }
}

/// Inner λ-escalation attempts before a degenerate system is abandoned.
const MAX_STEP_ATTEMPTS: usize = 256;
/// Attempts granted to escape a penalty-region start.
const INVALID_START_ATTEMPTS: usize = 5;

/// Runs the damped projected Gauss–Newton iteration from `beta0` (clipped
/// into bounds). Monotone: the returned loss is the best seen, and every
/// accepted step strictly decreased it.
pub fn solve_local(
    form: &SeparableForm,
    dataset: &Dataset,
    beta0: &[f64],
    local: &LocalSolveConfig,
    projection: &ProjectionConfig,
) -> Result<LocalSolveResult, EvalError> {
    let d_beta = form.d_beta();
    assert_eq!(beta0.len(), d_beta, "start must match β dimension");
    local.assert_valid(d_beta);

    let mut beta: Vec<f64> = beta0
        .iter()
        .zip(&local.bounds)
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect();

    let p0 = project(form, dataset, &beta, projection)?;
    let mut best_loss = p0.loss;
    let mut best_beta = beta.clone();
    let mut current = p0;

    // No nonlinear coordinates: the single linear solve is the answer.
    if d_beta == 0 {
        return Ok(LocalSolveResult {
            beta_hat: best_beta,
            final_loss: best_loss,
            iterations: 0,
            termination: TerminationReason::Gradient,
            accepted_steps: 0,
            rejected_steps: 0,
        });
    }

    let mut lambda = local.initial_damping;
    let nu = local.damping_factor;
    let mut accepted_steps = 0usize;
    let mut rejected_steps = 0usize;
    let mut loss_history: Vec<f64> = vec![best_loss];
    let mut started_valid = current.valid;

    for iteration in 1..=local.max_iterations {
        if let Some(deadline) = local.deadline {
            if Instant::now() >= deadline {
                return Ok(finishing(
                    best_beta,
                    best_loss,
                    iteration - 1,
                    TerminationReason::Budget,
                    accepted_steps,
                    rejected_steps,
                ));
            }
        }

        let residual = residual_from_projection(&current, dataset.targets());
        let jac = jacobian_with_base(form, dataset, &beta, &residual, local, projection)
            .map_err(|e| match e {
                SolveError::Eval(e) => e,
                // The base projection already succeeded, so only probe
                // regions can be invalid, and those zero columns instead.
                SolveError::InvalidRegion => unreachable!("base point validated"),
            })?;

        let r_vec = DVector::from_column_slice(&residual);
        let gradient = jac.matrix.tr_mul(&r_vec);
        let grad_inf = gradient.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if current.valid && grad_inf <= local.gradient_tol {
            return Ok(finishing(
                best_beta,
                best_loss,
                iteration - 1,
                TerminationReason::Gradient,
                accepted_steps,
                rejected_steps,
            ));
        }

        // Inner loop: escalate λ on rejections/factorization failures until
        // a strictly improving step is found or steps become negligible.
        let attempt_cap = if current.valid {
            MAX_STEP_ATTEMPTS
        } else {
            INVALID_START_ATTEMPTS
        };
        let mut accepted = false;
        let mut last_step_norm = f64::INFINITY;
        for _ in 0..attempt_cap {
            let step = match lm_step(&jac.matrix, &residual, lambda, local.diagonal_floor) {
                Some(s) => s,
                None => {
                    lambda *= nu;
                    continue;
                }
            };
            let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            last_step_norm = step_norm;
            let beta_norm = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
            if step_norm <= local.step_tol * (1.0 + beta_norm) {
                // Damping has squeezed the step to nothing.
                break;
            }
            let mut trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
            reflect_into_bounds(&mut trial, &local.bounds);
            let p_trial = project(form, dataset, &trial, projection)?;
            if p_trial.loss < best_loss {
                beta = trial;
                best_beta = beta.clone();
                best_loss = p_trial.loss;
                current = p_trial;
                lambda /= nu;
                accepted_steps += 1;
                accepted = true;
                break;
            }
            rejected_steps += 1;
            lambda *= nu;
        }

        if !accepted {
            let reason = if !started_valid {
                TerminationReason::InvalidStart
            } else {
                TerminationReason::Step
            };
            return Ok(finishing(
                best_beta,
                best_loss,
                iteration,
                reason,
                accepted_steps,
                rejected_steps,
            ));
        }
        started_valid = true;

        let beta_norm = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if last_step_norm <= local.step_tol * (1.0 + beta_norm) {
            return Ok(finishing(
                best_beta,
                best_loss,
                iteration,
                TerminationReason::Step,
                accepted_steps,
                rejected_steps,
            ));
        }

        loss_history.push(best_loss);
        // Plateau: relative decrease across the last three iterations.
        if loss_history.len() >= 4 {
            let old = loss_history[loss_history.len() - 4];
            let decrease = (old - best_loss) / old.max(f64::MIN_POSITIVE);
            if decrease < local.loss_tol {
                return Ok(finishing(
                    best_beta,
                    best_loss,
                    iteration,
                    TerminationReason::LossPlateau,
                    accepted_steps,
                    rejected_steps,
                ));
            }
        }
    }

    Ok(finishing(
        best_beta,
        best_loss,
        local.max_iterations,
        TerminationReason::MaxIterations,
        accepted_steps,
        rejected_steps,
    ))
}

fn finishing(
    beta_hat: Vec<f64>,
    final_loss: f64,
    iterations: usize,
    termination: TerminationReason,
    accepted_steps: usize,
    rejected_steps: usize,
) -> LocalSolveResult {
    LocalSolveResult {
        beta_hat,
        final_loss,
        iterations,
        termination,
        accepted_steps,
        rejected_steps,
    }
}

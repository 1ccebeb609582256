//! End-to-end candidate evaluation: classify parameters, oversample and
//! select starts in function space, run the bounded local solver from each
//! start in parallel, and back-substitute the linear coefficients of the
//! winner.
//!
//! Also hosts the reference baselines (single-start LM, multistart LM over
//! the full parameter vector, and a multistart gradient-descent proxy) so
//! comparisons share one result type and one determinism policy.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::expr::{CandidateExpression, EvalError};
use crate::fsfps::{fingerprint_candidates, fs_fps_select, oversample, SamplingConfig};
use crate::parallel;
use crate::solver::{
    projected_jacobian, projected_residual, solve_local, LocalSolveConfig, LocalSolveResult,
    SolveError, TerminationReason,
};
use crate::varpro::{
    build_separable_form, classify_parameters, project, ProjectionConfig, SeparableForm,
};

/// Which reference strategy [`baseline_evaluate`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineStrategy {
    /// One damped Gauss–Newton run over the full parameter vector from a
    /// single start.
    SingleStartLm,
    /// Multistart damped Gauss–Newton over the full parameter vector with
    /// uniform box sampling.
    LmTrfMulti,
    /// Multistart backtracking gradient descent over the full parameter
    /// vector.
    GdMulti,
}

impl BaselineStrategy {
    /// Stable tag used in reports.
    pub fn tag(self) -> &'static str {
        match self {
            BaselineStrategy::SingleStartLm => "single_start_lm",
            BaselineStrategy::LmTrfMulti => "lm_trf_multi",
            BaselineStrategy::GdMulti => "gd_multi",
        }
    }
}

/// Tag reported by [`sage_fit_evaluate`].
pub const SAGE_FIT_TAG: &str = "sage_fit";

/// Uniform handle over the main pipeline and the baselines, used by
/// benchmarking surfaces and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluatorKind {
    SageFit,
    SingleStartLm,
    LmTrfMulti,
    GdMulti,
}

impl EvaluatorKind {
    pub const ALL: [EvaluatorKind; 4] = [
        EvaluatorKind::SageFit,
        EvaluatorKind::SingleStartLm,
        EvaluatorKind::LmTrfMulti,
        EvaluatorKind::GdMulti,
    ];

    /// Stable tag used in reports.
    pub fn tag(self) -> &'static str {
        match self {
            EvaluatorKind::SageFit => SAGE_FIT_TAG,
            EvaluatorKind::SingleStartLm => BaselineStrategy::SingleStartLm.tag(),
            EvaluatorKind::LmTrfMulti => BaselineStrategy::LmTrfMulti.tag(),
            EvaluatorKind::GdMulti => BaselineStrategy::GdMulti.tag(),
        }
    }

    /// Parses report tags and their common command-line aliases.
    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "sage" | "sage-fit" | "sage_fit" => Some(EvaluatorKind::SageFit),
            "single" | "single-start" | "single_start_lm" => Some(EvaluatorKind::SingleStartLm),
            "lm-multi" | "lm_trf_multi" => Some(EvaluatorKind::LmTrfMulti),
            "gd-multi" | "gd_multi" => Some(EvaluatorKind::GdMulti),
            _ => None,
        }
    }

    /// Runs this strategy on a candidate.
    pub fn evaluate(
        self,
        expr: &CandidateExpression,
        dataset: &Dataset,
        warm_theta: Option<&[f64]>,
        config: &SolverConfig,
    ) -> Result<EvaluationResult, EvalError> {
        match self {
            EvaluatorKind::SageFit => sage_fit_evaluate(expr, dataset, warm_theta, config),
            EvaluatorKind::SingleStartLm => {
                baseline_evaluate(expr, dataset, BaselineStrategy::SingleStartLm, warm_theta, config)
            }
            EvaluatorKind::LmTrfMulti => {
                baseline_evaluate(expr, dataset, BaselineStrategy::LmTrfMulti, warm_theta, config)
            }
            EvaluatorKind::GdMulti => {
                baseline_evaluate(expr, dataset, BaselineStrategy::GdMulti, warm_theta, config)
            }
        }
    }
}

/// Full evaluation configuration. `sampling.bounds` and `local.bounds` are
/// in *original parameter order* (one pair per θ coordinate); the evaluator
/// slices them down to the nonlinear coordinates internally.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub sampling: SamplingConfig,
    pub local: LocalSolveConfig,
    pub projection: ProjectionConfig,
    /// Optional cooperative wall-clock cap shared by all starts.
    pub time_budget: Option<Duration>,
}

impl SolverConfig {
    /// Defaults with explicit per-θ box bounds.
    pub fn for_theta_bounds(bounds: Vec<(f64, f64)>) -> Self {
        SolverConfig {
            sampling: SamplingConfig::with_bounds(bounds.clone()),
            local: LocalSolveConfig::with_bounds(bounds),
            projection: ProjectionConfig::default(),
            time_budget: None,
        }
    }

    /// Defaults with the standard `[-10, 10]` box on every θ coordinate.
    pub fn default_for(parameter_count: usize) -> Self {
        Self::for_theta_bounds(vec![(-10.0, 10.0); parameter_count])
    }

    fn assert_matches(&self, parameter_count: usize) {
        assert_eq!(
            self.sampling.bounds.len(),
            parameter_count,
            "sampling bounds must cover every parameter"
        );
        assert_eq!(
            self.local.bounds.len(),
            parameter_count,
            "solver bounds must cover every parameter"
        );
    }
}

/// One start's trajectory inside an evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct StartReport {
    /// Position in the selected-start list (also the tie-break key).
    pub start_index: usize,
    pub beta_start: Vec<f64>,
    pub solve: LocalSolveResult,
}

/// Outcome of one candidate evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationResult {
    pub evaluator_tag: String,
    /// Projected loss at the returned parameters (penalty value when no
    /// viable fit was found).
    pub score: f64,
    /// Full parameter vector in original order: back-substituted linear
    /// coefficients merged with the best nonlinear coordinates.
    pub theta_hat: Vec<f64>,
    /// Linear coefficients α*, ordered like the form's linear indices.
    pub alpha_hat: Vec<f64>,
    /// Nonlinear coordinates β̂, ordered like the form's nonlinear indices.
    pub beta_hat: Vec<f64>,
    /// False when the evaluation ended in the penalty regime.
    pub valid: bool,
    /// Winning entry of `per_start`, when any start ran.
    pub selected_start: Option<usize>,
    /// True when a warm start had to be clipped into the box.
    pub warm_clipped: bool,
    /// True when the zero-viable-start fallback widened the box ×10.
    pub bounds_widened: bool,
    pub per_start: Vec<StartReport>,
    #[serde(skip)]
    pub wall_time: Duration,
}

fn slice_bounds(bounds: &[(f64, f64)], indices: &[usize]) -> Vec<(f64, f64)> {
    indices.iter().map(|&k| bounds[k]).collect()
}

fn widen_bounds(bounds: &[(f64, f64)]) -> Vec<(f64, f64)> {
    bounds
        .iter()
        .map(|&(lo, hi)| {
            let center = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let half = if half > 0.0 { half * 10.0 } else { 1.0 };
            (center - half, center + half)
        })
        .collect()
}

fn clip_with_flag(values: &[f64], bounds: &[(f64, f64)]) -> (Vec<f64>, bool) {
    let mut clipped = false;
    let out = values
        .iter()
        .zip(bounds)
        .map(|(&v, &(lo, hi))| {
            let c = v.clamp(lo, hi);
            if c != v {
                clipped = true;
            }
            c
        })
        .collect();
    (out, clipped)
}

fn midpoints(bounds: &[(f64, f64)]) -> Vec<f64> {
    bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
}

/// Runs the full projected multistart pipeline on a candidate.
///
/// `warm_theta`, when given, is a full parameter vector whose nonlinear
/// slice seeds the Gaussian leg of the oversampler (out-of-box coordinates
/// are clipped and flagged). Without it the box midpoint is used, keeping
/// the sampler's legs identical across calls.
///
/// Deterministic for fixed inputs and seed, bitwise identical across thread
/// counts.
pub fn sage_fit_evaluate(
    expr: &CandidateExpression,
    dataset: &Dataset,
    warm_theta: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<EvaluationResult, EvalError> {
    let started = Instant::now();
    config.assert_matches(expr.parameter_count());
    if let Some(w) = warm_theta {
        assert_eq!(w.len(), expr.parameter_count(), "warm start must be a full θ");
    }

    let (linear, nonlinear) = classify_parameters(expr);
    let form = build_separable_form(expr, &linear, &nonlinear)
        .expect("classification only returns probe-verified splits");

    let beta_bounds = slice_bounds(&config.sampling.bounds, &nonlinear);
    let warm_beta_raw: Vec<f64> = match warm_theta {
        Some(theta) => form.extract_beta(theta),
        None => midpoints(&beta_bounds),
    };
    let (warm_beta, warm_clipped) = clip_with_flag(&warm_beta_raw, &beta_bounds);

    let deadline = config.time_budget.map(|b| started + b);

    // Nothing nonlinear to search: one linear solve settles the candidate.
    if form.d_beta() == 0 {
        let mut local = config.local.clone();
        local.bounds = Vec::new();
        local.deadline = deadline;
        let solve = solve_local(&form, dataset, &[], &local, &config.projection)?;
        return Ok(assemble_result(
            SAGE_FIT_TAG,
            &form,
            dataset,
            vec![StartReport {
                start_index: 0,
                beta_start: Vec::new(),
                solve,
            }],
            config,
            warm_clipped,
            false,
            started,
        )?);
    }

    let mut sampling = config.sampling.clone();
    sampling.bounds = beta_bounds.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);

    let betas = oversample(Some(&warm_beta), &sampling, &mut rng);
    let candidates = fingerprint_candidates(&betas, &form, dataset, &config.projection)?;
    let mut bounds_widened = false;
    let (candidates, selected, solve_bounds) = match fs_fps_select(
        &candidates,
        sampling.select_count,
        dataset.targets(),
        sampling.distance_epsilon,
    ) {
        Ok(sel) => (candidates, sel, beta_bounds),
        Err(_) => {
            // Zero viable starts: widen the box ×10 once and retry.
            bounds_widened = true;
            let wide = widen_bounds(&beta_bounds);
            sampling.bounds = wide.clone();
            let (warm_wide, _) = clip_with_flag(&warm_beta, &wide);
            let betas = oversample(Some(&warm_wide), &sampling, &mut rng);
            let candidates = fingerprint_candidates(&betas, &form, dataset, &config.projection)?;
            match fs_fps_select(
                &candidates,
                sampling.select_count,
                dataset.targets(),
                sampling.distance_epsilon,
            ) {
                Ok(sel) => (candidates, sel, wide),
                Err(_) => {
                    // Still hopeless: report the penalty outcome honestly.
                    let theta_hat =
                        form.assemble_theta(&vec![0.0; form.m()], &warm_beta);
                    return Ok(EvaluationResult {
                        evaluator_tag: SAGE_FIT_TAG.to_string(),
                        score: config.projection.penalty_loss,
                        theta_hat,
                        alpha_hat: vec![0.0; form.m()],
                        beta_hat: warm_beta,
                        valid: false,
                        selected_start: None,
                        warm_clipped,
                        bounds_widened,
                        per_start: Vec::new(),
                        wall_time: started.elapsed(),
                    });
                }
            }
        }
    };

    let mut local = config.local.clone();
    local.bounds = solve_bounds;
    local.deadline = deadline;

    let solves = parallel::map_indexed(selected.len(), |i| {
        solve_local(
            &form,
            dataset,
            &candidates[selected[i]].beta,
            &local,
            &config.projection,
        )
    });
    let mut per_start = Vec::with_capacity(selected.len());
    for (i, solve) in solves.into_iter().enumerate() {
        per_start.push(StartReport {
            start_index: i,
            beta_start: candidates[selected[i]].beta.clone(),
            solve: solve?,
        });
    }

    Ok(assemble_result(
        SAGE_FIT_TAG,
        &form,
        dataset,
        per_start,
        config,
        warm_clipped,
        bounds_widened,
        started,
    )?)
}

/// Re-evaluates a candidate warm-started from a previous full parameter
/// vector (its nonlinear slice seeds the sampler; out-of-box coordinates
/// are clipped and flagged in the result).
pub fn refit(
    expr: &CandidateExpression,
    dataset: &Dataset,
    theta_initial: &[f64],
    config: &SolverConfig,
) -> Result<EvaluationResult, EvalError> {
    sage_fit_evaluate(expr, dataset, Some(theta_initial), config)
}

/// Runs one of the reference strategies over the full parameter vector
/// (no separable structure is exploited).
pub fn baseline_evaluate(
    expr: &CandidateExpression,
    dataset: &Dataset,
    strategy: BaselineStrategy,
    warm_theta: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<EvaluationResult, EvalError> {
    let started = Instant::now();
    config.assert_matches(expr.parameter_count());
    if let Some(w) = warm_theta {
        assert_eq!(w.len(), expr.parameter_count(), "warm start must be a full θ");
    }

    let form = SeparableForm::degenerate(expr);
    let bounds = config.local.bounds.clone();
    let warm_raw = warm_theta
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| midpoints(&bounds));
    let (warm, warm_clipped) = clip_with_flag(&warm_raw, &bounds);
    let deadline = config.time_budget.map(|b| started + b);

    let mut local = config.local.clone();
    local.deadline = deadline;

    let starts: Vec<Vec<f64>> = match strategy {
        BaselineStrategy::SingleStartLm => vec![warm.clone()],
        BaselineStrategy::LmTrfMulti | BaselineStrategy::GdMulti => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.sampling.seed);
            let k = config.sampling.select_count.max(1);
            let mut starts: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    bounds
                        .iter()
                        .map(|&(lo, hi)| {
                            use rand::Rng;
                            if lo < hi {
                                rng.random_range(lo..=hi)
                            } else {
                                lo
                            }
                        })
                        .collect()
                })
                .collect();
            // A provided warm start replaces the first draw so every
            // strategy sees the same prior knowledge.
            if warm_theta.is_some() {
                starts[0] = warm.clone();
            }
            starts
        }
    };

    let solves = parallel::map_indexed(starts.len(), |i| match strategy {
        BaselineStrategy::GdMulti => gd_solve(&form, dataset, &starts[i], &local, &config.projection),
        _ => solve_local(&form, dataset, &starts[i], &local, &config.projection),
    });
    let mut per_start = Vec::with_capacity(starts.len());
    for (i, solve) in solves.into_iter().enumerate() {
        per_start.push(StartReport {
            start_index: i,
            beta_start: starts[i].clone(),
            solve: solve?,
        });
    }

    Ok(assemble_result(
        strategy.tag(),
        &form,
        dataset,
        per_start,
        config,
        warm_clipped,
        false,
        started,
    )?)
}

/// Picks the winner (lowest loss, ties to the earlier start), re-projects
/// at its β̂ for the final α*, and merges the full parameter vector.
#[allow(clippy::too_many_arguments)]
fn assemble_result(
    tag: &str,
    form: &SeparableForm,
    dataset: &Dataset,
    per_start: Vec<StartReport>,
    config: &SolverConfig,
    warm_clipped: bool,
    bounds_widened: bool,
    started: Instant,
) -> Result<EvaluationResult, EvalError> {
    assert!(!per_start.is_empty(), "at least one start must have run");
    let mut best = 0usize;
    for i in 1..per_start.len() {
        if per_start[i].solve.final_loss < per_start[best].solve.final_loss {
            best = i;
        }
    }
    let beta_hat = per_start[best].solve.beta_hat.clone();
    let p = project(form, dataset, &beta_hat, &config.projection)?;
    let (alpha_hat, score, valid) = if p.valid {
        (p.alpha.clone(), p.loss, true)
    } else {
        (vec![0.0; form.m()], config.projection.penalty_loss, false)
    };
    let theta_hat = form.assemble_theta(&alpha_hat, &beta_hat);
    Ok(EvaluationResult {
        evaluator_tag: tag.to_string(),
        score,
        theta_hat,
        alpha_hat,
        beta_hat,
        valid,
        selected_start: Some(best),
        warm_clipped,
        bounds_widened,
        per_start,
        wall_time: started.elapsed(),
    })
}

/// Deliberately plain multistart baseline step: steepest descent on the
/// projected residual with backtracking line search and box clipping.
fn gd_solve(
    form: &SeparableForm,
    dataset: &Dataset,
    theta0: &[f64],
    local: &LocalSolveConfig,
    projection: &ProjectionConfig,
) -> Result<LocalSolveResult, EvalError> {
    let d = theta0.len();
    let mut theta: Vec<f64> = theta0
        .iter()
        .zip(&local.bounds)
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect();
    let p0 = project(form, dataset, &theta, projection)?;
    let mut best_loss = p0.loss;
    if !p0.valid {
        return Ok(LocalSolveResult {
            beta_hat: theta,
            final_loss: projection.penalty_loss,
            iterations: 0,
            termination: TerminationReason::InvalidStart,
            accepted_steps: 0,
            rejected_steps: 0,
        });
    }

    let mut accepted_steps = 0usize;
    let mut rejected_steps = 0usize;
    let mut history = vec![best_loss];

    for iteration in 1..=local.max_iterations {
        if let Some(deadline) = local.deadline {
            if Instant::now() >= deadline {
                return Ok(LocalSolveResult {
                    beta_hat: theta,
                    final_loss: best_loss,
                    iterations: iteration - 1,
                    termination: TerminationReason::Budget,
                    accepted_steps,
                    rejected_steps,
                });
            }
        }

        let residual = match projected_residual(form, dataset, &theta, projection) {
            Ok(r) => r,
            Err(SolveError::Eval(e)) => return Err(e),
            Err(SolveError::InvalidRegion) => unreachable!("θ only moves on strict decrease"),
        };
        let jac = match projected_jacobian(form, dataset, &theta, local, projection) {
            Ok(j) => j,
            Err(SolveError::Eval(e)) => return Err(e),
            Err(SolveError::InvalidRegion) => unreachable!("θ only moves on strict decrease"),
        };
        let gradient: Vec<f64> = (0..d)
            .map(|j| {
                (0..residual.len())
                    .map(|i| jac.matrix[(i, j)] * residual[i])
                    .sum::<f64>()
            })
            .collect();
        let grad_inf = gradient.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if grad_inf <= local.gradient_tol {
            return Ok(LocalSolveResult {
                beta_hat: theta,
                final_loss: best_loss,
                iterations: iteration - 1,
                termination: TerminationReason::Gradient,
                accepted_steps,
                rejected_steps,
            });
        }

        let mut step_len = 1.0f64;
        let mut accepted = false;
        let mut moved_norm = 0.0f64;
        for _ in 0..60 {
            let trial: Vec<f64> = theta
                .iter()
                .zip(&gradient)
                .zip(&local.bounds)
                .map(|((t, g), (lo, hi))| (t - step_len * g).clamp(*lo, *hi))
                .collect();
            let p = project(form, dataset, &trial, projection)?;
            if p.valid && p.loss < best_loss {
                moved_norm = trial
                    .iter()
                    .zip(&theta)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                theta = trial;
                best_loss = p.loss;
                accepted = true;
                accepted_steps += 1;
                break;
            }
            rejected_steps += 1;
            step_len *= 0.5;
        }

        if !accepted {
            return Ok(LocalSolveResult {
                beta_hat: theta,
                final_loss: best_loss,
                iterations: iteration,
                termination: TerminationReason::Step,
                accepted_steps,
                rejected_steps,
            });
        }
        let theta_norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if moved_norm <= local.step_tol * (1.0 + theta_norm) {
            return Ok(LocalSolveResult {
                beta_hat: theta,
                final_loss: best_loss,
                iterations: iteration,
                termination: TerminationReason::Step,
                accepted_steps,
                rejected_steps,
            });
        }
        history.push(best_loss);
        if history.len() >= 4 {
            let old = history[history.len() - 4];
            if (old - best_loss) / old.max(f64::MIN_POSITIVE) < local.loss_tol {
                return Ok(LocalSolveResult {
                    beta_hat: theta,
                    final_loss: best_loss,
                    iterations: iteration,
                    termination: TerminationReason::LossPlateau,
                    accepted_steps,
                    rejected_steps,
                });
            }
        }
    }

    Ok(LocalSolveResult {
        beta_hat: theta,
        final_loss: best_loss,
        iterations: local.max_iterations,
        termination: TerminationReason::MaxIterations,
        accepted_steps,
        rejected_steps,
    })
}

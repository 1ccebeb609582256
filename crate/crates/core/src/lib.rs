//! Parameter-fitting evaluation for symbolic-regression candidate equations.
//!
//! Given a candidate expression with unknown parameters and a dataset, this
//! crate scores the candidate by fitting the parameters and reporting the
//! best loss found. The main pipeline ([`evaluator::sage_fit_evaluate`])
//! composes three stages:
//!
//! 1. **Variable projection** ([`varpro`]) — parameters that enter the
//!    expression conditionally linearly are solved in closed form, shrinking
//!    the nonlinear search space.
//! 2. **Function-space start selection** ([`fsfps`]) — candidate starting
//!    points for the nonlinear parameters are drawn from a mixed proposal
//!    distribution and thinned by farthest-point sampling on model *outputs*
//!    rather than parameter values.
//! 3. **Bounded local refinement** ([`solver`]) — each selected start is
//!    polished by a Levenberg-Marquardt loop with box constraints, and the
//!    best result wins.
//!
//! Baseline evaluators (single-start and multi-start full-parameter fits) and
//! fidelity diagnostics (accuracy metrics, loss-landscape slices, lost-rate
//! estimators) live in [`evaluator`] and [`diagnostics`].

pub mod bank;
pub mod dataset;
pub mod diagnostics;
pub mod evaluator;
pub mod expr;
pub mod fsfps;
pub mod parallel;
pub mod solver;
pub mod varpro;

//! Fidelity metrics and landscape analyses: NMSE, tolerance accuracy,
//! score distortion, log-ratio improvement, refit-based trajectory lost
//! rate, bank-level lost rate, and 2-D loss-grid emission with basin
//! detection.

mod landscape;
mod metrics;
mod spb;
mod trajectory;

pub use landscape::{
    detect_basins, landscape_slice, Basin, BasinReport, LandscapeGrid, MergeEvent, LOSS_SENTINEL,
};
pub use metrics::{
    acc_tau, log_nmse, log_ratio, metrics_report, nmse, score_distortion, AccTau, MetricsReport,
    LOG_NMSE_FLOOR,
};
pub use spb::{spb_lost_rate, spb_summarize, SpbCase, SpbEvaluatorSummary, SpbReport, SpbScores};
pub use trajectory::{
    trajectory_lost_rate, LostRateReport, LostRateRow, TrajectoryCandidate, TrajectoryRecord,
};

use std::time::Duration;

use thiserror::Error;

use crate::evaluator::SolverConfig;

/// Shared knobs for the refits and bank evaluations the diagnostics run.
/// Candidates vary in parameter count, so the box bound is a single
/// interval applied to every coordinate.
#[derive(Debug, Clone)]
pub struct FitProtocol {
    /// Box applied to every parameter.
    pub bound: (f64, f64),
    /// Oversample count M.
    pub oversample_count: usize,
    /// Selected start count K.
    pub select_count: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub time_budget: Option<Duration>,
}

impl Default for FitProtocol {
    fn default() -> Self {
        FitProtocol {
            bound: (-10.0, 10.0),
            oversample_count: 100,
            select_count: 8,
            seed: 0,
            max_iterations: 100,
            time_budget: None,
        }
    }
}

impl FitProtocol {
    /// Concrete configuration for a candidate with `parameter_count`
    /// parameters.
    pub fn config_for(&self, parameter_count: usize) -> SolverConfig {
        let mut config = SolverConfig::for_theta_bounds(vec![self.bound; parameter_count]);
        config.sampling.oversample_count = self.oversample_count;
        config.sampling.select_count = self.select_count;
        config.sampling.seed = self.seed;
        config.local.max_iterations = self.max_iterations;
        config.time_budget = self.time_budget;
        config
    }
}

/// Failures across the diagnostics surface.
#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("prediction and target lengths differ ({predictions} vs {targets})")]
    LengthMismatch { predictions: usize, targets: usize },
    #[error("targets have zero variance; NMSE is undefined")]
    ZeroVarianceTargets,
    #[error("every row was excluded (all targets are zero)")]
    AllRowsExcluded,
    #[error("log ratio requires strictly positive finite inputs, got {value}")]
    NonPositiveRatioInput { value: f64 },
    #[error("axis index {axis} is out of range for {parameter_count} parameters")]
    AxisOutOfRange { axis: usize, parameter_count: usize },
    #[error("the two sweep axes must differ")]
    AxesEqual,
    #[error("sweep range for axis {axis} is degenerate (lo == hi)")]
    DegenerateRange { axis: usize },
    #[error("grid resolution must be at least 2, got {grid_n}")]
    GridTooSmall { grid_n: usize },
    #[error("every grid cell carries the invalid-loss sentinel")]
    AllSentinelGrid,
    #[error("no discarded candidate pair could be compared")]
    EmptyComparisonSet,
    #[error("the trajectory holds no candidates")]
    EmptyTrajectory,
    #[error("candidate evaluation failed: {0}")]
    Eval(#[from] crate::expr::EvalError),
    #[error("reading records failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("record line {line} is malformed: {message}")]
    MalformedRecord { line: usize, message: String },
}

//! Scalar fit-quality metrics.

use serde::Serialize;

use super::DiagnosticsError;

/// Floor applied before taking log₁₀ of an NMSE, so that exact fits report
/// a large finite improvement instead of −∞.
pub const LOG_NMSE_FLOOR: f64 = 1e-18;

/// Squared error normalized by target variance: 1 equals the mean
/// predictor, 0 is an exact fit.
pub fn nmse(predictions: &[f64], targets: &[f64]) -> Result<f64, DiagnosticsError> {
    if predictions.len() != targets.len() {
        return Err(DiagnosticsError::LengthMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let denom: f64 = targets.iter().map(|y| (y - mean) * (y - mean)).sum();
    if denom == 0.0 {
        return Err(DiagnosticsError::ZeroVarianceTargets);
    }
    let num: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok(num / denom)
}

/// log₁₀ of a floored NMSE; see [`LOG_NMSE_FLOOR`].
pub fn log_nmse(nmse_value: f64) -> f64 {
    nmse_value.max(LOG_NMSE_FLOOR).log10()
}

/// Fraction of rows whose relative error is within τ.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AccTau {
    pub tau: f64,
    pub fraction: f64,
    /// Rows entering the fraction.
    pub n_included: usize,
    /// Rows with a zero target, excluded because relative error is
    /// undefined there.
    pub n_excluded: usize,
}

/// Accuracy-to-tolerance: the fraction of rows with `|(ŷ−y)/y| ≤ τ`.
/// Rows with `y = 0` are excluded and counted.
pub fn acc_tau(predictions: &[f64], targets: &[f64], tau: f64) -> Result<AccTau, DiagnosticsError> {
    if predictions.len() != targets.len() {
        return Err(DiagnosticsError::LengthMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    let mut included = 0usize;
    let mut excluded = 0usize;
    let mut passed = 0usize;
    for (p, y) in predictions.iter().zip(targets) {
        if *y == 0.0 {
            excluded += 1;
            continue;
        }
        included += 1;
        if ((p - y) / y).abs() <= tau {
            passed += 1;
        }
    }
    if included == 0 {
        return Err(DiagnosticsError::AllRowsExcluded);
    }
    Ok(AccTau {
        tau,
        fraction: passed as f64 / included as f64,
        n_included: included,
        n_excluded: excluded,
    })
}

/// log₁₀ improvement of a treated NMSE over a baseline NMSE.
pub fn log_ratio(nmse_baseline: f64, nmse_treated: f64) -> Result<f64, DiagnosticsError> {
    for value in [nmse_baseline, nmse_treated] {
        if !(value.is_finite() && value > 0.0) {
            return Err(DiagnosticsError::NonPositiveRatioInput { value });
        }
    }
    Ok((nmse_baseline / nmse_treated).log10())
}

/// Gap between a fitted score and a reference score. The reference is an
/// *empirical* best-known value, so slightly negative results are possible
/// when the fit beats the reference.
pub fn score_distortion(hat_score: f64, reference_score: f64) -> f64 {
    assert!(
        hat_score.is_finite() && reference_score.is_finite(),
        "distortion requires finite scores"
    );
    hat_score - reference_score
}

/// Bundle of the scalar metrics for one fit.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub nmse: f64,
    pub log_nmse: f64,
    pub acc_tau: Vec<AccTau>,
    /// Rows with a zero target (shared by every `acc_tau` entry).
    pub excluded_zero_target_rows: usize,
    pub n_rows: usize,
    /// `hat − reference` against the supplied empirical reference score.
    pub empirical_score_distortion: Option<f64>,
}

/// Computes every scalar metric in one pass. `hat_vs_reference`, when
/// given, is `(hat_score, empirical_reference_score)`.
pub fn metrics_report(
    predictions: &[f64],
    targets: &[f64],
    taus: &[f64],
    hat_vs_reference: Option<(f64, f64)>,
) -> Result<MetricsReport, DiagnosticsError> {
    let nmse_value = nmse(predictions, targets)?;
    let mut acc = Vec::with_capacity(taus.len());
    for &tau in taus {
        acc.push(acc_tau(predictions, targets, tau)?);
    }
    let excluded = acc.first().map_or(0, |a| a.n_excluded);
    Ok(MetricsReport {
        nmse: nmse_value,
        log_nmse: log_nmse(nmse_value),
        acc_tau: acc,
        excluded_zero_target_rows: excluded,
        n_rows: targets.len(),
        empirical_score_distortion: hat_vs_reference.map(|(hat, r)| score_distortion(hat, r)),
    })
}

//! Bank-level evaluator fidelity: run several evaluators over a candidate
//! bank under a shared cold-start protocol, take the per-candidate best
//! score as the empirical reference, and count how often each evaluator
//! misses it by more than a factor τ.

use std::sync::Arc;

use serde::Serialize;

use super::metrics::log_nmse;
use super::{DiagnosticsError, FitProtocol};
use crate::dataset::Dataset;
use crate::evaluator::EvaluatorKind;
use crate::expr::CandidateExpression;
use crate::parallel;

/// One bank entry ready to evaluate.
#[derive(Debug, Clone)]
pub struct SpbCase {
    /// Reporting label (e.g. "p3/c17").
    pub label: String,
    pub expr: CandidateExpression,
    pub dataset: Arc<Dataset>,
}

/// Table-shaped summary for one evaluator.
#[derive(Debug, Clone, Serialize)]
pub struct SpbEvaluatorSummary {
    pub tag: String,
    /// Fraction of entries scored above τ · O_emp.
    pub lost_rate: f64,
    pub n_missed: usize,
    pub n_cases: usize,
    pub mean_log_nmse: f64,
    pub median_log_nmse: f64,
    pub mean_score: f64,
}

/// Lost-rate report across evaluators.
#[derive(Debug, Clone, Serialize)]
pub struct SpbReport {
    pub tau: f64,
    /// Per-entry empirical reference score: the minimum across evaluators.
    pub o_emp: Vec<f64>,
    pub evaluators: Vec<SpbEvaluatorSummary>,
}

/// Report plus the raw score table behind it.
#[derive(Debug, Clone, Serialize)]
pub struct SpbScores {
    pub tags: Vec<String>,
    /// `score_table[case][evaluator]`.
    pub score_table: Vec<Vec<f64>>,
    pub report: SpbReport,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite log values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Builds the lost-rate summary from an already-computed score table.
/// `mean_square_deviation[case]` is Σ(y−ȳ)²/n of that case's targets (the
/// mean-predictor MSE), used to express scores as NMSE.
pub fn spb_summarize(
    tags: &[String],
    score_table: &[Vec<f64>],
    mean_square_deviation: &[f64],
    tau: f64,
) -> SpbReport {
    assert!(!score_table.is_empty(), "bank must be nonempty");
    assert_eq!(score_table.len(), mean_square_deviation.len());
    for row in score_table {
        assert_eq!(row.len(), tags.len(), "score row per evaluator");
    }
    assert!(tau > 0.0, "τ must be positive");

    let n_cases = score_table.len();
    let o_emp: Vec<f64> = score_table
        .iter()
        .map(|row| row.iter().fold(f64::INFINITY, |m, &s| m.min(s)))
        .collect();

    let evaluators = tags
        .iter()
        .enumerate()
        .map(|(e, tag)| {
            let mut n_missed = 0usize;
            let mut log_values = Vec::with_capacity(n_cases);
            let mut score_sum = 0.0;
            for (case, row) in score_table.iter().enumerate() {
                let score = row[e];
                if score > tau * o_emp[case] {
                    n_missed += 1;
                }
                let msd = mean_square_deviation[case];
                let nmse = if msd > 0.0 { score / msd } else { f64::INFINITY };
                log_values.push(log_nmse(nmse));
                score_sum += score;
            }
            let mean_log = log_values.iter().sum::<f64>() / n_cases as f64;
            let median_log = median(&mut log_values);
            SpbEvaluatorSummary {
                tag: tag.clone(),
                lost_rate: n_missed as f64 / n_cases as f64,
                n_missed,
                n_cases,
                mean_log_nmse: mean_log,
                median_log_nmse: median_log,
                mean_score: score_sum / n_cases as f64,
            }
        })
        .collect();

    SpbReport {
        tau,
        o_emp,
        evaluators,
    }
}

fn mean_square_deviation(dataset: &Dataset) -> f64 {
    let y = dataset.targets();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Runs every evaluator on every bank entry under the cold-start protocol
/// (warm θ₀ = 1 for all), scoring crashes and penalty outcomes with the
/// penalty loss, then summarizes lost rates against the per-entry best.
///
/// Entries evaluate in parallel; the table layout is canonical.
pub fn spb_lost_rate(
    cases: &[SpbCase],
    kinds: &[EvaluatorKind],
    tau: f64,
    protocol: &FitProtocol,
) -> Result<SpbScores, DiagnosticsError> {
    assert!(!cases.is_empty(), "bank must be nonempty");
    assert!(!kinds.is_empty(), "at least one evaluator required");

    let score_table: Vec<Vec<f64>> = parallel::map_indexed(cases.len(), |i| {
        let case = &cases[i];
        let d = case.expr.parameter_count();
        let config = protocol.config_for(d);
        let cold_theta = vec![1.0; d];
        kinds
            .iter()
            .map(|kind| {
                match kind.evaluate(&case.expr, &case.dataset, Some(&cold_theta), &config) {
                    Ok(result) if result.valid => result.score,
                    _ => config.projection.penalty_loss,
                }
            })
            .collect()
    });

    let msd: Vec<f64> = cases
        .iter()
        .map(|case| mean_square_deviation(&case.dataset))
        .collect();
    let tags: Vec<String> = kinds.iter().map(|k| k.tag().to_string()).collect();
    let report = spb_summarize(&tags, &score_table, &msd, tau);
    Ok(SpbScores {
        tags,
        score_table,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_evaluator_defines_the_reference_and_never_misses() {
        let tags = vec!["only".to_string()];
        let scores = vec![vec![0.5], vec![2.0], vec![1e-8]];
        let msd = vec![1.0, 1.0, 1.0];
        let report = spb_summarize(&tags, &scores, &msd, 3.0);
        assert_eq!(report.evaluators[0].lost_rate, 0.0);
        assert_eq!(report.o_emp, vec![0.5, 2.0, 1e-8]);
    }

    #[test]
    fn uniformly_worse_evaluator_misses_everything() {
        let tags = vec!["good".to_string(), "bad".to_string()];
        let scores: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                let base = 10f64.powi(-(i as i32) - 2);
                vec![base, 10.0 * base]
            })
            .collect();
        let msd = vec![1.0; 4];
        let report = spb_summarize(&tags, &scores, &msd, 3.0);
        assert_eq!(report.evaluators[0].lost_rate, 0.0);
        assert_eq!(report.evaluators[1].lost_rate, 1.0);
        assert!(report.evaluators[1].mean_log_nmse > report.evaluators[0].mean_log_nmse);
    }

    #[test]
    fn ties_at_exactly_tau_are_not_missed() {
        let tags = vec!["a".to_string(), "b".to_string()];
        let scores = vec![vec![1.0, 3.0]];
        let report = spb_summarize(&tags, &scores, &[1.0], 3.0);
        assert_eq!(report.evaluators[1].n_missed, 0);
    }

    fn case(label: &str, expression: &str, params: &[&str], f: impl Fn(f64) -> f64) -> SpbCase {
        let xs: Vec<f64> = (0..64).map(|i| 3.0 * i as f64 / 63.0).collect();
        // A deterministic out-of-model ripple acts as a noise floor, so
        // every evaluator that finds the basin converges to the same score
        // (a multiplicative miss criterion is vacuous at machine zero).
        let dataset = Dataset::new(
            xs.iter().map(|&x| vec![x]).collect(),
            xs.iter()
                .map(|&x| f(x) + 1e-3 * (13.7 * x).cos())
                .collect(),
            Some(vec!["x".to_string()]),
        )
        .unwrap();
        SpbCase {
            label: label.to_string(),
            expr: CandidateExpression::parse(expression, &["x"], params).unwrap(),
            dataset: Arc::new(dataset),
        }
    }

    #[test]
    fn needle_entry_separates_the_evaluators() {
        let cases = vec![
            case("easy", "a*x + b", &["a", "b"], |x| 3.0 * x + 2.0),
            case("needle", "a*sin(b*x)", &["a", "b"], |x| 1.5 * (7.3 * x).sin()),
        ];
        let kinds = [EvaluatorKind::SageFit, EvaluatorKind::SingleStartLm];
        let scores =
            spb_lost_rate(&cases, &kinds, 3.0, &FitProtocol::default()).unwrap();
        assert_eq!(scores.score_table.len(), 2);
        assert_eq!(scores.score_table[0].len(), 2);
        let report = &scores.report;
        assert_eq!(report.evaluators[0].lost_rate, 0.0, "reference evaluator");
        // The cold start θ₀ = 1 sits basins away from b = 7.3.
        assert_eq!(report.evaluators[1].n_missed, 1);
        assert_eq!(report.evaluators[1].lost_rate, 0.5);
    }

    #[test]
    fn crashing_entries_score_the_penalty_for_everyone() {
        let mut broken = case("broken", "a*x", &["a"], |x| x);
        // Rebind the expression to a variable the dataset does not carry.
        broken.expr = CandidateExpression::parse("a*z", &["z"], &["a"]).unwrap();
        let kinds = [EvaluatorKind::SageFit, EvaluatorKind::SingleStartLm];
        let protocol = FitProtocol::default();
        let scores = spb_lost_rate(&[broken], &kinds, 3.0, &protocol).unwrap();
        let penalty = protocol.config_for(1).projection.penalty_loss;
        assert_eq!(scores.score_table[0], vec![penalty, penalty]);
        // All-miss entries count against nobody.
        assert_eq!(scores.report.evaluators[0].n_missed, 0);
        assert_eq!(scores.report.evaluators[1].n_missed, 0);
    }
}

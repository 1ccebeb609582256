//! Refit-based lost-rate analysis over search trajectories.
//!
//! A trajectory is the chronological candidate sequence a search produced,
//! each with the loss its original evaluator reported. The reference
//! updates are the strictly improving subsequence; everything else was
//! discarded. A discarded candidate is *lost* when a high-fidelity refit
//! lands it strictly below the refit of the incumbent it was discarded
//! against.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{DiagnosticsError, FitProtocol};
use crate::dataset::Dataset;
use crate::evaluator::refit;
use crate::expr::CandidateExpression;

/// One trajectory entry as recorded by the original search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryCandidate {
    pub index: usize,
    pub expression: String,
    pub variables: Vec<String>,
    pub parameters: Vec<String>,
    /// Loss the original (possibly weak) evaluator reported.
    pub loss: f64,
    /// Parameters the original evaluator returned.
    pub theta: Vec<f64>,
}

/// Chronological candidate sequence.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    pub candidates: Vec<TrajectoryCandidate>,
}

impl TrajectoryRecord {
    pub fn new(candidates: Vec<TrajectoryCandidate>) -> Result<Self, DiagnosticsError> {
        if candidates.is_empty() {
            return Err(DiagnosticsError::EmptyTrajectory);
        }
        Ok(TrajectoryRecord { candidates })
    }

    /// Parses one JSON candidate per line, skipping malformed lines.
    /// Returns the record and the number of lines skipped.
    pub fn from_jsonl_reader(
        reader: impl BufRead,
    ) -> Result<(Self, usize), DiagnosticsError> {
        let mut candidates = Vec::new();
        let mut skipped = 0usize;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<TrajectoryCandidate>(&line) {
                Ok(c) => candidates.push(c),
                Err(_) => skipped += 1,
            }
        }
        Ok((Self::new(candidates)?, skipped))
    }

    /// Positions of the reference updates u_k: the strictly improving loss
    /// subsequence, starting with the first candidate.
    pub fn reference_updates(&self) -> Vec<usize> {
        let mut updates = Vec::new();
        let mut best = f64::INFINITY;
        for (pos, c) in self.candidates.iter().enumerate() {
            if c.loss < best {
                updates.push(pos);
                best = c.loss;
            }
        }
        updates
    }

    /// Intervals (u_k position, discarded positions between u_k and the
    /// next update). Every candidate belongs to exactly one interval, and
    /// updates belong to none.
    pub fn intervals(&self) -> Vec<(usize, Vec<usize>)> {
        let mut intervals: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut best = f64::INFINITY;
        for (pos, c) in self.candidates.iter().enumerate() {
            if c.loss < best {
                best = c.loss;
                intervals.push((pos, Vec::new()));
            } else if let Some((_, discarded)) = intervals.last_mut() {
                discarded.push(pos);
            }
        }
        intervals
    }
}

/// One compared pair in the lost-rate table.
#[derive(Debug, Clone, Serialize)]
pub struct LostRateRow {
    /// Trajectory position of the discarded candidate.
    pub candidate_position: usize,
    /// `index` field of the discarded candidate.
    pub candidate_index: usize,
    /// Trajectory position of the incumbent it was discarded against.
    pub incumbent_position: usize,
    /// Refit score of the discarded candidate (`None` = refit failed).
    pub candidate_refit_score: Option<f64>,
    /// Refit score of the incumbent (`None` = refit failed).
    pub incumbent_refit_score: Option<f64>,
    /// `Some(true)` when the candidate refit strictly beats the incumbent
    /// refit; `None` when either refit failed (pair excluded).
    pub lost: Option<bool>,
}

/// Lost-rate outcome with the full comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct LostRateReport {
    /// `n_lost / n_compared`.
    pub rate: f64,
    /// Pairs where both refits succeeded.
    pub n_compared: usize,
    pub n_lost: usize,
    /// Pairs excluded because a refit failed.
    pub n_refit_failures: usize,
    pub rows: Vec<LostRateRow>,
}

fn refit_score(
    candidate: &TrajectoryCandidate,
    dataset: &Dataset,
    protocol: &FitProtocol,
) -> Option<f64> {
    let variables: Vec<&str> = candidate.variables.iter().map(String::as_str).collect();
    let parameters: Vec<&str> = candidate.parameters.iter().map(String::as_str).collect();
    let expr = CandidateExpression::parse(&candidate.expression, &variables, &parameters).ok()?;
    if candidate.theta.len() != expr.parameter_count() {
        return None;
    }
    let config = protocol.config_for(expr.parameter_count());
    let result = refit(&expr, dataset, &candidate.theta, &config).ok()?;
    result.valid.then_some(result.score)
}

/// Refits every reference update and every discarded candidate, counting a
/// discarded candidate as lost when its refit strictly beats its
/// incumbent's refit. Pairs with a failed refit (unparseable expression,
/// mismatched θ, or penalty outcome) drop out of the denominator.
pub fn trajectory_lost_rate(
    record: &TrajectoryRecord,
    dataset: &Dataset,
    protocol: &FitProtocol,
) -> Result<LostRateReport, DiagnosticsError> {
    if record.candidates.is_empty() {
        return Err(DiagnosticsError::EmptyTrajectory);
    }
    let mut rows = Vec::new();
    let mut n_compared = 0usize;
    let mut n_lost = 0usize;
    let mut n_failures = 0usize;

    for (incumbent_pos, discarded) in record.intervals() {
        if discarded.is_empty() {
            continue;
        }
        let incumbent_score =
            refit_score(&record.candidates[incumbent_pos], dataset, protocol);
        for pos in discarded {
            let candidate = &record.candidates[pos];
            let candidate_score = refit_score(candidate, dataset, protocol);
            let lost = match (candidate_score, incumbent_score) {
                (Some(c), Some(u)) => {
                    n_compared += 1;
                    let lost = c < u;
                    if lost {
                        n_lost += 1;
                    }
                    Some(lost)
                }
                _ => {
                    n_failures += 1;
                    None
                }
            };
            rows.push(LostRateRow {
                candidate_position: pos,
                candidate_index: candidate.index,
                incumbent_position: incumbent_pos,
                candidate_refit_score: candidate_score,
                incumbent_refit_score: incumbent_score,
                lost,
            });
        }
    }

    if n_compared == 0 {
        return Err(DiagnosticsError::EmptyComparisonSet);
    }
    Ok(LostRateReport {
        rate: n_lost as f64 / n_compared as f64,
        n_compared,
        n_lost,
        n_refit_failures: n_failures,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn candidate(
        index: usize,
        expression: &str,
        parameters: &[&str],
        loss: f64,
        theta: &[f64],
    ) -> TrajectoryCandidate {
        TrajectoryCandidate {
            index,
            expression: expression.to_string(),
            variables: vec!["x".to_string()],
            parameters: parameters.iter().map(|s| s.to_string()).collect(),
            loss,
            theta: theta.to_vec(),
        }
    }

    fn sine_dataset() -> Dataset {
        let xs: Vec<f64> = (0..64).map(|i| 3.0 * i as f64 / 63.0).collect();
        Dataset::new(
            xs.iter().map(|&x| vec![x]).collect(),
            xs.iter().map(|&x| 1.5 * (2.3 * x).sin()).collect(),
            Some(vec!["x".to_string()]),
        )
        .unwrap()
    }

    #[test]
    fn reference_updates_form_the_strictly_improving_chain() {
        let record = TrajectoryRecord::new(vec![
            candidate(0, "a*x", &["a"], 0.5, &[0.1]),
            candidate(1, "a*x", &["a"], 1.0, &[0.2]),
            candidate(2, "a*x", &["a"], 0.4, &[0.3]),
            candidate(3, "a*x", &["a"], 0.6, &[0.4]),
            candidate(4, "a*x", &["a"], 0.3, &[0.5]),
        ])
        .unwrap();
        assert_eq!(record.reference_updates(), vec![0, 2, 4]);
        let intervals = record.intervals();
        assert_eq!(intervals.len(), 3);
        assert_eq!(intervals[0], (0, vec![1]));
        assert_eq!(intervals[1], (2, vec![3]));
        assert_eq!(intervals[2], (4, vec![]));
    }

    #[test]
    fn planted_candidate_is_detected_and_duplicates_are_not() {
        let data = sine_dataset();
        // The planted entry has the true structure with sabotaged θ and a
        // bad recorded loss; the duplicate shares the incumbent's structure
        // so its refit ties (strict inequality keeps it honest).
        let record = TrajectoryRecord::new(vec![
            candidate(0, "a*x", &["a"], 0.5, &[0.1]),
            candidate(1, "a*sin(b*x)", &["a", "b"], 0.9, &[0.3, 6.0]),
            candidate(2, "a*x", &["a"], 0.8, &[0.2]),
            candidate(3, "a*x + b", &["a", "b"], 0.3, &[0.4, 0.1]),
        ])
        .unwrap();
        let report =
            trajectory_lost_rate(&record, &data, &FitProtocol::default()).unwrap();
        assert_eq!(report.n_compared, 2);
        assert_eq!(report.n_lost, 1);
        assert!((report.rate - 0.5).abs() <= 1e-15);
        let planted = report
            .rows
            .iter()
            .find(|r| r.candidate_position == 1)
            .unwrap();
        assert_eq!(planted.lost, Some(true));
        assert!(planted.candidate_refit_score.unwrap() <= 1e-10);
        let duplicate = report
            .rows
            .iter()
            .find(|r| r.candidate_position == 2)
            .unwrap();
        assert_eq!(duplicate.lost, Some(false));
    }

    #[test]
    fn honest_trajectory_scores_zero() {
        let data = sine_dataset();
        let record = TrajectoryRecord::new(vec![
            candidate(0, "a*x", &["a"], 0.5, &[0.1]),
            candidate(1, "a*x", &["a"], 0.9, &[0.7]),
            candidate(2, "a*x", &["a"], 0.6, &[0.9]),
        ])
        .unwrap();
        let report =
            trajectory_lost_rate(&record, &data, &FitProtocol::default()).unwrap();
        assert_eq!(report.rate, 0.0);
        assert_eq!(report.n_compared, 2);
    }

    #[test]
    fn failed_refits_drop_out_of_the_denominator() {
        let data = sine_dataset();
        let record = TrajectoryRecord::new(vec![
            candidate(0, "a*x", &["a"], 0.5, &[0.1]),
            candidate(1, "a*+x", &["a"], 0.9, &[0.3]), // unparseable
            candidate(2, "a*x", &["a"], 0.8, &[0.2, 0.4]), // wrong θ length
            candidate(3, "a*x", &["a"], 0.7, &[0.2]),  // clean duplicate
        ])
        .unwrap();
        let report =
            trajectory_lost_rate(&record, &data, &FitProtocol::default()).unwrap();
        assert_eq!(report.n_compared, 1);
        assert_eq!(report.n_refit_failures, 2);
        assert_eq!(report.rate, 0.0);
        assert_eq!(report.rows.len(), 3);
    }

    #[test]
    fn all_updates_means_nothing_to_compare() {
        let data = sine_dataset();
        let record = TrajectoryRecord::new(vec![
            candidate(0, "a*x", &["a"], 0.5, &[0.1]),
            candidate(1, "a*x", &["a"], 0.4, &[0.2]),
        ])
        .unwrap();
        assert!(matches!(
            trajectory_lost_rate(&record, &data, &FitProtocol::default()),
            Err(DiagnosticsError::EmptyComparisonSet)
        ));
    }

    #[test]
    fn jsonl_ingestion_skips_malformed_lines() {
        let good = candidate(0, "a*x", &["a"], 0.5, &[0.1]);
        let mut text = serde_json::to_string(&good).unwrap();
        text.push('\n');
        text.push_str("{not json}\n\n");
        text.push_str(&serde_json::to_string(&candidate(1, "a*x", &["a"], 0.4, &[0.2])).unwrap());
        text.push('\n');
        let (record, skipped) =
            TrajectoryRecord::from_jsonl_reader(text.as_bytes()).unwrap();
        assert_eq!(record.candidates.len(), 2);
        assert_eq!(skipped, 1);
        assert_eq!(record.candidates[1].index, 1);
    }
}

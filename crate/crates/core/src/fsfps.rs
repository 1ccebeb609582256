//! Function-space farthest-point start selection.
//!
//! Instead of scattering local-solver starts blindly in parameter space,
//! this module oversamples M candidate β vectors, computes each candidate's
//! *semantic fingerprint* — the model output c + Φ·α*(β) over the dataset —
//! and greedily keeps K fingerprints that are far apart in function space.
//! Two β vectors that produce nearly the same function are redundant starts
//! no matter how far apart they sit numerically; the converse is what
//! multi-start needs.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::expr::EvalError;
use crate::parallel;
use crate::varpro::{project, ProjectionConfig, SeparableForm};

/// One oversampled start: its β vector, function-space fingerprint,
/// projected loss, and validity.
#[derive(Debug, Clone)]
pub struct StartCandidate {
    pub beta: Vec<f64>,
    /// Model output c + Φ·α*(β) per dataset row; NaN on invalid rows.
    pub fingerprint: Vec<f64>,
    /// Projected loss (penalty value when invalid).
    pub loss: f64,
    /// True when the β point had enough finite rows and a below-penalty
    /// loss.
    pub valid: bool,
}

/// Oversampling and selection configuration.
#[derive(Debug, Clone)]
pub struct SamplingConfig {
    /// Number of β vectors drawn before selection (M).
    pub oversample_count: usize,
    /// Number of starts kept (K).
    pub select_count: usize,
    /// Per-coordinate inclusive box `[ℓ, u]` for β.
    pub bounds: Vec<(f64, f64)>,
    /// ε in the normalized function-space distance.
    pub distance_epsilon: f64,
    /// Seed for the sampling stream.
    pub seed: u64,
}

impl SamplingConfig {
    /// Defaults (M = 100, K = 8, ε = 1e-12) with the given per-β bounds.
    pub fn with_bounds(bounds: Vec<(f64, f64)>) -> Self {
        SamplingConfig {
            oversample_count: 100,
            select_count: 8,
            bounds,
            distance_epsilon: 1e-12,
            seed: 0,
        }
    }

    fn assert_valid(&self) {
        assert!(self.select_count >= 1, "K must be at least 1");
        assert!(
            self.select_count <= self.oversample_count,
            "K must not exceed M"
        );
        assert!(self.distance_epsilon > 0.0, "ε must be positive");
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            assert!(
                lo.is_finite() && hi.is_finite() && lo <= hi,
                "bounds[{i}] must be a finite non-empty interval, got [{lo}, {hi}]"
            );
        }
    }
}

/// Selection failure: nothing to start from.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsFpsError {
    #[error("no viable start: every oversampled point was invalid")]
    NoViableStart,
}

/// Draws `M` β vectors inside the bounds: 40% Gaussian around the warm
/// start (σ = 0.25·(u−ℓ) per coordinate), 40% uniform, 20% sign-symmetric
/// log-uniform with magnitudes in [1e-2, 1e2]; everything clipped to the
/// box. Without a warm start the Gaussian share folds into the uniform leg.
/// With no β coordinates the whole sample collapses to one empty vector.
pub fn oversample(
    warm_start: Option<&[f64]>,
    config: &SamplingConfig,
    rng: &mut impl Rng,
) -> Vec<Vec<f64>> {
    config.assert_valid();
    let d_beta = config.bounds.len();
    if d_beta == 0 {
        return vec![Vec::new()];
    }
    if let Some(w) = warm_start {
        assert_eq!(w.len(), d_beta, "warm start must match β dimension");
    }

    let m = config.oversample_count;
    let mut n_gauss = 2 * m / 5;
    let n_log = m / 5;
    if warm_start.is_none() {
        n_gauss = 0;
    }
    let n_uniform = m - n_gauss - n_log;

    let clip = |v: f64, j: usize| -> f64 {
        let (lo, hi) = config.bounds[j];
        v.clamp(lo, hi)
    };

    let mut samples = Vec::with_capacity(m);
    if let Some(warm) = warm_start {
        for _ in 0..n_gauss {
            let beta: Vec<f64> = (0..d_beta)
                .map(|j| {
                    let (lo, hi) = config.bounds[j];
                    let sigma = 0.25 * (hi - lo);
                    let z: f64 = rng.sample(StandardNormal);
                    clip(warm[j] + sigma * z, j)
                })
                .collect();
            samples.push(beta);
        }
    }
    for _ in 0..n_uniform {
        let beta: Vec<f64> = (0..d_beta)
            .map(|j| {
                let (lo, hi) = config.bounds[j];
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            })
            .collect();
        samples.push(beta);
    }
    for _ in 0..n_log {
        let beta: Vec<f64> = (0..d_beta)
            .map(|j| {
                let exponent: f64 = rng.random_range(-2.0..=2.0);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                clip(sign * 10f64.powf(exponent), j)
            })
            .collect();
        samples.push(beta);
    }
    samples
}

/// Projects every β candidate and wraps it with its fingerprint and loss.
/// Candidates are processed in parallel; output order matches input order.
pub fn fingerprint_candidates(
    betas: &[Vec<f64>],
    form: &SeparableForm,
    dataset: &Dataset,
    config: &ProjectionConfig,
) -> Result<Vec<StartCandidate>, EvalError> {
    assert!(!betas.is_empty(), "candidate list must be nonempty");
    let results = parallel::map_indexed(betas.len(), |i| {
        project(form, dataset, &betas[i], config).map(|p| StartCandidate {
            beta: betas[i].clone(),
            valid: p.valid && p.loss < config.penalty_loss,
            fingerprint: p.predictions,
            loss: p.loss,
        })
    });
    results.into_iter().collect()
}

/// Normalized function-space distance between two fingerprints:
/// ‖f_a − f_b‖₂ / (‖y‖₂ + ε), summed over rows finite in *both* and
/// rescaled by n/|intersection| to stay comparable across masks. An empty
/// intersection counts as infinitely far apart.
pub fn fingerprint_distance(a: &[f64], b: &[f64], y_norm: f64, epsilon: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut sum_sq = 0.0;
    let mut shared = 0usize;
    for (va, vb) in a.iter().zip(b) {
        if va.is_finite() && vb.is_finite() {
            let d = va - vb;
            sum_sq += d * d;
            shared += 1;
        }
    }
    if shared == 0 {
        return f64::INFINITY;
    }
    let scaled = sum_sq * n as f64 / shared as f64;
    scaled.sqrt() / (y_norm + epsilon)
}

/// Greedy farthest-point selection over valid candidates, anchored at the
/// minimum-loss candidate. Returns up to `k` indices into `candidates`, in
/// selection order; ties break toward the lower index, and a shortfall
/// (fewer valid candidates than `k`) returns all of them.
pub fn fs_fps_select(
    candidates: &[StartCandidate],
    k: usize,
    y: &[f64],
    epsilon: f64,
) -> Result<Vec<usize>, FsFpsError> {
    assert!(k >= 1, "K must be at least 1");
    let valid: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].valid)
        .collect();
    if valid.is_empty() {
        return Err(FsFpsError::NoViableStart);
    }
    let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();

    // Anchor: minimum loss, ties to the lower index (strict < keeps the
    // earliest of equals).
    let mut anchor = valid[0];
    for &i in &valid[1..] {
        if candidates[i].loss < candidates[anchor].loss {
            anchor = i;
        }
    }

    let mut selected = vec![anchor];
    // min_dist[i] = distance from candidate i to its nearest selected point.
    let mut min_dist: Vec<f64> = vec![f64::INFINITY; candidates.len()];
    while selected.len() < k.min(valid.len()) {
        let last = *selected.last().expect("nonempty");
        let mut best: Option<(usize, f64)> = None;
        for &i in &valid {
            if selected.contains(&i) {
                continue;
            }
            let d = fingerprint_distance(
                &candidates[i].fingerprint,
                &candidates[last].fingerprint,
                y_norm,
                epsilon,
            );
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            match best {
                Some((_, bd)) if min_dist[i] <= bd => {}
                _ => best = Some((i, min_dist[i])),
            }
        }
        match best {
            Some((i, _)) => selected.push(i),
            None => break,
        }
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::CandidateExpression;
    use crate::varpro::{build_separable_form, classify_parameters};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sine_form() -> (CandidateExpression, SeparableForm) {
        let c = CandidateExpression::parse("a*sin(b*x)", &["x"], &["a", "b"]).unwrap();
        let (l, nl) = classify_parameters(&c);
        let form = build_separable_form(&c, &l, &nl).unwrap();
        (c, form)
    }

    /// β = (b, c) form for tests that sample a 2-D nonlinear space.
    fn shifted_sine_form() -> SeparableForm {
        let c = CandidateExpression::parse("a*sin(b*x + c)", &["x"], &["a", "b", "c"]).unwrap();
        let (l, nl) = classify_parameters(&c);
        build_separable_form(&c, &l, &nl).unwrap()
    }

    fn sine_dataset() -> Dataset {
        let xs: Vec<f64> = (0..64).map(|i| i as f64 * 0.05).collect();
        Dataset::new(
            xs.iter().map(|&x| vec![x]).collect(),
            xs.iter().map(|&x| (2.0 * x).sin()).collect(),
            Some(vec!["x".to_string()]),
        )
        .unwrap()
    }

    #[test]
    fn oversample_counts_bounds_and_determinism() {
        let config = SamplingConfig::with_bounds(vec![(-5.0, 5.0), (0.0, 12.0)]);
        let warm = [0.5, 6.0];
        let a = oversample(Some(&warm), &config, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.len(), 100);
        for beta in &a {
            assert!((-5.0..=5.0).contains(&beta[0]));
            assert!((0.0..=12.0).contains(&beta[1]));
        }
        let b = oversample(Some(&warm), &config, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        let c = oversample(Some(&warm), &config, &mut ChaCha8Rng::seed_from_u64(10));
        assert_ne!(a, c);
    }

    #[test]
    fn zero_dimensional_beta_collapses_to_one_empty_vector() {
        let config = SamplingConfig::with_bounds(Vec::new());
        let s = oversample(None, &config, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(s, vec![Vec::<f64>::new()]);
    }

    #[test]
    fn fingerprints_carry_exact_fit_at_true_beta() {
        let (_, form) = sine_form();
        let data = sine_dataset();
        let betas = vec![vec![2.0], vec![9.0]];
        let cands =
            fingerprint_candidates(&betas, &form, &data, &ProjectionConfig::default()).unwrap();
        assert!(cands[0].loss < 1e-18);
        assert!(cands[0].valid);
        for (f, y) in cands[0].fingerprint.iter().zip(data.targets()) {
            assert!((f - y).abs() < 1e-9);
        }
        // A hand-computed distance check between the two fingerprints.
        let y_norm = data.targets().iter().map(|v| v * v).sum::<f64>().sqrt();
        let by_hand = {
            let s: f64 = cands[0]
                .fingerprint
                .iter()
                .zip(&cands[1].fingerprint)
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            s.sqrt() / (y_norm + 1e-12)
        };
        let d = fingerprint_distance(&cands[0].fingerprint, &cands[1].fingerprint, y_norm, 1e-12);
        assert!((d - by_hand).abs() <= 1e-12 * by_hand.max(1.0));
        assert!(d > 0.1, "distinct frequencies must be far apart, d = {d}");
    }

    #[test]
    fn selection_anchors_at_min_loss_and_maximizes_min_distance() {
        // Fingerprints on a line: losses make index 1 the anchor; candidates
        // at 0.0 and 10.0 then compete for the second slot.
        let mk = |v: f64, loss: f64| StartCandidate {
            beta: vec![v],
            fingerprint: vec![v, v],
            loss,
            valid: true,
        };
        let candidates = vec![mk(0.0, 0.5), mk(1.0, 0.1), mk(10.0, 0.9)];
        let y = [1.0, 1.0];
        let picks = fs_fps_select(&candidates, 2, &y, 1e-12).unwrap();
        assert_eq!(picks, vec![1, 2]);
        // K = 1 degenerates to the min-loss candidate alone.
        let picks = fs_fps_select(&candidates, 1, &y, 1e-12).unwrap();
        assert_eq!(picks, vec![1]);
    }

    #[test]
    fn equal_distance_ties_break_to_lower_index() {
        let mk = |v: f64| StartCandidate {
            beta: vec![v],
            fingerprint: vec![v],
            loss: if v == 0.0 { 0.0 } else { 1.0 },
            valid: true,
        };
        // Candidates at ±3 are equally far from the anchor at 0.
        let candidates = vec![mk(0.0), mk(3.0), mk(-3.0)];
        let picks = fs_fps_select(&candidates, 2, &[1.0], 1e-12).unwrap();
        assert_eq!(picks, vec![0, 1]);
    }

    #[test]
    fn invalid_candidates_are_never_selected_and_shortfall_is_legal() {
        let mk = |v: f64, valid: bool| StartCandidate {
            beta: vec![v],
            fingerprint: vec![v],
            loss: if valid { v.abs() } else { 1e12 },
            valid,
        };
        let candidates = vec![mk(1.0, true), mk(2.0, false), mk(3.0, true)];
        let picks = fs_fps_select(&candidates, 8, &[1.0], 1e-12).unwrap();
        assert_eq!(picks, vec![0, 2]);

        let none = vec![mk(1.0, false)];
        assert_eq!(
            fs_fps_select(&none, 2, &[1.0], 1e-12).unwrap_err(),
            FsFpsError::NoViableStart
        );
    }

    #[test]
    fn greedy_property_holds_on_replay() {
        let form = shifted_sine_form();
        let data = sine_dataset();
        let config = SamplingConfig::with_bounds(vec![(0.0, 12.0), (-3.0, 3.0)]);
        let betas = oversample(
            Some(&[1.0, 2.0]),
            &config,
            &mut ChaCha8Rng::seed_from_u64(17),
        );
        let cands =
            fingerprint_candidates(&betas, &form, &data, &ProjectionConfig::default()).unwrap();
        let picks = fs_fps_select(&cands, 8, data.targets(), 1e-12).unwrap();
        assert_eq!(picks.len(), 8);
        let y_norm = data.targets().iter().map(|v| v * v).sum::<f64>().sqrt();

        // Replay: each pick's min-distance to its predecessors must be ≥
        // that of every other valid candidate at that step.
        for step in 1..picks.len() {
            let chosen = picks[step];
            let chosen_min: f64 = picks[..step]
                .iter()
                .map(|&j| {
                    fingerprint_distance(
                        &cands[chosen].fingerprint,
                        &cands[j].fingerprint,
                        y_norm,
                        1e-12,
                    )
                })
                .fold(f64::INFINITY, f64::min);
            for (i, cand) in cands.iter().enumerate() {
                if !cand.valid || picks[..=step].contains(&i) {
                    continue;
                }
                let other_min: f64 = picks[..step]
                    .iter()
                    .map(|&j| {
                        fingerprint_distance(
                            &cands[i].fingerprint,
                            &cands[j].fingerprint,
                            y_norm,
                            1e-12,
                        )
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    chosen_min >= other_min - 1e-15,
                    "step {step}: pick {chosen} ({chosen_min}) beaten by {i} ({other_min})"
                );
            }
        }
    }

    #[test]
    fn selection_is_scale_robust() {
        let form = shifted_sine_form();
        let data = sine_dataset();
        let config = SamplingConfig::with_bounds(vec![(0.0, 12.0), (-3.0, 3.0)]);
        let betas = oversample(Some(&[1.0, 2.0]), &config, &mut ChaCha8Rng::seed_from_u64(3));
        let cands =
            fingerprint_candidates(&betas, &form, &data, &ProjectionConfig::default()).unwrap();
        let base = fs_fps_select(&cands, 8, data.targets(), 1e-12).unwrap();
        for s in [1e-3, 1e3] {
            let scaled_y: Vec<f64> = data.targets().iter().map(|v| v * s).collect();
            let scaled_cands: Vec<StartCandidate> = cands
                .iter()
                .map(|c| StartCandidate {
                    beta: c.beta.clone(),
                    fingerprint: c.fingerprint.iter().map(|v| v * s).collect(),
                    loss: c.loss,
                    valid: c.valid,
                })
                .collect();
            let picks = fs_fps_select(&scaled_cands, 8, &scaled_y, 1e-12).unwrap();
            assert_eq!(picks, base, "scale {s} changed the selection");
        }
    }
}

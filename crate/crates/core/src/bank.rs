//! Synthetic candidate-bank generation: scripted random-mutation searches
//! over four ground-truth archetype families, scored by a deliberately
//! weak single-start evaluator. Every score-improving candidate becomes a
//! bank entry, yielding progress-associated structures whose weak scores
//! systematically understate what a stronger evaluator can reach.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::evaluator::{baseline_evaluate, BaselineStrategy, SolverConfig};
use crate::expr::CandidateExpression;
use crate::parallel;

/// Parameter names handed out in order (x stays a variable).
const PARAM_NAMES: [&str; 11] = ["a", "b", "c", "d", "g", "h", "k", "m", "n", "p", "q"];

/// Generation knobs.
#[derive(Debug, Clone)]
pub struct BankGenConfig {
    pub problems: usize,
    pub per_problem: usize,
    pub seed: u64,
    /// Rows per problem dataset.
    pub rows: usize,
    /// Noise standard deviation relative to the clean target's standard
    /// deviation.
    pub noise_level: f64,
    /// Hard cap on candidate parameter counts.
    pub max_parameters: usize,
    /// Iteration cap of the weak evaluator driving the search.
    pub weak_max_iterations: usize,
}

impl BankGenConfig {
    pub fn new(problems: usize, per_problem: usize, seed: u64) -> Self {
        BankGenConfig {
            problems,
            per_problem,
            seed,
            rows: 160,
            noise_level: 1e-3,
            max_parameters: 11,
            weak_max_iterations: 15,
        }
    }
}

/// One ground-truth problem with its noisy dataset.
#[derive(Debug, Clone)]
pub struct GeneratedProblem {
    pub index: usize,
    pub domain: String,
    pub truth_expression: String,
    pub truth_theta: Vec<f64>,
    pub dataset: Arc<Dataset>,
}

/// One recorded score-improving candidate. Serializes as one bank JSONL
/// line (the `dataset` field then names the problem's CSV file).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedEntry {
    pub schema: u32,
    pub index: usize,
    pub problem: usize,
    pub domain: String,
    pub expression: String,
    pub variables: Vec<String>,
    pub parameters: Vec<String>,
    /// Dataset file name, relative to the bank file.
    pub dataset: String,
    /// Score the weak evaluator reported when the candidate was adopted.
    pub weak_score: f64,
    /// Parameters the weak evaluator returned.
    pub theta: Vec<f64>,
    pub n_params: usize,
}

/// A generated bank: problems plus their recorded candidates.
#[derive(Debug, Clone)]
pub struct GeneratedBank {
    pub problems: Vec<GeneratedProblem>,
    pub entries: Vec<GeneratedEntry>,
}

/// Conventional dataset file name for a problem.
pub fn problem_dataset_name(problem: usize) -> String {
    format!("data_p{problem:03}.csv")
}

struct Archetype {
    name: &'static str,
    x_range: (f64, f64),
    /// Term templates: ({placeholders}, parameter count).
    terms: &'static [(&'static str, usize)],
}

const ARCHETYPES: [Archetype; 4] = [
    Archetype {
        name: "kinetics_decay",
        x_range: (0.0, 5.0),
        terms: &[
            ("{0}*exp(-{1}*x)", 2),
            ("{0}*x*exp(-{1}*x)", 2),
            ("{0}*x", 1),
            ("{0}", 1),
        ],
    },
    Archetype {
        name: "logistic_growth",
        x_range: (0.0, 10.0),
        terms: &[
            ("{0}/(1 + exp(-{1}*(x - {2})))", 3),
            ("{0}*exp(-{1}*x)", 2),
            ("{0}*x", 1),
            ("{0}", 1),
        ],
    },
    Archetype {
        name: "damped_oscillator",
        x_range: (0.0, 4.0),
        terms: &[
            ("{0}*exp(-{1}*x)*sin({2}*x + {3})", 4),
            ("{0}*sin({1}*x + {2})", 3),
            ("{0}*exp(-{1}*x)", 2),
            ("{0}*x", 1),
            ("{0}", 1),
        ],
    },
    Archetype {
        name: "power_law",
        x_range: (0.1, 5.0),
        terms: &[
            ("{0}*x^{1}", 2),
            ("{0}*log(x)", 1),
            ("{0}*x", 1),
            ("{0}", 1),
        ],
    },
];

/// Draws a ground truth from the archetype family and tabulates it.
fn draw_truth(
    archetype: &Archetype,
    rng: &mut ChaCha8Rng,
) -> (String, Vec<f64>, Box<dyn Fn(f64) -> f64>) {
    match archetype.name {
        "kinetics_decay" => {
            let a1 = rng.random_range(0.5..=3.0);
            let k1 = rng.random_range(0.3..=1.5);
            let a2 = rng.random_range(0.5..=3.0);
            let k2 = rng.random_range(2.0..=6.0);
            let c = rng.random_range(-1.0..=1.0);
            (
                "a*exp(-b*x) + c*exp(-d*x) + g".to_string(),
                vec![a1, k1, a2, k2, c],
                Box::new(move |x| a1 * (-k1 * x).exp() + a2 * (-k2 * x).exp() + c),
            )
        }
        "logistic_growth" => {
            let l = rng.random_range(1.0..=4.0);
            let k = rng.random_range(1.5..=5.0);
            let x0 = rng.random_range(2.0..=8.0);
            (
                "a/(1 + exp(-b*(x - c)))".to_string(),
                vec![l, k, x0],
                Box::new(move |x| l / (1.0 + (-k * (x - x0)).exp())),
            )
        }
        "damped_oscillator" => {
            let a = rng.random_range(1.0..=3.0);
            let d = rng.random_range(0.2..=1.0);
            let w = rng.random_range(4.0..=9.0);
            let phi = rng.random_range(-1.5..=1.5);
            (
                "a*exp(-b*x)*sin(c*x + d)".to_string(),
                vec![a, d, w, phi],
                Box::new(move |x| a * (-d * x).exp() * (w * x + phi).sin()),
            )
        }
        "power_law" => {
            let a = rng.random_range(0.5..=3.0);
            let b = rng.random_range(0.4..=2.5);
            let c = rng.random_range(-1.0..=1.0);
            (
                "a*x^b + c".to_string(),
                vec![a, b, c],
                Box::new(move |x| a * x.powf(b) + c),
            )
        }
        other => unreachable!("unknown archetype {other}"),
    }
}

fn render_terms(terms: &[usize], archetype: &Archetype) -> (String, Vec<String>) {
    let mut names_used = Vec::new();
    let mut pieces = Vec::with_capacity(terms.len());
    let mut next = 0usize;
    for &t in terms {
        let (template, count) = archetype.terms[t];
        let mut rendered = template.to_string();
        for slot in 0..count {
            let name = PARAM_NAMES[next];
            next += 1;
            rendered = rendered.replace(&format!("{{{slot}}}"), name);
            names_used.push(name.to_string());
        }
        pieces.push(rendered);
    }
    (pieces.join(" + "), names_used)
}

fn param_count(terms: &[usize], archetype: &Archetype) -> usize {
    terms.iter().map(|&t| archetype.terms[t].1).sum()
}

/// Proposes a mutated term multiset within the [2, max] parameter budget.
fn mutate_terms(
    terms: &[usize],
    archetype: &Archetype,
    max_parameters: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let current = param_count(terms, archetype);
    // Grow below the target median, consolidate above it.
    let (p_add, p_remove) = if current < 7 { (0.6, 0.1) } else { (0.15, 0.35) };
    for _ in 0..12 {
        let mut next = terms.to_vec();
        let roll: f64 = rng.random_range(0.0..1.0);
        if roll < p_add {
            let t = rng.random_range(0..archetype.terms.len());
            if current + archetype.terms[t].1 <= max_parameters {
                let at = rng.random_range(0..=next.len());
                next.insert(at, t);
                return next;
            }
        } else if roll < p_add + p_remove && next.len() >= 2 {
            let at = rng.random_range(0..next.len());
            next.remove(at);
            if param_count(&next, archetype) >= 2 {
                return next;
            }
        } else {
            let at = rng.random_range(0..next.len());
            let t = rng.random_range(0..archetype.terms.len());
            let new_total = current - archetype.terms[next[at]].1 + archetype.terms[t].1;
            if (2..=max_parameters).contains(&new_total) {
                next[at] = t;
                return next;
            }
        }
    }
    terms.to_vec()
}

/// A random starting structure with five to seven parameters, keeping the
/// recorded population centered near the seven-parameter target.
fn random_start(archetype: &Archetype, rng: &mut ChaCha8Rng) -> Vec<usize> {
    loop {
        let mut terms = Vec::new();
        for _ in 0..8 {
            let t = rng.random_range(0..archetype.terms.len());
            if param_count(&terms, archetype) + archetype.terms[t].1 <= 7 {
                terms.push(t);
            }
            if param_count(&terms, archetype) >= 5 {
                return terms;
            }
        }
        if param_count(&terms, archetype) >= 2 {
            return terms;
        }
    }
}

fn weak_score(
    expression: &str,
    parameters: &[String],
    dataset: &Dataset,
    weak_max_iterations: usize,
) -> Option<(f64, Vec<f64>)> {
    let params: Vec<&str> = parameters.iter().map(String::as_str).collect();
    let expr = CandidateExpression::parse(expression, &["x"], &params).ok()?;
    let d = expr.parameter_count();
    let mut config = SolverConfig::default_for(d);
    config.local.max_iterations = weak_max_iterations;
    let warm = vec![1.0; d];
    let result = baseline_evaluate(
        &expr,
        dataset,
        BaselineStrategy::SingleStartLm,
        Some(&warm),
        &config,
    )
    .ok()?;
    Some((result.score, result.theta_hat))
}

fn generate_problem(
    problem: usize,
    config: &BankGenConfig,
) -> (GeneratedProblem, Vec<GeneratedEntry>) {
    let mut rng = ChaCha8Rng::seed_from_u64(
        config
            .seed
            .wrapping_add((problem as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    );
    let archetype = &ARCHETYPES[problem % ARCHETYPES.len()];
    let (truth_expression, truth_theta, truth_fn) = draw_truth(archetype, &mut rng);

    let (lo, hi) = archetype.x_range;
    let xs: Vec<f64> = (0..config.rows)
        .map(|i| lo + (hi - lo) * i as f64 / (config.rows - 1) as f64)
        .collect();
    let clean: Vec<f64> = xs.iter().map(|&x| truth_fn(x)).collect();
    let mean = clean.iter().sum::<f64>() / clean.len() as f64;
    let std = (clean.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>()
        / clean.len() as f64)
        .sqrt();
    let sigma = config.noise_level * std.max(1e-12);
    let targets: Vec<f64> = clean
        .iter()
        .map(|&y| y + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let dataset = Arc::new(
        Dataset::new(
            xs.iter().map(|&x| vec![x]).collect(),
            targets,
            Some(vec!["x".to_string()]),
        )
        .expect("generated rows are finite and rectangular"),
    );

    let mut entries = Vec::with_capacity(config.per_problem);
    let mut terms = random_start(archetype, &mut rng);
    let mut incumbent = f64::INFINITY;
    let mut stuck = 0usize;
    let mut steps = 0usize;
    while entries.len() < config.per_problem {
        steps += 1;
        assert!(steps <= 100_000, "mutation search failed to progress");
        let proposal = if incumbent.is_infinite() {
            terms.clone()
        } else {
            mutate_terms(&terms, archetype, config.max_parameters, &mut rng)
        };
        let (expression, parameters) = render_terms(&proposal, archetype);
        let scored = weak_score(
            &expression,
            &parameters,
            &dataset,
            config.weak_max_iterations,
        );
        let improved = match &scored {
            Some((score, _)) => *score < incumbent,
            None => false,
        };
        if improved {
            let (score, theta) = scored.expect("improvement implies a score");
            entries.push(GeneratedEntry {
                schema: 1,
                index: 0, // global index assigned by the caller
                problem,
                domain: archetype.name.to_string(),
                expression,
                variables: vec!["x".to_string()],
                parameters: parameters.clone(),
                dataset: problem_dataset_name(problem),
                weak_score: score,
                theta,
                n_params: parameters.len(),
            });
            terms = proposal;
            incumbent = score;
            stuck = 0;
        } else {
            stuck += 1;
            if stuck >= 60 {
                // Restart the chain: the next evaluation always records.
                terms = random_start(archetype, &mut rng);
                incumbent = f64::INFINITY;
                stuck = 0;
            }
        }
    }

    (
        GeneratedProblem {
            index: problem,
            domain: archetype.name.to_string(),
            truth_expression,
            truth_theta,
            dataset,
        },
        entries,
    )
}

/// Generates `problems × per_problem` bank entries deterministically for a
/// fixed seed. Problems generate in parallel; global entry indices follow
/// problem order.
pub fn generate_bank(config: &BankGenConfig) -> GeneratedBank {
    assert!(config.problems >= 1 && config.per_problem >= 1);
    assert!(config.rows >= 2);
    assert!(config.max_parameters >= 2 && config.max_parameters <= PARAM_NAMES.len());

    let generated = parallel::map_indexed(config.problems, |p| generate_problem(p, config));
    let mut problems = Vec::with_capacity(config.problems);
    let mut entries = Vec::with_capacity(config.problems * config.per_problem);
    for (problem, problem_entries) in generated {
        problems.push(problem);
        for mut entry in problem_entries {
            entry.index = entries.len();
            entries.push(entry);
        }
    }
    GeneratedBank { problems, entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_has_the_requested_shape_and_parameter_range() {
        let bank = generate_bank(&BankGenConfig::new(8, 4, 7));
        assert_eq!(bank.problems.len(), 8);
        assert_eq!(bank.entries.len(), 32);
        for (i, entry) in bank.entries.iter().enumerate() {
            assert_eq!(entry.index, i);
            assert!(entry.n_params >= 2 && entry.n_params <= 11, "{}", entry.n_params);
            assert_eq!(entry.n_params, entry.parameters.len());
            assert_eq!(entry.theta.len(), entry.n_params);
            assert_eq!(entry.schema, 1);
        }
        // Entries within one problem have strictly improving weak scores
        // between restarts; at minimum the first of each problem exists.
        for p in 0..8 {
            assert!(bank.entries.iter().any(|e| e.problem == p));
        }
    }

    #[test]
    fn every_entry_parses_and_matches_its_theta() {
        let bank = generate_bank(&BankGenConfig::new(4, 3, 11));
        for entry in &bank.entries {
            let params: Vec<&str> = entry.parameters.iter().map(String::as_str).collect();
            let expr = CandidateExpression::parse(&entry.expression, &["x"], &params)
                .unwrap_or_else(|e| panic!("{} failed: {e}", entry.expression));
            assert_eq!(expr.parameter_count(), entry.theta.len());
        }
    }

    #[test]
    fn generation_is_deterministic_for_a_fixed_seed() {
        let a = generate_bank(&BankGenConfig::new(3, 3, 42));
        let b = generate_bank(&BankGenConfig::new(3, 3, 42));
        assert_eq!(a.entries.len(), b.entries.len());
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.expression, y.expression);
            assert_eq!(x.weak_score.to_bits(), y.weak_score.to_bits());
            assert_eq!(x.theta.len(), y.theta.len());
            for (tx, ty) in x.theta.iter().zip(&y.theta) {
                assert_eq!(tx.to_bits(), ty.to_bits());
            }
        }
        for (x, y) in a.problems.iter().zip(&b.problems) {
            assert_eq!(x.truth_expression, y.truth_expression);
            for (tx, ty) in x.dataset.targets().iter().zip(y.dataset.targets()) {
                assert_eq!(tx.to_bits(), ty.to_bits());
            }
        }
    }

    #[test]
    fn parameter_count_median_targets_seven() {
        let bank = generate_bank(&BankGenConfig::new(12, 5, 0));
        let mut counts: Vec<usize> = bank.entries.iter().map(|e| e.n_params).collect();
        counts.sort_unstable();
        let median = counts[counts.len() / 2];
        assert!(
            (6..=8).contains(&median),
            "median parameter count {median} outside 7 ± 1 (counts {counts:?})"
        );
    }

    #[test]
    fn weak_scores_improve_within_a_chain_segment() {
        let bank = generate_bank(&BankGenConfig::new(2, 4, 5));
        // Scores within a problem need not be globally monotone (restarts
        // reset the incumbent) but every entry is finite and nonnegative.
        for entry in &bank.entries {
            assert!(entry.weak_score.is_finite());
            assert!(entry.weak_score >= 0.0);
        }
    }
}

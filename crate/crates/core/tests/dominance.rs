//! Multi-start evaluation must (almost) never lose to a single midpoint
//! start across a battery of randomized fitting problems.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sagefit::dataset::Dataset;
use sagefit::evaluator::{
    baseline_evaluate, sage_fit_evaluate, BaselineStrategy, SolverConfig,
};
use sagefit::expr::CandidateExpression;
use sagefit::parallel;

struct Family {
    expression: &'static str,
    parameters: &'static [&'static str],
    x_range: (f64, f64),
    truth_ranges: &'static [(f64, f64)],
}

const FAMILIES: [Family; 5] = [
    Family {
        expression: "a*x^2 + b*x + c",
        parameters: &["a", "b", "c"],
        x_range: (-2.0, 2.0),
        truth_ranges: &[(-3.0, 3.0), (-3.0, 3.0), (-3.0, 3.0)],
    },
    Family {
        expression: "a*sin(b*x) + c",
        parameters: &["a", "b", "c"],
        x_range: (0.0, 6.0),
        truth_ranges: &[(0.5, 3.0), (2.0, 9.0), (-1.0, 1.0)],
    },
    Family {
        expression: "a*exp(-b*x) + c",
        parameters: &["a", "b", "c"],
        x_range: (0.0, 4.0),
        truth_ranges: &[(0.5, 3.0), (0.3, 3.0), (-1.0, 1.0)],
    },
    Family {
        expression: "a/(1 + exp(-b*(x - c)))",
        parameters: &["a", "b", "c"],
        x_range: (0.0, 10.0),
        truth_ranges: &[(1.0, 4.0), (1.0, 4.0), (2.0, 8.0)],
    },
    Family {
        expression: "a*x^b",
        parameters: &["a", "b"],
        x_range: (0.2, 4.0),
        truth_ranges: &[(0.5, 3.0), (0.5, 2.5)],
    },
];

fn build_case(index: usize) -> (CandidateExpression, Arc<Dataset>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD0_31 + index as u64);
    let family = &FAMILIES[index % FAMILIES.len()];
    let expr = CandidateExpression::parse(family.expression, &["x"], family.parameters)
        .expect("family template parses");
    let truth: Vec<f64> = family
        .truth_ranges
        .iter()
        .map(|&(lo, hi)| rng.random_range(lo..hi))
        .collect();
    let n = 64usize;
    let (lo, hi) = family.x_range;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64])
        .collect();
    let probe = Dataset::new(rows.clone(), vec![0.0; n], Some(vec!["x".to_string()]))
        .expect("finite rows");
    let targets = expr
        .evaluate(&probe, &truth)
        .expect("truth evaluates")
        .predictions;
    let dataset = Dataset::new(rows, targets, Some(vec!["x".to_string()]))
        .expect("finite targets");
    (expr, Arc::new(dataset))
}

#[test]
fn multistart_beats_or_ties_single_start_on_at_least_95_percent() {
    const CASES: usize = 200;
    let outcomes = parallel::map_indexed(CASES, |i| {
        let (expr, dataset) = build_case(i);
        let config = SolverConfig::default_for(expr.parameter_count());
        let sage = sage_fit_evaluate(&expr, &dataset, None, &config)
            .unwrap_or_else(|e| panic!("case {i}: {e}"));
        let single = baseline_evaluate(
            &expr,
            &dataset,
            BaselineStrategy::SingleStartLm,
            None,
            &config,
        )
        .unwrap_or_else(|e| panic!("case {i}: {e}"));
        (sage.score, single.score)
    });

    let mut wins = 0usize;
    let mut losses = Vec::new();
    for (i, (sage, single)) in outcomes.iter().enumerate() {
        if *sage <= single * (1.0 + 1e-6) + 1e-12 {
            wins += 1;
        } else {
            losses.push((i, *sage, *single));
        }
    }
    assert!(
        wins * 100 >= CASES * 95,
        "multi-start won only {wins}/{CASES}; losses: {losses:?}"
    );
}

//! `sagefit fit`: fit one candidate expression to a CSV dataset and report
//! the result as JSON.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use sagefit::dataset::Dataset;
use sagefit::evaluator::{EvaluationResult, EvaluatorKind, SolverConfig};
use sagefit::expr::CandidateExpression;

use crate::manifest::{digest_file, emit, RunManifest};
use crate::optparse::{parse_bounds, parse_f64_list, parse_name_list};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct FitArgs {
    /// Candidate expression, e.g. "a*sin(b*x) + c"
    #[arg(long)]
    pub expr: String,
    /// Comma-separated variable names matching dataset columns
    #[arg(long, default_value = "x")]
    pub vars: String,
    /// Comma-separated parameter names in θ order
    #[arg(long)]
    pub params: String,
    /// CSV dataset (header row required)
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluator: sage | single | lm-multi | gd-multi
    #[arg(long, default_value = "sage")]
    pub evaluator: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Box bounds: "lo:hi" for all parameters and/or "name=lo:hi" per name
    #[arg(long)]
    pub bounds: Option<String>,
    /// Oversample count M
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    /// Selected start count K
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Iteration cap per local solve
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Warm-start θ, comma-separated, one value per parameter
    #[arg(long)]
    pub warm_start: Option<String>,
    /// Target column name (default "y")
    #[arg(long)]
    pub target: Option<String>,
    /// Emit compact single-line JSON instead of pretty-printed
    #[arg(long)]
    pub json: bool,
    /// Write the report to a file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print wall time to stderr (never part of the report)
    #[arg(long)]
    pub timing: bool,
}

#[derive(Serialize)]
struct FitConfigSnapshot<'a> {
    evaluator: &'a str,
    target: &'a str,
    bounds: &'a [(f64, f64)],
    oversample_count: usize,
    select_count: usize,
    max_iterations: usize,
    warm_start: &'a Option<Vec<f64>>,
}

#[derive(Serialize)]
struct FitReport {
    schema: u32,
    manifest: RunManifest,
    expression: String,
    variables: Vec<String>,
    parameters: Vec<String>,
    fit: EvaluationResult,
}

pub fn run(args: FitArgs) -> CliResult<()> {
    let started = Instant::now();
    let vars = parse_name_list(&args.vars);
    let params = parse_name_list(&args.params);
    if params.is_empty() {
        return Err(CliError::usage("--params must name at least one parameter"));
    }
    let var_refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    let param_refs: Vec<&str> = params.iter().map(String::as_str).collect();
    let expr = CandidateExpression::parse(&args.expr, &var_refs, &param_refs)
        .map_err(|e| CliError::usage(format!("cannot parse --expr: {e}")))?;

    let kind = EvaluatorKind::from_tag(&args.evaluator)
        .ok_or_else(|| CliError::usage(format!("unknown evaluator {:?}", args.evaluator)))?;

    let bounds = parse_bounds(args.bounds.as_deref(), &params)?;
    if args.k == 0 || args.k > args.m {
        return Err(CliError::usage(format!(
            "--k must satisfy 1 <= k <= m (got k={}, m={})",
            args.k, args.m
        )));
    }
    if args.max_iters == 0 {
        return Err(CliError::usage("--max-iters must be at least 1"));
    }

    let warm = match &args.warm_start {
        Some(list) => {
            let theta = parse_f64_list(list, "warm-start")?;
            if theta.len() != params.len() {
                return Err(CliError::usage(format!(
                    "--warm-start has {} values but there are {} parameters",
                    theta.len(),
                    params.len()
                )));
            }
            Some(theta)
        }
        None => None,
    };

    let dataset = Dataset::from_csv_path(&args.data, args.target.as_deref())
        .map_err(|e| CliError::data(format!("cannot load {}: {e}", args.data.display())))?;

    let mut config = SolverConfig::for_theta_bounds(bounds.clone());
    config.sampling.oversample_count = args.m;
    config.sampling.select_count = args.k;
    config.sampling.seed = args.seed;
    config.local.max_iterations = args.max_iters;

    let fit = kind
        .evaluate(&expr, &dataset, warm.as_deref(), &config)
        .map_err(|e| CliError::data(format!("evaluation failed: {e}")))?;

    let target = args.target.as_deref().unwrap_or("y");
    let mut inputs = BTreeMap::new();
    inputs.insert("data".to_string(), digest_file(&args.data)?);
    let manifest = RunManifest::new(
        "fit",
        args.seed,
        inputs,
        FitConfigSnapshot {
            evaluator: kind.tag(),
            target,
            bounds: &bounds,
            oversample_count: args.m,
            select_count: args.k,
            max_iterations: args.max_iters,
            warm_start: &warm,
        },
    )?;

    let report = FitReport {
        schema: 1,
        manifest,
        expression: expr.canonical(),
        variables: vars,
        parameters: params,
        fit,
    };
    emit(&report, args.json, args.out.as_deref())?;
    if args.timing {
        eprintln!("wall_ms: {}", started.elapsed().as_millis());
    }
    Ok(())
}

//! `sagefit gen-bank`: generate a synthetic candidate bank (JSONL) plus the
//! per-problem datasets (CSV) it references, then print a summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use sagefit::bank::{generate_bank, problem_dataset_name, BankGenConfig, GeneratedBank};

use crate::manifest::{emit, RunManifest};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct GenBankArgs {
    /// Number of ground-truth problems
    #[arg(long, default_value_t = 10)]
    pub problems: usize,
    /// Candidates recorded per problem
    #[arg(long, default_value_t = 5)]
    pub per_problem: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rows per problem dataset
    #[arg(long, default_value_t = 160)]
    pub rows: usize,
    /// Noise standard deviation relative to the clean target's deviation
    #[arg(long, default_value_t = 1e-3)]
    pub noise: f64,
    /// Directory to write bank.jsonl, problems.jsonl, and the datasets into
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Emit compact single-line JSON instead of pretty-printed
    #[arg(long)]
    pub json: bool,
    /// Print wall time to stderr (never part of the report)
    #[arg(long)]
    pub timing: bool,
}

#[derive(Serialize)]
struct GenBankConfigSnapshot {
    problems: usize,
    per_problem: usize,
    rows: usize,
    noise: f64,
}

#[derive(Serialize)]
struct ProblemLine<'a> {
    schema: u32,
    index: usize,
    domain: &'a str,
    truth_expression: &'a str,
    truth_theta: &'a [f64],
    dataset: String,
}

#[derive(Serialize)]
struct GenBankReport {
    schema: u32,
    manifest: RunManifest,
    out_dir: String,
    bank_file: String,
    problems_file: String,
    n_problems: usize,
    n_entries: usize,
    /// Parameter count → number of entries.
    parameter_count_histogram: BTreeMap<usize, usize>,
    median_n_params: usize,
}

fn write_outputs(bank: &GeneratedBank, args: &GenBankArgs) -> CliResult<(String, String)> {
    fs::create_dir_all(&args.out_dir).map_err(|e| {
        CliError::data(format!("cannot create {}: {e}", args.out_dir.display()))
    })?;

    for problem in &bank.problems {
        let name = problem_dataset_name(problem.index);
        let mut csv = String::from("x,y\n");
        for (row, y) in (0..problem.dataset.n_rows())
            .map(|i| problem.dataset.row(i))
            .zip(problem.dataset.targets())
        {
            csv.push_str(&format!("{},{y}\n", row[0]));
        }
        let path = args.out_dir.join(&name);
        fs::write(&path, csv)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    }

    let mut bank_lines = String::new();
    for entry in &bank.entries {
        let line = serde_json::to_string(entry)
            .map_err(|e| CliError::data(format!("entry serialization failed: {e}")))?;
        bank_lines.push_str(&line);
        bank_lines.push('\n');
    }
    let bank_path = args.out_dir.join("bank.jsonl");
    fs::write(&bank_path, bank_lines)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", bank_path.display())))?;

    let mut problem_lines = String::new();
    for problem in &bank.problems {
        let line = serde_json::to_string(&ProblemLine {
            schema: 1,
            index: problem.index,
            domain: &problem.domain,
            truth_expression: &problem.truth_expression,
            truth_theta: &problem.truth_theta,
            dataset: problem_dataset_name(problem.index),
        })
        .map_err(|e| CliError::data(format!("problem serialization failed: {e}")))?;
        problem_lines.push_str(&line);
        problem_lines.push('\n');
    }
    let problems_path = args.out_dir.join("problems.jsonl");
    fs::write(&problems_path, problem_lines).map_err(|e| {
        CliError::data(format!("cannot write {}: {e}", problems_path.display()))
    })?;

    Ok((
        bank_path.display().to_string(),
        problems_path.display().to_string(),
    ))
}

pub fn run(args: GenBankArgs) -> CliResult<()> {
    let started = Instant::now();
    if args.problems == 0 || args.per_problem == 0 {
        return Err(CliError::usage(
            "--problems and --per-problem must be at least 1",
        ));
    }
    if args.rows < 2 {
        return Err(CliError::usage("--rows must be at least 2"));
    }
    if !(args.noise.is_finite() && args.noise >= 0.0) {
        return Err(CliError::usage("--noise must be finite and non-negative"));
    }

    let mut config = BankGenConfig::new(args.problems, args.per_problem, args.seed);
    config.rows = args.rows;
    config.noise_level = args.noise;
    let bank = generate_bank(&config);

    let (bank_file, problems_file) = write_outputs(&bank, &args)?;

    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    let mut counts: Vec<usize> = Vec::with_capacity(bank.entries.len());
    for entry in &bank.entries {
        *histogram.entry(entry.n_params).or_insert(0) += 1;
        counts.push(entry.n_params);
    }
    counts.sort_unstable();
    let median_n_params = counts[counts.len() / 2];

    let manifest = RunManifest::new(
        "gen-bank",
        args.seed,
        BTreeMap::new(),
        GenBankConfigSnapshot {
            problems: args.problems,
            per_problem: args.per_problem,
            rows: args.rows,
            noise: args.noise,
        },
    )?;
    let report = GenBankReport {
        schema: 1,
        manifest,
        out_dir: args.out_dir.display().to_string(),
        bank_file,
        problems_file,
        n_problems: bank.problems.len(),
        n_entries: bank.entries.len(),
        parameter_count_histogram: histogram,
        median_n_params,
    };
    emit(&report, args.json, None)?;
    if args.timing {
        eprintln!("wall_ms: {}", started.elapsed().as_millis());
    }
    Ok(())
}

//! `sagefit bench`: score every entry of a candidate bank with one or more
//! evaluators and summarize miss rates and accuracy per evaluator.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use sagefit::bank::GeneratedEntry;
use sagefit::dataset::Dataset;
use sagefit::diagnostics::{spb_summarize, FitProtocol, SpbReport};
use sagefit::evaluator::EvaluatorKind;
use sagefit::expr::CandidateExpression;
use sagefit::parallel;

use crate::manifest::{digest_file, emit, RunManifest};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct BenchArgs {
    /// Bank file (JSONL, one candidate per line)
    #[arg(long)]
    pub bank: PathBuf,
    /// Comma-separated evaluator tags to compare
    #[arg(long, default_value = "sage,single,lm-multi,gd-multi")]
    pub evaluators: String,
    /// Miss threshold: a score misses when it exceeds tau times the best
    /// score any evaluator reached on that entry
    #[arg(long, default_value_t = 3.0)]
    pub tau: f64,
    /// Ignore recorded thetas and warm-start every fit from all-ones
    #[arg(long)]
    pub cold_start: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Emit compact single-line JSON instead of pretty-printed
    #[arg(long)]
    pub json: bool,
    /// Write the report to a file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print per-evaluator mean wall time to stderr
    #[arg(long)]
    pub timing: bool,
}

#[derive(Serialize)]
struct BenchConfigSnapshot<'a> {
    evaluators: Vec<&'a str>,
    tau: f64,
    cold_start: bool,
}

#[derive(Serialize)]
struct BenchEntryReport {
    index: usize,
    problem: usize,
    expression: String,
    n_params: usize,
    /// Evaluator tag → score.
    scores: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct BenchReport {
    schema: u32,
    manifest: RunManifest,
    n_entries: usize,
    skipped_lines: usize,
    entries: Vec<BenchEntryReport>,
    summary: SpbReport,
}

fn read_bank(path: &Path) -> CliResult<(Vec<GeneratedEntry>, usize, Vec<String>)> {
    let file = File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    let mut skipped = 0usize;
    let mut warnings = Vec::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line =
            line.map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<GeneratedEntry>(&line) {
            Ok(entry) => entries.push(entry),
            Err(e) => {
                skipped += 1;
                warnings.push(format!("warning: skipping bank line {}: {e}", line_no + 1));
            }
        }
    }
    Ok((entries, skipped, warnings))
}

fn mean_square_deviation(targets: &[f64]) -> f64 {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    targets.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n
}

struct CaseOutcome {
    scores: Vec<f64>,
    wall_ms: Vec<f64>,
    warnings: Vec<String>,
}

fn score_entry(
    entry: &GeneratedEntry,
    dataset: &Arc<Dataset>,
    kinds: &[EvaluatorKind],
    protocol: &FitProtocol,
    cold_start: bool,
) -> CaseOutcome {
    let mut warnings = Vec::new();
    let variables: Vec<&str> = entry.variables.iter().map(String::as_str).collect();
    let parameters: Vec<&str> = entry.parameters.iter().map(String::as_str).collect();
    let parsed = CandidateExpression::parse(&entry.expression, &variables, &parameters);
    let expr = match parsed {
        Ok(e) => Some(e),
        Err(e) => {
            warnings.push(format!(
                "warning: entry {} expression does not parse ({e}); scoring as penalty",
                entry.index
            ));
            None
        }
    };

    let penalty = protocol.config_for(1).projection.penalty_loss;
    let mut scores = Vec::with_capacity(kinds.len());
    let mut wall_ms = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let started = Instant::now();
        let score = match &expr {
            Some(expr) => {
                let d = expr.parameter_count();
                let warm: Vec<f64> = if cold_start {
                    vec![1.0; d]
                } else if entry.theta.len() == d {
                    entry.theta.clone()
                } else {
                    warnings.push(format!(
                        "warning: entry {} theta length {} != {} parameters; \
                         warm-starting from all-ones",
                        entry.index,
                        entry.theta.len(),
                        d
                    ));
                    vec![1.0; d]
                };
                let config = protocol.config_for(d);
                match kind.evaluate(expr, dataset, Some(&warm), &config) {
                    Ok(result) if result.valid => result.score,
                    Ok(_) => penalty,
                    Err(e) => {
                        warnings.push(format!(
                            "warning: entry {} evaluator {} failed ({e}); scoring as penalty",
                            entry.index,
                            kind.tag()
                        ));
                        penalty
                    }
                }
            }
            None => penalty,
        };
        scores.push(score);
        wall_ms.push(started.elapsed().as_secs_f64() * 1e3);
    }
    CaseOutcome {
        scores,
        wall_ms,
        warnings,
    }
}

pub fn run(args: BenchArgs) -> CliResult<()> {
    if !(args.tau.is_finite() && args.tau >= 1.0) {
        return Err(CliError::usage("--tau must be finite and at least 1"));
    }
    let mut kinds = Vec::new();
    for tag in args.evaluators.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind = EvaluatorKind::from_tag(tag)
            .ok_or_else(|| CliError::usage(format!("unknown evaluator {tag:?}")))?;
        if kinds.contains(&kind) {
            return Err(CliError::usage(format!("evaluator {tag:?} listed twice")));
        }
        kinds.push(kind);
    }
    if kinds.is_empty() {
        return Err(CliError::usage("--evaluators must name at least one evaluator"));
    }

    let (entries, skipped_lines, warnings) = read_bank(&args.bank)?;
    for w in &warnings {
        eprintln!("{w}");
    }
    if entries.is_empty() {
        return Err(CliError::data("bank contains no usable entries"));
    }

    // Load each referenced dataset once, relative to the bank file.
    let base = args.bank.parent().unwrap_or_else(|| Path::new("."));
    let mut datasets: BTreeMap<String, Arc<Dataset>> = BTreeMap::new();
    for entry in &entries {
        if !datasets.contains_key(&entry.dataset) {
            let path = base.join(&entry.dataset);
            let dataset = Dataset::from_csv_path(&path, None)
                .map_err(|e| CliError::data(format!("cannot load {}: {e}", path.display())))?;
            datasets.insert(entry.dataset.clone(), Arc::new(dataset));
        }
    }

    let protocol = FitProtocol {
        seed: args.seed,
        ..FitProtocol::default()
    };
    let outcomes = parallel::map_indexed(entries.len(), |i| {
        let entry = &entries[i];
        score_entry(entry, &datasets[&entry.dataset], &kinds, &protocol, args.cold_start)
    });
    for outcome in &outcomes {
        for w in &outcome.warnings {
            eprintln!("{w}");
        }
    }

    let tags: Vec<String> = kinds.iter().map(|k| k.tag().to_string()).collect();
    let score_table: Vec<Vec<f64>> = outcomes.iter().map(|o| o.scores.clone()).collect();
    let msd: Vec<f64> = entries
        .iter()
        .map(|e| mean_square_deviation(datasets[&e.dataset].targets()))
        .collect();
    let summary = spb_summarize(&tags, &score_table, &msd, args.tau);

    let entry_reports: Vec<BenchEntryReport> = entries
        .iter()
        .zip(&score_table)
        .map(|(entry, scores)| BenchEntryReport {
            index: entry.index,
            problem: entry.problem,
            expression: entry.expression.clone(),
            n_params: entry.n_params,
            scores: tags.iter().cloned().zip(scores.iter().copied()).collect(),
        })
        .collect();

    let mut inputs = BTreeMap::new();
    inputs.insert("bank".to_string(), digest_file(&args.bank)?);
    let manifest = RunManifest::new(
        "bench",
        args.seed,
        inputs,
        BenchConfigSnapshot {
            evaluators: kinds.iter().map(|k| k.tag()).collect(),
            tau: args.tau,
            cold_start: args.cold_start,
        },
    )?;

    let report = BenchReport {
        schema: 1,
        manifest,
        n_entries: entries.len(),
        skipped_lines,
        entries: entry_reports,
        summary,
    };
    emit(&report, args.json, args.out.as_deref())?;

    if args.timing {
        for (column, tag) in tags.iter().enumerate() {
            let total: f64 = outcomes.iter().map(|o| o.wall_ms[column]).sum();
            eprintln!(
                "evaluator {tag}: mean wall_ms: {:.3}",
                total / outcomes.len() as f64
            );
        }
    }
    Ok(())
}

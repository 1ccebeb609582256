//! `sagefit lostrate`: refit every recorded candidate of a search
//! trajectory and report how often a discarded candidate would have beaten
//! the incumbent that displaced it.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use sagefit::dataset::Dataset;
use sagefit::diagnostics::{
    trajectory_lost_rate, DiagnosticsError, FitProtocol, LostRateReport, TrajectoryRecord,
};

use crate::manifest::{digest_file, emit, RunManifest};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct LostRateArgs {
    /// Trajectory file (JSONL, one candidate per line, in search order)
    #[arg(long)]
    pub trajectory: PathBuf,
    /// CSV dataset the trajectory was searched against
    #[arg(long)]
    pub data: PathBuf,
    /// Target column name (default "y")
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
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
struct LostRateConfigSnapshot<'a> {
    target: &'a str,
}

#[derive(Serialize)]
struct LostRateCliReport {
    schema: u32,
    manifest: RunManifest,
    n_candidates: usize,
    skipped_lines: usize,
    /// Trajectory positions where the recorded loss strictly improved.
    reference_updates: Vec<usize>,
    /// `None` when the trajectory offers no comparable pairs.
    report: Option<LostRateReport>,
    note: Option<String>,
}

pub fn run(args: LostRateArgs) -> CliResult<()> {
    let started = Instant::now();
    let file = File::open(&args.trajectory).map_err(|e| {
        CliError::data(format!("cannot open {}: {e}", args.trajectory.display()))
    })?;
    let (record, skipped_lines) = TrajectoryRecord::from_jsonl_reader(BufReader::new(file))
        .map_err(|e| CliError::data(format!("cannot read trajectory: {e}")))?;
    if skipped_lines > 0 {
        eprintln!("warning: skipped {skipped_lines} malformed trajectory lines");
    }

    let dataset = Dataset::from_csv_path(&args.data, args.target.as_deref())
        .map_err(|e| CliError::data(format!("cannot load {}: {e}", args.data.display())))?;

    let protocol = FitProtocol {
        seed: args.seed,
        ..FitProtocol::default()
    };
    let (report, note) = match trajectory_lost_rate(&record, &dataset, &protocol) {
        Ok(report) => (Some(report), None),
        Err(DiagnosticsError::EmptyComparisonSet) => (
            None,
            Some(
                "no discarded candidates to compare: every recorded candidate \
                 improved the reference"
                    .to_string(),
            ),
        ),
        Err(e) => return Err(CliError::data(format!("lost-rate analysis failed: {e}"))),
    };

    let target = args.target.as_deref().unwrap_or("y");
    let mut inputs = BTreeMap::new();
    inputs.insert("trajectory".to_string(), digest_file(&args.trajectory)?);
    inputs.insert("data".to_string(), digest_file(&args.data)?);
    let manifest = RunManifest::new(
        "lostrate",
        args.seed,
        inputs,
        LostRateConfigSnapshot { target },
    )?;

    let cli_report = LostRateCliReport {
        schema: 1,
        manifest,
        n_candidates: record.candidates.len(),
        skipped_lines,
        reference_updates: record.reference_updates(),
        report,
        note,
    };
    emit(&cli_report, args.json, args.out.as_deref())?;
    if args.timing {
        eprintln!("wall_ms: {}", started.elapsed().as_millis());
    }
    Ok(())
}

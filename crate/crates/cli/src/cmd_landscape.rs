//! `sagefit landscape`: tabulate the full-parameter MSE over a 2-D slice
//! through a center point, as CSV; optionally detect basins and report the
//! structure as JSON.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use sagefit::dataset::Dataset;
use sagefit::diagnostics::{
    detect_basins, landscape_slice, BasinReport, DiagnosticsError, LandscapeGrid,
};
use sagefit::expr::CandidateExpression;

use crate::manifest::{digest_file, emit, write_text, RunManifest};
use crate::optparse::{parse_axes, parse_f64_list, parse_name_list};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct LandscapeArgs {
    /// Candidate expression, e.g. "a*sin(b*x)"
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
    /// Center θ, comma-separated, one value per parameter
    #[arg(long)]
    pub center: String,
    /// The two parameter indices to sweep, as "i,j"
    #[arg(long, default_value = "0,1")]
    pub axes: String,
    /// Half-width of the sweep around the center (both axes)
    #[arg(long, default_value_t = 3.0)]
    pub range: f64,
    /// Half-width for the second axis (defaults to --range)
    #[arg(long)]
    pub range_j: Option<f64>,
    /// Grid resolution per axis (at least 2)
    #[arg(long, default_value_t = 41)]
    pub grid: usize,
    /// Also run basin detection and emit a JSON report
    #[arg(long)]
    pub basins: bool,
    /// Target column name (default "y")
    #[arg(long)]
    pub target: Option<String>,
    /// Emit compact single-line JSON instead of pretty-printed
    #[arg(long)]
    pub json: bool,
    /// Destination for the CSV grid (default stdout; with --basins the JSON
    /// report goes to stdout and the CSV is written only when --out is set)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print wall time to stderr (never part of the report)
    #[arg(long)]
    pub timing: bool,
}

#[derive(Serialize)]
struct LandscapeConfigSnapshot<'a> {
    target: &'a str,
    center: &'a [f64],
    axes: (usize, usize),
    range_i: (f64, f64),
    range_j: (f64, f64),
    grid_n: usize,
}

#[derive(Serialize)]
struct ArgminCell {
    i: usize,
    j: usize,
    value_i: f64,
    value_j: f64,
    loss: f64,
}

#[derive(Serialize)]
struct GridSummary {
    axis_i: usize,
    axis_j: usize,
    grid_n: usize,
    sentinel: f64,
    sentinel_cells: usize,
    argmin: Option<ArgminCell>,
}

#[derive(Serialize)]
struct LandscapeReport {
    schema: u32,
    manifest: RunManifest,
    expression: String,
    grid: GridSummary,
    basins: BasinReport,
    /// Where the CSV grid was written, if anywhere.
    csv_path: Option<String>,
}

fn map_diag_error(e: DiagnosticsError) -> CliError {
    match e {
        DiagnosticsError::AxisOutOfRange { .. }
        | DiagnosticsError::AxesEqual
        | DiagnosticsError::DegenerateRange { .. }
        | DiagnosticsError::GridTooSmall { .. } => CliError::usage(format!("{e}")),
        other => CliError::data(format!("{other}")),
    }
}

fn summarize(grid: &LandscapeGrid) -> GridSummary {
    let sentinel_cells = (0..grid.grid_n)
        .flat_map(|i| (0..grid.grid_n).map(move |j| (i, j)))
        .filter(|&(i, j)| grid.is_sentinel(i, j))
        .count();
    let argmin = grid.argmin().map(|(i, j)| ArgminCell {
        i,
        j,
        value_i: grid.i_values[i],
        value_j: grid.j_values[j],
        loss: grid.at(i, j),
    });
    GridSummary {
        axis_i: grid.axis_i,
        axis_j: grid.axis_j,
        grid_n: grid.grid_n,
        sentinel: grid.sentinel,
        sentinel_cells,
        argmin,
    }
}

pub fn run(args: LandscapeArgs) -> CliResult<()> {
    let started = Instant::now();
    let vars = parse_name_list(&args.vars);
    let params = parse_name_list(&args.params);
    let var_refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    let param_refs: Vec<&str> = params.iter().map(String::as_str).collect();
    let expr = CandidateExpression::parse(&args.expr, &var_refs, &param_refs)
        .map_err(|e| CliError::usage(format!("cannot parse --expr: {e}")))?;

    let center = parse_f64_list(&args.center, "center")?;
    if center.len() != params.len() {
        return Err(CliError::usage(format!(
            "--center has {} values but there are {} parameters",
            center.len(),
            params.len()
        )));
    }
    let (axis_i, axis_j) = parse_axes(&args.axes)?;
    if args.grid < 2 {
        return Err(CliError::usage("--grid must be at least 2"));
    }
    let half_i = args.range;
    let half_j = args.range_j.unwrap_or(args.range);
    if !(half_i.is_finite() && half_i > 0.0 && half_j.is_finite() && half_j > 0.0) {
        return Err(CliError::usage("--range must be finite and positive"));
    }
    if axis_i >= params.len() || axis_j >= params.len() {
        return Err(CliError::usage(format!(
            "--axes indices must be below the parameter count {}",
            params.len()
        )));
    }
    let range_i = (center[axis_i] - half_i, center[axis_i] + half_i);
    let range_j = (center[axis_j] - half_j, center[axis_j] + half_j);

    let dataset = Dataset::from_csv_path(&args.data, args.target.as_deref())
        .map_err(|e| CliError::data(format!("cannot load {}: {e}", args.data.display())))?;

    let grid = landscape_slice(
        &expr,
        &dataset,
        &center,
        axis_i,
        axis_j,
        range_i,
        range_j,
        args.grid,
    )
    .map_err(map_diag_error)?;

    if args.basins {
        let basins = detect_basins(&grid).map_err(map_diag_error)?;
        let csv_path = match &args.out {
            Some(path) => {
                write_text(&grid.to_csv_string(), Some(path))?;
                Some(path.display().to_string())
            }
            None => None,
        };
        let target = args.target.as_deref().unwrap_or("y");
        let mut inputs = BTreeMap::new();
        inputs.insert("data".to_string(), digest_file(&args.data)?);
        let manifest = RunManifest::new(
            "landscape",
            0,
            inputs,
            LandscapeConfigSnapshot {
                target,
                center: &center,
                axes: (axis_i, axis_j),
                range_i,
                range_j,
                grid_n: args.grid,
            },
        )?;
        let report = LandscapeReport {
            schema: 1,
            manifest,
            expression: expr.canonical(),
            grid: summarize(&grid),
            basins,
            csv_path,
        };
        emit(&report, args.json, None)?;
    } else {
        write_text(&grid.to_csv_string(), args.out.as_deref())?;
    }

    if args.timing {
        eprintln!("wall_ms: {}", started.elapsed().as_millis());
    }
    Ok(())
}

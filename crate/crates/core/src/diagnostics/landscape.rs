//! 2-D loss-landscape grids and basin structure.

use serde::Serialize;

use super::DiagnosticsError;
use crate::dataset::Dataset;
use crate::expr::CandidateExpression;
use crate::parallel;

/// Loss value stored in cells whose evaluation was non-finite.
pub const LOSS_SENTINEL: f64 = 1e12;

/// A grid of full-parameter MSE values over a 2-D slice of θ space.
#[derive(Debug, Clone, Serialize)]
pub struct LandscapeGrid {
    pub axis_i: usize,
    pub axis_j: usize,
    /// Swept values along axis i (length `grid_n`).
    pub i_values: Vec<f64>,
    /// Swept values along axis j (length `grid_n`).
    pub j_values: Vec<f64>,
    /// Row-major `grid_n × grid_n` losses: `loss[i * grid_n + j]`.
    pub loss: Vec<f64>,
    pub grid_n: usize,
    /// Cells holding exactly this value were non-finite.
    pub sentinel: f64,
}

impl LandscapeGrid {
    /// Loss at grid coordinates (i, j).
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.loss[i * self.grid_n + j]
    }

    /// True when a cell carries the non-finite sentinel.
    pub fn is_sentinel(&self, i: usize, j: usize) -> bool {
        self.at(i, j) >= self.sentinel
    }

    /// Coordinates of the lowest non-sentinel cell.
    pub fn argmin(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..self.grid_n {
            for j in 0..self.grid_n {
                if self.is_sentinel(i, j) {
                    continue;
                }
                match best {
                    Some((bi, bj)) if self.at(bi, bj) <= self.at(i, j) => {}
                    _ => best = Some((i, j)),
                }
            }
        }
        best
    }

    /// Renders the grid as CSV: header row carries the axis-j values (first
    /// field blank), every data row starts with its axis-i value.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for v in &self.j_values {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
        for i in 0..self.grid_n {
            out.push_str(&format!("{}", self.i_values[i]));
            for j in 0..self.grid_n {
                out.push(',');
                out.push_str(&format!("{}", self.at(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Evaluates the full-parameter MSE on a 2-D grid: θ equals `theta_center`
/// except coordinates `axis_i` and `axis_j`, which sweep their ranges.
/// Cells where any row evaluates to a non-finite value carry the sentinel.
///
/// Cells are independent and computed in parallel; the output layout is
/// canonical regardless of schedule.
pub fn landscape_slice(
    expr: &CandidateExpression,
    dataset: &Dataset,
    theta_center: &[f64],
    axis_i: usize,
    axis_j: usize,
    range_i: (f64, f64),
    range_j: (f64, f64),
    grid_n: usize,
) -> Result<LandscapeGrid, DiagnosticsError> {
    let d = expr.parameter_count();
    assert_eq!(theta_center.len(), d, "center must be a full θ");
    for axis in [axis_i, axis_j] {
        if axis >= d {
            return Err(DiagnosticsError::AxisOutOfRange {
                axis,
                parameter_count: d,
            });
        }
    }
    if axis_i == axis_j {
        return Err(DiagnosticsError::AxesEqual);
    }
    if grid_n < 2 {
        return Err(DiagnosticsError::GridTooSmall { grid_n });
    }
    for (axis, (lo, hi)) in [(axis_i, range_i), (axis_j, range_j)] {
        if lo == hi {
            return Err(DiagnosticsError::DegenerateRange { axis });
        }
    }

    let i_values = linspace(range_i.0, range_i.1, grid_n);
    let j_values = linspace(range_j.0, range_j.1, grid_n);
    let y = dataset.targets();

    let cells = parallel::map_indexed(grid_n * grid_n, |idx| -> Result<f64, DiagnosticsError> {
        let (i, j) = (idx / grid_n, idx % grid_n);
        let mut theta = theta_center.to_vec();
        theta[axis_i] = i_values[i];
        theta[axis_j] = j_values[j];
        let eval = expr.evaluate(dataset, &theta)?;
        let mut sum_sq = 0.0;
        let mut all_finite = true;
        for (row, &target) in y.iter().enumerate() {
            if !eval.finite_mask[row] {
                all_finite = false;
                break;
            }
            let r = eval.predictions[row] - target;
            sum_sq += r * r;
        }
        let mse = sum_sq / y.len() as f64;
        Ok(if all_finite && mse.is_finite() {
            mse.min(LOSS_SENTINEL)
        } else {
            LOSS_SENTINEL
        })
    });
    let mut loss = Vec::with_capacity(grid_n * grid_n);
    for cell in cells {
        loss.push(cell?);
    }

    Ok(LandscapeGrid {
        axis_i,
        axis_j,
        i_values,
        j_values,
        loss,
        grid_n,
        sentinel: LOSS_SENTINEL,
    })
}

/// One attraction basin of the grid.
#[derive(Debug, Clone, Serialize)]
pub struct Basin {
    /// Lowest loss inside the basin.
    pub floor_loss: f64,
    /// Grid coordinates of that floor.
    pub floor_cell: (usize, usize),
    /// Number of cells assigned to the basin.
    pub size: usize,
}

/// A first-contact event between two basin components while flooding the
/// grid in increasing loss order: the minimax barrier between them.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MergeEvent {
    pub basin_a: usize,
    pub basin_b: usize,
    /// Loss of the saddle cell where the components met.
    pub height: f64,
}

/// Basin decomposition of a loss grid.
#[derive(Debug, Clone, Serialize)]
pub struct BasinReport {
    pub basins: Vec<Basin>,
    /// Merge events in increasing height order.
    pub merges: Vec<MergeEvent>,
    /// Basin id per cell (row-major); `None` for sentinel cells.
    pub assignment: Vec<Option<usize>>,
}

impl BasinReport {
    /// Minimax barrier between two basins: the height at which they first
    /// join while flooding. `None` when they never connect (separated by
    /// sentinel walls) or an id is out of range.
    pub fn barrier_between(&self, a: usize, b: usize) -> Option<f64> {
        let n = self.basins.len();
        if a >= n || b >= n {
            return None;
        }
        if a == b {
            return Some(self.basins[a].floor_loss);
        }
        let mut uf = UnionFind::new(n);
        for merge in &self.merges {
            uf.union(merge.basin_a, merge.basin_b);
            if uf.find(a) == uf.find(b) {
                return Some(merge.height);
            }
        }
        None
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Decomposes a grid into attraction basins by flooding cells in
/// increasing loss order (ties broken by cell index, which also merges
/// plateaus into one basin). A cell with no already-flooded neighbor opens
/// a new basin; a cell touching several flooded components records their
/// first-contact height — the minimax barrier — before joining the
/// steepest one. Sentinel cells are impassable walls.
///
/// Neighborhood is 8-connected.
pub fn detect_basins(grid: &LandscapeGrid) -> Result<BasinReport, DiagnosticsError> {
    let n = grid.grid_n;
    let mut order: Vec<usize> = (0..n * n)
        .filter(|&idx| grid.loss[idx] < grid.sentinel)
        .collect();
    if order.is_empty() {
        return Err(DiagnosticsError::AllSentinelGrid);
    }
    order.sort_by(|&a, &b| {
        grid.loss[a]
            .partial_cmp(&grid.loss[b])
            .expect("non-sentinel losses are finite")
            .then(a.cmp(&b))
    });

    let mut assignment: Vec<Option<usize>> = vec![None; n * n];
    let mut basins: Vec<Basin> = Vec::new();
    let mut merges: Vec<MergeEvent> = Vec::new();
    // Union-find over basin ids tracks which components have already met.
    let mut uf = UnionFind::new(order.len());

    for &idx in &order {
        let (i, j) = (idx / n, idx % n);
        // Steepest flooded neighbor plus the set of distinct flooded
        // components around this cell.
        let mut steepest: Option<(f64, usize)> = None;
        let mut touching: Vec<usize> = Vec::new();
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= n as i64 || nj >= n as i64 {
                    continue;
                }
                let nidx = ni as usize * n + nj as usize;
                let Some(basin) = assignment[nidx] else {
                    continue;
                };
                let nloss = grid.loss[nidx];
                match steepest {
                    Some((best, _)) if best <= nloss => {}
                    _ => steepest = Some((nloss, basin)),
                }
                let root = uf.find(basin);
                if !touching.contains(&root) {
                    touching.push(root);
                }
            }
        }
        match steepest {
            None => {
                assignment[idx] = Some(basins.len());
                basins.push(Basin {
                    floor_loss: grid.loss[idx],
                    floor_cell: (i, j),
                    size: 1,
                });
            }
            Some((_, basin)) => {
                assignment[idx] = Some(basin);
                basins[basin].size += 1;
                // Every pair of distinct components meeting here first
                // connects at this cell's loss.
                touching.sort_unstable();
                for a in 0..touching.len() {
                    for b in (a + 1)..touching.len() {
                        if uf.union(touching[a], touching[b]) {
                            merges.push(MergeEvent {
                                basin_a: touching[a],
                                basin_b: touching[b],
                                height: grid.loss[idx],
                            });
                        }
                    }
                }
            }
        }
    }

    Ok(BasinReport {
        basins,
        merges,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset_1d(n: usize, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> Dataset {
        let xs: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        Dataset::new(
            xs.iter().map(|&x| vec![x]).collect(),
            xs.iter().map(|&x| f(x)).collect(),
            Some(vec!["x".to_string()]),
        )
        .unwrap()
    }

    fn grid_from_fn(
        n: usize,
        i_range: (f64, f64),
        j_range: (f64, f64),
        f: impl Fn(f64, f64) -> f64,
    ) -> LandscapeGrid {
        let i_values = linspace(i_range.0, i_range.1, n);
        let j_values = linspace(j_range.0, j_range.1, n);
        let mut loss = Vec::with_capacity(n * n);
        for &u in &i_values {
            for &v in &j_values {
                loss.push(f(u, v));
            }
        }
        LandscapeGrid {
            axis_i: 0,
            axis_j: 1,
            i_values,
            j_values,
            loss,
            grid_n: n,
            sentinel: LOSS_SENTINEL,
        }
    }

    #[test]
    fn bowl_grid_has_its_minimum_at_the_truth_cell() {
        let expr = CandidateExpression::parse("a*x + b", &["x"], &["a", "b"]).unwrap();
        let data = dataset_1d(24, -1.0, 1.0, |x| 2.0 * x);
        let grid =
            landscape_slice(&expr, &data, &[0.0, 0.0], 0, 1, (0.0, 4.0), (-1.0, 1.0), 21).unwrap();
        let (bi, bj) = grid.argmin().unwrap();
        // a = 2 sits exactly on cell 10 of [0,4]; b = 0 on cell 10 of [−1,1].
        assert_eq!((bi, bj), (10, 10));
        assert!(grid.at(bi, bj) <= 1e-20);
        // Along the b = 0 column the loss is a parabola in a.
        assert!(grid.at(0, 10) > grid.at(5, 10));
        assert!(grid.at(20, 10) > grid.at(15, 10));
    }

    #[test]
    fn sine_frequency_slice_has_multiple_basins() {
        let expr = CandidateExpression::parse("a*sin(b*x)", &["x"], &["a", "b"]).unwrap();
        let data = dataset_1d(64, 0.0, 3.0, |x| (2.5 * x).sin());
        let grid =
            landscape_slice(&expr, &data, &[1.0, 0.0], 0, 1, (0.5, 1.5), (0.0, 12.0), 41).unwrap();
        let report = detect_basins(&grid).unwrap();
        assert!(
            report.basins.len() >= 2,
            "expected multimodality, found {} basin(s)",
            report.basins.len()
        );
        // Floors never exceed the barriers that touch them.
        for merge in &report.merges {
            assert!(report.basins[merge.basin_a].floor_loss <= merge.height);
            assert!(report.basins[merge.basin_b].floor_loss <= merge.height);
        }
        assert!(report.basins.len() <= 41 * 41);
    }

    #[test]
    fn planted_double_well_recovers_the_analytic_saddle() {
        // f(u, v) = (u² − 1)² + v²: minima at (±1, 0), saddle height 1 at
        // the origin.
        let grid = grid_from_fn(41, (-2.0, 2.0), (-1.0, 1.0), |u, v| {
            (u * u - 1.0) * (u * u - 1.0) + v * v
        });
        let report = detect_basins(&grid).unwrap();
        assert_eq!(report.basins.len(), 2, "two wells expected");
        for basin in &report.basins {
            assert!(basin.floor_loss <= 1e-12);
        }
        let barrier = report.barrier_between(0, 1).unwrap();
        // One grid cell in u changes f by |f(0.1, 0) − f(0, 0)| ≈ 0.0199.
        assert!(
            (barrier - 1.0).abs() <= 0.02,
            "saddle estimate {barrier} vs analytic 1.0"
        );
    }

    #[test]
    fn plateau_grid_is_a_single_basin() {
        let grid = grid_from_fn(9, (0.0, 1.0), (0.0, 1.0), |_, _| 0.25);
        let report = detect_basins(&grid).unwrap();
        assert_eq!(report.basins.len(), 1);
        assert!(report.merges.is_empty());
        assert_eq!(report.basins[0].size, 81);
    }

    #[test]
    fn all_sentinel_grid_is_an_error() {
        let grid = grid_from_fn(4, (0.0, 1.0), (0.0, 1.0), |_, _| LOSS_SENTINEL);
        assert!(matches!(
            detect_basins(&grid),
            Err(DiagnosticsError::AllSentinelGrid)
        ));
    }

    #[test]
    fn sentinel_cells_fall_outside_every_basin() {
        // Left half valid bowl, right half invalid.
        let grid = grid_from_fn(8, (0.0, 1.0), (0.0, 1.0), |u, v| {
            if v > 0.5 {
                LOSS_SENTINEL
            } else {
                u * u + v * v
            }
        });
        let report = detect_basins(&grid).unwrap();
        let assigned = report.assignment.iter().filter(|a| a.is_some()).count();
        let sentinels = report.assignment.iter().filter(|a| a.is_none()).count();
        assert_eq!(assigned + sentinels, 64);
        assert!(sentinels > 0);
        assert_eq!(
            assigned,
            report.basins.iter().map(|b| b.size).sum::<usize>()
        );
    }

    #[test]
    fn slice_validation_rejects_bad_arguments() {
        let expr = CandidateExpression::parse("a*x + b", &["x"], &["a", "b"]).unwrap();
        let data = dataset_1d(8, -1.0, 1.0, |x| x);
        let center = [0.0, 0.0];
        assert!(matches!(
            landscape_slice(&expr, &data, &center, 0, 0, (0.0, 1.0), (0.0, 1.0), 8),
            Err(DiagnosticsError::AxesEqual)
        ));
        assert!(matches!(
            landscape_slice(&expr, &data, &center, 0, 5, (0.0, 1.0), (0.0, 1.0), 8),
            Err(DiagnosticsError::AxisOutOfRange { .. })
        ));
        assert!(matches!(
            landscape_slice(&expr, &data, &center, 0, 1, (2.0, 2.0), (0.0, 1.0), 8),
            Err(DiagnosticsError::DegenerateRange { axis: 0 })
        ));
        assert!(matches!(
            landscape_slice(&expr, &data, &center, 0, 1, (0.0, 1.0), (0.0, 1.0), 1),
            Err(DiagnosticsError::GridTooSmall { grid_n: 1 })
        ));
    }

    #[test]
    fn non_finite_cells_carry_the_sentinel() {
        let expr = CandidateExpression::parse("a*log(x - b)", &["x"], &["a", "b"]).unwrap();
        let data = dataset_1d(16, 0.0, 1.0, |x| x);
        // b > 1 makes every row non-finite; b < 0 keeps all rows finite.
        let grid =
            landscape_slice(&expr, &data, &[1.0, 0.0], 0, 1, (0.5, 1.5), (-2.0, 2.0), 9).unwrap();
        let mut saw_sentinel = false;
        let mut saw_finite = false;
        for j in 0..9 {
            if grid.is_sentinel(4, j) {
                saw_sentinel = true;
            } else {
                saw_finite = true;
            }
        }
        assert!(saw_sentinel && saw_finite);
    }

    #[test]
    fn csv_layout_is_header_j_and_leading_i_column() {
        let grid = LandscapeGrid {
            axis_i: 0,
            axis_j: 1,
            i_values: vec![0.0, 1.0],
            j_values: vec![10.0, 20.0],
            loss: vec![0.5, 1.5, 2.5, 3.5],
            grid_n: 2,
            sentinel: LOSS_SENTINEL,
        };
        assert_eq!(grid.to_csv_string(), ",10,20\n0,0.5,1.5\n1,2.5,3.5\n");
    }
}

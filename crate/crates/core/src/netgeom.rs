//! Network geometry: random node placement, the cluster grid, the
//! cluster-pair TDMA schedule, and the cluster-occupancy concentration
//! machinery.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashSet;
use std::io::Write;

use crate::config::SimulationConfig;
use crate::{derived_rng, Error, Result};

/// Sampled node positions on the `L x L` square, `L = n^(nu/2)`.
#[derive(Debug, Clone)]
pub struct NodeSet {
    /// `(x, y)` coordinates, length `n`, each coordinate in `[0, L]`.
    pub positions: Vec<(f64, f64)>,
    /// Side length `L`.
    pub side: f64,
    /// The generating configuration.
    pub config: SimulationConfig,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Writes the node set as CSV with header `index,x,y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,x,y")?;
        for (i, (x, y)) in self.positions.iter().enumerate() {
            writeln!(w, "{i},{x},{y}")?;
        }
        Ok(())
    }
}

/// Samples `n` i.i.d. uniform points on `[0, L]^2`.
///
/// Deterministic for a fixed seed and independent of thread count.
/// Coincident positions (a probability-zero event that floating point makes
/// possible) are resampled so the channel model is never singular.
pub fn generate_network(config: &SimulationConfig) -> Result<NodeSet> {
    config.validate()?;
    let side = config.side();
    let mut rng = derived_rng(config.seed, 0);
    let mut seen: HashSet<(u64, u64)> = HashSet::with_capacity(config.n);
    let mut positions = Vec::with_capacity(config.n);
    while positions.len() < config.n {
        let x: f64 = rng.gen_range(0.0..=side);
        let y: f64 = rng.gen_range(0.0..=side);
        if seen.insert((x.to_bits(), y.to_bits())) {
            positions.push((x, y));
        }
    }
    Ok(NodeSet {
        positions,
        side,
        config: *config,
    })
}

/// Grid cell address `(row, col)`; rows advance with `y`, columns with `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

/// Partition of the network into grid clusters.
#[derive(Debug, Clone)]
pub struct ClusterLayout {
    /// Cell extent along `x`.
    pub cell_width: f64,
    /// Cell extent along `y`.
    pub cell_height: f64,
    pub cols: usize,
    pub rows: usize,
    /// Member node indices per cell, row-major (`row * cols + col`).
    pub cells: Vec<Vec<usize>>,
    /// Node count per cell.
    pub counts: Vec<usize>,
    /// Cells truncated by the network boundary keep their actual member
    /// counts and are flagged here.
    pub partial: Vec<bool>,
    pub side: f64,
}

impl ClusterLayout {
    pub fn cell_index(&self, cell: Cell) -> usize {
        cell.row * self.cols + cell.col
    }

    pub fn members(&self, cell: Cell) -> &[usize] {
        &self.cells[self.cell_index(cell)]
    }

    /// Center of a cell, clipped to the network square for partial cells.
    pub fn cell_center(&self, cell: Cell) -> (f64, f64) {
        let x1 = (cell.col as f64 * self.cell_width).min(self.side);
        let x2 = ((cell.col + 1) as f64 * self.cell_width).min(self.side);
        let y1 = (cell.row as f64 * self.cell_height).min(self.side);
        let y2 = ((cell.row + 1) as f64 * self.cell_height).min(self.side);
        ((x1 + x2) / 2.0, (y1 + y2) / 2.0)
    }
}

/// Partitions node indices by half-open grid cells `[k*w, (k+1)*w)`.
///
/// A node sitting exactly on an interior cell boundary belongs to the
/// higher-index cell. Nodes on the outer boundary `x = L` or `y = L` are
/// kept in the last cell.
pub fn partition_clusters(
    nodes: &NodeSet,
    cell_width: f64,
    cell_height: f64,
) -> Result<ClusterLayout> {
    if !(cell_width > 0.0) || !(cell_height > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "cell dimensions must be positive, got {cell_width} x {cell_height}"
        )));
    }
    let side = nodes.side;
    // Snap the grid so whole cells tile the square exactly: the requested
    // dimensions are adjusted by at most a factor 1 + 1/(cells per side),
    // which avoids sliver cells clipped at the boundary.
    let cols = (side / cell_width).round().max(1.0) as usize;
    let rows = (side / cell_height).round().max(1.0) as usize;
    let cell_width = side / cols as f64;
    let cell_height = side / rows as f64;
    let mut cells = vec![Vec::new(); rows * cols];
    for (i, &(x, y)) in nodes.positions.iter().enumerate() {
        let col = ((x / cell_width).floor() as usize).min(cols - 1);
        let row = ((y / cell_height).floor() as usize).min(rows - 1);
        cells[row * cols + col].push(i);
    }
    let counts = cells.iter().map(Vec::len).collect();
    let eps = 1e-9 * side.max(1.0);
    let mut partial = vec![false; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let over_x = (c + 1) as f64 * cell_width > side + eps;
            let over_y = (r + 1) as f64 * cell_height > side + eps;
            partial[r * cols + c] = over_x || over_y;
        }
    }
    Ok(ClusterLayout {
        cell_width,
        cell_height,
        cols,
        rows,
        cells,
        counts,
        partial,
        side,
    })
}

/// One scheduled cluster pair: transmit cell, receive cell, TDMA round.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClusterPair {
    pub tx: Cell,
    pub rx: Cell,
    pub round: usize,
}

/// The facing cluster-pair TDMA schedule.
///
/// Clusters are `n^(nu/2)/4` wide (along the beamforming axis) and
/// `n^(nu/4)/(2 c1)` tall, so the grid always has exactly 4 columns. A pair
/// joins columns `(0, 2)` or `(1, 3)`; its facing edges are `d = n^(nu/2)/4`
/// apart. Simultaneously active pairs sit on rows spaced by at least the
/// vertical gap `c2 * n^(nu/4 + epsilon)`.
#[derive(Debug, Clone)]
pub struct PairSchedule {
    /// All scheduled pairs, every cluster row covered.
    pub pairs: Vec<ClusterPair>,
    /// Horizontal facing-edge separation `d = n^(nu/2)/4`.
    pub d: f64,
    /// Required vertical separation between simultaneously active pairs.
    pub vertical_gap: f64,
    /// `N_C = floor(L / (n^(nu/4)/(2 c1) + c2 n^(nu/4+epsilon)))`.
    pub n_pairs: usize,
    /// TDMA round assignment per cell (row-major); `None` for cells that
    /// never transmit (never happens with 4 columns).
    pub rounds: Vec<Option<usize>>,
    /// Number of TDMA rounds, `Theta(n^epsilon)`.
    pub rounds_total: usize,
    /// Row stride between simultaneously active pairs.
    pub row_stride: usize,
}

impl PairSchedule {
    /// Pairs active in the given round.
    pub fn pairs_in_round(&self, round: usize) -> Vec<ClusterPair> {
        self.pairs.iter().copied().filter(|p| p.round == round).collect()
    }
}

/// Builds the cluster-pair schedule from a layout with cell width
/// `n^(nu/2)/4` and cell height `n^(nu/4)/(2 c1)`.
pub fn build_pair_schedule(
    layout: &ClusterLayout,
    config: &SimulationConfig,
) -> Result<PairSchedule> {
    // Expect the snapped versions of the nominal cluster dimensions.
    let snap = |want: f64| layout.side / (layout.side / want).round().max(1.0);
    let want_w = snap(config.cluster_long_side());
    let want_h = snap(config.cluster_short_side());
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.max(1.0);
    if !close(layout.cell_width, want_w) || !close(layout.cell_height, want_h) {
        return Err(Error::InvalidGeometry(format!(
            "pair schedule needs cells {want_w} x {want_h}, layout has {} x {}",
            layout.cell_width, layout.cell_height
        )));
    }
    if layout.cols < 4 {
        return Err(Error::InvalidGeometry(format!(
            "pair schedule needs at least 4 cluster columns, layout has {}",
            layout.cols
        )));
    }
    let side = layout.side;
    let gap = config.vertical_gap();
    let n_pairs = (side / (layout.cell_height + gap)).floor() as usize;
    if n_pairs < 1 {
        return Err(Error::InfeasibleSchedule(format!(
            "N_C = floor(L / (h + gap)) < 1: L = {side}, cluster height = {}, \
             vertical gap = {gap}; requires h + gap <= L",
            layout.cell_height
        )));
    }
    // Rows active together are `stride` apart, twice the minimum spacing:
    // relays re-forward the cross-pair signal they pick up with the same
    // loop gain as the beamformed one, so the per-hop pickup is kept at half
    // the admissible level to stop it accumulating over the hops.
    let stride = 2.0 * ((layout.cell_height + gap) / layout.cell_height).ceil();
    let stride = (stride as usize).max(1);
    // Two column configurations, (0 -> 2) and (1 -> 3), cover all 4 columns.
    let configs: [(usize, usize); 2] = [(0, 2), (1, 3)];
    let offsets = stride.min(layout.rows);
    let rounds_total = offsets * configs.len();

    let mut pairs = Vec::new();
    let mut rounds = vec![None; layout.rows * layout.cols];
    for (ci, &(tx_col, rx_col)) in configs.iter().enumerate() {
        for offset in 0..offsets {
            let round = ci * offsets + offset;
            let mut row = offset;
            while row < layout.rows {
                let tx = Cell { row, col: tx_col };
                let rx = Cell { row, col: rx_col };
                pairs.push(ClusterPair { tx, rx, round });
                rounds[layout.cell_index(tx)] = Some(round);
                rounds[layout.cell_index(rx)] = Some(round);
                row += stride;
            }
        }
    }
    Ok(PairSchedule {
        pairs,
        d: config.pair_separation(),
        vertical_gap: gap,
        n_pairs,
        rounds,
        rounds_total,
        row_stride: stride,
    })
}

/// The Chernoff exponent `Delta_+(delta) = (1+delta) ln(1+delta) - delta`.
pub fn delta_plus(delta: f64) -> f64 {
    (1.0 + delta) * (1.0 + delta).ln() - delta
}

/// Upper bound on the probability that any cluster of area `M` has a node
/// count outside `((1-delta) M n^(1-nu), (1+delta) M n^(1-nu))`:
/// `(n^nu / M) * exp(-Delta_+(delta) * M * n^(1-nu))`.
pub fn chernoff_deviation_bound(m_area: f64, n: usize, nu: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be > 0, got {delta}"
        )));
    }
    let nf = n as f64;
    let clusters = nf.powf(nu) / m_area;
    let mean = m_area * nf.powf(1.0 - nu);
    Ok(clusters * (-delta_plus(delta) * mean).exp())
}

/// Outcome of a cluster-count deviation experiment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeviationExperiment {
    /// Fraction of trials in which any complete cluster count left the
    /// `(1 +/- delta)` band around its mean.
    pub frequency: f64,
    /// The analytic Chernoff bound for the same event.
    pub bound: f64,
    /// Binomial standard error of the frequency estimate at rate `bound`.
    pub std_error: f64,
    pub trials: usize,
}

/// Monte Carlo frequency of cluster-count deviations across resampled
/// networks, compared against [`chernoff_deviation_bound`].
///
/// Only complete (non-partial) cells are tested, matching the exact-area
/// assumption behind the bound. Trials run in parallel on derived RNG
/// streams; the result is independent of scheduling order.
pub fn empirical_count_deviation(
    config: &SimulationConfig,
    m_area: f64,
    delta: f64,
    trials: usize,
) -> Result<DeviationExperiment> {
    config.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be > 0, got {delta}"
        )));
    }
    let cell_side = m_area.sqrt();
    let nf = config.n as f64;
    let mean = m_area * nf.powf(1.0 - config.nu);
    let lo = (1.0 - delta) * mean;
    let hi = (1.0 + delta) * mean;
    let violations: Vec<bool> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut cfg = *config;
            cfg.seed = config.seed ^ trial;
            let nodes = generate_network(&cfg).expect("validated config");
            let layout = partition_clusters(&nodes, cell_side, cell_side)
                .expect("positive cell side");
            layout
                .counts
                .iter()
                .zip(&layout.partial)
                .any(|(&c, &part)| !part && ((c as f64) <= lo || (c as f64) >= hi))
        })
        .collect();
    let frequency = violations.iter().filter(|&&v| v).count() as f64 / trials as f64;
    let bound = chernoff_deviation_bound(m_area, config.n, config.nu, delta)?;
    let p = bound.min(1.0);
    let std_error = (p * (1.0 - p) / trials as f64).sqrt();
    Ok(DeviationExperiment {
        frequency,
        bound,
        std_error,
        trials,
    })
}

//! Grid embedding `f: G -> Z²` by PCA placement, nearest-free-cell snapping
//! and swap/move local search on total Manhattan edge length.

use nalgebra::{Matrix3, Vector3};

use super::Graph;
use crate::{Error, Point3, Result};

/// Upper bound on local-search passes.
pub const MAX_PASSES: usize = 1000;

/// An injective vertex-to-cell assignment on a `side x side` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridEmbedding {
    pub side: usize,
    /// `(row, col)` per vertex.
    pub cells: Vec<(usize, usize)>,
    /// Total Manhattan edge length after snapping, then after each pass.
    pub energy_trace: Vec<u64>,
}

impl GridEmbedding {
    pub fn is_injective(&self) -> bool {
        let mut seen = vec![false; self.side * self.side];
        self.cells.iter().all(|&(r, c)| {
            r < self.side && c < self.side && !std::mem::replace(&mut seen[r * self.side + c], true)
        })
    }

    pub fn energy(&self, graph: &Graph) -> u64 {
        manhattan_energy(graph, &self.cells)
    }
}

pub fn manhattan_energy(graph: &Graph, cells: &[(usize, usize)]) -> u64 {
    graph
        .edges
        .iter()
        .map(|&(a, b)| manhattan(cells[a], cells[b]) as u64)
        .sum()
}

#[inline]
fn manhattan(a: (usize, usize), b: (usize, usize)) -> i64 {
    (a.0 as i64 - b.0 as i64).abs() + (a.1 as i64 - b.1 as i64).abs()
}

/// Project onto the two leading principal axes. The sign of each axis is
/// fixed so its largest-magnitude component is positive.
fn pca_2d(positions: &[Point3]) -> Vec<[f64; 2]> {
    let n = positions.len() as f64;
    let mut mean = Vector3::zeros();
    for p in positions {
        mean += Vector3::from(*p);
    }
    mean /= n;
    let mut cov = Matrix3::zeros();
    for p in positions {
        let d = Vector3::from(*p) - mean;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes: Vec<Vector3<f64>> = order[..2]
        .iter()
        .map(|&i| {
            let v = eig.eigenvectors.column(i).into_owned();
            let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if big < 0.0 {
                -v
            } else {
                v
            }
        })
        .collect();
    positions
        .iter()
        .map(|p| {
            let d = Vector3::from(*p) - mean;
            [d.dot(&axes[0]), d.dot(&axes[1])]
        })
        .collect()
}

/// Lay `graph` out on a `side x side` grid.
///
/// 1. Vertex positions are projected on their two principal axes and scaled
///    so the median edge spans one cell (shrunk further if the layout would
///    not fit), then centered on the grid.
/// 2. In descending distance from the centroid, each vertex takes the free
///    cell nearest its target, ties to the smaller `(row, col)`.
/// 3. Passes over the vertices apply, per vertex, the best strictly improving
///    swap with another vertex or move to a free cell, until a pass improves
///    nothing or [`MAX_PASSES`] is reached.
pub fn grid_embed(graph: &Graph, positions: &[Point3], side: usize) -> Result<GridEmbedding> {
    let n = graph.vertices;
    if positions.len() != n {
        return Err(Error::Shape(format!(
            "{} positions for {n} vertices",
            positions.len()
        )));
    }
    if n > side * side {
        return Err(Error::GridOverflow { vertices: n, side });
    }
    if n == 0 {
        return Ok(GridEmbedding {
            side,
            cells: Vec::new(),
            energy_trace: vec![0],
        });
    }

    let flat = pca_2d(positions);
    let mut lengths: Vec<f64> = graph
        .edges
        .iter()
        .map(|&(a, b)| (flat[a][0] - flat[b][0]).hypot(flat[a][1] - flat[b][1]))
        .filter(|&l| l > 1e-12)
        .collect();
    lengths.sort_by(f64::total_cmp);
    let mut scale = lengths.get(lengths.len() / 2).map_or(1.0, |&l| 1.0 / l);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &flat {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let room = (side - 1) as f64;
    if span * scale > room {
        scale = if span > 0.0 { room / span } else { 1.0 };
    }
    let mid = [(lo[0] + hi[0]) * 0.5, (lo[1] + hi[1]) * 0.5];
    // first principal axis runs along columns, second along rows
    let target: Vec<[f64; 2]> = flat
        .iter()
        .map(|p| {
            [
                (p[1] - mid[1]) * scale + room * 0.5,
                (p[0] - mid[0]) * scale + room * 0.5,
            ]
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    let radius = |i: usize| flat[i][0].hypot(flat[i][1]);
    order.sort_by(|&a, &b| radius(b).total_cmp(&radius(a)).then(a.cmp(&b)));
    let mut occupant: Vec<Option<usize>> = vec![None; side * side];
    let mut cells = vec![(0usize, 0usize); n];
    for &v in &order {
        let t = target[v];
        let mut best = (f64::INFINITY, 0usize);
        for (idx, occ) in occupant.iter().enumerate() {
            if occ.is_some() {
                continue;
            }
            let (r, c) = (idx / side, idx % side);
            let d = (r as f64 - t[0]).powi(2) + (c as f64 - t[1]).powi(2);
            // row-major scan keeps the first (smallest) cell on ties
            if d < best.0 {
                best = (d, idx);
            }
        }
        occupant[best.1] = Some(v);
        cells[v] = (best.1 / side, best.1 % side);
    }

    let adj = graph.adjacency();
    let mut linked = vec![false; n * n];
    for &(a, b) in &graph.edges {
        linked[a * n + b] = true;
        linked[b * n + a] = true;
    }
    let mut energy = manhattan_energy(graph, &cells) as i64;
    let mut trace = vec![energy as u64];
    let cost_at = |v: usize, cell: (usize, usize), cells: &[(usize, usize)]| -> i64 {
        adj[v].iter().map(|&w| manhattan(cell, cells[w])).sum()
    };
    // Manhattan cost separates into row and column sums, so the cost of v at
    // any cell is row_cost[r] + col_cost[c].
    let mut row_cost = vec![0i64; side];
    let mut col_cost = vec![0i64; side];

    for _ in 0..MAX_PASSES {
        let mut improved = false;
        for v in 0..n {
            let here = cells[v];
            for r in 0..side {
                row_cost[r] = adj[v].iter().map(|&w| (r as i64 - cells[w].0 as i64).abs()).sum();
                col_cost[r] = adj[v].iter().map(|&w| (r as i64 - cells[w].1 as i64).abs()).sum();
            }
            let base = row_cost[here.0] + col_cost[here.1];
            let mut best: (i64, usize) = (0, usize::MAX);
            for (idx, occ) in occupant.iter().enumerate() {
                let there = (idx / side, idx % side);
                if there == here {
                    continue;
                }
                let moved = row_cost[there.0] + col_cost[there.1] - base;
                let delta = match *occ {
                    None => moved,
                    Some(u) => {
                        // the v-u edge, if any, keeps its length under a swap
                        let shared = if linked[u * n + v] { 2 * manhattan(here, there) } else { 0 };
                        moved + shared + cost_at(u, here, &cells) - cost_at(u, there, &cells)
                    }
                };
                if delta < best.0 {
                    best = (delta, idx);
                }
            }
            if best.0 < 0 {
                let idx = best.1;
                let there = (idx / side, idx % side);
                let here_idx = here.0 * side + here.1;
                if let Some(u) = occupant[idx] {
                    cells[u] = here;
                    occupant[here_idx] = Some(u);
                } else {
                    occupant[here_idx] = None;
                }
                cells[v] = there;
                occupant[idx] = Some(v);
                energy += best.0;
                improved = true;
            }
        }
        trace.push(energy as u64);
        if !improved {
            break;
        }
    }
    debug_assert_eq!(energy as u64, manhattan_energy(graph, &cells));

    Ok(GridEmbedding {
        side,
        cells,
        energy_trace: trace,
    })
}

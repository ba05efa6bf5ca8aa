//! Hierarchical graph drawing.
//!
//! The cloud is split into `K` size-capped clusters. A Delaunay graph over
//! the cluster centers is laid out on a `G x G` grid, and each cluster's own
//! Delaunay graph is laid out on a `G x G` sub-grid inside its top-level
//! cell. The result is a `G² x G²` RGB image whose lit pixels carry point
//! coordinates.

mod delaunay;
mod draw;
mod kmeans;
mod layout;

pub use delaunay::{delaunay3, delaunay_oracle};
pub use draw::{draw_image, write_edge_lists};
pub use kmeans::{balanced_kmeans, cluster_cap};
pub use layout::{grid_embed, manhattan_energy, GridEmbedding, MAX_PASSES};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, MappedImage, Point3, PointCloud, Result};

/// Undirected simple graph; edges are stored as sorted `(u, v)` with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Build from arbitrary pairs, dropping self-loops and duplicates.
    pub fn from_pairs(vertices: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut edges: Vec<(usize, usize)> = pairs
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Self { vertices, edges }
    }

    pub fn empty(vertices: usize) -> Self {
        Self {
            vertices,
            edges: Vec::new(),
        }
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }
}

/// Cluster centers, memberships and the two levels of Delaunay edges.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterHierarchy {
    pub centers: Vec<Point3>,
    /// Point indices per cluster; together they partition `0..N`.
    pub members: Vec<Vec<usize>>,
    pub top_edges: Graph,
    /// Per-cluster graphs over local member indices.
    pub within_edges: Vec<Graph>,
}

impl ClusterHierarchy {
    pub fn k(&self) -> usize {
        self.centers.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphDrawConfig {
    pub clusters: usize,
    /// Oversize factor: clusters hold at most `ceil(alpha * N / K)` points.
    pub alpha: f64,
    /// Cells per side at both levels.
    pub grid: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for GraphDrawConfig {
    fn default() -> Self {
        Self {
            clusters: 32,
            alpha: 1.2,
            grid: 16,
            seed: 0,
            max_iters: 100,
        }
    }
}

impl GraphDrawConfig {
    pub fn image_side(&self) -> usize {
        self.grid * self.grid
    }

    /// Largest cloud whose clusters are guaranteed to fit a sub-grid.
    pub fn max_points(&self) -> usize {
        self.clusters * self.grid * self.grid
    }
}

/// Balanced clustering plus Delaunay graphs at both levels.
pub fn build_hierarchy(cloud: &PointCloud, cfg: &GraphDrawConfig) -> Result<ClusterHierarchy> {
    let mut h = balanced_kmeans(cloud, cfg.clusters, cfg.alpha, cfg.seed, cfg.max_iters)?;
    h.top_edges = if h.k() < 2 { Graph::empty(h.k()) } else { delaunay3(&h.centers)? };
    h.within_edges = h
        .members
        .par_iter()
        .map(|m| {
            if m.len() < 2 {
                Ok(Graph::empty(m.len()))
            } else {
                let pts: Vec<Point3> = m.iter().map(|&i| cloud.points[i]).collect();
                delaunay3(&pts)
            }
        })
        .collect::<Result<_>>()?;
    Ok(h)
}

/// Full graph-drawing mapper: cluster, triangulate, embed both levels and
/// paint the coordinate image.
pub fn graph_draw(cloud: &PointCloud, cfg: &GraphDrawConfig) -> Result<MappedImage> {
    if cloud.len() > cfg.max_points() {
        return Err(Error::TooManyPoints {
            max: cfg.max_points(),
            got: cloud.len(),
        });
    }
    let h = build_hierarchy(cloud, cfg)?;
    let top = grid_embed(&h.top_edges, &h.centers, cfg.grid)?;
    let within = h
        .members
        .par_iter()
        .zip(&h.within_edges)
        .map(|(m, g)| {
            let pts: Vec<Point3> = m.iter().map(|&i| cloud.points[i]).collect();
            grid_embed(g, &pts, cfg.grid)
        })
        .collect::<Result<Vec<_>>>()?;
    draw_image(cloud, &h, &top, &within)
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClusterHierarchy, Graph};
use crate::{Error, Point3, PointCloud, Result};

fn dist2(a: &Point3, b: &Point3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Cluster size cap `ceil(alpha * n / k)`. The small slack keeps products
/// like `1.2 * 80 / 32` from rounding up past an exact integer.
pub fn cluster_cap(n: usize, k: usize, alpha: f64) -> usize {
    ((alpha * n as f64 / k as f64) - 1e-9).ceil().max(1.0) as usize
}

fn nearest(p: &Point3, centers: &[Point3]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

fn means(points: &[Point3], assign: &[usize], old: &[Point3]) -> Vec<Point3> {
    let k = old.len();
    let mut sum = vec![[0.0; 3]; k];
    let mut count = vec![0usize; k];
    for (p, &a) in points.iter().zip(assign) {
        for d in 0..3 {
            sum[a][d] += p[d];
        }
        count[a] += 1;
    }
    (0..k)
        .map(|j| {
            if count[j] == 0 {
                old[j]
            } else {
                sum[j].map(|s| s / count[j] as f64)
            }
        })
        .collect()
}

/// Lloyd clustering from a farthest-point initialization, followed by
/// rebalancing: while a cluster exceeds [`cluster_cap`], its member farthest
/// from the center moves to the nearest center whose cluster is below the
/// cap. Centers are recomputed after balancing. Edge lists are left empty.
pub fn balanced_kmeans(
    cloud: &PointCloud,
    k: usize,
    alpha: f64,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterHierarchy> {
    let pts = &cloud.points;
    let n = pts.len();
    if k == 0 || n < k {
        return Err(Error::TooFewPoints { needed: k, got: n });
    }

    // farthest-point traversal from a seeded start
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..n);
    let mut centers = vec![pts[first]];
    let mut gap: Vec<f64> = pts.iter().map(|p| dist2(p, &pts[first])).collect();
    while centers.len() < k {
        let (next, _) = gap
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        let c = pts[next];
        centers.push(c);
        for (g, p) in gap.iter_mut().zip(pts) {
            *g = g.min(dist2(p, &c));
        }
    }

    let mut assign: Vec<usize> = pts.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..max_iters {
        centers = means(pts, &assign, &centers);
        let next: Vec<usize> = pts.iter().map(|p| nearest(p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }

    let cap = cluster_cap(n, k, alpha);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assign.iter().enumerate() {
        members[a].push(i);
    }
    while let Some(over) = (0..k).find(|&j| members[j].len() > cap) {
        let c = centers[over];
        let (pos, _) = members[over]
            .iter()
            .enumerate()
            .map(|(pos, &i)| (pos, dist2(&pts[i], &c)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let moved = members[over].swap_remove(pos);
        let target = (0..k)
            .filter(|&j| j != over && members[j].len() < cap)
            .min_by(|&a, &b| {
                dist2(&pts[moved], &centers[a]).total_cmp(&dist2(&pts[moved], &centers[b]))
            })
            .expect("k * cap >= n leaves room");
        members[target].push(moved);
    }
    for (j, m) in members.iter_mut().enumerate() {
        m.sort_unstable();
        for &i in m.iter() {
            assign[i] = j;
        }
    }
    let centers = means(pts, &assign, &centers);

    Ok(ClusterHierarchy {
        centers,
        members,
        top_edges: Graph::empty(k),
        within_edges: Vec::new(),
    })
}

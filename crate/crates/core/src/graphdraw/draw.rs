use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ClusterHierarchy, Graph, GridEmbedding};
use crate::project::write_point;
use crate::{Error, GradPath, MappedImage, PointCloud, Result};

/// Paint a two-level embedding: cluster `i` at top cell `(r, c)` owns the
/// pixel block starting at `(inner * r, inner * c)`; its member at inner
/// cell `(u, v)` writes encoded coordinates to `(inner * r + u, inner * c + v)`.
pub fn draw_image(
    cloud: &PointCloud,
    hierarchy: &ClusterHierarchy,
    top: &GridEmbedding,
    within: &[GridEmbedding],
) -> Result<MappedImage> {
    let k = hierarchy.k();
    let bad = |m: String| Err(Error::InconsistentEmbedding(m));
    if top.cells.len() != k || within.len() != k || hierarchy.members.len() != k {
        return bad(format!(
            "{k} clusters, {} top cells, {} sub-grids",
            top.cells.len(),
            within.len()
        ));
    }
    if !top.is_injective() {
        return bad("top-level assignment is not injective".into());
    }
    let inner = within.first().map_or(top.side, |w| w.side);
    let side = top.side * inner;
    let mut seen = vec![false; cloud.len()];
    for (i, (m, w)) in hierarchy.members.iter().zip(within).enumerate() {
        if w.side != inner || w.cells.len() != m.len() || !w.is_injective() {
            return bad(format!("sub-grid {i} does not match its cluster"));
        }
        for &p in m {
            if p >= cloud.len() || std::mem::replace(&mut seen[p], true) {
                return bad(format!("cluster {i} member {p} is out of range or repeated"));
            }
        }
    }
    if seen.iter().any(|&s| !s) {
        return bad("clusters do not cover every point".into());
    }

    let mut img = MappedImage::blank(side, side, 3, GradPath::CoordinateLeak);
    for (i, (m, w)) in hierarchy.members.iter().zip(within).enumerate() {
        let (r, c) = top.cells[i];
        for (&p, &(u, v)) in m.iter().zip(&w.cells) {
            let pixel = (inner * r + u) * side + inner * c + v;
            write_point(&mut img, pixel, p, cloud.points[p]);
        }
    }
    img.source = Some(cloud.fingerprint());
    Ok(img)
}

/// Dump both Delaunay levels as `u v` lines: `top.edges` over cluster ids,
/// `within.edges` over global point ids with a `# cluster i` header per block.
pub fn write_edge_lists(dir: impl AsRef<Path>, hierarchy: &ClusterHierarchy) -> Result<()> {
    let dir = dir.as_ref();
    let dump = |g: &Graph, map: &dyn Fn(usize) -> usize, out: &mut String| {
        for &(a, b) in &g.edges {
            let _ = writeln!(out, "{} {}", map(a), map(b));
        }
    };
    let mut top = String::new();
    dump(&hierarchy.top_edges, &|i| i, &mut top);
    let mut within = String::new();
    for (i, (g, m)) in hierarchy.within_edges.iter().zip(&hierarchy.members).enumerate() {
        let _ = writeln!(within, "# cluster {i}");
        dump(g, &|j| m[j], &mut within);
    }
    for (name, text) in [("top.edges", top), ("within.edges", within)] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{synth_shape, ShapeKind};
    use crate::graphdraw::{build_hierarchy, graph_draw, grid_embed, GraphDrawConfig};
    use crate::image::{decode_netpbm, encode_netpbm};

    #[test]
    fn every_point_gets_its_own_pixel() {
        let c = synth_shape(ShapeKind::Cylinder, 1024, 5).unwrap();
        let img = graph_draw(&c, &GraphDrawConfig::default()).unwrap();
        assert_eq!((img.height, img.width, img.channels), (256, 256, 3));
        assert_eq!(img.lit_pixels(), 1024);
        assert_eq!(img.leak_map.len(), 3 * 1024);
        assert_eq!(img.grad_path, GradPath::CoordinateLeak);
        // float values decode exactly, 8-bit within 1/255
        let bytes = encode_netpbm(&img);
        let (_, _, _, px) = decode_netpbm(&bytes).unwrap();
        for l in &img.leak_map {
            let t = c.points[l.point][l.channel as usize];
            let v = img.data[l.pixel * 3 + l.channel as usize];
            assert!((v * 2.0 - 1.0 - t).abs() < 1e-15);
            let q = px[l.pixel * 3 + l.channel as usize] as f64 / 255.0;
            assert!((q * 2.0 - 1.0 - t).abs() <= 2.0 / 255.0);
            assert!((q - v).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn single_point_cloud() {
        let c = crate::cloud::normalize_unit(&PointCloud::new(vec![[3.0, 1.0, 2.0]]));
        let cfg = GraphDrawConfig {
            clusters: 1,
            ..Default::default()
        };
        let img = graph_draw(&c, &cfg).unwrap();
        assert_eq!(img.lit_pixels(), 1);
        let lit: Vec<f64> = img.data.iter().copied().filter(|&v| v > 0.0).collect();
        assert_eq!(lit, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn lit_values_independent_of_cluster_labelling() {
        let c = synth_shape(ShapeKind::Cone, 512, 8).unwrap();
        let values = |seed| {
            let img = graph_draw(&c, &GraphDrawConfig { seed, ..Default::default() }).unwrap();
            let mut v: Vec<[u64; 3]> = img
                .data
                .chunks(3)
                .filter(|p| p.iter().any(|&x| x > 0.0))
                .map(|p| [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()])
                .collect();
            v.sort_unstable();
            v
        };
        let a = values(1);
        assert_eq!(a, values(2));
        assert_eq!(a, values(3));
    }

    #[test]
    fn inconsistent_embedding_rejected() {
        let c = synth_shape(ShapeKind::Sphere, 256, 1).unwrap();
        let cfg = GraphDrawConfig::default();
        let h = build_hierarchy(&c, &cfg).unwrap();
        let top = grid_embed(&h.top_edges, &h.centers, 16).unwrap();
        let mut within: Vec<GridEmbedding> = h
            .members
            .iter()
            .zip(&h.within_edges)
            .map(|(m, g)| {
                let p: Vec<_> = m.iter().map(|&i| c.points[i]).collect();
                grid_embed(g, &p, 16).unwrap()
            })
            .collect();
        assert!(draw_image(&c, &h, &top, &within).is_ok());
        within.pop();
        assert!(matches!(
            draw_image(&c, &h, &top, &within),
            Err(Error::InconsistentEmbedding(_))
        ));
    }

    #[test]
    fn oversized_cloud_rejected() {
        let c = PointCloud::new(vec![[0.0; 3]; 8193]);
        assert!(matches!(
            graph_draw(&c, &GraphDrawConfig::default()),
            Err(Error::TooManyPoints { .. })
        ));
    }

    #[test]
    fn edge_lists_written() {
        let dir = tempfile::tempdir().unwrap();
        let c = synth_shape(ShapeKind::Torus, 256, 1).unwrap();
        let h = build_hierarchy(&c, &GraphDrawConfig::default()).unwrap();
        write_edge_lists(dir.path(), &h).unwrap();
        let top = std::fs::read_to_string(dir.path().join("top.edges")).unwrap();
        assert_eq!(top.lines().count(), h.top_edges.edges.len());
    }
}

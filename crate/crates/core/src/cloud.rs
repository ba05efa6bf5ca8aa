//! Point clouds: OFF/XYZ ingestion, surface sampling, normalization,
//! training-time augmentation and a synthetic labeled-shape generator.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Point3, Result};

/// Triangle mesh in model units.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::Shape(format!(
                    "face {i} index out of range ({} vertices)",
                    vertices.len()
                )));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.faces[face].map(|i| self.vertices[i]);
        norm(cross(sub(b, a), sub(c, a))) * 0.5
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }
}

/// An `N x 3` point set with an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub label: Option<usize>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            label: None,
        }
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.points.len().max(1) as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        c.map(|v| v / n)
    }

    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(|&p| norm(p)).fold(0.0, f64::max)
    }

    /// Stable 64-bit digest of the coordinates (FNV-1a over the bit patterns).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in &self.points {
            for v in p {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Parse an ASCII OFF mesh.
pub fn load_off(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_off(&text)
}

/// Parse ASCII OFF text. Accepts the `OFF<nv> <nf> <ne>` single-line header
/// found in some ModelNet40 dumps.
pub fn parse_off(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::parse(hline, "missing OFF header"))?
        .trim();
    let (cline, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| Error::parse(hline + 1, "missing element counts"))?
    } else {
        (hline, rest)
    };
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(cline, format!("malformed counts `{counts}`")))?;
    if counts.len() < 2 {
        return Err(Error::parse(cline, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(cline, "unexpected end of file in vertex list"))?;
        let v: Vec<f64> = parse_fields(ln, l)?;
        if v.len() < 3 {
            return Err(Error::parse(ln, "vertex needs 3 coordinates"));
        }
        vertices.push([v[0], v[1], v[2]]);
    }

    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(cline, "unexpected end of file in face list"))?;
        let f: Vec<usize> = parse_fields(ln, l)?;
        let k = *f.first().ok_or_else(|| Error::parse(ln, "empty face"))?;
        if k < 3 || f.len() < k + 1 {
            return Err(Error::parse(ln, "face needs at least 3 vertex indices"));
        }
        let idx = &f[1..=k];
        if idx.iter().any(|&i| i >= nv) {
            return Err(Error::parse(ln, "face index out of range"));
        }
        // fan-triangulate polygons
        for j in 1..k - 1 {
            faces.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    Ok(Mesh { vertices, faces })
}

fn parse_fields<T: FromStr>(line: usize, text: &str) -> Result<Vec<T>> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| Error::parse(line, format!("non-numeric field `{t}`")))
        })
        .collect()
}

/// Read a plain-text cloud, one `x y z` triple per line.
pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = parse_fields(i + 1, l)?;
        if v.len() != 3 {
            return Err(Error::parse(i + 1, "expected `x y z`"));
        }
        points.push([v[0], v[1], v[2]]);
    }
    Ok(PointCloud::new(points))
}

pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    use std::fmt::Write as _;
    let path = path.as_ref();
    let mut out = String::with_capacity(cloud.len() * 64);
    for p in &cloud.points {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Sample `n` points uniformly from the mesh surface.
pub fn sample_surface(mesh: &Mesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroArea);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let t = rng.gen::<f64>() * total;
            let f = cumulative
                .partition_point(|&c| c <= t)
                .min(mesh.faces.len() - 1);
            let [a, b, c] = mesh.faces[f].map(|i| mesh.vertices[i]);
            let (r1, r2) = (rng.gen::<f64>().sqrt(), rng.gen::<f64>());
            let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
            [0, 1, 2].map(|k| wa * a[k] + wb * b[k] + wc * c[k])
        })
        .collect();
    Ok(PointCloud::new(points))
}

/// Center on the centroid and scale to unit max norm. A cloud whose points
/// all coincide maps to the origin.
pub fn normalize_unit(cloud: &PointCloud) -> PointCloud {
    let c = cloud.centroid();
    let mut points: Vec<Point3> = cloud.points.iter().map(|&p| sub(p, c)).collect();
    let m = points.iter().map(|&p| norm(p)).fold(0.0, f64::max);
    if m > 0.0 {
        for p in &mut points {
            *p = p.map(|v| v / m);
        }
    } else {
        points.iter_mut().for_each(|p| *p = [0.0; 3]);
    }
    PointCloud {
        points,
        label: cloud.label,
    }
}

/// Training-time augmentation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub max_dropout: f64,
    pub scale_range: [f64; 2],
    pub max_shift: f64,
    /// Random rotation about the up (z) axis is applied only when enabled.
    pub rotate: bool,
    pub max_rotation: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_dropout: 0.875,
            scale_range: [0.8, 1.0],
            max_shift: 0.1,
            rotate: false,
            max_rotation: PI,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// A configuration under which [`augment`] is the identity map.
    pub fn identity() -> Self {
        Self {
            max_dropout: 0.0,
            scale_range: [1.0, 1.0],
            max_shift: 0.0,
            rotate: false,
            max_rotation: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Random rotation (about z), point dropout, scale and shift. The point
/// count is preserved: dropped points are overwritten with the first
/// surviving point.
pub fn augment(cloud: &PointCloud, cfg: &AugmentConfig) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut points = cloud.points.clone();
    let n = points.len();

    if cfg.rotate && cfg.max_rotation > 0.0 {
        let theta = rng.gen_range(-cfg.max_rotation..=cfg.max_rotation);
        let (s, c) = theta.sin_cos();
        for p in &mut points {
            *p = [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]];
        }
    }

    if cfg.max_dropout > 0.0 && n > 1 {
        let ratio = rng.gen::<f64>() * cfg.max_dropout.min(1.0);
        let n_drop = ((ratio * n as f64).floor() as usize).min(n - 1);
        if n_drop > 0 {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut dropped = vec![false; n];
            for &i in &order[..n_drop] {
                dropped[i] = true;
            }
            let keep = dropped.iter().position(|&d| !d).expect("one point survives");
            let anchor = points[keep];
            for (p, d) in points.iter_mut().zip(&dropped) {
                if *d {
                    *p = anchor;
                }
            }
        }
    }

    let [lo, hi] = cfg.scale_range;
    if lo != 1.0 || hi != 1.0 {
        let s = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        for p in &mut points {
            *p = p.map(|v| v * s);
        }
    }

    if cfg.max_shift > 0.0 {
        let shift: Point3 = [0; 3].map(|_| rng.gen_range(-cfg.max_shift..=cfg.max_shift));
        for p in &mut points {
            for k in 0..3 {
                p[k] += shift[k];
            }
        }
    }

    PointCloud {
        points,
        label: cloud.label,
    }
}

/// Primitive shapes of the synthetic dataset, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Sphere,
    Cube,
    Cylinder,
    Cone,
    Torus,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Sphere,
        ShapeKind::Cube,
        ShapeKind::Cylinder,
        ShapeKind::Cone,
        ShapeKind::Torus,
    ];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cube => "cube",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
            ShapeKind::Torus => "torus",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownShape(s.to_string()))
    }
}

/// Minimum point count accepted by [`synth_shape`].
pub const MIN_SYNTH_POINTS: usize = 64;

/// Sample `n` points uniformly from the surface of a primitive. Shapes are
/// built centered on their bounding box with bounding radius 1, so the
/// unit-ball normalization is exact rather than estimated from the samples.
/// Cylinder and cone axes run along y; the torus axis is z.
pub fn synth_shape(kind: ShapeKind, n: usize, seed: u64) -> Result<PointCloud> {
    if n < MIN_SYNTH_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_SYNTH_POINTS,
            got: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((kind.label() as u64 + 1) << 56));
    let points = (0..n).map(|_| sample_shape(kind, &mut rng)).collect();
    Ok(PointCloud::new(points).with_label(kind.label()))
}

/// [`synth_shape`] from a kind name.
pub fn synth_shape_named(kind: &str, n: usize, seed: u64) -> Result<PointCloud> {
    synth_shape(kind.parse()?, n, seed)
}

const CYL_RADIUS: f64 = 0.5;
const CYL_HALF_HEIGHT: f64 = 0.9;
const CONE_RADIUS: f64 = 0.7;
const CONE_HALF_HEIGHT: f64 = 0.7;
const TORUS_MAJOR: f64 = 0.7;
const TORUS_MINOR: f64 = 0.3;

fn sample_shape(kind: ShapeKind, rng: &mut ChaCha8Rng) -> Point3 {
    match kind {
        ShapeKind::Sphere => loop {
            let v: Point3 = [0; 3].map(|_| rng.gen_range(-1.0..1.0));
            let r = norm(v);
            if r > 1e-3 && r <= 1.0 {
                break v.map(|c| c / r);
            }
        },
        ShapeKind::Cube => {
            let h = 1.0 / 3f64.sqrt();
            let face = rng.gen_range(0..6);
            let (a, b) = (rng.gen_range(-h..=h), rng.gen_range(-h..=h));
            let s = if face % 2 == 0 { h } else { -h };
            match face / 2 {
                0 => [s, a, b],
                1 => [a, s, b],
                _ => [a, b, s],
            }
        }
        ShapeKind::Cylinder => {
            let scale = 1.0 / CYL_RADIUS.hypot(CYL_HALF_HEIGHT);
            let (r, h) = (CYL_RADIUS, CYL_HALF_HEIGHT);
            let lateral = 2.0 * PI * r * 2.0 * h;
            let caps = 2.0 * PI * r * r;
            let phi = rng.gen_range(0.0..2.0 * PI);
            let p = if rng.gen::<f64>() * (lateral + caps) < lateral {
                [r * phi.cos(), rng.gen_range(-h..=h), r * phi.sin()]
            } else {
                let rho = r * rng.gen::<f64>().sqrt();
                let y = if rng.gen::<bool>() { h } else { -h };
                [rho * phi.cos(), y, rho * phi.sin()]
            };
            p.map(|c| c * scale)
        }
        ShapeKind::Cone => {
            let (r, h) = (CONE_RADIUS, CONE_HALF_HEIGHT);
            let scale = 1.0 / r.hypot(h);
            let slant = r.hypot(2.0 * h);
            let lateral = PI * r * slant;
            let base = PI * r * r;
            let phi = rng.gen_range(0.0..2.0 * PI);
            let p = if rng.gen::<f64>() * (lateral + base) < lateral {
                // fraction of the way from apex to base rim
                let s = rng.gen::<f64>().sqrt();
                [r * s * phi.cos(), h - 2.0 * h * s, r * s * phi.sin()]
            } else {
                let rho = r * rng.gen::<f64>().sqrt();
                [rho * phi.cos(), -h, rho * phi.sin()]
            };
            p.map(|c| c * scale)
        }
        ShapeKind::Torus => {
            let (big, small) = (TORUS_MAJOR, TORUS_MINOR);
            let theta = loop {
                let t = rng.gen_range(0.0..2.0 * PI);
                if rng.gen::<f64>() * (big + small) <= big + small * t.cos() {
                    break t;
                }
            };
            let phi = rng.gen_range(0.0..2.0 * PI);
            let ring = big + small * theta.cos();
            [ring * phi.cos(), ring * phi.sin(), small * theta.sin()]
        }
    }
}

/// One entry of a synthetic dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: ShapeKind,
    pub seed: u64,
    pub n: usize,
    pub label: usize,
}

/// Deterministic manifest: `per_class` samples of every kind, interleaved
/// by class. Seeds are `base_seed ^ sample_index`.
pub fn synth_manifest(per_class: usize, n: usize, base_seed: u64) -> Vec<ManifestEntry> {
    (0..per_class * ShapeKind::ALL.len())
        .map(|i| {
            let kind = ShapeKind::ALL[i % ShapeKind::ALL.len()];
            ManifestEntry {
                kind,
                seed: base_seed ^ i as u64,
                n,
                label: kind.label(),
            }
        })
        .collect()
}

pub fn realize_manifest(entries: &[ManifestEntry]) -> Result<Vec<PointCloud>> {
    entries
        .iter()
        .map(|e| Ok(synth_shape(e.kind, e.n, e.seed)?.with_label(e.label)))
        .collect()
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(entries)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SQUARE: &str = "OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n";

    #[test]
    fn off_square() {
        let m = parse_off(SQUARE).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.faces.len(), 2);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_single_line_header() {
        let text = SQUARE.replacen("OFF\n4 2 0", "OFF4 2 0", 1);
        assert_eq!(parse_off(&text).unwrap(), parse_off(SQUARE).unwrap());
        let text = SQUARE.replacen("OFF\n4 2 0", "OFF 4 2 0", 1);
        assert_eq!(parse_off(&text).unwrap(), parse_off(SQUARE).unwrap());
    }

    #[test]
    fn off_errors_carry_line_numbers() {
        let bad = SQUARE.replace("3 0 2 3", "3 0 2 9");
        match parse_off(&bad) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 8);
                assert!(msg.contains("face index out of range"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_off("OFF\nfour 2 0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_off(&SQUARE.replace("1 1 0", "1 x 0")),
            Err(Error::Parse { line: 5, .. })
        ));
    }

    #[test]
    fn off_quads_are_fanned() {
        let m = parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn triangle_samples_lie_on_plane() {
        let m = Mesh::new(
            vec![[0.3, -1.0, 2.0], [1.5, 0.2, -0.7], [-0.4, 0.9, 0.1]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let c = sample_surface(&m, 100, 7).unwrap();
        assert_eq!(c.len(), 100);
        let [a, b, cc] = [m.vertices[0], m.vertices[1], m.vertices[2]];
        let nrm = cross(sub(b, a), sub(cc, a));
        let nrm = nrm.map(|v| v / norm(nrm));
        for p in &c.points {
            assert!(dot(nrm, sub(*p, a)).abs() < 1e-7);
        }
    }

    fn unit_cube() -> Mesh {
        let mut v = Vec::new();
        for i in 0..8 {
            v.push([(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]);
        }
        let f = vec![
            [0, 1, 3], [0, 3, 2], // z=0
            [4, 5, 7], [4, 7, 6], // z=1
            [0, 1, 5], [0, 5, 4], // y=0
            [2, 3, 7], [2, 7, 6], // y=1
            [0, 2, 6], [0, 6, 4], // x=0
            [1, 3, 7], [1, 7, 5], // x=1
        ];
        Mesh::new(v, f).unwrap()
    }

    #[test]
    fn cube_faces_sampled_by_area() {
        let c = sample_surface(&unit_cube(), 6000, 11).unwrap();
        let mut counts = [0usize; 6];
        for p in &c.points {
            let face = (0..3)
                .flat_map(|k| [(k, 0.0), (k, 1.0)])
                .position(|(k, v)| (p[k] - v).abs() < 1e-12)
                .unwrap();
            counts[face] += 1;
        }
        let sigma = (6000.0 * (1.0 / 6.0) * (5.0 / 6.0f64)).sqrt();
        for &k in &counts {
            assert!((k as f64 - 1000.0).abs() < 4.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn degenerate_mesh_rejected() {
        let m = Mesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            vec![[0, 1, 2], [0, 0, 1]],
        )
        .unwrap();
        assert!(matches!(sample_surface(&m, 10, 0), Err(Error::ZeroArea)));
    }

    #[test]
    fn normalize_examples() {
        let c = PointCloud::new(vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        assert_eq!(normalize_unit(&c).points, c.points);
        let c = PointCloud::new(vec![[2.0, 2.0, 2.0]]);
        assert_eq!(normalize_unit(&c).points, vec![[0.0; 3]]);
    }

    #[test]
    fn identity_augment_is_bitwise_identity() {
        let c = synth_shape(ShapeKind::Torus, 256, 3).unwrap();
        let out = augment(&c, &AugmentConfig::identity().with_seed(99));
        assert_eq!(out, c);
    }

    #[test]
    fn max_dropout_keeps_an_eighth() {
        let c = synth_shape(ShapeKind::Cube, 1000, 3).unwrap();
        let cfg = AugmentConfig {
            max_dropout: 0.875,
            ..AugmentConfig::identity()
        };
        for seed in 0..50 {
            let out = augment(&c, &cfg.with_seed(seed));
            assert_eq!(out.len(), c.len());
            let survivors = out
                .points
                .iter()
                .zip(&c.points)
                .filter(|(a, b)| a == b)
                .count();
            assert!(survivors >= 125, "seed {seed}: {survivors}");
        }
    }

    #[test]
    fn augment_deterministic_and_bounded() {
        let c = synth_shape(ShapeKind::Sphere, 256, 3).unwrap();
        let cfg = AugmentConfig {
            rotate: true,
            ..AugmentConfig::default()
        }
        .with_seed(5);
        let a = augment(&c, &cfg);
        assert_eq!(a, augment(&c, &cfg));
        assert!(a.max_norm() <= 1.0 + 0.1 * 3f64.sqrt() + 1e-12);
    }

    #[test]
    fn sphere_points_on_unit_sphere() {
        let c = synth_shape(ShapeKind::Sphere, 1024, 1).unwrap();
        assert!(c.points.iter().all(|&p| (norm(p) - 1.0).abs() < 1e-6));
    }

    #[test]
    fn cube_points_on_faces() {
        let c = synth_shape(ShapeKind::Cube, 1024, 1).unwrap();
        let ext = c
            .points
            .iter()
            .flat_map(|p| p.iter().map(|v| v.abs()))
            .fold(0.0, f64::max);
        for p in &c.points {
            assert!(p.iter().any(|v| (v.abs() - ext).abs() < 1e-6));
        }
    }

    #[test]
    fn synth_shapes_bounded_and_distinct() {
        let a = synth_shape(ShapeKind::Cone, 256, 4).unwrap();
        let b = synth_shape(ShapeKind::Cylinder, 256, 4).unwrap();
        assert_ne!(a.label, b.label);
        assert_ne!(a.points, b.points);
        for k in ShapeKind::ALL {
            let c = synth_shape(k, 512, 9).unwrap();
            assert!(c.max_norm() <= 1.0 + 1e-12, "{k}");
        }
        assert!(matches!(
            synth_shape_named("pyramid", 256, 0),
            Err(Error::UnknownShape(_))
        ));
        assert!(synth_shape(ShapeKind::Sphere, 10, 0).is_err());
    }

    #[test]
    fn xyz_roundtrip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.xyz");
        let c = synth_shape(ShapeKind::Cone, 100, 2).unwrap();
        write_xyz(&p, &c).unwrap();
        assert_eq!(read_xyz(&p).unwrap().points, c.points);
    }

    proptest! {
        #[test]
        fn normalize_invariants(pts in prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 2..128)) {
            let c = PointCloud::new(pts);
            let n = normalize_unit(&c);
            prop_assert!(norm(n.centroid()) < 1e-9);
            let m = n.max_norm();
            prop_assert!(m == 0.0 || (m - 1.0).abs() < 1e-9);
            let twice = normalize_unit(&n);
            for (a, b) in twice.points.iter().zip(&n.points) {
                for k in 0..3 {
                    prop_assert!((a[k] - b[k]).abs() < 1e-9);
                }
            }
        }
    }
}

//! Delaunay edge graphs by Bowyer-Watson insertion with exact predicates,
//! plus a brute-force empty-circumsphere oracle.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust::{Coord, Coord3D};

use super::Graph;
use crate::cloud::{cross, dot, norm, sub};
use crate::{Error, Point3, Result};

#[inline]
fn c3(p: &Point3) -> Coord3D<f64> {
    Coord3D {
        x: p[0],
        y: p[1],
        z: p[2],
    }
}

#[inline]
/// `orient3d` behind a static error bound, as for [`insphere`].
fn orient3d(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    let [adx, ady, adz] = [a[0] - d[0], a[1] - d[1], a[2] - d[2]];
    let [bdx, bdy, bdz] = [b[0] - d[0], b[1] - d[1], b[2] - d[2]];
    let [cdx, cdy, cdz] = [c[0] - d[0], c[1] - d[1], c[2] - d[2]];
    let (bdxcdy, cdxbdy) = (bdx * cdy, cdx * bdy);
    let (cdxady, adxcdy) = (cdx * ady, adx * cdy);
    let (adxbdy, bdxady) = (adx * bdy, bdx * ady);
    let det = adz * (bdxcdy - cdxbdy) + bdz * (cdxady - adxcdy) + cdz * (adxbdy - bdxady);
    let permanent = (bdxcdy.abs() + cdxbdy.abs()) * adz.abs()
        + (cdxady.abs() + adxcdy.abs()) * bdz.abs()
        + (adxbdy.abs() + bdxady.abs()) * cdz.abs();
    const EPS: f64 = f64::EPSILON * 0.5;
    let bound = (7.0 + 56.0 * EPS) * EPS * permanent;
    if det > bound || -det > bound {
        det
    } else {
        robust::orient3d(c3(a), c3(b), c3(c), c3(d))
    }
}

/// `insphere` with Shewchuk's static error bound tried first; only
/// near-degenerate cases reach the exact (and allocation-heavy) predicate.
fn insphere(a: &Point3, b: &Point3, c: &Point3, d: &Point3, e: &Point3) -> f64 {
    let [aex, aey, aez] = [a[0] - e[0], a[1] - e[1], a[2] - e[2]];
    let [bex, bey, bez] = [b[0] - e[0], b[1] - e[1], b[2] - e[2]];
    let [cex, cey, cez] = [c[0] - e[0], c[1] - e[1], c[2] - e[2]];
    let [dex, dey, dez] = [d[0] - e[0], d[1] - e[1], d[2] - e[2]];
    let (aexbey, bexaey) = (aex * bey, bex * aey);
    let (bexcey, cexbey) = (bex * cey, cex * bey);
    let (cexdey, dexcey) = (cex * dey, dex * cey);
    let (dexaey, aexdey) = (dex * aey, aex * dey);
    let (aexcey, cexaey) = (aex * cey, cex * aey);
    let (bexdey, dexbey) = (bex * dey, dex * bey);
    let ab = aexbey - bexaey;
    let bc = bexcey - cexbey;
    let cd = cexdey - dexcey;
    let da = dexaey - aexdey;
    let ac = aexcey - cexaey;
    let bd = bexdey - dexbey;
    let abc = aez * bc - bez * ac + cez * ab;
    let bcd = bez * cd - cez * bd + dez * bc;
    let cda = cez * da + dez * ac + aez * cd;
    let dab = dez * ab + aez * bd + bez * da;
    let alift = aex * aex + aey * aey + aez * aez;
    let blift = bex * bex + bey * bey + bez * bez;
    let clift = cex * cex + cey * cey + cez * cez;
    let dlift = dex * dex + dey * dey + dez * dez;
    let det = (dlift * abc - clift * dab) + (blift * cda - alift * bcd);

    let (aez, bez, cez, dez) = (aez.abs(), bez.abs(), cez.abs(), dez.abs());
    let ab_p = aexbey.abs() + bexaey.abs();
    let bc_p = bexcey.abs() + cexbey.abs();
    let cd_p = cexdey.abs() + dexcey.abs();
    let da_p = dexaey.abs() + aexdey.abs();
    let ac_p = aexcey.abs() + cexaey.abs();
    let bd_p = bexdey.abs() + dexbey.abs();
    let permanent = (cd_p * bez + bd_p * cez + bc_p * dez) * alift
        + (da_p * cez + ac_p * dez + cd_p * aez) * blift
        + (ab_p * dez + bd_p * aez + da_p * bez) * clift
        + (bc_p * aez + ac_p * bez + ab_p * cez) * dlift;
    const EPS: f64 = f64::EPSILON * 0.5;
    let bound = (16.0 + 224.0 * EPS) * EPS * permanent;
    if det > bound || -det > bound {
        det
    } else {
        robust::insphere(c3(a), c3(b), c3(c), c3(d), c3(e))
    }
}

fn c2(p: &[f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

/// Edge graph of the Delaunay tetrahedralization of `points`.
///
/// Two points give one edge and three give a triangle. Exactly coplanar or
/// collinear inputs fall back to a 2D triangulation in their plane or a path
/// along their line. Coincident points are triangulated once and the copies
/// are attached to their representative. If insertion fails on a degenerate
/// configuration the points are jittered by 1e-9 (seeded) and retried.
pub fn delaunay3(points: &[Point3]) -> Result<Graph> {
    let m = points.len();
    if m < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: m });
    }

    // collapse exact duplicates
    let mut first_of: HashMap<[u64; 3], usize> = HashMap::new();
    let mut uniq: Vec<usize> = Vec::new();
    let mut rep = vec![0usize; m];
    for (i, p) in points.iter().enumerate() {
        let key = p.map(|v| if v == 0.0 { 0 } else { v.to_bits() });
        let u = *first_of.entry(key).or_insert_with(|| {
            uniq.push(i);
            uniq.len() - 1
        });
        rep[i] = u;
    }
    let upts: Vec<Point3> = uniq.iter().map(|&i| points[i]).collect();

    let local = triangulate_unique(&upts)?;
    let mut pairs: Vec<(usize, usize)> = local
        .into_iter()
        .map(|(a, b)| (uniq[a], uniq[b]))
        .collect();
    for i in 0..m {
        if uniq[rep[i]] != i {
            pairs.push((i, uniq[rep[i]]));
        }
    }
    Ok(Graph::from_pairs(m, pairs))
}

fn triangulate_unique(pts: &[Point3]) -> Result<Vec<(usize, usize)>> {
    let u = pts.len();
    match u {
        1 => return Ok(Vec::new()),
        2 => return Ok(vec![(0, 1)]),
        3 => return Ok(vec![(0, 1), (1, 2), (0, 2)]),
        _ => {}
    }
    match affine_frame(pts) {
        Frame::Line(dir) => {
            let mut order: Vec<usize> = (0..u).collect();
            order.sort_by(|&a, &b| dot(pts[a], dir).total_cmp(&dot(pts[b], dir)));
            return Ok(order.windows(2).map(|w| (w[0], w[1])).collect());
        }
        Frame::Plane(e1, e2) => {
            let flat: Vec<[f64; 2]> = pts.iter().map(|&p| [dot(p, e1), dot(p, e2)]).collect();
            if let Some(edges) = bowyer_watson_2d(&flat) {
                return Ok(edges);
            }
        }
        Frame::Space => {
            if let Some(edges) = bowyer_watson_3d(pts) {
                return Ok(edges);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d1a7 ^ u as u64);
    for _ in 0..8 {
        let jittered: Vec<Point3> = pts
            .iter()
            .map(|p| p.map(|v| v + rng.gen_range(-1e-9..1e-9)))
            .collect();
        if let Some(edges) = bowyer_watson_3d(&jittered) {
            return Ok(edges);
        }
    }
    Err(Error::Shape("delaunay insertion failed after jitter".into()))
}

enum Frame {
    Line(Point3),
    Plane(Point3, Point3),
    Space,
}

/// Exact dimension test: collinear, coplanar, or full-dimensional.
fn affine_frame(pts: &[Point3]) -> Frame {
    let a = pts[0];
    let far = |f: &dyn Fn(&Point3) -> f64| {
        (0..pts.len())
            .max_by(|&i, &j| f(&pts[i]).total_cmp(&f(&pts[j])))
            .unwrap()
    };
    let b = pts[far(&|p| norm(sub(*p, a)))];
    let ab = sub(b, a);
    let c = pts[far(&|p| norm(cross(ab, sub(*p, a))))];
    let n = cross(ab, sub(c, a));
    if norm(n) == 0.0 {
        return Frame::Line(ab.map(|v| v / norm(ab)));
    }
    let coplanar = pts
        .iter()
        .all(|p| robust::orient3d(c3(&a), c3(&b), c3(&c), c3(p)) == 0.0);
    if coplanar {
        let e1 = ab.map(|v| v / norm(ab));
        let e2 = cross(n, e1);
        let e2 = e2.map(|v| v / norm(e2));
        Frame::Plane(e1, e2)
    } else {
        Frame::Space
    }
}

fn bbox(pts: impl Iterator<Item = Vec<f64>>, dim: usize) -> (Vec<f64>, f64) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in pts {
        for d in 0..dim {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let center = (0..dim).map(|d| 0.5 * (lo[d] + hi[d])).collect();
    let extent = (0..dim).map(|d| hi[d] - lo[d]).fold(0.0, f64::max).max(1e-12);
    (center, extent)
}

/// Super-simplex scale relative to the point extent. Predicates are exact,
/// so a very large simplex costs nothing in accuracy.
const SUPER_SCALE: f64 = 1e7;

const NONE: usize = usize::MAX;

/// Incremental insertion over a triangulation closed by ghost tetrahedra,
/// each joining a hull face to a symbolic vertex at infinity. Points are
/// located by a visibility walk and cavities grown breadth-first over face
/// neighbours. A ghost conflicts with `q` when `q` lies strictly beyond its
/// hull face; when `q` is coplanar with that face it defers to the finite
/// tetrahedron on the other side.
fn bowyer_watson_3d(pts: &[Point3]) -> Option<Vec<(usize, usize)>> {
    let n = pts.len();
    let inf = n;
    let orient = |t: &[usize; 4]| -> f64 {
        debug_assert!(!t.contains(&inf));
        orient3d(&pts[t[0]], &pts[t[1]], &pts[t[2]], &pts[t[3]])
    };

    // a first non-degenerate tetrahedron
    let i0 = 0;
    let i1 = 1;
    let i2 = (2..n).find(|&k| norm(cross(sub(pts[i1], pts[i0]), sub(pts[k], pts[i0]))) > 0.0)?;
    let i3 = (2..n).find(|&k| k != i2 && orient(&[i0, i1, i2, k]) != 0.0)?;
    let mut first = [i0, i1, i2, i3];
    if orient(&first) < 0.0 {
        first.swap(0, 1);
    }

    let mut tets: Vec<[usize; 4]> = vec![first];
    let mut nb: Vec<[usize; 4]> = vec![[NONE; 4]];
    let mut alive = vec![true];
    let mut mark = vec![0usize];
    let mut open_edges: Vec<((usize, usize), usize, usize)> = Vec::new();

    // Register tet `id`, whose faces through `apex` still need partners.
    let link = |id: usize,
                    t: &[usize; 4],
                    apex: usize,
                    nb: &mut Vec<[usize; 4]>,
                    open: &mut Vec<((usize, usize), usize, usize)>| {
        let a = t.iter().position(|&v| v == apex).expect("apex in tet");
        for j in (0..4).filter(|&j| j != a) {
            let mut e = [0usize; 2];
            let mut m = 0;
            for (v, &vert) in t.iter().enumerate() {
                if v != a && v != j {
                    e[m] = vert;
                    m += 1;
                }
            }
            let key = (e[0].min(e[1]), e[0].max(e[1]));
            match open.iter().position(|o| o.0 == key) {
                Some(k) => {
                    let (_, other, oj) = open.swap_remove(k);
                    nb[id][j] = other;
                    nb[other][oj] = id;
                }
                None => open.push((key, id, j)),
            }
        }
    };

    for i in 0..4 {
        let mut g = first;
        g[i] = inf;
        // flip so "positive" points away from the hull
        let (a, b) = match i {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        g.swap(a, b);
        let id = tets.len();
        tets.push(g);
        nb.push([NONE; 4]);
        alive.push(true);
        mark.push(0);
        nb[id][g.iter().position(|&v| v == inf).unwrap()] = 0;
        nb[0][i] = id;
        link(id, &g, inf, &mut nb, &mut open_edges);
    }
    if !open_edges.is_empty() {
        return None;
    }

    let mut last = 0usize;
    for p in (0..n).filter(|&k| !first.contains(&k)) {
        let stamp = p + 1;
        let finite_conflict = |t: &[usize; 4]| insphere(&pts[t[0]], &pts[t[1]], &pts[t[2]], &pts[t[3]], &pts[p]) > 0.0;
        let conflict = |t: usize, tets: &[[usize; 4]], nb: &[[usize; 4]]| -> bool {
            let tt = &tets[t];
            match tt.iter().position(|&v| v == inf) {
                None => finite_conflict(tt),
                Some(k) => {
                    let mut probe = *tt;
                    probe[k] = p;
                    let o = orient(&probe);
                    o > 0.0 || (o == 0.0 && finite_conflict(&tets[nb[t][k]]))
                }
            }
        };

        // visibility walk through finite tetrahedra
        let mut t = last;
        let mut steps = 0;
        'walk: loop {
            steps += 1;
            if steps > 4 * tets.len() + 16 {
                return None;
            }
            if tets[t].contains(&inf) {
                break;
            }
            for i in 0..4 {
                let mut probe = tets[t];
                probe[i] = p;
                if orient(&probe) < 0.0 {
                    t = nb[t][i];
                    continue 'walk;
                }
            }
            break;
        }
        if !conflict(t, &tets, &nb) {
            return None;
        }

        let mut cavity = vec![t];
        mark[t] = stamp;
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        let mut k = 0;
        while k < cavity.len() {
            let c = cavity[k];
            k += 1;
            for i in 0..4 {
                let o = nb[c][i];
                if mark[o] == stamp {
                    continue;
                }
                if conflict(o, &tets, &nb) {
                    mark[o] = stamp;
                    cavity.push(o);
                } else {
                    boundary.push((c, i));
                }
            }
        }

        for &(c, i) in &boundary {
            let mut nt = tets[c];
            nt[i] = p;
            if !nt.contains(&inf) && orient(&nt) <= 0.0 {
                return None;
            }
            let id = tets.len();
            let outer = nb[c][i];
            tets.push(nt);
            let mut links = [NONE; 4];
            links[i] = outer;
            nb.push(links);
            alive.push(true);
            mark.push(0);
            let back = nb[outer].iter().position(|&x| x == c)?;
            nb[outer][back] = id;
            link(id, &nt, p, &mut nb, &mut open_edges);
            if !nt.contains(&inf) {
                last = id;
            }
        }
        if !open_edges.is_empty() {
            return None;
        }
        for &c in &cavity {
            alive[c] = false;
        }
    }

    let mut edges = Vec::new();
    let mut touched = vec![false; n];
    for (t, _) in tets.iter().zip(&alive).filter(|(t, &a)| a && !t.contains(&inf)) {
        for i in 0..4 {
            touched[t[i]] = true;
            for j in i + 1..4 {
                edges.push((t[i], t[j]));
            }
        }
    }
    touched.iter().all(|&b| b).then_some(edges)
}

fn bowyer_watson_2d(input: &[[f64; 2]]) -> Option<Vec<(usize, usize)>> {
    let n = input.len();
    let (center, extent) = bbox(input.iter().map(|p| p.to_vec()), 2);
    let s = extent * SUPER_SCALE;
    let mut pts = input.to_vec();
    pts.push([center[0] - 3.0 * s, center[1] - 3.0 * s]);
    pts.push([center[0] + 3.0 * s, center[1] - 3.0 * s]);
    pts.push([center[0], center[1] + 3.0 * s]);
    let orient = |t: &[usize; 3]| robust::orient2d(c2(&pts[t[0]]), c2(&pts[t[1]]), c2(&pts[t[2]]));
    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];

    for p in 0..n {
        let q = c2(&pts[p]);
        let mut edges: HashMap<[usize; 2], usize> = HashMap::new();
        let mut keep = Vec::with_capacity(tris.len() + 8);
        for t in tris.drain(..) {
            if robust::incircle(c2(&pts[t[0]]), c2(&pts[t[1]]), c2(&pts[t[2]]), q) > 0.0 {
                for e in [[t[0], t[1]], [t[1], t[2]], [t[0], t[2]]] {
                    let mut key = e;
                    key.sort_unstable();
                    *edges.entry(key).or_insert(0) += 1;
                }
            } else {
                keep.push(t);
            }
        }
        if edges.is_empty() {
            return None;
        }
        for (e, count) in edges {
            if count != 1 {
                continue;
            }
            let mut t = [e[0], e[1], p];
            let o = orient(&t);
            if o == 0.0 {
                return None;
            }
            if o < 0.0 {
                t.swap(0, 1);
            }
            keep.push(t);
        }
        tris = keep;
    }

    let mut out = Vec::new();
    let mut touched = vec![false; n];
    for t in tris.iter().filter(|t| t.iter().all(|&v| v < n)) {
        for i in 0..3 {
            touched[t[i]] = true;
            for j in i + 1..3 {
                out.push((t[i], t[j]));
            }
        }
    }
    touched.iter().all(|&b| b).then_some(out)
}

/// Brute-force Delaunay edges: every 4-subset whose circumsphere strictly
/// contains no other point contributes its six edges. Subsets whose
/// circumsphere is undefined (coplanar) are skipped. Intended for
/// general-position inputs of at most ~40 points.
pub fn delaunay_oracle(points: &[Point3]) -> Graph {
    let m = points.len();
    let mut pairs = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                for d in c + 1..m {
                    let Some((center, r2)) =
                        circumsphere(points[a], points[b], points[c], points[d])
                    else {
                        continue;
                    };
                    let empty = (0..m).filter(|&e| e != a && e != b && e != c && e != d).all(|e| {
                        let v = sub(points[e], center);
                        dot(v, v) >= r2 * (1.0 - 1e-10)
                    });
                    if empty {
                        pairs.extend([(a, b), (a, c), (a, d), (b, c), (b, d), (c, d)]);
                    }
                }
            }
        }
    }
    Graph::from_pairs(m, pairs)
}

/// Circumcenter and squared radius by Cramer's rule on the perpendicular
/// bisector system.
fn circumsphere(a: Point3, b: Point3, c: Point3, d: Point3) -> Option<(Point3, f64)> {
    let (u, v, w) = (sub(b, a), sub(c, a), sub(d, a));
    let det = dot(u, cross(v, w));
    let scale = norm(u) * norm(v) * norm(w);
    if det.abs() <= 1e-12 * scale {
        return None;
    }
    let (uu, vv, ww) = (dot(u, u), dot(v, v), dot(w, w));
    let vw = cross(v, w);
    let wu = cross(w, u);
    let uv = cross(u, v);
    let off: Point3 =
        [0, 1, 2].map(|k| (uu * vw[k] + vv * wu[k] + ww * uv[k]) / (2.0 * det));
    let center = [a[0] + off[0], a[1] + off[1], a[2] + off[2]];
    Some((center, dot(off, off)))
}

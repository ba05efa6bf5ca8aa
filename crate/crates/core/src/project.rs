//! Basic projection: drop the depth axis, scale the unit square onto the
//! image and floor the coordinates.

use serde::{Deserialize, Serialize};

use crate::{Error, PointCloud, Result};

/// Whether input gradients can reach the point coordinates through a
/// mapped image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradPath {
    /// Pixel values depend on coordinates only through floor quantization.
    Blocked,
    /// Point coordinates are written directly into pixel intensities.
    CoordinateLeak,
}

/// A differentiable link from one point coordinate to one pixel channel:
/// `intensity = gain * coordinate + 1/2` (before clamping).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakLink {
    /// Row-major pixel index `row * width + col`.
    pub pixel: usize,
    pub point: usize,
    pub channel: u8,
    /// `d intensity / d coordinate`; 1/2 unless the value was clamped.
    pub gain: f64,
}

/// An `H x W x C` intensity grid in [0,1], row-major with interleaved
/// channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub grad_path: GradPath,
    pub leak_map: Vec<LeakLink>,
    /// Fingerprint of the cloud the leak map was built from.
    pub source: Option<u64>,
}

impl MappedImage {
    pub fn blank(height: usize, width: usize, channels: usize, grad_path: GradPath) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
            grad_path,
            leak_map: Vec::new(),
            source: None,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = v;
    }

    /// Pixels where any channel is nonzero.
    pub fn occupancy(&self) -> Vec<bool> {
        self.data
            .chunks(self.channels)
            .map(|px| px.iter().any(|&v| v > 0.0))
            .collect()
    }

    pub fn lit_pixels(&self) -> usize {
        self.occupancy().into_iter().filter(|&b| b).count()
    }

    /// Rewrite leaked intensities from a (perturbed) cloud while keeping every
    /// pixel assignment fixed. This is the differentiable part of a leaking
    /// mapper; everything else is held constant.
    pub fn reencode(&self, cloud: &PointCloud) -> Result<MappedImage> {
        let mut out = self.clone();
        for link in &self.leak_map {
            let p = cloud
                .points
                .get(link.point)
                .ok_or(Error::StaleLeakMap)?;
            let (v, _) = encode(p[link.channel as usize]);
            out.data[link.pixel * self.channels + link.channel as usize] = v;
        }
        out.source = Some(cloud.fingerprint());
        Ok(out)
    }

    pub fn check_invariants(&self) -> bool {
        self.data.len() == self.height * self.width * self.channels
            && self.data.iter().all(|v| (0.0..=1.0).contains(v))
            && self.leak_map.is_empty() == (self.grad_path == GradPath::Blocked)
    }
}

/// Affine coordinate encode `(t + 1) / 2` clamped to [0,1], with its
/// derivative.
#[inline]
pub(crate) fn encode(t: f64) -> (f64, f64) {
    let v = (t + 1.0) * 0.5;
    if (0.0..=1.0).contains(&v) {
        (v, 0.5)
    } else {
        (v.clamp(0.0, 1.0), 0.0)
    }
}

/// Pixel `(row, col)` for world `(x, y)` on a `size x size` image covering
/// the unit square; out-of-range points go to `(0, 0)`.
#[inline]
pub fn pixel_of(x: f64, y: f64, size: usize) -> (usize, usize) {
    let s = size as f64;
    let row = ((1.0 - y) * 0.5 * s).floor();
    let col = ((x + 1.0) * 0.5 * s).floor();
    if row >= 0.0 && row < s && col >= 0.0 && col < s {
        (row as usize, col as usize)
    } else {
        (0, 0)
    }
}

/// Default basic-projection resolution.
pub const BASIC_SIZE: usize = 456;

/// Binary occupancy image of the cloud's `(x, y)` footprint.
pub fn basic_project(cloud: &PointCloud, size: usize) -> Result<MappedImage> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut img = MappedImage::blank(size, size, 1, GradPath::Blocked);
    for p in &cloud.points {
        let (r, c) = pixel_of(p[0], p[1], size);
        img.set(r, c, 0, 1.0);
    }
    Ok(img)
}

/// Basic projection whose three channels carry the encoded `(x, y, z)` of
/// the point mapped to each pixel (last writer in point order wins).
pub fn basic_project_leaky(cloud: &PointCloud, size: usize) -> Result<MappedImage> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut img = MappedImage::blank(size, size, 3, GradPath::CoordinateLeak);
    let mut owner = vec![usize::MAX; size * size];
    for (i, p) in cloud.points.iter().enumerate() {
        let (r, c) = pixel_of(p[0], p[1], size);
        owner[r * size + c] = i;
    }
    for (pixel, &i) in owner.iter().enumerate() {
        if i == usize::MAX {
            continue;
        }
        write_point(&mut img, pixel, i, cloud.points[i]);
    }
    img.source = Some(cloud.fingerprint());
    Ok(img)
}

/// Write a point's encoded coordinates into a 3-channel pixel and record the
/// leak links.
pub(crate) fn write_point(img: &mut MappedImage, pixel: usize, point: usize, p: crate::Point3) {
    for ch in 0..3 {
        let (v, gain) = encode(p[ch]);
        img.data[pixel * 3 + ch] = v;
        img.leak_map.push(LeakLink {
            pixel,
            point,
            channel: ch as u8,
            gain,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{synth_shape, ShapeKind};
    use proptest::prelude::*;

    #[test]
    fn origin_point_lands_center_and_ignores_z() {
        let img = basic_project(&PointCloud::new(vec![[0.0, 0.0, 0.7]]), 456).unwrap();
        assert_eq!(img.lit_pixels(), 1);
        assert_eq!(img.get(228, 228, 0), 1.0);
        assert_eq!(img.grad_path, GradPath::Blocked);
        assert!(img.leak_map.is_empty());
    }

    #[test]
    fn out_of_bounds_goes_to_origin_pixel() {
        let img = basic_project(&PointCloud::new(vec![[1.05, 0.3, 0.0]]), 456).unwrap();
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert_eq!(img.lit_pixels(), 1);
        let img = basic_project(&PointCloud::new(vec![[0.0, -1.0, 0.0]]), 64).unwrap();
        assert_eq!(img.get(0, 0, 0), 1.0);
    }

    #[test]
    fn z_is_discarded() {
        let a = basic_project(&PointCloud::new(vec![[0.2, -0.4, 0.9], [0.2, -0.4, -0.3]]), 100);
        let b = basic_project(&PointCloud::new(vec![[0.2, -0.4, 0.0]]), 100);
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(basic_project(&PointCloud::new(vec![]), 8).is_err());
        assert!(basic_project_leaky(&PointCloud::new(vec![]), 8).is_err());
    }

    #[test]
    fn leaky_origin_is_half_gray() {
        let img = basic_project_leaky(&PointCloud::new(vec![[0.0; 3]]), 456).unwrap();
        for ch in 0..3 {
            assert_eq!(img.get(228, 228, ch), 0.5);
        }
        assert_eq!(img.leak_map.len(), 3);
        assert!(img.check_invariants());
    }

    #[test]
    fn leaky_occupancy_matches_basic() {
        let c = synth_shape(ShapeKind::Torus, 1024, 2).unwrap();
        let a = basic_project(&c, 456).unwrap();
        let b = basic_project_leaky(&c, 456).unwrap();
        assert_eq!(a.occupancy(), b.occupancy());
    }

    #[test]
    fn z_perturbation_moves_only_third_channel() {
        let c = synth_shape(ShapeKind::Sphere, 256, 2).unwrap();
        let mut d = c.clone();
        let k = 17;
        d.points[k][2] = (d.points[k][2] + 0.1).min(0.9);
        let dz = d.points[k][2] - c.points[k][2];
        let a = basic_project_leaky(&c, 128).unwrap();
        let b = basic_project_leaky(&d, 128).unwrap();
        let (r, col) = pixel_of(c.points[k][0], c.points[k][1], 128);
        let owner_is_k = a
            .leak_map
            .iter()
            .any(|l| l.point == k && l.pixel == r * 128 + col);
        assert!(owner_is_k);
        for (i, (x, y)) in a.data.iter().zip(&b.data).enumerate() {
            if i == (r * 128 + col) * 3 + 2 {
                assert!((y - x - dz / 2.0).abs() < 1e-12);
            } else {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn last_writer_wins() {
        let c = PointCloud::new(vec![[0.0, 0.0, -0.5], [0.0, 0.0, 0.5]]);
        let img = basic_project_leaky(&c, 16).unwrap();
        assert_eq!(img.get(8, 8, 2), 0.75);
        assert!(img.leak_map.iter().all(|l| l.point == 1));
    }

    proptest! {
        #[test]
        fn moving_within_a_cell_changes_nothing(
            x in -0.99f64..0.99, y in -0.99f64..0.99, fx in 0.0f64..1.0, fy in 0.0f64..1.0
        ) {
            let size = 64usize;
            let s = size as f64;
            let (r, c) = pixel_of(x, y, size);
            // pick another point strictly inside the same cell
            let x2 = (c as f64 + 0.001 + 0.998 * fx) / s * 2.0 - 1.0;
            let y2 = 1.0 - (r as f64 + 0.001 + 0.998 * fy) / s * 2.0;
            let a = basic_project(&PointCloud::new(vec![[x, y, 0.0], [0.5, 0.5, 0.0]]), size).unwrap();
            let b = basic_project(&PointCloud::new(vec![[x2, y2, 0.3], [0.5, 0.5, 0.0]]), size).unwrap();
            prop_assert_eq!(a.data, b.data);
        }

        #[test]
        fn basic_projection_permutation_invariant(seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let c = synth_shape(ShapeKind::Cone, 128, seed).unwrap();
            let mut shuffled = c.clone();
            shuffled.points.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(basic_project(&c, 96).unwrap(), basic_project(&shuffled, 96).unwrap());
        }
    }
}

//! Rendering front-end: z-buffer depth maps with exponential depth
//! encoding, positional-embedding channels, and an AdaIN layer.

use serde::{Deserialize, Serialize};

use crate::net::Tensor;
use crate::project::pixel_of;
use crate::{Error, GradPath, MappedImage, PointCloud, Result};

/// Axis the camera looks down (towards the negative direction).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewAxis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZBufferConfig {
    /// Depth offset: a point at depth `alpha` gets intensity 1.
    pub alpha: f64,
    /// Depth decay scale, must be positive.
    pub beta: f64,
    pub size: usize,
    /// Odd splat window side.
    pub splat: usize,
    pub view: ViewAxis,
    /// Image-plane position along the view axis; depth is
    /// `camera - coordinate`.
    pub camera: f64,
}

impl Default for ZBufferConfig {
    fn default() -> Self {
        // camera plane at 2 puts the near side of the unit ball at depth 1
        Self {
            alpha: 1.0,
            beta: 1.0,
            size: 313,
            splat: 3,
            view: ViewAxis::Z,
            camera: 2.0,
        }
    }
}

impl ZBufferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.splat == 0 || self.splat % 2 == 0 {
            return Err(Error::Config(format!("splat must be odd, got {}", self.splat)));
        }
        if self.size == 0 {
            return Err(Error::Config("size must be positive".into()));
        }
        Ok(())
    }

    /// `(horizontal, vertical, depth)` coordinates of a point for this view.
    fn split(&self, p: &crate::Point3) -> (f64, f64, f64) {
        match self.view {
            ViewAxis::Z => (p[0], p[1], p[2]),
            ViewAxis::X => (p[1], p[2], p[0]),
            ViewAxis::Y => (p[2], p[0], p[1]),
        }
    }

    pub fn intensity(&self, depth: f64) -> f64 {
        (-(depth - self.alpha) / self.beta).exp()
    }
}

/// Depth map: every point writes `exp(-(d - alpha) / beta)` over the splat
/// window around its pixel, overlaps keep the maximum, untouched pixels stay
/// 0 and values are clamped to [0,1].
pub fn zbuffer(cloud: &PointCloud, cfg: &ZBufferConfig) -> Result<MappedImage> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    cfg.validate()?;
    let size = cfg.size;
    let half = (cfg.splat / 2) as isize;
    let mut img = MappedImage::blank(size, size, 1, GradPath::Blocked);
    for p in &cloud.points {
        let (u, v, w) = cfg.split(p);
        let (r, c) = pixel_of(u, v, size);
        let val = cfg.intensity(cfg.camera - w).clamp(0.0, 1.0);
        for dr in -half..=half {
            for dc in -half..=half {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if rr < 0 || cc < 0 || rr >= size as isize || cc >= size as isize {
                    continue;
                }
                let idx = rr as usize * size + cc as usize;
                if val > img.data[idx] {
                    img.data[idx] = val;
                }
            }
        }
    }
    Ok(img)
}

/// Two channels: `row / (height - 1)` and `col / (width - 1)`, 0 along a
/// 1-pixel dimension. Returned row-major, channels interleaved.
pub fn positional_embedding(height: usize, width: usize) -> Vec<[f64; 2]> {
    let norm = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    (0..height)
        .flat_map(|r| (0..width).map(move |c| [norm(r, height), norm(c, width)]))
        .collect()
}

/// Append the positional channels to an image.
pub fn with_positional_embedding(img: &MappedImage) -> MappedImage {
    let emb = positional_embedding(img.height, img.width);
    let c = img.channels;
    let mut data = Vec::with_capacity(img.data.len() / c * (c + 2));
    for (px, e) in img.data.chunks(c).zip(&emb) {
        data.extend_from_slice(px);
        data.extend_from_slice(e);
    }
    MappedImage {
        channels: c + 2,
        data,
        ..img.clone()
    }
}

/// Depth map plus positional channels: the render pipeline's classifier
/// input.
pub fn render_input(cloud: &PointCloud, cfg: &ZBufferConfig) -> Result<MappedImage> {
    Ok(with_positional_embedding(&zbuffer(cloud, cfg)?))
}

/// Scene-control vector `w` and the affine maps to per-channel styles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaInParams {
    pub w: Vec<f64>,
    /// `C x D`, row-major.
    pub scale_weight: Vec<f64>,
    pub scale_bias: Vec<f64>,
    pub shift_weight: Vec<f64>,
    pub shift_bias: Vec<f64>,
    pub epsilon: f64,
}

impl AdaInParams {
    pub fn channels(&self) -> usize {
        self.scale_bias.len()
    }

    /// Styles `(y_s, y_b) = (A_s w + b_s, A_b w + b_b)`.
    pub fn styles(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.w.len();
        let apply = |m: &[f64], b: &[f64]| -> Vec<f64> {
            b.iter()
                .enumerate()
                .map(|(i, &bi)| bi + (0..d).map(|j| m[i * d + j] * self.w[j]).sum::<f64>())
                .collect()
        };
        (
            apply(&self.scale_weight, &self.scale_bias),
            apply(&self.shift_weight, &self.shift_bias),
        )
    }

    fn validate(&self) -> Result<()> {
        let (c, d) = (self.channels(), self.w.len());
        if self.shift_bias.len() != c
            || self.scale_weight.len() != c * d
            || self.shift_weight.len() != c * d
        {
            return Err(Error::Shape(format!(
                "AdaIN affine maps must be {c}x{d} with {c} biases"
            )));
        }
        Ok(())
    }
}

/// Gradients of an AdaIN layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaInGrads {
    pub features: Tensor,
    pub scale_weight: Vec<f64>,
    pub scale_bias: Vec<f64>,
    pub shift_weight: Vec<f64>,
    pub shift_bias: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone)]
struct AdaInCache {
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
    y_scale: Vec<f64>,
    shape: Vec<usize>,
}

/// Adaptive instance normalization over `H x W x C` features:
/// `y_s,i * (f_i - mean_i) / sqrt(var_i + eps) + y_b,i` with population
/// variance over the spatial extent.
#[derive(Debug, Clone)]
pub struct AdaIn {
    pub params: AdaInParams,
    cache: Option<AdaInCache>,
}

impl AdaIn {
    pub fn new(params: AdaInParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            cache: None,
        })
    }

    pub fn forward(&mut self, features: &Tensor) -> Result<Tensor> {
        let c = self.params.channels();
        if features.shape.len() != 3 || features.shape[2] != c {
            return Err(Error::Shape(format!(
                "AdaIN expects H x W x {c}, got {:?}",
                features.shape
            )));
        }
        let hw = features.shape[0] * features.shape[1];
        let (ys, yb) = self.params.styles();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for px in features.data.chunks(c) {
            for i in 0..c {
                mean[i] += px[i];
            }
        }
        mean.iter_mut().for_each(|m| *m /= hw as f64);
        for px in features.data.chunks(c) {
            for i in 0..c {
                var[i] += (px[i] - mean[i]).powi(2);
            }
        }
        let inv_std: Vec<f64> = var
            .iter()
            .map(|v| 1.0 / (v / hw as f64 + self.params.epsilon).sqrt())
            .collect();
        let mut normalized = features.data.clone();
        let mut out = features.data.clone();
        for (k, (xn, o)) in normalized.iter_mut().zip(out.iter_mut()).enumerate() {
            let i = k % c;
            *xn = (*xn - mean[i]) * inv_std[i];
            *o = ys[i] * *xn + yb[i];
        }
        self.cache = Some(AdaInCache {
            normalized,
            inv_std,
            y_scale: ys,
            shape: features.shape.clone(),
        });
        Ok(Tensor::new(features.shape.clone(), out))
    }

    pub fn backward(&self, upstream: &Tensor) -> Result<AdaInGrads> {
        let cache = self.cache.as_ref().ok_or(Error::MissingCache)?;
        if upstream.shape != cache.shape {
            return Err(Error::Shape("upstream gradient shape differs from forward".into()));
        }
        let c = self.params.channels();
        let d = self.params.w.len();
        let hw = (cache.shape[0] * cache.shape[1]) as f64;
        let mut d_ys = vec![0.0; c];
        let mut d_yb = vec![0.0; c];
        for (k, (&g, &xn)) in upstream.data.iter().zip(&cache.normalized).enumerate() {
            d_ys[k % c] += g * xn;
            d_yb[k % c] += g;
        }
        // dx = inv_std * (dxn - mean(dxn) - xn * mean(dxn * xn)), dxn = g * y_s
        let mut mean_g = vec![0.0; c];
        let mut mean_gx = vec![0.0; c];
        for i in 0..c {
            mean_g[i] = d_yb[i] * cache.y_scale[i] / hw;
            mean_gx[i] = d_ys[i] * cache.y_scale[i] / hw;
        }
        let features: Vec<f64> = upstream
            .data
            .iter()
            .zip(&cache.normalized)
            .enumerate()
            .map(|(k, (&g, &xn))| {
                let i = k % c;
                cache.inv_std[i] * (g * cache.y_scale[i] - mean_g[i] - xn * mean_gx[i])
            })
            .collect();

        let outer = |dy: &[f64]| -> Vec<f64> {
            (0..c * d).map(|k| dy[k / d] * self.params.w[k % d]).collect()
        };
        let w: Vec<f64> = (0..d)
            .map(|j| {
                (0..c)
                    .map(|i| {
                        self.params.scale_weight[i * d + j] * d_ys[i]
                            + self.params.shift_weight[i * d + j] * d_yb[i]
                    })
                    .sum()
            })
            .collect();
        Ok(AdaInGrads {
            features: Tensor::new(cache.shape.clone(), features),
            scale_weight: outer(&d_ys),
            shift_weight: outer(&d_yb),
            scale_bias: d_ys,
            shift_bias: d_yb,
            w,
        })
    }
}

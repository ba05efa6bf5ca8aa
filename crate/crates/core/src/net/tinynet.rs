//! `[conv3x3 -> relu -> maxpool2] x 3 -> global average pool -> linear`,
//! with hand-written backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, MappedImage, Result};

/// Channels of every conv block.
pub const WIDTH: usize = 16;
const BLOCKS: usize = 3;
/// Smallest input side that survives three 2x2 poolings.
pub const MIN_INPUT_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyNet {
    pub in_channels: usize,
    pub num_classes: usize,
    /// Images are average-pooled until neither side exceeds this.
    pub input_side: usize,
    /// conv1.w, conv1.b, conv2.w, conv2.b, conv3.w, conv3.b, fc.w, fc.b
    pub params: Vec<Param>,
}

/// Per-call activations needed by [`TinyNet::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    image_hw: (usize, usize),
    factor: usize,
    blocks: Vec<BlockCache>,
    pooled_hw: (usize, usize),
    features: Vec<f64>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Vec<f64>,
    in_c: usize,
    h: usize,
    w: usize,
    /// Pre-activation conv output.
    z: Vec<f64>,
    /// Index into `z` of each pooled maximum.
    argmax: Vec<usize>,
}

/// Cross-entropy loss with gradients for every parameter and, on request,
/// for the full-resolution input image (`H x W x C` layout).
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub logits: Vec<f64>,
    pub param_grads: Vec<Vec<f64>>,
    pub input_grad: Option<Vec<f64>>,
}

impl TinyNet {
    pub fn new(in_channels: usize, num_classes: usize, input_side: usize, seed: u64) -> Result<Self> {
        if in_channels == 0 || num_classes == 0 {
            return Err(Error::Config("channels and classes must be positive".into()));
        }
        if input_side < MIN_INPUT_SIDE {
            return Err(Error::Config(format!(
                "input side must be at least {MIN_INPUT_SIDE}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut cin = in_channels;
        for b in 0..BLOCKS {
            let fan_in = (cin * 9) as f64;
            let bound = (6.0 / fan_in).sqrt();
            params.push(Param {
                name: format!("conv{}.weight", b + 1),
                shape: vec![WIDTH, cin, 3, 3],
                data: (0..WIDTH * cin * 9).map(|_| rng.gen_range(-bound..bound)).collect(),
            });
            params.push(Param {
                name: format!("conv{}.bias", b + 1),
                shape: vec![WIDTH],
                data: vec![0.0; WIDTH],
            });
            cin = WIDTH;
        }
        let bound = (1.0 / WIDTH as f64).sqrt();
        params.push(Param {
            name: "fc.weight".into(),
            shape: vec![num_classes, WIDTH],
            data: (0..num_classes * WIDTH).map(|_| rng.gen_range(-bound..bound)).collect(),
        });
        params.push(Param {
            name: "fc.bias".into(),
            shape: vec![num_classes],
            data: vec![0.0; num_classes],
        });
        Ok(Self {
            in_channels,
            num_classes,
            input_side,
            params,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| vec![0.0; p.data.len()]).collect()
    }

    /// Average-pool factor applied to an `h x w` image.
    pub fn pool_factor(&self, h: usize, w: usize) -> usize {
        h.max(w).div_ceil(self.input_side).max(1)
    }

    /// Downsample an image to `C x H' x W'` by averaging `f x f` blocks
    /// (edge blocks average over the pixels they contain).
    pub fn prepare(&self, img: &MappedImage) -> Result<(Tensor, usize)> {
        if img.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "net expects {} channels, image has {}",
                self.in_channels, img.channels
            )));
        }
        let f = self.pool_factor(img.height, img.width);
        let (h, w, c) = (img.height.div_ceil(f), img.width.div_ceil(f), img.channels);
        if h < MIN_INPUT_SIDE || w < MIN_INPUT_SIDE {
            return Err(Error::Shape(format!("image {h}x{w} after pooling is too small")));
        }
        let mut out = vec![0.0; c * h * w];
        for r in 0..img.height {
            for col in 0..img.width {
                let o = (r / f) * w + col / f;
                let base = (r * img.width + col) * c;
                for ch in 0..c {
                    out[ch * h * w + o] += img.data[base + ch];
                }
            }
        }
        for oy in 0..h {
            let rows = (img.height - oy * f).min(f);
            for ox in 0..w {
                let cols = (img.width - ox * f).min(f);
                let inv = 1.0 / (rows * cols) as f64;
                for ch in 0..c {
                    out[ch * h * w + oy * w + ox] *= inv;
                }
            }
        }
        Ok((Tensor::new(vec![c, h, w], out), f))
    }

    /// Logits for a mapped image.
    pub fn forward(&self, img: &MappedImage) -> Result<Vec<f64>> {
        Ok(self.forward_cached(img)?.logits)
    }

    pub fn predict(&self, img: &MappedImage) -> Result<usize> {
        Ok(argmax(&self.forward(img)?))
    }

    pub fn forward_cached(&self, img: &MappedImage) -> Result<ForwardCache> {
        let (x, factor) = self.prepare(img)?;
        let mut cache = self.forward_tensor(x)?;
        cache.image_hw = (img.height, img.width);
        cache.factor = factor;
        Ok(cache)
    }

    /// Forward pass on an already prepared `C x H x W` tensor.
    pub fn forward_tensor(&self, x: Tensor) -> Result<ForwardCache> {
        if x.shape.len() != 3 || x.shape[0] != self.in_channels {
            return Err(Error::Shape(format!("bad input tensor shape {:?}", x.shape)));
        }
        let (mut h, mut w) = (x.shape[1], x.shape[2]);
        let mut act = x.data;
        let mut cin = self.in_channels;
        let mut blocks = Vec::with_capacity(BLOCKS);
        for b in 0..BLOCKS {
            let z = conv3x3(&act, cin, h, w, &self.params[2 * b].data, &self.params[2 * b + 1].data);
            let (ph, pw) = (h / 2, w / 2);
            let mut pooled = vec![0.0; WIDTH * ph * pw];
            let mut arg = vec![0usize; WIDTH * ph * pw];
            for o in 0..WIDTH {
                for py in 0..ph {
                    for px in 0..pw {
                        let mut best = (f64::NEG_INFINITY, 0);
                        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let idx = o * h * w + (2 * py + dy) * w + 2 * px + dx;
                            let v = z[idx].max(0.0);
                            if v > best.0 {
                                best = (v, idx);
                            }
                        }
                        let k = o * ph * pw + py * pw + px;
                        pooled[k] = best.0;
                        arg[k] = best.1;
                    }
                }
            }
            blocks.push(BlockCache {
                input: std::mem::replace(&mut act, pooled),
                in_c: cin,
                h,
                w,
                z,
                argmax: arg,
            });
            cin = WIDTH;
            h = ph;
            w = pw;
        }
        let area = (h * w) as f64;
        let features: Vec<f64> = act.chunks(h * w).map(|c| c.iter().sum::<f64>() / area).collect();
        let (fw, fb) = (&self.params[6].data, &self.params[7].data);
        let logits = (0..self.num_classes)
            .map(|k| fb[k] + (0..WIDTH).map(|j| fw[k * WIDTH + j] * features[j]).sum::<f64>())
            .collect();
        Ok(ForwardCache {
            image_hw: (0, 0),
            factor: 1,
            blocks,
            pooled_hw: (h, w),
            features,
            logits,
        })
    }

    /// Backpropagate `d loss / d logits`. Returns parameter gradients and,
    /// when `want_input` is set, the gradient w.r.t. the prepared input
    /// tensor (`C x H x W`).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &[f64],
        want_input: bool,
    ) -> (Vec<Vec<f64>>, Option<Vec<f64>>) {
        let mut grads = self.zero_grads();
        let fw = &self.params[6].data;
        let mut dfeat = vec![0.0; WIDTH];
        for k in 0..self.num_classes {
            grads[7][k] = dlogits[k];
            for j in 0..WIDTH {
                grads[6][k * WIDTH + j] = dlogits[k] * cache.features[j];
                dfeat[j] += dlogits[k] * fw[k * WIDTH + j];
            }
        }
        let (h, w) = cache.pooled_hw;
        let area = (h * w) as f64;
        let mut dact: Vec<f64> = dfeat
            .iter()
            .flat_map(|&g| std::iter::repeat(g / area).take(h * w))
            .collect();
        for b in (0..BLOCKS).rev() {
            let blk = &cache.blocks[b];
            let mut dz = vec![0.0; blk.z.len()];
            for (&g, &idx) in dact.iter().zip(&blk.argmax) {
                if blk.z[idx] > 0.0 {
                    dz[idx] += g;
                }
            }
            let need_dx = b > 0 || want_input;
            let (dw, db, dx) = conv3x3_backward(
                &blk.input,
                blk.in_c,
                blk.h,
                blk.w,
                &self.params[2 * b].data,
                &dz,
                need_dx,
            );
            grads[2 * b] = dw;
            grads[2 * b + 1] = db;
            dact = dx;
        }
        (grads, want_input.then_some(dact))
    }

    /// Softmax cross-entropy and its gradients for one image.
    pub fn loss_and_grad(&self, img: &MappedImage, label: usize, want_input: bool) -> Result<LossGrad> {
        if label >= self.num_classes {
            return Err(Error::Config(format!(
                "label {label} out of range for {} classes",
                self.num_classes
            )));
        }
        let cache = self.forward_cached(img)?;
        let (loss, dlogits) = softmax_cross_entropy(&cache.logits, label);
        let (param_grads, dx) = self.backward(&cache, &dlogits, want_input);
        let input_grad = dx.map(|g| {
            let (c, (h, w)) = (self.in_channels, cache.image_hw);
            unpool_grad(&g, c, h, w, cache.factor)
        });
        Ok(LossGrad {
            loss,
            logits: cache.logits,
            param_grads,
            input_grad,
        })
    }
}

/// Spread a pooled `C x H' x W'` gradient back onto the `H x W x C` image.
fn unpool_grad(g: &[f64], c: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (oh, ow) = (h.div_ceil(f), w.div_ceil(f));
    let mut out = vec![0.0; h * w * c];
    for r in 0..h {
        let rows = (h - (r / f) * f).min(f);
        for col in 0..w {
            let cols = (w - (col / f) * f).min(f);
            let inv = 1.0 / (rows * cols) as f64;
            let o = (r / f) * ow + col / f;
            for ch in 0..c {
                out[(r * w + col) * c + ch] = g[ch * oh * ow + o] * inv;
            }
        }
    }
    out
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc })
        .0
}

/// Numerically stable softmax cross-entropy; returns `(loss, d loss / d logits)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + m - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Same-padded 3x3 convolution, `cin x h x w` to `WIDTH x h x w`.
fn conv3x3(x: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let hw = h * w;
    let mut out = vec![0.0; WIDTH * hw];
    for o in 0..WIDTH {
        let plane = &mut out[o * hw..(o + 1) * hw];
        plane.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..cin {
            let src = &x[i * hw..(i + 1) * hw];
            for ky in 0..3 {
                let (y0, y1) = valid_range(ky, h);
                for kx in 0..3 {
                    let wv = weight[((o * cin + i) * 3 + ky) * 3 + kx];
                    let (x0, x1) = valid_range(kx, w);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let dst = &mut plane[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        for (d, &v) in dst.iter_mut().zip(s) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv3x3_backward(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    dz: &[f64],
    need_dx: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hw = h * w;
    let mut dw = vec![0.0; WIDTH * cin * 9];
    let mut db = vec![0.0; WIDTH];
    let mut dx = vec![0.0; if need_dx { cin * hw } else { 0 }];
    for o in 0..WIDTH {
        let g = &dz[o * hw..(o + 1) * hw];
        db[o] = g.iter().sum();
        for i in 0..cin {
            let src = &x[i * hw..(i + 1) * hw];
            for ky in 0..3 {
                let (y0, y1) = valid_range(ky, h);
                for kx in 0..3 {
                    let widx = ((o * cin + i) * 3 + ky) * 3 + kx;
                    let wv = weight[widx];
                    let (x0, x1) = valid_range(kx, w);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let gr = &g[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        acc += gr.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        if need_dx {
                            let d = &mut dx[i * hw + sy * w + x0 + kx - 1..i * hw + sy * w + x1 + kx - 1];
                            for (dd, &gg) in d.iter_mut().zip(gr) {
                                *dd += wv * gg;
                            }
                        }
                    }
                    dw[widx] = acc;
                }
            }
        }
    }
    (dw, db, dx)
}

/// Output positions `[lo, hi)` whose tap at kernel offset `k` stays inside
/// a dimension of length `n` (padding 1).
#[inline]
fn valid_range(k: usize, n: usize) -> (usize, usize) {
    match k {
        0 => (1, n),
        1 => (0, n),
        _ => (0, n.saturating_sub(1)),
    }
}

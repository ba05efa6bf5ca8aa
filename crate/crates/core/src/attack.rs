//! FGSM through a mapping pipeline, and Table-style robustness reports.
//!
//! Gradients reach the points only through leak links, the pixels whose
//! intensities are encoded coordinates. Pixel and cell assignments (floor
//! results, cluster memberships, grid embeddings) are constants of the
//! backward pass. Quantizing mappers expose no such links, so their input
//! gradient is reported as blocked and the attack leaves the cloud as is.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::net::argmax;
use crate::{Dataset, Error, GradPath, MappedImage, Mapper, Point3, PointCloud, Result, TinyNet};

/// A mapper `h` and the classifier `g` that consumes its images.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub mapper: Mapper,
    pub net: TinyNet,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointGradient {
    Blocked,
    Leak(Vec<Point3>),
}

impl Pipeline {
    pub fn new(mapper: Mapper, net: TinyNet) -> Result<Self> {
        if net.in_channels != mapper.channels() {
            return Err(Error::Shape(format!(
                "{} produces {} channels, net expects {}",
                mapper.name(),
                mapper.channels(),
                net.in_channels
            )));
        }
        Ok(Self { mapper, net })
    }

    pub fn grad_path(&self) -> GradPath {
        self.mapper.grad_path()
    }

    pub fn predict(&self, cloud: &PointCloud) -> Result<usize> {
        Ok(argmax(&self.net.forward(&self.mapper.map(cloud)?)?))
    }

    /// Loss gradient w.r.t. the input points.
    pub fn input_point_gradient(&self, cloud: &PointCloud, label: usize) -> Result<PointGradient> {
        let img = self.mapper.map(cloud)?;
        if img.grad_path == GradPath::Blocked {
            return Ok(PointGradient::Blocked);
        }
        let lg = self.net.loss_and_grad(&img, label, true)?;
        let image_grad = lg.input_grad.expect("requested input gradient");
        chain_leak(&img, cloud, &image_grad).map(PointGradient::Leak)
    }
}

/// Pull an image gradient (`H x W x C`) back onto the points through the
/// image's leak links.
pub fn chain_leak(img: &MappedImage, cloud: &PointCloud, image_grad: &[f64]) -> Result<Vec<Point3>> {
    if img.source != Some(cloud.fingerprint()) {
        return Err(Error::StaleLeakMap);
    }
    if image_grad.len() != img.data.len() {
        return Err(Error::Shape("image gradient size differs from image".into()));
    }
    let mut g = vec![[0.0; 3]; cloud.len()];
    for l in &img.leak_map {
        let ch = l.channel as usize;
        g[l.point][ch] += l.gain * image_grad[l.pixel * img.channels + ch];
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FgsmOutcome {
    pub cloud: PointCloud,
    pub gradient_blocked: bool,
}

/// Single-step FGSM: `x' = x + eps * sign(grad_x L)`. A blocked gradient
/// leaves the cloud unchanged.
pub fn fgsm(pipeline: &Pipeline, cloud: &PointCloud, label: usize, epsilon: f64) -> Result<FgsmOutcome> {
    iterative_fgsm(pipeline, cloud, label, epsilon, 1)
}

/// `steps` repeated FGSM steps of size `epsilon`, re-mapping the cloud each
/// step. `steps = 1` is plain FGSM.
pub fn iterative_fgsm(
    pipeline: &Pipeline,
    cloud: &PointCloud,
    label: usize,
    epsilon: f64,
    steps: usize,
) -> Result<FgsmOutcome> {
    let mut current = cloud.clone();
    for _ in 0..steps {
        match pipeline.input_point_gradient(&current, label)? {
            PointGradient::Blocked => {
                return Ok(FgsmOutcome {
                    cloud: current,
                    gradient_blocked: true,
                })
            }
            PointGradient::Leak(g) => {
                if epsilon == 0.0 {
                    break;
                }
                for (p, gp) in current.points.iter_mut().zip(&g) {
                    for k in 0..3 {
                        if gp[k] != 0.0 {
                            p[k] += epsilon * gp[k].signum();
                        }
                    }
                }
            }
        }
    }
    Ok(FgsmOutcome {
        cloud: current,
        gradient_blocked: false,
    })
}

/// `(clean - attacked) / clean` in percent; 0 when clean accuracy is 0.
pub fn attack_success_rate(clean: f64, attacked: f64) -> f64 {
    if clean > 0.0 {
        100.0 * (clean - attacked) / clean
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub id: usize,
    pub label: usize,
    pub clean_pred: usize,
    pub attacked_pred: usize,
    pub perturbation_l2: f64,
    pub gradient_blocked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub pipeline: String,
    pub epsilon: f64,
    pub steps: usize,
    pub clean_accuracy: f64,
    pub attacked_accuracy: f64,
    pub attack_success_rate: f64,
    pub mean_perturbation_l2: f64,
    pub samples: Vec<SampleOutcome>,
}

impl AttackReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// `sample_id,label,clean_pred,attacked_pred,perturbation_l2` lines.
    pub fn write_samples_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("sample_id,label,clean_pred,attacked_pred,perturbation_l2\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.id, s.label, s.clean_pred, s.attacked_pred, s.perturbation_l2
            ));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Attack every test sample and report clean/attacked accuracy and ASR.
pub fn attack_suite(pipeline: &Pipeline, testset: &Dataset, epsilon: f64, steps: usize) -> Result<AttackReport> {
    if testset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let samples = testset
        .clouds
        .par_iter()
        .enumerate()
        .map(|(id, cloud)| {
            let label = cloud.label.ok_or_else(|| Error::Config(format!("sample {id} is unlabeled")))?;
            let clean_pred = pipeline.predict(cloud)?;
            let out = iterative_fgsm(pipeline, cloud, label, epsilon, steps)?;
            let attacked_pred = if out.cloud == *cloud {
                clean_pred
            } else {
                pipeline.predict(&out.cloud)?
            };
            let l2 = cloud
                .points
                .iter()
                .zip(&out.cloud.points)
                .map(|(a, b)| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>())
                .sum::<f64>()
                .sqrt();
            Ok(SampleOutcome {
                id,
                label,
                clean_pred,
                attacked_pred,
                perturbation_l2: l2,
                gradient_blocked: out.gradient_blocked,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = samples.len() as f64;
    let clean = 100.0 * samples.iter().filter(|s| s.clean_pred == s.label).count() as f64 / n;
    let attacked = 100.0 * samples.iter().filter(|s| s.attacked_pred == s.label).count() as f64 / n;
    Ok(AttackReport {
        pipeline: pipeline.mapper.name().to_string(),
        epsilon,
        steps,
        clean_accuracy: clean,
        attacked_accuracy: attacked,
        attack_success_rate: attack_success_rate(clean, attacked),
        mean_perturbation_l2: samples.iter().map(|s| s.perturbation_l2).sum::<f64>() / n,
        samples,
    })
}

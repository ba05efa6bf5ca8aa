use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, lr_at, AdamState, TinyNet};
use crate::cloud::augment;
use crate::{AugmentConfig, Error, MappedImage, Mapper, PointCloud, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Decoupled weight decay.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Augmentation is applied per sample during training only. Off by
    /// default; `Some(AugmentConfig::default())` gives dropout, scale and
    /// shift.
    pub augment: Option<AugmentConfig>,
    /// Largest side of the pooled network input.
    pub input_side: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            lr: 0.001,
            lr_step: 20,
            lr_gamma: 0.7,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0001,
            batch_size: 1,
            seed: 0,
            augment: None,
            input_side: 64,
        }
    }
}

/// Labeled clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub clouds: Vec<PointCloud>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(clouds: Vec<PointCloud>, num_classes: usize) -> Result<Self> {
        for (i, c) in clouds.iter().enumerate() {
            match c.label {
                Some(l) if l < num_classes => {}
                _ => {
                    return Err(Error::Config(format!(
                        "sample {i} has label {:?}, expected < {num_classes}",
                        c.label
                    )))
                }
            }
        }
        Ok(Self {
            clouds,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    fn label(&self, i: usize) -> usize {
        self.clouds[i].label.expect("validated on construction")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: TinyNet,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Keeps the shuffle stream distinct from the weight-init stream.
const SHUFFLE_SALT: u64 = 0x5348_5546_464c_4500;

/// Per-sample augmentation seed: `base ^ (epoch << 32) ^ index`.
fn sample_seed(base: u64, epoch: usize, index: usize) -> u64 {
    base ^ ((epoch as u64) << 32) ^ index as u64
}

/// Mini-batch Adam on softmax cross-entropy over mapped images. Per-sample
/// gradients may be computed in parallel; they are summed in sample order,
/// so results do not depend on the thread count.
pub fn train(mapper: &Mapper, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut net = TinyNet::new(mapper.channels(), data.num_classes, cfg.input_side, cfg.seed)?;
    let mut adam = AdamState::new(&net);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
    let mut history = Vec::with_capacity(cfg.epochs);
    // without augmentation every epoch sees the same images
    let fixed: Option<Vec<MappedImage>> = match cfg.augment {
        Some(_) => None,
        None => Some(data.clouds.par_iter().map(|c| mapper.map(c)).collect::<Result<_>>()?),
    };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = lr_at(epoch, cfg);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, Vec<Vec<f64>>)>> = batch
                .par_iter()
                .map(|&i| {
                    let lg = match (&fixed, &cfg.augment) {
                        (Some(images), _) => net.loss_and_grad(&images[i], data.label(i), false)?,
                        (None, Some(a)) => {
                            let cloud = augment(&data.clouds[i], &a.with_seed(sample_seed(cfg.seed, epoch, i)));
                            net.loss_and_grad(&mapper.map(&cloud)?, data.label(i), false)?
                        }
                        (None, None) => unreachable!("images are cached when augmentation is off"),
                    };
                    Ok((lg.loss, lg.param_grads))
                })
                .collect();
            let mut grads = net.zero_grads();
            for r in results {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                total += loss;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    for (a, b) in acc.iter_mut().zip(gi) {
                        *a += b;
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().flatten().for_each(|g| *g *= inv);
            adam.step(&mut net, &grads, lr, cfg);
            if net.params.iter().any(|p| p.data.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch });
            }
        }
        history.push(total / data.len() as f64);
    }
    Ok(TrainOutcome {
        net,
        loss_history: history,
    })
}

/// Instance and class accuracy, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub instance_accuracy: f64,
    pub class_accuracy: f64,
    pub predictions: Vec<usize>,
}

impl Evaluation {
    /// Instance accuracy = correct / total; class accuracy = unweighted mean
    /// of per-class recall over the classes present.
    pub fn from_predictions(labels: &[usize], predictions: Vec<usize>, num_classes: usize) -> Self {
        let mut hit = vec![0usize; num_classes];
        let mut seen = vec![0usize; num_classes];
        for (&l, &p) in labels.iter().zip(&predictions) {
            seen[l] += 1;
            if l == p {
                hit[l] += 1;
            }
        }
        let correct: usize = hit.iter().sum();
        let present: Vec<usize> = (0..num_classes).filter(|&c| seen[c] > 0).collect();
        let class = if present.is_empty() {
            0.0
        } else {
            present.iter().map(|&c| hit[c] as f64 / seen[c] as f64).sum::<f64>() / present.len() as f64
        };
        Self {
            instance_accuracy: 100.0 * correct as f64 / labels.len().max(1) as f64,
            class_accuracy: 100.0 * class,
            predictions,
        }
    }
}

pub fn evaluate(net: &TinyNet, mapper: &Mapper, data: &Dataset) -> Result<Evaluation> {
    let predictions = data
        .clouds
        .par_iter()
        .map(|c| Ok(argmax(&net.forward(&mapper.map(c)?)?)))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = (0..data.len()).map(|i| data.label(i)).collect();
    Ok(Evaluation::from_predictions(&labels, predictions, data.num_classes))
}

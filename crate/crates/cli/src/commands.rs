use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pcd_core::attack::attack_suite;
use pcd_core::cloud::{
    load_off, normalize_unit, read_xyz, realize_manifest, sample_surface, synth_manifest, write_manifest, write_xyz,
};
use pcd_core::image::write_netpbm;
use pcd_core::net::{evaluate, load_checkpoint, save_checkpoint, train, write_loss_csv};
use pcd_core::{Dataset, Mapper, Pipeline, PointCloud, ShapeKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

const SPLITS: [&str; 2] = ["train", "test"];

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pipeline: String,
    pub split: String,
    pub samples: usize,
    pub instance_accuracy: f64,
    pub class_accuracy: f64,
}

/// Mapper and training settings a checkpoint was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mapper: Mapper,
    pub train: TrainConfig,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn off_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("off")))
        .collect();
    files.sort();
    Ok(files)
}

/// Clouds per split plus class names, without touching the output tree.
fn build_splits(cfg: &ExperimentConfig) -> Result<(Vec<String>, [Vec<PointCloud>; 2])> {
    let d = &cfg.dataset;
    let (train_seed, test_seed) = cfg.split_seeds();
    match &d.off_dir {
        None => {
            let names = ShapeKind::ALL.iter().map(|k| k.name().to_string()).collect();
            let train = realize_manifest(&synth_manifest(d.per_class_train, d.points, train_seed))?;
            let test = realize_manifest(&synth_manifest(d.per_class_test, d.points, test_seed))?;
            Ok((names, [train, test]))
        }
        Some(root) => {
            let mut names: Vec<String> = fs::read_dir(root)
                .with_context(|| format!("listing {}", root.display()))?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().is_dir())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect();
            names.sort();
            if names.is_empty() {
                bail!("{} has no class directories", root.display());
            }
            let mut out = [Vec::new(), Vec::new()];
            for (s, split) in SPLITS.iter().enumerate() {
                let cap = if s == 0 { d.per_class_train } else { d.per_class_test };
                let seed = if s == 0 { train_seed } else { test_seed };
                for (label, name) in names.iter().enumerate() {
                    for (i, f) in off_files(&root.join(name).join(split))?.iter().take(cap).enumerate() {
                        let mesh = load_off(f)?;
                        let cloud = sample_surface(&mesh, d.points, seed ^ ((label as u64) << 32) ^ i as u64)?;
                        out[s].push(normalize_unit(&cloud).with_label(label));
                    }
                }
            }
            Ok((names, out))
        }
    }
}

pub fn dataset(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let (names, splits) = build_splits(cfg)?;
    let dir = cfg.dataset_dir();
    for (split, clouds) in SPLITS.iter().zip(&splits) {
        let sub = dir.join(split);
        create_dir(&sub)?;
        let mut labels = String::from("file,label,class\n");
        for (i, c) in clouds.iter().enumerate() {
            let file = format!("{i:04}.xyz");
            write_xyz(sub.join(&file), c)?;
            let l = c.label.expect("dataset clouds are labeled");
            labels.push_str(&format!("{split}/{file},{l},{}\n", names[l]));
        }
        let csv = dir.join(format!("{split}_labels.csv"));
        fs::write(&csv, labels).with_context(|| format!("writing {}", csv.display()))?;
    }
    if cfg.dataset.off_dir.is_none() {
        let (a, b) = cfg.split_seeds();
        let d = &cfg.dataset;
        write_manifest(dir.join("train_manifest.json"), &synth_manifest(d.per_class_train, d.points, a))?;
        write_manifest(dir.join("test_manifest.json"), &synth_manifest(d.per_class_test, d.points, b))?;
    }
    write_json(&dir.join("classes.json"), &names)?;
    println!(
        "wrote {} train and {} test clouds to {}",
        splits[0].len(),
        splits[1].len(),
        dir.display()
    );
    Ok(())
}

pub fn load_split(dir: &Path, split: &str) -> Result<Dataset> {
    let names: Vec<String> = read_json(&dir.join("classes.json"))
        .with_context(|| format!("no dataset at {} (run `pcd dataset` first)", dir.display()))?;
    let csv = dir.join(format!("{split}_labels.csv"));
    let text = fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
    let mut clouds = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let mut cols = line.split(',');
        let (Some(file), Some(label)) = (cols.next(), cols.next()) else {
            bail!("{}:{}: expected `file,label,class`", csv.display(), n + 1);
        };
        let label: usize = label
            .parse()
            .with_context(|| format!("{}:{}: bad label", csv.display(), n + 1))?;
        clouds.push(read_xyz(dir.join(file))?.with_label(label));
    }
    Ok(Dataset::new(clouds, names.len())?)
}

pub fn train_cmd(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let mapper = cfg.mapper()?;
    let data = load_split(&cfg.dataset_dir(), "train")?;
    let run = cfg.run_dir();
    create_dir(&run)?;
    let outcome = train(&mapper, &data, &cfg.train)
        .with_context(|| format!("training {}", mapper.name()))?;
    save_checkpoint(&outcome.net, run.join("model"))?;
    write_loss_csv(run.join("loss.csv"), &outcome.loss_history)?;
    write_json(
        &run.join("pipeline.json"),
        &RunRecord {
            mapper,
            train: cfg.train.clone(),
        },
    )?;
    println!(
        "trained {} for {} epochs, final loss {:.4}",
        cfg.pipeline,
        outcome.loss_history.len(),
        outcome.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

/// The trained pipeline recorded under the run directory.
fn load_pipeline(cfg: &ExperimentConfig) -> Result<Pipeline> {
    let run = cfg.run_dir();
    let record: RunRecord = read_json(&run.join("pipeline.json"))
        .with_context(|| format!("no trained {} pipeline (run `pcd train` first)", cfg.pipeline))?;
    let net = load_checkpoint(run.join("model"))?;
    Ok(Pipeline::new(record.mapper, net)?)
}

pub fn eval_cmd(cfg: &ExperimentConfig, split: &str) -> Result<Metrics> {
    cfg.validate()?;
    if !SPLITS.contains(&split) {
        bail!("unknown split `{split}`");
    }
    let pipeline = load_pipeline(cfg)?;
    let data = load_split(&cfg.dataset_dir(), split)?;
    let e = evaluate(&pipeline.net, &pipeline.mapper, &data)?;
    let m = Metrics {
        pipeline: cfg.pipeline.clone(),
        split: split.into(),
        samples: data.len(),
        instance_accuracy: e.instance_accuracy,
        class_accuracy: e.class_accuracy,
    };
    write_json(&cfg.run_dir().join("metrics.json"), &m)?;
    println!(
        "{} on {split}: instance {:.2}%, class {:.2}%",
        cfg.pipeline, m.instance_accuracy, m.class_accuracy
    );
    Ok(m)
}

pub fn attack_cmd(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let pipeline = load_pipeline(cfg)?;
    let data = load_split(&cfg.dataset_dir(), "test")?;
    let report = attack_suite(&pipeline, &data, cfg.epsilon, cfg.attack_steps)?;
    let run = cfg.run_dir();
    report.write_json(run.join("attack_report.json"))?;
    report.write_samples_csv(run.join("attack_samples.csv"))?;
    println!(
        "{}: clean {:.2}%, attacked {:.2}%, ASR {:.2}%",
        cfg.pipeline, report.clean_accuracy, report.attacked_accuracy, report.attack_success_rate
    );
    Ok(())
}

pub fn export_images(cfg: &ExperimentConfig, split: &str, count: usize) -> Result<()> {
    cfg.validate()?;
    let mapper = cfg.mapper()?;
    let data = load_split(&cfg.dataset_dir(), split)?;
    let dir = cfg.run_dir().join("images");
    create_dir(&dir)?;
    let ext = if mapper.channels() == 3 { "ppm" } else { "pgm" };
    for (i, cloud) in data.clouds.iter().take(count).enumerate() {
        let img = mapper.map(cloud)?;
        write_netpbm(dir.join(format!("{split}_{i:04}.{ext}")), &img)?;
    }
    println!("wrote {} images to {}", count.min(data.len()), dir.display());
    Ok(())
}

//! Checkpoints: parameters as a flat little-endian `f64` blob next to a
//! JSON manifest of names and shapes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Param, TinyNet};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub in_channels: usize,
    pub num_classes: usize,
    pub input_side: usize,
    /// Parameter tensors in blob order.
    pub params: Vec<Param>,
}

/// Write `<stem>.bin` and `<stem>.json`.
pub fn save_checkpoint(net: &TinyNet, stem: impl AsRef<Path>) -> Result<()> {
    let stem = stem.as_ref();
    let manifest = CheckpointManifest {
        in_channels: net.in_channels,
        num_classes: net.num_classes,
        input_side: net.input_side,
        params: net.params.clone(),
    };
    let mut blob = Vec::with_capacity(net.parameter_count() * 8);
    for p in &net.params {
        for v in &p.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let bin = stem.with_extension("bin");
    fs::write(&bin, blob).map_err(|e| Error::io(&bin, e))?;
    let json = stem.with_extension("json");
    fs::write(&json, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&json, e))
}

pub fn load_checkpoint(stem: impl AsRef<Path>) -> Result<TinyNet> {
    let stem = stem.as_ref();
    let json = stem.with_extension("json");
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    let bin = stem.with_extension("bin");
    let blob = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;

    let mut net = TinyNet::new(manifest.in_channels, manifest.num_classes, manifest.input_side, 0)?;
    let want: Vec<(String, Vec<usize>)> = net.params.iter().map(|p| (p.name.clone(), p.shape.clone())).collect();
    let got: Vec<(String, Vec<usize>)> = manifest.params.iter().map(|p| (p.name.clone(), p.shape.clone())).collect();
    if want != got {
        return Err(Error::Shape(format!("{}: parameter layout does not match TinyNet", json.display())));
    }
    if blob.len() != net.parameter_count() * 8 {
        return Err(Error::Shape(format!(
            "{}: expected {} bytes, found {}",
            bin.display(),
            net.parameter_count() * 8,
            blob.len()
        )));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")));
    for p in &mut net.params {
        for v in &mut p.data {
            *v = values.next().expect("length checked");
        }
    }
    Ok(net)
}

/// `epoch,loss` lines.
pub fn write_loss_csv(path: impl AsRef<Path>, history: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        out.push_str(&format!("{e},{l}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

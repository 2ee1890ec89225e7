//! Line-oriented `key = value` configuration files for model and training
//! hyperparameters. Unknown keys are rejected; omitted keys keep their
//! defaults.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gpcrlm::model::ModelConfig;
use gpcrlm::train::{Monitor, TrainConfig};

pub fn parse_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", path.display(), no + 1);
        };
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn set_usize(target: &mut usize, kv: &BTreeMap<String, String>, key: &str) -> Result<()> {
    if let Some(v) = kv.get(key) {
        *target = v.parse().with_context(|| format!("bad value for {key}"))?;
    }
    Ok(())
}

fn set_f64(target: &mut f64, kv: &BTreeMap<String, String>, key: &str) -> Result<()> {
    if let Some(v) = kv.get(key) {
        *target = v.parse().with_context(|| format!("bad value for {key}"))?;
    }
    Ok(())
}

const MODEL_KEYS: [&str; 9] = [
    "n_layers", "n_heads", "d_model", "d_ff", "max_len", "vocab_size", "head_h1", "head_h2",
    "dropout",
];

/// Loads a model configuration on top of the desk-scale defaults.
pub fn model_config_from_file(path: &Path) -> Result<ModelConfig> {
    let kv = parse_kv(path)?;
    for key in kv.keys() {
        if !MODEL_KEYS.contains(&key.as_str()) {
            bail!("unknown model config key `{key}`");
        }
    }
    let mut c = ModelConfig::desk();
    set_usize(&mut c.n_layers, &kv, "n_layers")?;
    set_usize(&mut c.n_heads, &kv, "n_heads")?;
    set_usize(&mut c.d_model, &kv, "d_model")?;
    set_usize(&mut c.d_ff, &kv, "d_ff")?;
    set_usize(&mut c.max_len, &kv, "max_len")?;
    set_usize(&mut c.vocab_size, &kv, "vocab_size")?;
    set_usize(&mut c.head_h1, &kv, "head_h1")?;
    set_usize(&mut c.head_h2, &kv, "head_h2")?;
    set_f64(&mut c.dropout, &kv, "dropout")?;
    c.validate()?;
    Ok(c)
}

const TRAIN_KEYS: [&str; 12] = [
    "lr0",
    "beta1",
    "beta2",
    "eps",
    "batch_size",
    "epochs",
    "factor",
    "patience",
    "min_delta",
    "monitor",
    "split_ratio",
    "n_runs",
];

/// Loads a training configuration on top of the defaults. The seed comes
/// from the command line, never from the file.
pub fn train_config_from_file(path: &Path) -> Result<TrainConfig> {
    let kv = parse_kv(path)?;
    for key in kv.keys() {
        if !TRAIN_KEYS.contains(&key.as_str()) {
            bail!("unknown train config key `{key}`");
        }
    }
    let mut c = TrainConfig::default();
    set_f64(&mut c.lr0, &kv, "lr0")?;
    set_f64(&mut c.beta1, &kv, "beta1")?;
    set_f64(&mut c.beta2, &kv, "beta2")?;
    set_f64(&mut c.eps, &kv, "eps")?;
    set_usize(&mut c.batch_size, &kv, "batch_size")?;
    set_usize(&mut c.epochs, &kv, "epochs")?;
    set_f64(&mut c.factor, &kv, "factor")?;
    set_usize(&mut c.patience, &kv, "patience")?;
    set_f64(&mut c.min_delta, &kv, "min_delta")?;
    set_f64(&mut c.split_ratio, &kv, "split_ratio")?;
    set_usize(&mut c.n_runs, &kv, "n_runs")?;
    if let Some(v) = kv.get("monitor") {
        c.monitor = match v.as_str() {
            "train_loss" => Monitor::TrainLoss,
            "test_loss" => Monitor::TestLoss,
            other => bail!("monitor must be train_loss or test_loss, got `{other}`"),
        };
    }
    c.validate()?;
    Ok(c)
}

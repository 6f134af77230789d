//! Flat key/value experiment configs with `--set key=value` overrides.
//! Every resolved config is echoed into the output directory.

use anyhow::{anyhow, bail, Context, Result};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// Every key any command understands; unknown keys are rejected so a
/// typo cannot silently fall back to a default.
const KNOWN_KEYS: &[&str] = &[
    // shared
    "seed",
    // model dimensions (train-teacher)
    "enc_layers",
    "dec_layers",
    "d_model",
    "n_heads",
    "ffn_dim",
    "max_positions",
    "tie_output_embedding",
    // datasets
    "train",
    "val",
    "test",
    // schedule
    "max_epochs",
    "patience",
    "evals_per_epoch",
    "lr",
    "batch_size",
    "freeze_encoder",
    "freeze_embeddings",
    "stop_metric",
    "warmup_frac",
    // distillation
    "method",
    "teacher",
    "model",
    "student_size",
    "init",
    "alpha_logits",
    "alpha_data",
    "alpha_hidn",
    "pl_files",
    "pl_mode",
    // generation
    "beam_size",
    "max_len",
    "length_penalty",
    // gen-data
    "task",
    "k",
    "n_train",
    "n_val",
    "n_test",
    "doc_len_min",
    "doc_len_max",
    "vocab_size",
    // bench
    "count",
    "mode",
    "batch",
    "reps",
    "enc_layers_range",
    "dec_layers_range",
    "d_model_range",
    "ffn_dim_range",
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    map: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Config> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let content = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (i, line) in content.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| anyhow!("config line {} is not key=value: {line:?}", i + 1))?;
                insert_checked(&mut map, k.trim(), v.trim())?;
            }
        }
        for set in sets {
            let (k, v) = set
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects key=value, got {set:?}"))?;
            insert_checked(&mut map, k.trim(), v.trim())?;
        }
        Ok(Config { map })
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.map.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| anyhow!("missing required config key {key:?}"))
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .with_context(|| format!("config key {key}={raw:?} is not an integer")),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .with_context(|| format!("config key {key}={raw:?} is not an integer")),
        }
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .with_context(|| format!("config key {key}={raw:?} is not a number")),
        }
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(raw) => bail!("config key {key}={raw:?} is not true/false"),
        }
    }

    /// Comma-separated integer list.
    pub fn get_usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(raw) => raw
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse()
                        .with_context(|| format!("config key {key}: bad entry {f:?}"))
                })
                .collect(),
        }
    }

    /// Sorted key=value echo for provenance.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

fn insert_checked(map: &mut BTreeMap<String, String>, key: &str, value: &str) -> Result<()> {
    if !KNOWN_KEYS.contains(&key) {
        bail!("unknown config key {key:?}");
    }
    map.insert(key.to_string(), value.to_string());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_comments_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, "# experiment\nmethod = sft\nseed=3  # trailing\n").unwrap();
        let cfg = Config::load(Some(&path), &["seed=7".to_string()]).unwrap();
        assert_eq!(cfg.get("method"), Some("sft"));
        assert_eq!(cfg.get_u64("seed", 0).unwrap(), 7, "--set wins");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::load(None, &["methud=sft".to_string()]).unwrap_err();
        assert!(err.to_string().contains("methud"));
    }

    #[test]
    fn echo_is_sorted_and_round_trippable() {
        let cfg = Config::load(None, &["seed=1".into(), "method=kd".into()]).unwrap();
        assert_eq!(cfg.echo(), "method=kd\nseed=1\n");
    }
}

//! Checkpoint files: a text key/value header (config fields, format
//! version, endianness, optional vocabulary), an offset index of named
//! parameter blobs, then the blobs as little-endian `f32`.
//!
//! Save casts `f64 -> f32`; load widens back. `f32 -> f64` is exact, so
//! load followed by save reproduces the file byte for byte.

use super::{ModelConfig, ModelParams, Seq2SeqModel};
use crate::corpus::Vocabulary;
use crate::Tensor;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

const MAGIC: &str = "s2s-checkpoint";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic line)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(String),
    #[error("unsupported endianness {0:?}")]
    UnsupportedEndianness(String),
    #[error("malformed header line {lineno}: {line:?}")]
    MalformedHeader { lineno: usize, line: String },
    #[error("missing header key {0}")]
    MissingKey(&'static str),
    #[error("bad value for {key}: {value:?}")]
    BadValue { key: &'static str, value: String },
    #[error("parameter table mismatch: {0}")]
    ParamMismatch(String),
    #[error("blob section truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
}

fn header_config_lines(config: &ModelConfig) -> String {
    format!(
        "vocab_size={}\nd_model={}\nn_heads={}\nffn_dim={}\nenc_layers={}\ndec_layers={}\nmax_positions={}\ntie_output_embedding={}\n",
        config.vocab_size,
        config.d_model,
        config.n_heads,
        config.ffn_dim,
        config.enc_layers,
        config.dec_layers,
        config.max_positions,
        config.tie_output_embedding,
    )
}

/// Write a checkpoint. The file is staged under a temporary name in the
/// same directory and renamed into place on success.
pub fn save_checkpoint(
    model: &Seq2SeqModel,
    vocab: Option<&Vocabulary>,
    path: &Path,
) -> Result<(), CheckpointError> {
    let named = model.named_params();
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("format_version={FORMAT_VERSION}\n"));
    header.push_str("endianness=little\n");
    header.push_str("dtype=f32\n");
    header.push_str(&header_config_lines(&model.config));
    if let Some(v) = vocab {
        let tokens: Vec<&str> = v.tokens().collect();
        header.push_str(&format!(
            "vocab_json={}\n",
            serde_json::to_string(&tokens).expect("token list serializes")
        ));
    }
    header.push_str(&format!("param_count={}\n", named.len()));
    let mut offset: usize = 0;
    for (name, tensor) in &named {
        header.push_str(&format!("param {name} {offset} {}\n", tensor.numel()));
        offset += tensor.numel() * 4;
    }
    header.push_str("end_header\n");

    let mut bytes = Vec::with_capacity(header.len() + offset);
    bytes.extend_from_slice(header.as_bytes());
    for (_, tensor) in &named {
        for &v in tensor.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }

    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_usize(map: &BTreeMap<&str, &str>, key: &'static str) -> Result<usize, CheckpointError> {
    let raw = map.get(key).ok_or(CheckpointError::MissingKey(key))?;
    raw.parse().map_err(|_| CheckpointError::BadValue {
        key,
        value: raw.to_string(),
    })
}

/// Load a checkpoint saved by [`save_checkpoint`]. Returns the model and
/// the vocabulary if one was embedded.
pub fn load_checkpoint(path: &Path) -> Result<(Seq2SeqModel, Option<Vocabulary>), CheckpointError> {
    let bytes = fs::read(path)?;
    let header_end = find_header_end(&bytes)?;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| CheckpointError::BadMagic)?;
    let blob = &bytes[header_end..];

    let mut lines = header.lines().enumerate();
    let (_, magic) = lines.next().ok_or(CheckpointError::BadMagic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }

    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    let mut params: Vec<(String, usize, usize)> = Vec::new();
    for (lineno, line) in lines {
        if line == "end_header" {
            break;
        }
        if let Some(rest) = line.strip_prefix("param ") {
            let mut fields = rest.split(' ');
            let (name, off, numel) = match (fields.next(), fields.next(), fields.next()) {
                (Some(n), Some(o), Some(c)) => (n, o, c),
                _ => {
                    return Err(CheckpointError::MalformedHeader {
                        lineno: lineno + 1,
                        line: line.to_string(),
                    })
                }
            };
            let off: usize = off.parse().map_err(|_| CheckpointError::MalformedHeader {
                lineno: lineno + 1,
                line: line.to_string(),
            })?;
            let numel: usize = numel.parse().map_err(|_| CheckpointError::MalformedHeader {
                lineno: lineno + 1,
                line: line.to_string(),
            })?;
            params.push((name.to_string(), off, numel));
        } else if let Some((k, v)) = line.split_once('=') {
            kv.insert(k, v);
        } else {
            return Err(CheckpointError::MalformedHeader {
                lineno: lineno + 1,
                line: line.to_string(),
            });
        }
    }

    let version = kv
        .get("format_version")
        .ok_or(CheckpointError::MissingKey("format_version"))?;
    if version.parse::<u32>().ok() != Some(FORMAT_VERSION) {
        return Err(CheckpointError::UnsupportedVersion(version.to_string()));
    }
    let endianness = kv
        .get("endianness")
        .ok_or(CheckpointError::MissingKey("endianness"))?;
    if *endianness != "little" {
        return Err(CheckpointError::UnsupportedEndianness(endianness.to_string()));
    }

    let config = ModelConfig {
        vocab_size: parse_usize(&kv, "vocab_size")?,
        d_model: parse_usize(&kv, "d_model")?,
        n_heads: parse_usize(&kv, "n_heads")?,
        ffn_dim: parse_usize(&kv, "ffn_dim")?,
        enc_layers: parse_usize(&kv, "enc_layers")?,
        dec_layers: parse_usize(&kv, "dec_layers")?,
        max_positions: parse_usize(&kv, "max_positions")?,
        tie_output_embedding: match kv.get("tie_output_embedding") {
            Some(&"true") => true,
            Some(&"false") => false,
            other => {
                return Err(CheckpointError::BadValue {
                    key: "tie_output_embedding",
                    value: other.map(|s| s.to_string()).unwrap_or_default(),
                })
            }
        },
    };

    let declared = parse_usize(&kv, "param_count")?;
    if declared != params.len() {
        return Err(CheckpointError::ParamMismatch(format!(
            "header declares {declared} params, index lists {}",
            params.len()
        )));
    }

    let vocab = match kv.get("vocab_json") {
        Some(raw) => {
            let tokens: Vec<String> =
                serde_json::from_str(raw).map_err(|_| CheckpointError::BadValue {
                    key: "vocab_json",
                    value: raw.to_string(),
                })?;
            Some(
                Vocabulary::from_token_list(tokens).map_err(|e| {
                    CheckpointError::ParamMismatch(format!("embedded vocabulary invalid: {e}"))
                })?,
            )
        }
        None => None,
    };

    // Seed value is irrelevant: every parameter is overwritten below.
    let mut model = Seq2SeqModel::new_random(config, 0)
        .map_err(|e| CheckpointError::ParamMismatch(e.to_string()))?;
    let loaded: BTreeMap<String, (usize, usize)> = params
        .iter()
        .map(|(n, o, c)| (n.clone(), (*o, *c)))
        .collect();
    let read_blob = |offset: usize, numel: usize| -> Result<Vec<f64>, CheckpointError> {
        let need = offset + numel * 4;
        if need > blob.len() {
            return Err(CheckpointError::Truncated {
                need,
                have: blob.len(),
            });
        }
        Ok(blob[offset..need]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    };
    fill_params(&mut model.params, &loaded, read_blob)?;
    Ok((model, vocab))
}

fn fill_params(
    params: &mut ModelParams<Tensor>,
    index: &BTreeMap<String, (usize, usize)>,
    read_blob: impl Fn(usize, usize) -> Result<Vec<f64>, CheckpointError>,
) -> Result<(), CheckpointError> {
    for (name, tensor) in params.named_mut() {
        let &(offset, numel) = index
            .get(&name)
            .ok_or_else(|| CheckpointError::ParamMismatch(format!("missing parameter {name}")))?;
        if numel != tensor.numel() {
            return Err(CheckpointError::ParamMismatch(format!(
                "parameter {name}: expected {} elements, file has {numel}",
                tensor.numel()
            )));
        }
        tensor.data_mut().copy_from_slice(&read_blob(offset, numel)?);
        tensor.zero_grad();
    }
    Ok(())
}

fn find_header_end(bytes: &[u8]) -> Result<usize, CheckpointError> {
    let needle = b"end_header\n";
    let mut i = 0;
    while i + needle.len() <= bytes.len() {
        if &bytes[i..i + needle.len()] == needle && (i == 0 || bytes[i - 1] == b'\n') {
            return Ok(i + needle.len());
        }
        i += 1;
    }
    Err(CheckpointError::BadMagic)
}

//! Synthetic desk-scale corpora and dataset I/O.
//!
//! Two task regimes: `LeadK` is extractive (the target is the first k
//! source tokens, mirroring lead-biased news summaries) and `KeyTerm` is
//! abstractive (rare key tokens are planted in the source and the target
//! is their sorted listing behind a task token, so targets are not
//! contiguous source spans). Tokenization is whitespace word splitting
//! throughout, matching the scoring protocol.

use crate::{BOS_ID, EOS_ID, PAD_ID, UNK_ID};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record on line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),
    #[error("token id {0} not in vocabulary")]
    UnknownTokenId(u32),
    #[error("reserved token {0:?} may not be redefined")]
    ReservedToken(String),
}

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

const RESERVED: [&str; 4] = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN];

/// Token ↔ id bijection with fixed reserved ids PAD=0, BOS=1, EOS=2, UNK=3.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from raw texts: distinct whitespace tokens, sorted, assigned
    /// ids from 4 upward. Deterministic given the token set.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<Self, CorpusError> {
        let mut distinct = std::collections::BTreeSet::new();
        for text in texts {
            for tok in text.split_whitespace() {
                if RESERVED.contains(&tok) {
                    return Err(CorpusError::ReservedToken(tok.to_string()));
                }
                if !distinct.contains(tok) {
                    distinct.insert(tok.to_string());
                }
            }
        }
        Ok(Self::from_words(distinct.into_iter().collect()))
    }

    fn from_words(words: Vec<String>) -> Self {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(words);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Rebuild from a full token table (reserved entries first), as
    /// embedded in checkpoints.
    pub fn from_token_list(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.len() < RESERVED.len()
            || tokens[..RESERVED.len()] != RESERVED.map(|s| s.to_string())
        {
            return Err(CorpusError::InfeasibleParams(
                "token table must start with the four reserved tokens".into(),
            ));
        }
        let index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if index.len() != tokens.len() {
            return Err(CorpusError::InfeasibleParams(
                "token table contains duplicates".into(),
            ));
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    /// All tokens in id order, reserved entries included.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|s| s.as_str())
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    /// Unknown words map to UNK, never an error.
    pub fn encode_token(&self, tok: &str) -> u32 {
        self.index.get(tok).copied().unwrap_or(UNK_ID)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .map(|t| self.encode_token(t))
            .collect()
    }

    /// Detokenize, skipping PAD/BOS/EOS and rendering UNK literally.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut words: Vec<&str> = Vec::with_capacity(ids.len());
        for &id in ids {
            if id == PAD_ID || id == BOS_ID || id == EOS_ID {
                continue;
            }
            words.push(self.token(id).unwrap_or(UNK_TOKEN));
        }
        words.join(" ")
    }
}

/// Where a record's target came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Gold,
    Pseudo { teacher_id: String },
}

impl Origin {
    fn as_field(&self) -> String {
        match self {
            Origin::Gold => "gold".to_string(),
            Origin::Pseudo { teacher_id } => format!("pseudo:{teacher_id}"),
        }
    }

    fn parse(raw: &str) -> Option<Origin> {
        if raw == "gold" {
            return Some(Origin::Gold);
        }
        raw.strip_prefix("pseudo:").map(|t| Origin::Pseudo {
            teacher_id: t.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub source: Vec<u32>,
    pub target: Vec<u32>,
    pub origin: Origin,
}

/// (source, target) token-sequence pairs plus their vocabulary.
#[derive(Debug, Clone)]
pub struct PairDataset {
    pub records: Vec<PairRecord>,
    pub vocab: Vocabulary,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Split into train/val/test by index ranges; disjoint by construction.
    pub fn split3(&self, n_train: usize, n_val: usize) -> (PairDataset, PairDataset, PairDataset) {
        assert!(
            n_train + n_val <= self.len(),
            "split sizes exceed dataset size"
        );
        let slice = |range: std::ops::Range<usize>| PairDataset {
            records: self.records[range].to_vec(),
            vocab: self.vocab.clone(),
        };
        (
            slice(0..n_train),
            slice(n_train..n_train + n_val),
            slice(n_train + n_val..self.len()),
        )
    }
}

/// Toy generation regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyTask {
    /// Target is the first `k` source tokens (extractive).
    LeadK(usize),
    /// Target is the sorted planted key tokens behind a task token
    /// (abstractive: never a contiguous source span).
    KeyTerm,
}

const KEYTERM_POOL: usize = 12;
const KEYTERM_MAX_PLANTED: usize = 3;
pub const KEYTERM_TASK_TOKEN: &str = "keys";

/// Deterministic synthetic dataset. `vocab_size` counts reserved ids.
pub fn generate_toy_corpus(
    task: ToyTask,
    n_examples: usize,
    doc_len_range: (usize, usize),
    vocab_size: usize,
    seed: u64,
) -> Result<PairDataset, CorpusError> {
    let (lo, hi) = doc_len_range;
    if lo == 0 || lo > hi {
        return Err(CorpusError::InfeasibleParams(format!(
            "bad doc length range {lo}..{hi}"
        )));
    }
    if n_examples == 0 {
        return Err(CorpusError::InfeasibleParams("n_examples must be > 0".into()));
    }
    let reserved = RESERVED.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    match task {
        ToyTask::LeadK(k) => {
            if k == 0 || k >= lo {
                return Err(CorpusError::InfeasibleParams(format!(
                    "LeadK k={k} must satisfy 0 < k < min doc length {lo}"
                )));
            }
            if vocab_size <= reserved + 1 {
                return Err(CorpusError::InfeasibleParams(
                    "vocab_size leaves no content tokens".into(),
                ));
            }
            let n_content = vocab_size - reserved;
            let words: Vec<String> = (0..n_content).map(|i| format!("w{i:03}")).collect();
            let vocab = Vocabulary::from_words({
                let mut w = words.clone();
                w.sort();
                w
            });
            let content_ids: Vec<u32> = words.iter().map(|w| vocab.encode_token(w)).collect();
            let mut records = Vec::with_capacity(n_examples);
            for _ in 0..n_examples {
                let len = rng.gen_range(lo..=hi);
                let source: Vec<u32> = (0..len)
                    .map(|_| content_ids[rng.gen_range(0..content_ids.len())])
                    .collect();
                let target = source[..k].to_vec();
                records.push(PairRecord {
                    source,
                    target,
                    origin: Origin::Gold,
                });
            }
            Ok(PairDataset { records, vocab })
        }
        ToyTask::KeyTerm => {
            if vocab_size <= reserved + KEYTERM_POOL + 1 + 4 {
                return Err(CorpusError::InfeasibleParams(format!(
                    "vocab_size {vocab_size} too small for the key pool"
                )));
            }
            if lo <= KEYTERM_MAX_PLANTED {
                return Err(CorpusError::InfeasibleParams(format!(
                    "min doc length {lo} must exceed the max planted keys {KEYTERM_MAX_PLANTED}"
                )));
            }
            let n_common = vocab_size - reserved - KEYTERM_POOL - 1;
            let mut words: Vec<String> = (0..n_common).map(|i| format!("w{i:03}")).collect();
            let keys: Vec<String> = (0..KEYTERM_POOL).map(|i| format!("k{i:02}")).collect();
            words.extend(keys.iter().cloned());
            words.push(KEYTERM_TASK_TOKEN.to_string());
            words.sort();
            let vocab = Vocabulary::from_words(words);
            let common_ids: Vec<u32> = (0..n_common)
                .map(|i| vocab.encode_token(&format!("w{i:03}")))
                .collect();
            let key_ids: Vec<u32> = keys.iter().map(|k| vocab.encode_token(k)).collect();
            let task_id = vocab.encode_token(KEYTERM_TASK_TOKEN);
            let mut records = Vec::with_capacity(n_examples);
            for _ in 0..n_examples {
                let len = rng.gen_range(lo..=hi);
                let n_keys = rng.gen_range(1..=KEYTERM_MAX_PLANTED);
                let mut source: Vec<u32> = (0..len)
                    .map(|_| common_ids[rng.gen_range(0..common_ids.len())])
                    .collect();
                let mut chosen = key_ids.clone();
                chosen.shuffle(&mut rng);
                chosen.truncate(n_keys);
                let mut positions: Vec<usize> = (0..len).collect();
                positions.shuffle(&mut rng);
                positions.truncate(n_keys);
                for (&pos, &key) in positions.iter().zip(&chosen) {
                    source[pos] = key;
                }
                let mut sorted_keys = chosen.clone();
                sorted_keys.sort_unstable();
                let mut target = Vec::with_capacity(n_keys + 1);
                target.push(task_id);
                target.extend(sorted_keys);
                records.push(PairRecord {
                    source,
                    target,
                    origin: Origin::Gold,
                });
            }
            Ok(PairDataset { records, vocab })
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    source: String,
    target: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    origin: Option<String>,
}

/// One JSON record per line, UTF-8, fields `source`/`target`/`origin`.
pub fn save_jsonl(dataset: &PairDataset, path: &Path) -> Result<(), CorpusError> {
    let mut out = String::new();
    for rec in &dataset.records {
        let line = JsonlRecord {
            source: dataset.vocab.decode(&rec.source),
            target: dataset.vocab.decode(&rec.target),
            origin: Some(rec.origin.as_field()),
        };
        out.push_str(&serde_json::to_string(&line).expect("record serializes"));
        out.push('\n');
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(out.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_jsonl(content: &str) -> Result<Vec<(String, String, Origin)>, CorpusError> {
    let mut rows = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
                line: i + 1,
                message: e.to_string(),
            })?;
        let origin = match rec.origin.as_deref() {
            None => Origin::Gold,
            Some(raw) => Origin::parse(raw).ok_or_else(|| CorpusError::MalformedLine {
                line: i + 1,
                message: format!("unrecognized origin {raw:?}"),
            })?,
        };
        if rec.source.split_whitespace().next().is_none() {
            return Err(CorpusError::MalformedLine {
                line: i + 1,
                message: "empty source".into(),
            });
        }
        if rec.target.split_whitespace().next().is_none() {
            return Err(CorpusError::MalformedLine {
                line: i + 1,
                message: "empty target".into(),
            });
        }
        rows.push((rec.source, rec.target, origin));
    }
    Ok(rows)
}

/// Load a dataset, building its vocabulary from the file's own texts
/// (deterministic: sorted distinct tokens).
pub fn load_jsonl(path: &Path) -> Result<PairDataset, CorpusError> {
    let content = fs::read_to_string(path)?;
    let rows = parse_jsonl(&content)?;
    let vocab = Vocabulary::build(
        rows.iter()
            .flat_map(|(s, t, _)| [s.as_str(), t.as_str()]),
    )?;
    let records = rows
        .into_iter()
        .map(|(s, t, origin)| PairRecord {
            source: vocab.encode(&s),
            target: vocab.encode(&t),
            origin,
        })
        .collect();
    Ok(PairDataset { records, vocab })
}

/// Load a dataset under an existing vocabulary (out-of-vocabulary words
/// become UNK). Used when the id space must match a trained model.
pub fn load_jsonl_with_vocab(path: &Path, vocab: &Vocabulary) -> Result<PairDataset, CorpusError> {
    let content = fs::read_to_string(path)?;
    let rows = parse_jsonl(&content)?;
    let records = rows
        .into_iter()
        .map(|(s, t, origin)| PairRecord {
            source: vocab.encode(&s),
            target: vocab.encode(&t),
            origin,
        })
        .collect();
    Ok(PairDataset {
        records,
        vocab: vocab.clone(),
    })
}

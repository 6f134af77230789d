//! Pseudo-label generation and dataset combination.

use super::DistillError;
use crate::corpus::{CorpusError, Origin, PairDataset, PairRecord, Vocabulary};
use crate::seq2seq::{beam_search, BeamParams, Seq2SeqModel};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoRecord {
    pub source: Vec<u32>,
    pub pseudo_target: Vec<u32>,
}

/// One pseudo-target per training source, with generation provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub records: Vec<PseudoRecord>,
    pub teacher_id: String,
    pub beam_size: usize,
    pub length_penalty: f64,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// View as training pairs with pseudo provenance.
    pub fn to_pair_dataset(&self, vocab: &Vocabulary) -> PairDataset {
        PairDataset {
            records: self
                .records
                .iter()
                .map(|r| PairRecord {
                    source: r.source.clone(),
                    target: r.pseudo_target.clone(),
                    origin: Origin::Pseudo {
                        teacher_id: self.teacher_id.clone(),
                    },
                })
                .collect(),
            vocab: vocab.clone(),
        }
    }
}

/// Beam-search the frozen teacher over every training source. The output
/// is deterministic and ordered like the dataset.
pub fn generate_pseudolabels(
    teacher: &Seq2SeqModel,
    dataset: &PairDataset,
    beam: &BeamParams,
    teacher_id: &str,
) -> Result<PseudoLabelSet, DistillError> {
    if dataset.is_empty() {
        return Err(DistillError::EmptyDataset);
    }
    let mut records = Vec::with_capacity(dataset.len());
    for (index, rec) in dataset.records.iter().enumerate() {
        let pseudo_target = beam_search(
            teacher,
            &rec.source,
            beam.beam_size,
            beam.max_len,
            beam.length_penalty,
        )?;
        if pseudo_target.is_empty() {
            return Err(DistillError::EmptyPseudoTarget { index });
        }
        records.push(PseudoRecord {
            source: rec.source.clone(),
            pseudo_target,
        });
    }
    Ok(PseudoLabelSet {
        records,
        teacher_id: teacher_id.to_string(),
        beam_size: beam.beam_size,
        length_penalty: beam.length_penalty,
    })
}

/// Training-set composition modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineMode {
    /// Original data only.
    Orig,
    /// The teacher's own pseudo-labels only (first set).
    Pl,
    /// Original data plus the teacher's pseudo-labels.
    OrigPlusPl,
    /// Original data plus every provided pseudo-label set.
    OrigPlusAllPl,
}

impl CombineMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "orig" => Some(CombineMode::Orig),
            "pl" => Some(CombineMode::Pl),
            "orig_pl" => Some(CombineMode::OrigPlusPl),
            "orig_all_pl" => Some(CombineMode::OrigPlusAllPl),
            _ => None,
        }
    }
}

fn check_sources(orig: &PairDataset, set: &PseudoLabelSet) -> Result<(), DistillError> {
    if set.len() != orig.len() {
        return Err(DistillError::SourceMismatch { index: set.len().min(orig.len()) });
    }
    for (index, (a, b)) in orig.records.iter().zip(&set.records).enumerate() {
        if a.source != b.source {
            return Err(DistillError::SourceMismatch { index });
        }
    }
    Ok(())
}

/// Deterministic composition: original pairs first, then pseudo-label
/// sets in argument order. Every set must share the original sources.
pub fn combine_datasets(
    orig: &PairDataset,
    pl_sets: &[PseudoLabelSet],
    mode: CombineMode,
) -> Result<PairDataset, DistillError> {
    for set in pl_sets {
        check_sources(orig, set)?;
    }
    let needs_pl = !matches!(mode, CombineMode::Orig);
    if needs_pl && pl_sets.is_empty() {
        return Err(DistillError::NoPseudoLabels);
    }
    let pseudo_records = |set: &PseudoLabelSet| -> Vec<PairRecord> {
        set.to_pair_dataset(&orig.vocab).records
    };
    let records = match mode {
        CombineMode::Orig => orig.records.clone(),
        CombineMode::Pl => pseudo_records(&pl_sets[0]),
        CombineMode::OrigPlusPl => {
            let mut r = orig.records.clone();
            r.extend(pseudo_records(&pl_sets[0]));
            r
        }
        CombineMode::OrigPlusAllPl => {
            let mut r = orig.records.clone();
            for set in pl_sets {
                r.extend(pseudo_records(set));
            }
            r
        }
    };
    Ok(PairDataset {
        records,
        vocab: orig.vocab.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct PseudoLine {
    source_text: String,
    pseudo_target_text: String,
    teacher_id: String,
    beam_size: usize,
    length_penalty: f64,
}

/// One record per line with fields source_text, pseudo_target_text,
/// teacher_id, beam_size, length_penalty.
pub fn save_pseudolabels(
    set: &PseudoLabelSet,
    vocab: &Vocabulary,
    path: &Path,
) -> Result<(), DistillError> {
    let mut out = String::new();
    for rec in &set.records {
        let line = PseudoLine {
            source_text: vocab.decode(&rec.source),
            pseudo_target_text: vocab.decode(&rec.pseudo_target),
            teacher_id: set.teacher_id.clone(),
            beam_size: set.beam_size,
            length_penalty: set.length_penalty,
        };
        out.push_str(&serde_json::to_string(&line).expect("record serializes"));
        out.push('\n');
    }
    let tmp = path.with_extension("pl.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(CorpusError::Io)?;
        f.write_all(out.as_bytes()).map_err(CorpusError::Io)?;
        f.sync_all().map_err(CorpusError::Io)?;
    }
    fs::rename(&tmp, path).map_err(CorpusError::Io)?;
    Ok(())
}

/// Load a pseudo-label file under an existing vocabulary. Provenance
/// fields must be uniform across lines.
pub fn load_pseudolabels(path: &Path, vocab: &Vocabulary) -> Result<PseudoLabelSet, DistillError> {
    let content = fs::read_to_string(path).map_err(CorpusError::Io)?;
    let mut records = Vec::new();
    let mut meta: Option<(String, usize, f64)> = None;
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PseudoLine =
            serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
                line: i + 1,
                message: e.to_string(),
            })?;
        let this_meta = (rec.teacher_id.clone(), rec.beam_size, rec.length_penalty);
        match &meta {
            None => meta = Some(this_meta),
            Some(m) if *m != this_meta => {
                return Err(CorpusError::MalformedLine {
                    line: i + 1,
                    message: "inconsistent provenance fields".into(),
                }
                .into())
            }
            _ => {}
        }
        let pseudo_target = vocab.encode(&rec.pseudo_target_text);
        if pseudo_target.is_empty() {
            return Err(CorpusError::MalformedLine {
                line: i + 1,
                message: "empty pseudo target".into(),
            }
            .into());
        }
        records.push(PseudoRecord {
            source: vocab.encode(&rec.source_text),
            pseudo_target,
        });
    }
    let (teacher_id, beam_size, length_penalty) = meta.ok_or(DistillError::EmptyDataset)?;
    Ok(PseudoLabelSet {
        records,
        teacher_id,
        beam_size,
        length_penalty,
    })
}

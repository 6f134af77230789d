//! Greedy and beam-search decoding.
//!
//! Both return generated tokens without BOS or the terminating EOS.
//! Scores are sums of token log-probabilities divided by
//! `len^length_penalty` where `len` counts generated tokens including
//! EOS. Ties break toward the lexicographically smaller token sequence,
//! then the earlier completion step, so decoding is a pure function of
//! model and inputs.

use super::{ModelError, Seq2SeqModel};
use crate::tensor::{log_softmax, Tensor};
use crate::{BOS_ID, EOS_ID};
use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamParams {
    pub beam_size: usize,
    pub max_len: usize,
    pub length_penalty: f64,
}

impl Default for BeamParams {
    fn default() -> Self {
        BeamParams {
            beam_size: 4,
            max_len: 32,
            length_penalty: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Hypothesis {
    /// Generated tokens; includes EOS when finished by EOS.
    tokens: Vec<u32>,
    sum_logp: f64,
    finished: bool,
    finished_step: usize,
}

impl Hypothesis {
    fn score(&self, length_penalty: f64) -> f64 {
        let len = self.tokens.len().max(1) as f64;
        self.sum_logp / len.powf(length_penalty)
    }
}

fn compare_hyps(a: &Hypothesis, b: &Hypothesis, length_penalty: f64) -> Ordering {
    b.score(length_penalty)
        .partial_cmp(&a.score(length_penalty))
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
        .then_with(|| a.finished_step.cmp(&b.finished_step))
}

fn strip_eos(mut tokens: Vec<u32>) -> Vec<u32> {
    if tokens.last() == Some(&EOS_ID) {
        tokens.pop();
    }
    tokens
}

fn dec_input_for(prefix: &[u32]) -> Vec<u32> {
    let mut input = Vec::with_capacity(prefix.len() + 1);
    input.push(BOS_ID);
    input.extend_from_slice(prefix);
    input
}

fn next_token_log_probs(
    model: &Seq2SeqModel,
    enc_out: &Tensor,
    source: &[u32],
    prefix: &[u32],
) -> Result<Vec<f64>, ModelError> {
    let dec_input = dec_input_for(prefix);
    let logits = model.decoder_logits_plain(enc_out, source, &dec_input)?;
    let v = model.config.vocab_size;
    let last = &logits.data()[(dec_input.len() - 1) * v..dec_input.len() * v];
    Ok(log_softmax(last)?)
}

/// Argmax token per step until EOS or `max_len` generated tokens.
/// Exact-score ties resolve to the lowest token id.
pub fn greedy_decode(
    model: &Seq2SeqModel,
    source: &[u32],
    max_len: usize,
) -> Result<Vec<u32>, ModelError> {
    let enc_out = model.encode_plain(source)?;
    let mut out: Vec<u32> = Vec::new();
    while out.len() < max_len {
        let lp = next_token_log_probs(model, &enc_out, source, &out)?;
        let mut best = 0usize;
        for (id, &p) in lp.iter().enumerate() {
            if p > lp[best] {
                best = id;
            }
        }
        if best as u32 == EOS_ID {
            break;
        }
        out.push(best as u32);
    }
    Ok(out)
}

/// Breadth-limited best-first search keeping the top `beam_size` partial
/// hypotheses per step. A hypothesis completes when it emits EOS or
/// reaches `max_len` generated tokens.
pub fn beam_search(
    model: &Seq2SeqModel,
    source: &[u32],
    beam_size: usize,
    max_len: usize,
    length_penalty: f64,
) -> Result<Vec<u32>, ModelError> {
    if beam_size < 1 {
        return Err(ModelError::BeamSizeInvalid);
    }
    if max_len > model.config.max_positions {
        return Err(ModelError::SequenceTooLong {
            len: max_len,
            max: model.config.max_positions,
        });
    }
    let enc_out = model.encode_plain(source)?;
    let mut beams = vec![Hypothesis {
        tokens: Vec::new(),
        sum_logp: 0.0,
        finished: false,
        finished_step: usize::MAX,
    }];
    for step in 0..max_len {
        if beams.iter().all(|h| h.finished) {
            break;
        }
        let mut candidates: Vec<Hypothesis> = Vec::new();
        for hyp in &beams {
            if hyp.finished {
                candidates.push(hyp.clone());
                continue;
            }
            let lp = next_token_log_probs(model, &enc_out, source, &hyp.tokens)?;
            for (id, &token_lp) in lp.iter().enumerate() {
                let mut tokens = hyp.tokens.clone();
                tokens.push(id as u32);
                let finished = id as u32 == EOS_ID || tokens.len() == max_len;
                candidates.push(Hypothesis {
                    tokens,
                    sum_logp: hyp.sum_logp + token_lp,
                    finished,
                    finished_step: if finished { step } else { usize::MAX },
                });
            }
        }
        candidates.sort_by(|a, b| compare_hyps(a, b, length_penalty));
        candidates.truncate(beam_size);
        beams = candidates;
    }
    beams.sort_by(|a, b| compare_hyps(a, b, length_penalty));
    Ok(strip_eos(beams.remove(0).tokens))
}

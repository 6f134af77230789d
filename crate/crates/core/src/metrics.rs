//! ROUGE-1/2/L scoring with no pre-scoring text normalization: whitespace
//! word splitting only, case preserved. ROUGE-L is sentence-level LCS.

use crate::corpus::PairDataset;
use crate::seq2seq::{beam_search, BeamParams, ModelError, Seq2SeqModel};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot score an empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Precision / recall / F1 for one metric.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Score for one hypothesis/reference pair. `degenerate` flags the cases
/// where a side had no n-grams (e.g. reference shorter than n), which are
/// reported as zero rather than an error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

impl PairScore {
    fn zero(degenerate: bool) -> Self {
        PairScore {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            degenerate,
        }
    }

    pub fn prf(&self) -> Prf {
        Prf {
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
        }
    }
}

fn ngram_counts<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap: recall = overlap / reference n-grams,
/// precision = overlap / hypothesis n-grams.
pub fn rouge_n(hypothesis: &str, reference: &str, n: usize) -> PairScore {
    assert!(n >= 1, "n must be >= 1");
    let hyp: Vec<&str> = hypothesis.split_whitespace().collect();
    let refr: Vec<&str> = reference.split_whitespace().collect();
    let hyp_counts = ngram_counts(&hyp, n);
    let ref_counts = ngram_counts(&refr, n);
    let hyp_total: usize = hyp_counts.values().sum();
    let ref_total: usize = ref_counts.values().sum();
    if hyp_total == 0 || ref_total == 0 {
        return PairScore::zero(true);
    }
    let overlap: usize = ref_counts
        .iter()
        .map(|(gram, &rc)| rc.min(hyp_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let p = overlap as f64 / hyp_total as f64;
    let r = overlap as f64 / ref_total as f64;
    PairScore {
        precision: p,
        recall: r,
        f1: f1_of(p, r),
        degenerate: false,
    }
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for &wa in a {
        for (j, &wb) in b.iter().enumerate() {
            curr[j + 1] = if wa == wb {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Word-level longest common subsequence: precision = LCS/|hyp|,
/// recall = LCS/|ref|.
pub fn rouge_l(hypothesis: &str, reference: &str) -> PairScore {
    let hyp: Vec<&str> = hypothesis.split_whitespace().collect();
    let refr: Vec<&str> = reference.split_whitespace().collect();
    if hyp.is_empty() || refr.is_empty() {
        return PairScore::zero(true);
    }
    let lcs = lcs_len(&hyp, &refr) as f64;
    let p = lcs / hyp.len() as f64;
    let r = lcs / refr.len() as f64;
    PairScore {
        precision: p,
        recall: r,
        f1: f1_of(p, r),
        degenerate: false,
    }
}

/// Corpus-level report: unweighted means over examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeReport {
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
    pub n_examples: usize,
}

impl RougeReport {
    /// Single-line record appended to experiment result files.
    pub fn report_line(&self) -> String {
        format!(
            "{{\"rouge1\": {:.6}, \"rouge2\": {:.6}, \"rougeL\": {:.6}, \"n_examples\": {}}}",
            self.rouge1.f1, self.rouge2.f1, self.rouge_l.f1, self.n_examples
        )
    }
}

/// Score hypothesis/reference text pairs.
pub fn score_pairs<'a>(
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<RougeReport, MetricsError> {
    let mut sums = [Prf::default(); 3];
    let mut n = 0usize;
    for (hyp, refr) in pairs {
        let scores = [rouge_n(hyp, refr, 1), rouge_n(hyp, refr, 2), rouge_l(hyp, refr)];
        for (sum, s) in sums.iter_mut().zip(scores) {
            sum.precision += s.precision;
            sum.recall += s.recall;
            sum.f1 += s.f1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::EmptyDataset);
    }
    let mean = |s: Prf| Prf {
        precision: s.precision / n as f64,
        recall: s.recall / n as f64,
        f1: s.f1 / n as f64,
    };
    Ok(RougeReport {
        rouge1: mean(sums[0]),
        rouge2: mean(sums[1]),
        rouge_l: mean(sums[2]),
        n_examples: n,
    })
}

/// Beam-decode every dataset record and score against the gold targets.
pub fn score_corpus(
    model: &Seq2SeqModel,
    dataset: &PairDataset,
    beam: &BeamParams,
) -> Result<RougeReport, MetricsError> {
    if dataset.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let mut pairs = Vec::with_capacity(dataset.len());
    for rec in &dataset.records {
        let decoded = beam_search(
            model,
            &rec.source,
            beam.beam_size,
            beam.max_len,
            beam.length_penalty,
        )?;
        pairs.push((
            dataset.vocab.decode(&decoded),
            dataset.vocab.decode(&rec.target),
        ));
    }
    score_pairs(pairs.iter().map(|(h, r)| (h.as_str(), r.as_str())))
}

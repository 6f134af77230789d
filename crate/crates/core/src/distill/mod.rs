//! Student extraction and distillation losses.
//!
//! Students are initialized by copying maximally spaced decoder layers
//! from the teacher (layer 0 alone for single-layer students). The
//! supervision mapping `phi` pairs each student decoder layer with the
//! last teacher layer of its block, so an L->L' compression teaches each
//! student layer to stand in for L/L' teacher layers. Three losses:
//! cross entropy on data, KL(teacher ‖ student) on logits, and MSE on
//! mapped hidden states, combined as a weighted sum.

mod pseudo;

pub use pseudo::{
    combine_datasets, generate_pseudolabels, load_pseudolabels, save_pseudolabels, CombineMode,
    PseudoLabelSet, PseudoRecord,
};

use crate::corpus::CorpusError;
use crate::seq2seq::{
    random_decoder_layer, BeamParams, HiddenTrace, ModelConfig, ModelError, Seq2SeqModel,
};
use crate::tensor::{softmax, NodeId, Tape, Tensor, TensorError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("invalid layer selection: {0}")]
    LayerSelection(String),
    #[error("donor/student dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("loss shape mismatch: {0}")]
    LossShape(String),
    #[error("phi entry {value} out of range for {teacher_layers} teacher layers")]
    PhiOutOfRange { value: usize, teacher_layers: usize },
    #[error("loss weights must be non-negative with at least one positive")]
    InvalidWeights,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("teacher produced an empty pseudo-target for record {index}")]
    EmptyPseudoTarget { index: usize },
    #[error("pseudo-label set does not share source {index} with the original dataset")]
    SourceMismatch { index: usize },
    #[error("mode requires pseudo-label sets but none were provided")]
    NoPseudoLabels,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

// ── Layer selection and supervision mapping ─────────────────────────

/// Maximally spaced teacher layer indices to copy into an `l_prime`-layer
/// student: always includes 0 and `l - 1`, with interior indices at
/// `round_half_up(i * (l-1) / (l_prime-1))`. A single-layer student
/// copies layer 0.
pub fn select_copy_layers(l: usize, l_prime: usize) -> Result<Vec<usize>, DistillError> {
    if l_prime < 1 || l_prime > l {
        return Err(DistillError::LayerSelection(format!(
            "need 1 <= student depth <= teacher depth, got {l_prime} of {l}"
        )));
    }
    if l_prime == 1 {
        return Ok(vec![0]);
    }
    let idx = (0..l_prime)
        .map(|i| {
            // round-half-up of i*(l-1)/(l_prime-1) in exact integer arithmetic
            (2 * i * (l - 1) + (l_prime - 1)) / (2 * (l_prime - 1))
        })
        .collect();
    Ok(idx)
}

/// Supervision mapping: `phi[l] = ceil((l+1) * L / L') - 1`, partitioning
/// the teacher's layers into `L'` contiguous near-equal blocks, each
/// student layer imitating its block's last layer.
pub fn build_phi(l: usize, l_prime: usize) -> Result<Vec<usize>, DistillError> {
    if l_prime < 1 || l_prime > l {
        return Err(DistillError::LayerSelection(format!(
            "need 1 <= student depth <= teacher depth, got {l_prime} of {l}"
        )));
    }
    Ok((0..l_prime)
        .map(|i| ((i + 1) * l).div_ceil(l_prime) - 1)
        .collect())
}

/// Copy indices and supervision mapping for one teacher->student pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMap {
    pub copy_indices: Vec<usize>,
    pub phi: Vec<usize>,
}

impl LayerMap {
    pub fn maximally_spaced(l: usize, l_prime: usize) -> Result<Self, DistillError> {
        Ok(LayerMap {
            copy_indices: select_copy_layers(l, l_prime)?,
            phi: build_phi(l, l_prime)?,
        })
    }
}

// ── Initialization strategies ───────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitVariant {
    /// Maximally spaced copy (the default extraction rule).
    MaxSpaced,
    /// A contiguous run of teacher layers starting at `start`.
    Contiguous { start: usize },
    /// One teacher layer repeated into every student slot.
    Repeat { layer: usize },
    /// Fresh random decoder (embeddings and encoder still copied).
    Random { seed: u64 },
    /// Caller-provided index list.
    Explicit(Vec<usize>),
}

/// Initialization recipe; `donor` is a provenance label for the model the
/// layers come from (fine-tuned teacher, pre-trained checkpoint, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitStrategy {
    pub variant: InitVariant,
    pub donor: String,
}

impl InitStrategy {
    pub fn max_spaced() -> Self {
        InitStrategy {
            variant: InitVariant::MaxSpaced,
            donor: "teacher".to_string(),
        }
    }

    pub fn with_variant(variant: InitVariant) -> Self {
        InitStrategy {
            variant,
            donor: "teacher".to_string(),
        }
    }
}

fn fresh_param(t: &Tensor) -> Tensor {
    let mut c = t.clone();
    c.zero_grad();
    c.requires_grad = true;
    c
}

fn decoder_copy_indices(
    donor_layers: usize,
    student_layers: usize,
    variant: &InitVariant,
) -> Result<Option<Vec<usize>>, DistillError> {
    let idx = match variant {
        InitVariant::MaxSpaced => select_copy_layers(donor_layers, student_layers)?,
        InitVariant::Contiguous { start } => {
            if start + student_layers > donor_layers {
                return Err(DistillError::LayerSelection(format!(
                    "contiguous block {start}..{} exceeds {donor_layers} teacher layers",
                    start + student_layers
                )));
            }
            (*start..start + student_layers).collect()
        }
        InitVariant::Repeat { layer } => {
            if *layer >= donor_layers {
                return Err(DistillError::LayerSelection(format!(
                    "repeat layer {layer} out of range for {donor_layers} teacher layers"
                )));
            }
            vec![*layer; student_layers]
        }
        InitVariant::Explicit(list) => {
            if list.len() != student_layers {
                return Err(DistillError::LayerSelection(format!(
                    "explicit index list has {} entries for a {student_layers}-layer student",
                    list.len()
                )));
            }
            if let Some(&bad) = list.iter().find(|&&i| i >= donor_layers) {
                return Err(DistillError::LayerSelection(format!(
                    "explicit index {bad} out of range for {donor_layers} teacher layers"
                )));
            }
            list.clone()
        }
        InitVariant::Random { .. } => return Ok(None),
    };
    Ok(Some(idx))
}

/// Extract a student from a donor model. Embeddings and final norms are
/// copied bit-exactly; encoder layers are copied in full (or by the
/// maximally spaced rule when the student encoder is smaller); decoder
/// layers follow the strategy.
pub fn init_student(
    donor: &Seq2SeqModel,
    student_config: ModelConfig,
    strategy: &InitStrategy,
    copy_full_encoder: bool,
) -> Result<Seq2SeqModel, DistillError> {
    student_config
        .validate()
        .map_err(|e| DistillError::DimensionMismatch(e.to_string()))?;
    let d = &donor.config;
    let s = &student_config;
    if (d.d_model, d.n_heads, d.ffn_dim, d.vocab_size, d.max_positions)
        != (s.d_model, s.n_heads, s.ffn_dim, s.vocab_size, s.max_positions)
    {
        return Err(DistillError::DimensionMismatch(format!(
            "student dims {s:?} must equal donor dims {d:?}"
        )));
    }
    if d.tie_output_embedding != s.tie_output_embedding {
        return Err(DistillError::DimensionMismatch(
            "output-head tying must match between donor and student".into(),
        ));
    }
    if s.enc_layers > d.enc_layers || s.dec_layers > d.dec_layers {
        return Err(DistillError::DimensionMismatch(format!(
            "student {}-{} deeper than donor {}-{}",
            s.enc_layers, s.dec_layers, d.enc_layers, d.dec_layers
        )));
    }
    if copy_full_encoder && s.enc_layers != d.enc_layers {
        return Err(DistillError::DimensionMismatch(format!(
            "copy_full_encoder requires matching encoder depth ({} vs {})",
            s.enc_layers, d.enc_layers
        )));
    }

    let enc_indices = if s.enc_layers == d.enc_layers {
        (0..d.enc_layers).collect::<Vec<_>>()
    } else {
        select_copy_layers(d.enc_layers, s.enc_layers)?
    };
    let encoder = enc_indices
        .iter()
        .map(|&i| donor.params.encoder[i].map(&mut fresh_param))
        .collect();

    let decoder = match decoder_copy_indices(d.dec_layers, s.dec_layers, &strategy.variant)? {
        Some(indices) => indices
            .iter()
            .map(|&i| donor.params.decoder[i].map(&mut fresh_param))
            .collect(),
        None => {
            let seed = match strategy.variant {
                InitVariant::Random { seed } => seed,
                _ => unreachable!("only Random skips index selection"),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..s.dec_layers)
                .map(|_| random_decoder_layer(&student_config, &mut rng))
                .collect()
        }
    };

    let params = crate::seq2seq::ModelParams {
        token_embedding: fresh_param(&donor.params.token_embedding),
        positional_embedding: fresh_param(&donor.params.positional_embedding),
        encoder,
        decoder,
        encoder_final_ln: donor.params.encoder_final_ln.map(&mut fresh_param),
        decoder_final_ln: donor.params.decoder_final_ln.map(&mut fresh_param),
        output_projection: donor.params.output_projection.as_ref().map(fresh_param),
    };
    Ok(Seq2SeqModel {
        config: student_config,
        params,
    })
}

// ── Loss weights and recipe ─────────────────────────────────────────

/// Weights of the combined distillation objective. Defaults follow the
/// values that worked for summarization: logits 0.8, data 1, hidden 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha_logits: f64,
    pub alpha_data: f64,
    pub alpha_hidn: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha_logits: 0.8,
            alpha_data: 1.0,
            alpha_hidn: 3.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), DistillError> {
        let ws = [self.alpha_logits, self.alpha_data, self.alpha_hidn];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) || ws.iter().all(|&w| w == 0.0) {
            return Err(DistillError::InvalidWeights);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistillMethod {
    Sft,
    Kd,
    Pl,
}

impl DistillMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sft" => Some(DistillMethod::Sft),
            "kd" => Some(DistillMethod::Kd),
            "pl" => Some(DistillMethod::Pl),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistillMethod::Sft => "sft",
            DistillMethod::Kd => "kd",
            DistillMethod::Pl => "pl",
        }
    }
}

/// Method selector with its loss weights and generation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillRecipe {
    pub method: DistillMethod,
    pub weights: LossWeights,
    pub beam: BeamParams,
}

impl DistillRecipe {
    pub fn sft() -> Self {
        DistillRecipe {
            method: DistillMethod::Sft,
            weights: LossWeights::default(),
            beam: BeamParams::default(),
        }
    }
}

// ── Losses (graph builders + plain-value contracts) ─────────────────

fn pad_mask(target: &[u32], pad_id: u32) -> Vec<bool> {
    target.iter().map(|&t| t != pad_id).collect()
}

/// Cross entropy summed over non-PAD target positions:
/// −Σ_t log p(y_t | y_<t, x). Logits rows must match the target length.
pub fn loss_data_node(
    tape: &mut Tape,
    logits: NodeId,
    target: &[u32],
    pad_id: u32,
) -> Result<NodeId, DistillError> {
    let rows = tape.value(logits).shape()[0];
    if rows != target.len() {
        return Err(DistillError::LossShape(format!(
            "logits cover {rows} positions, target has {}",
            target.len()
        )));
    }
    let ids: Vec<usize> = target.iter().map(|&t| t as usize).collect();
    Ok(tape.cross_entropy_sum(logits, &ids, &pad_mask(target, pad_id))?)
}

/// Σ_t KL(Q_t ‖ P_t) over non-PAD positions, with Q the teacher's softmax
/// rows (constants) and P the student's. The teacher entropy term is
/// folded in as a constant so the node's value is the true KL.
pub fn loss_logits_node(
    tape: &mut Tape,
    student_logits: NodeId,
    teacher_logits: &Tensor,
    mask: &[bool],
) -> Result<NodeId, DistillError> {
    let shape = tape.value(student_logits).shape().to_vec();
    if shape != teacher_logits.shape() {
        return Err(DistillError::LossShape(format!(
            "student logits {shape:?} vs teacher logits {:?}",
            teacher_logits.shape()
        )));
    }
    let (rows, cols) = (shape[0], shape[1]);
    if mask.len() != rows {
        return Err(DistillError::LossShape(format!(
            "mask covers {} rows, logits have {rows}",
            mask.len()
        )));
    }
    // W[t, v] = mask_t * Q[t, v]; constant part Σ mask_t Q log Q.
    let mut weights = vec![0.0; rows * cols];
    let mut q_log_q = 0.0;
    for t in 0..rows {
        if !mask[t] {
            continue;
        }
        let q = softmax(&teacher_logits.data()[t * cols..(t + 1) * cols])?;
        for (v, &qv) in q.iter().enumerate() {
            weights[t * cols + v] = qv;
            if qv > 0.0 {
                q_log_q += qv * qv.ln();
            }
        }
    }
    let log_p = tape.log_softmax_rows(student_logits)?;
    let weighted = tape.mul_const(log_p, &Tensor::from_vec(vec![rows, cols], weights)?)?;
    let sum = tape.sum_all(weighted);
    let neg = tape.scale(sum, -1.0);
    Ok(tape.shift(neg, q_log_q))
}

/// Σ over student decoder layers of MSE(H_l^student, H_phi(l)^teacher),
/// each MSE averaged over positions × width. Teacher states are constants.
pub fn loss_hidden_node(
    tape: &mut Tape,
    student_states: &[NodeId],
    teacher_states: &[Tensor],
    phi: &[usize],
) -> Result<NodeId, DistillError> {
    if phi.len() != student_states.len() {
        return Err(DistillError::LossShape(format!(
            "phi has {} entries for {} student layers",
            phi.len(),
            student_states.len()
        )));
    }
    let mut total: Option<NodeId> = None;
    for (l, &state) in student_states.iter().enumerate() {
        let t_idx = phi[l];
        let teacher = teacher_states.get(t_idx).ok_or(DistillError::PhiOutOfRange {
            value: t_idx,
            teacher_layers: teacher_states.len(),
        })?;
        let s_shape = tape.value(state).shape().to_vec();
        if s_shape != teacher.shape() {
            return Err(DistillError::LossShape(format!(
                "hidden state shapes differ at student layer {l}: {s_shape:?} vs {:?}",
                teacher.shape()
            )));
        }
        let t_node = tape.constant(teacher.clone());
        let diff = tape.sub(state, t_node)?;
        let sq = tape.square(diff);
        let sum = tape.sum_all(sq);
        let mse = tape.scale(sum, 1.0 / (s_shape[0] * s_shape[1]) as f64);
        total = Some(match total {
            None => mse,
            Some(acc) => tape.add(acc, mse)?,
        });
    }
    total.ok_or_else(|| DistillError::LossShape("no student layers to compare".into()))
}

/// α_logits · L_Logits + α_data · L_Data + α_hidn · L_Hid.
#[allow(clippy::too_many_arguments)]
pub fn loss_kd_node(
    tape: &mut Tape,
    student_logits: NodeId,
    student_decoder_states: &[NodeId],
    teacher: &HiddenTrace,
    target: &[u32],
    weights: &LossWeights,
    phi: &[usize],
    pad_id: u32,
) -> Result<NodeId, DistillError> {
    weights.validate()?;
    let mask = pad_mask(target, pad_id);
    let l_logits = loss_logits_node(tape, student_logits, &teacher.logits, &mask)?;
    let l_data = loss_data_node(tape, student_logits, target, pad_id)?;
    let l_hidn = loss_hidden_node(
        tape,
        student_decoder_states,
        &teacher.decoder_states,
        phi,
    )?;
    let a = tape.scale(l_logits, weights.alpha_logits);
    let b = tape.scale(l_data, weights.alpha_data);
    let c = tape.scale(l_hidn, weights.alpha_hidn);
    let ab = tape.add(a, b)?;
    Ok(tape.add(ab, c)?)
}

/// Summed cross entropy of a trace against the gold target (Eq. 1 form).
pub fn loss_data(trace: &HiddenTrace, target: &[u32], pad_id: u32) -> Result<f64, DistillError> {
    let mut tape = Tape::new();
    let logits = tape.constant(trace.logits.clone());
    let node = loss_data_node(&mut tape, logits, target, pad_id)?;
    Ok(tape.value(node).item())
}

/// Identical functional form to [`loss_data`] with the teacher's
/// generation substituted for the gold target.
pub fn loss_pseudo(
    trace: &HiddenTrace,
    pseudo_target: &[u32],
    pad_id: u32,
) -> Result<f64, DistillError> {
    loss_data(trace, pseudo_target, pad_id)
}

/// KL(teacher ‖ student) summed over unmasked positions.
pub fn loss_logits(
    student_logits: &Tensor,
    teacher_logits: &Tensor,
    mask: &[bool],
) -> Result<f64, DistillError> {
    let mut tape = Tape::new();
    let s = tape.constant(student_logits.clone());
    let node = loss_logits_node(&mut tape, s, teacher_logits, mask)?;
    Ok(tape.value(node).item())
}

/// Hidden-state MSE under the supervision mapping `phi`.
pub fn loss_hidden(
    student_trace: &HiddenTrace,
    teacher_trace: &HiddenTrace,
    phi: &[usize],
) -> Result<f64, DistillError> {
    let mut tape = Tape::new();
    let states: Vec<NodeId> = student_trace
        .decoder_states
        .iter()
        .map(|t| tape.constant(t.clone()))
        .collect();
    let node = loss_hidden_node(&mut tape, &states, &teacher_trace.decoder_states, phi)?;
    Ok(tape.value(node).item())
}

/// The combined objective on plain traces; same composition the trainer
/// differentiates.
pub fn loss_kd(
    student_trace: &HiddenTrace,
    teacher_trace: &HiddenTrace,
    target: &[u32],
    weights: &LossWeights,
    phi: &[usize],
    pad_id: u32,
) -> Result<f64, DistillError> {
    let mut tape = Tape::new();
    let logits = tape.constant(student_trace.logits.clone());
    let states: Vec<NodeId> = student_trace
        .decoder_states
        .iter()
        .map(|t| tape.constant(t.clone()))
        .collect();
    let node = loss_kd_node(
        &mut tape,
        logits,
        &states,
        teacher_trace,
        target,
        weights,
        phi,
        pad_id,
    )?;
    Ok(tape.value(node).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::PAD_ID;

    #[test]
    fn copy_layers_matches_stated_values() {
        assert_eq!(select_copy_layers(12, 3).unwrap(), vec![0, 6, 11]);
        assert_eq!(select_copy_layers(12, 1).unwrap(), vec![0]);
        assert_eq!(select_copy_layers(16, 4).unwrap(), vec![0, 5, 10, 15]);
        assert_eq!(
            select_copy_layers(5, 5).unwrap(),
            vec![0, 1, 2, 3, 4],
            "identity when depths match"
        );
    }

    #[test]
    fn copy_layers_rejects_bad_depths() {
        assert!(select_copy_layers(4, 5).is_err());
        assert!(select_copy_layers(4, 0).is_err());
    }

    #[test]
    fn phi_matches_stated_values() {
        assert_eq!(build_phi(12, 3).unwrap(), vec![3, 7, 11]);
        assert_eq!(build_phi(16, 4).unwrap(), vec![3, 7, 11, 15]);
        assert_eq!(build_phi(6, 6).unwrap(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn phi_last_entry_is_last_teacher_layer() {
        for l in 1..=16 {
            for lp in 1..=l {
                let phi = build_phi(l, lp).unwrap();
                assert_eq!(*phi.last().unwrap(), l - 1);
                assert!(phi.windows(2).all(|w| w[0] <= w[1]), "phi non-decreasing");
            }
        }
    }

    fn uniform_logits(rows: usize, vocab: usize) -> HiddenTrace {
        HiddenTrace {
            encoder_states: vec![],
            decoder_states: vec![],
            logits: Tensor::zeros(vec![rows, vocab]),
        }
    }

    #[test]
    fn uniform_logits_loss_is_t_ln_v() {
        let trace = uniform_logits(5, 32);
        let target = vec![4u32; 5];
        let loss = loss_data(&trace, &target, PAD_ID).unwrap();
        assert!((loss - 5.0 * 32.0_f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        // One-hot-ish logits with a huge margin force probability ~1.
        let vocab = 6;
        let target = [3u32, 1, 5];
        let mut data = vec![-1000.0; 3 * vocab];
        for (t, &y) in target.iter().enumerate() {
            data[t * vocab + y as usize] = 1000.0;
        }
        let trace = HiddenTrace {
            encoder_states: vec![],
            decoder_states: vec![],
            logits: Tensor::from_vec(vec![3, vocab], data).unwrap(),
        };
        let loss = loss_data(&trace, &target, PAD_ID).unwrap();
        assert!(loss.abs() < 1e-9);
    }

    #[test]
    fn pseudo_loss_is_data_loss_on_pseudo_targets() {
        let trace = uniform_logits(4, 11);
        let target = vec![5u32, 6, 7, 8];
        assert_eq!(
            loss_data(&trace, &target, PAD_ID).unwrap(),
            loss_pseudo(&trace, &target, PAD_ID).unwrap()
        );
    }

    #[test]
    fn kl_hand_example() {
        // Q=[0.5,0.5], P=[0.25,0.75]: KL = 0.5 ln 2 + 0.5 ln(2/3).
        let teacher = Tensor::from_vec(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let student = Tensor::from_vec(vec![1, 2], vec![0.0, 3.0_f64.ln()]).unwrap();
        let kl = loss_logits(&student, &teacher, &[true]).unwrap();
        let expected = 0.5 * 2.0_f64.ln() + 0.5 * (2.0_f64 / 3.0).ln();
        assert!((kl - expected).abs() < 1e-12, "kl={kl} expected={expected}");
        assert!((kl - 0.14384).abs() < 1e-4);
    }

    #[test]
    fn kl_of_identical_logits_is_zero() {
        let logits = Tensor::from_vec(vec![2, 3], vec![0.3, -1.0, 0.5, 2.0, 0.0, -0.5]).unwrap();
        let kl = loss_logits(&logits, &logits, &[true, true]).unwrap();
        assert!(kl.abs() < 1e-10);
    }

    #[test]
    fn kl_shape_mismatch_is_error() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 4]);
        assert!(loss_logits(&a, &b, &[true, true]).is_err());
    }

    #[test]
    fn hidden_loss_hand_example() {
        // Single layer, H_s = [1,1], H_t = [0,0]: MSE = 1.
        let student = HiddenTrace {
            encoder_states: vec![],
            decoder_states: vec![Tensor::from_vec(vec![1, 2], vec![1.0, 1.0]).unwrap()],
            logits: Tensor::zeros(vec![1, 4]),
        };
        let teacher = HiddenTrace {
            encoder_states: vec![],
            decoder_states: vec![Tensor::zeros(vec![1, 2])],
            logits: Tensor::zeros(vec![1, 4]),
        };
        let loss = loss_hidden(&student, &teacher, &[0]).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hidden_loss_scales_quadratically() {
        let teacher = HiddenTrace {
            encoder_states: vec![],
            decoder_states: vec![Tensor::zeros(vec![2, 3])],
            logits: Tensor::zeros(vec![1, 4]),
        };
        let make_student = |v: f64| HiddenTrace {
            encoder_states: vec![],
            decoder_states: vec![Tensor::filled(vec![2, 3], v)],
            logits: Tensor::zeros(vec![1, 4]),
        };
        let l1 = loss_hidden(&make_student(0.5), &teacher, &[0]).unwrap();
        let l2 = loss_hidden(&make_student(1.0), &teacher, &[0]).unwrap();
        assert!((l2 - 4.0 * l1).abs() < 1e-12);
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let zero = LossWeights {
            alpha_logits: 0.0,
            alpha_data: 0.0,
            alpha_hidn: 0.0,
        };
        assert!(zero.validate().is_err());
        let negative = LossWeights {
            alpha_logits: -0.1,
            ..Default::default()
        };
        assert!(negative.validate().is_err());
        assert!(LossWeights::default().validate().is_ok());
    }
}

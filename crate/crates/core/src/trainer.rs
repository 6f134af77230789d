//! Fine-tuning loop: recipe dispatch (SFT / KD / PL data), periodic
//! validation, running-best early stopping, and encoder/embedding
//! freezing.
//!
//! Targets are EOS-terminated internally (the loss covers each gold token
//! plus the closing EOS), so decoding learns to stop; dataset targets
//! stay plain token sequences. Validation score is cross entropy per
//! non-PAD token, lower is better; a ROUGE-2 stopper is available as a
//! config alternative.

use crate::corpus::PairDataset;
use crate::distill::{
    build_phi, loss_data_node, loss_kd_node, DistillError, DistillMethod, DistillRecipe,
};
use crate::metrics::{score_corpus, MetricsError};
use crate::seq2seq::{HiddenTrace, ModelError, Seq2SeqModel};
use crate::tensor::{adam_step, AdamState, NodeId, Tape, TensorError};
use crate::{EOS_ID, PAD_ID};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("recipe requires a teacher model")]
    MissingTeacher,
    #[error("empty {0} dataset")]
    EmptyDataset(&'static str),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// What early stopping tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMetric {
    /// Validation cross entropy, lower is better (default).
    ValLoss,
    /// Validation ROUGE-2 F1 under beam decoding, higher is better.
    ValRouge2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSchedule {
    pub max_epochs: usize,
    pub patience_evals: usize,
    pub evals_per_epoch: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub freeze_encoder: bool,
    pub freeze_embeddings: bool,
    pub seed: u64,
    pub stop_metric: StopMetric,
    /// Fraction of total steps spent in linear warmup.
    pub warmup_frac: f64,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        TrainingSchedule {
            max_epochs: 5,
            patience_evals: 4,
            evals_per_epoch: 10,
            lr: 3e-4,
            batch_size: 8,
            freeze_encoder: true,
            freeze_embeddings: true,
            seed: 0,
            stop_metric: StopMetric::ValLoss,
            warmup_frac: 0.05,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.patience_evals < 1 {
            return Err(TrainError::InvalidSchedule("patience_evals must be >= 1".into()));
        }
        if self.evals_per_epoch < 1 {
            return Err(TrainError::InvalidSchedule("evals_per_epoch must be >= 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(TrainError::InvalidSchedule("max_epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::InvalidSchedule("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(TrainError::InvalidSchedule("lr must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(TrainError::InvalidSchedule("warmup_frac must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub step: u64,
    /// Fractional epochs completed at this evaluation.
    pub epoch: f64,
    pub val_loss: f64,
    pub val_rouge2: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EpochCap,
    Patience,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub evals: Vec<EvalRecord>,
    pub stop_reason: Option<StopReason>,
}

impl TrainHistory {
    /// Best (lowest) validation loss seen.
    pub fn min_val_loss(&self) -> Option<f64> {
        self.evals
            .iter()
            .map(|e| e.val_loss)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }
}

/// One evaluation per line, tab-separated:
/// step, epoch, val_loss, val_rouge2 (`-` when absent), seconds.
pub fn save_history(history: &TrainHistory, path: &Path) -> std::io::Result<()> {
    let mut out = String::new();
    for e in &history.evals {
        let rouge = e
            .val_rouge2
            .map(|r| format!("{r:.6}"))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{}\t{:.4}\t{:.6}\t{}\t{:.3}\n",
            e.step, e.epoch, e.val_loss, rouge, e.seconds
        ));
    }
    let tmp = path.with_extension("log.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(out.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

const IMPROVEMENT_EPS: f64 = 1e-6;

fn scores<'a>(
    history: &'a TrainHistory,
    metric: StopMetric,
) -> impl Iterator<Item = f64> + 'a {
    history.evals.iter().map(move |e| match metric {
        StopMetric::ValLoss => e.val_loss,
        StopMetric::ValRouge2 => e.val_rouge2.unwrap_or(0.0),
    })
}

fn improved(metric: StopMetric, candidate: f64, best: f64) -> bool {
    match metric {
        StopMetric::ValLoss => candidate < best - IMPROVEMENT_EPS,
        StopMetric::ValRouge2 => candidate > best + IMPROVEMENT_EPS,
    }
}

/// The stopping rule: stop at the epoch cap, or when the most recent
/// `patience_evals` evaluations each failed to improve on the best score
/// seen before them.
pub fn should_stop(history: &TrainHistory, schedule: &TrainingSchedule) -> Option<StopReason> {
    let last = history.evals.last()?;
    let mut best: Option<f64> = None;
    let mut streak = 0usize;
    for score in scores(history, schedule.stop_metric) {
        match best {
            None => {
                best = Some(score);
                streak = 0;
            }
            Some(b) if improved(schedule.stop_metric, score, b) => {
                best = Some(score);
                streak = 0;
            }
            Some(_) => streak += 1,
        }
    }
    if streak >= schedule.patience_evals {
        return Some(StopReason::Patience);
    }
    if last.epoch >= schedule.max_epochs as f64 - 1e-9 {
        return Some(StopReason::EpochCap);
    }
    None
}

/// Mark frozen parameter sets; frozen tensors drop out of backward
/// accumulation and optimizer state.
pub fn apply_freezes(model: &mut Seq2SeqModel, schedule: &TrainingSchedule) {
    if schedule.freeze_embeddings {
        model.params.token_embedding.requires_grad = false;
        model.params.positional_embedding.requires_grad = false;
    }
    if schedule.freeze_encoder {
        for layer in &mut model.params.encoder {
            for (_, t) in layer_named_mut_enc(layer) {
                t.requires_grad = false;
            }
        }
        for t in [
            &mut model.params.encoder_final_ln.gain,
            &mut model.params.encoder_final_ln.bias,
        ] {
            t.requires_grad = false;
        }
    }
}

fn layer_named_mut_enc(
    layer: &mut crate::seq2seq::EncoderLayerParams<crate::Tensor>,
) -> Vec<(String, &mut crate::Tensor)> {
    // Reuse the canonical visitor through a throwaway ModelParams would be
    // circular; walk the fields directly.
    let mut out: Vec<(String, &mut crate::Tensor)> = Vec::new();
    out.push(("ln1.gain".into(), &mut layer.ln1.gain));
    out.push(("ln1.bias".into(), &mut layer.ln1.bias));
    for (n, t) in [
        ("wq", &mut layer.self_attn.wq),
        ("bq", &mut layer.self_attn.bq),
        ("wk", &mut layer.self_attn.wk),
        ("bk", &mut layer.self_attn.bk),
        ("wv", &mut layer.self_attn.wv),
        ("bv", &mut layer.self_attn.bv),
        ("wo", &mut layer.self_attn.wo),
        ("bo", &mut layer.self_attn.bo),
    ] {
        out.push((n.to_string(), t));
    }
    out.push(("ln2.gain".into(), &mut layer.ln2.gain));
    out.push(("ln2.bias".into(), &mut layer.ln2.bias));
    for (n, t) in [
        ("w1", &mut layer.ffn.w1),
        ("b1", &mut layer.ffn.b1),
        ("w2", &mut layer.ffn.w2),
        ("b2", &mut layer.ffn.b2),
    ] {
        out.push((n.to_string(), t));
    }
    out
}

/// Gold target plus the closing EOS, the sequence the loss actually covers.
pub fn eos_extended(target: &[u32]) -> Vec<u32> {
    let mut t = Vec::with_capacity(target.len() + 1);
    t.extend_from_slice(target);
    t.push(EOS_ID);
    t
}

fn non_pad_tokens(target: &[u32]) -> usize {
    target.iter().filter(|&&t| t != PAD_ID).count()
}

/// Mean cross entropy per non-PAD token over a dataset, with targets
/// EOS-terminated. This is the validation score.
pub fn validation_loss(model: &Seq2SeqModel, data: &PairDataset) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let mut total = 0.0;
    let mut tokens = 0usize;
    for rec in &data.records {
        let tgt = eos_extended(&rec.target);
        let trace = model.forward_teacher_forced(&rec.source, &tgt)?;
        total += crate::distill::loss_data(&trace, &tgt, PAD_ID)?;
        tokens += non_pad_tokens(&tgt);
    }
    Ok(total / tokens as f64)
}

fn encoder_side_equal(a: &Seq2SeqModel, b: &Seq2SeqModel) -> bool {
    if a.config.enc_layers != b.config.enc_layers {
        return false;
    }
    let pick = |m: &Seq2SeqModel| -> Vec<crate::Tensor> {
        let mut v = vec![
            m.params.token_embedding.clone(),
            m.params.positional_embedding.clone(),
            m.params.encoder_final_ln.gain.clone(),
            m.params.encoder_final_ln.bias.clone(),
        ];
        for (name, t) in m.named_params() {
            if name.starts_with("encoder.") {
                v.push(t.clone());
            }
        }
        v
    };
    pick(a)
        .iter()
        .zip(pick(b).iter())
        .all(|(x, y)| x.bit_eq(y))
}

struct KdContext<'a> {
    teacher: &'a Seq2SeqModel,
    phi: Vec<usize>,
    /// Teacher reuses the student's encoder output (identical frozen
    /// encoder side), skipping one encoder forward per example.
    share_encoder: bool,
}

/// Fine-tune a student under a recipe. Returns the best-validation
/// checkpoint (not the last) and the evaluation history. Deterministic
/// given the schedule seed.
pub fn fine_tune(
    mut student: Seq2SeqModel,
    train_data: &PairDataset,
    val_data: &PairDataset,
    schedule: &TrainingSchedule,
    recipe: &DistillRecipe,
    teacher: Option<&Seq2SeqModel>,
) -> Result<(Seq2SeqModel, TrainHistory), TrainError> {
    schedule.validate()?;
    if train_data.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if val_data.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let kd = match recipe.method {
        DistillMethod::Kd => {
            let teacher = teacher.ok_or(TrainError::MissingTeacher)?;
            recipe.weights.validate()?;
            let phi = build_phi(teacher.config.dec_layers, student.config.dec_layers)?;
            let share_encoder = schedule.freeze_encoder
                && schedule.freeze_embeddings
                && encoder_side_equal(&student, teacher);
            Some(KdContext {
                teacher,
                phi,
                share_encoder,
            })
        }
        DistillMethod::Sft | DistillMethod::Pl => None,
    };

    apply_freezes(&mut student, schedule);
    let trainable: Vec<usize> = student
        .named_params()
        .iter()
        .enumerate()
        .filter(|(_, (_, t))| t.requires_grad)
        .map(|(i, _)| i)
        .collect();
    if trainable.is_empty() {
        return Err(TrainError::InvalidSchedule(
            "every parameter is frozen; nothing to train".into(),
        ));
    }

    let mut adam = {
        let named = student.named_params();
        let refs: Vec<&crate::Tensor> = trainable.iter().map(|&i| named[i].1).collect();
        AdamState::new(&refs, schedule.lr)
    };

    let steps_per_epoch = train_data.len().div_ceil(schedule.batch_size);
    let total_steps = (steps_per_epoch * schedule.max_epochs) as u64;
    let warmup_steps = ((total_steps as f64) * schedule.warmup_frac).ceil() as u64;
    let eval_interval = (steps_per_epoch / schedule.evals_per_epoch).max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut history = TrainHistory::default();
    let mut best_params = student.params.clone();
    let mut best_score: Option<f64> = None;
    let mut step: u64 = 0;
    let started = Instant::now();

    'epochs: for epoch in 0..schedule.max_epochs {
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        order.shuffle(&mut rng);
        for (batch_idx, batch) in order.chunks(schedule.batch_size).enumerate() {
            step += 1;
            train_step(&mut student, train_data, batch, recipe, kd.as_ref(), step)?;
            {
                // Linear warmup on top of the base learning rate.
                let factor = if warmup_steps > 0 && step < warmup_steps {
                    step as f64 / warmup_steps as f64
                } else {
                    1.0
                };
                adam.lr = schedule.lr * factor;
                let mut named = student.named_params_mut();
                let mut refs: Vec<&mut crate::Tensor> = Vec::with_capacity(trainable.len());
                let mut taken = 0usize;
                for (i, (_, t)) in named.iter_mut().enumerate() {
                    if taken < trainable.len() && trainable[taken] == i {
                        refs.push(t);
                        taken += 1;
                    }
                }
                adam_step(&mut refs, &mut adam)?;
            }

            let step_in_epoch = batch_idx + 1;
            let at_interval = step_in_epoch % eval_interval == 0;
            let at_epoch_end = step_in_epoch == steps_per_epoch;
            if at_interval || at_epoch_end {
                let val_loss = validation_loss(&student, val_data)?;
                let val_rouge2 = match schedule.stop_metric {
                    StopMetric::ValRouge2 => {
                        Some(score_corpus(&student, val_data, &recipe.beam)?.rouge2.f1)
                    }
                    StopMetric::ValLoss => None,
                };
                let record = EvalRecord {
                    step,
                    epoch: epoch as f64 + step_in_epoch as f64 / steps_per_epoch as f64,
                    val_loss,
                    val_rouge2,
                    seconds: started.elapsed().as_secs_f64(),
                };
                history.evals.push(record);
                let score = match schedule.stop_metric {
                    StopMetric::ValLoss => val_loss,
                    StopMetric::ValRouge2 => val_rouge2.unwrap_or(0.0),
                };
                let is_better = match best_score {
                    None => true,
                    Some(b) => improved(schedule.stop_metric, score, b),
                };
                if is_better {
                    best_score = Some(score);
                    best_params = student.params.clone();
                }
                if let Some(reason) = should_stop(&history, schedule) {
                    history.stop_reason = Some(reason);
                    break 'epochs;
                }
            }
        }
    }
    if history.stop_reason.is_none() {
        history.stop_reason = Some(StopReason::EpochCap);
    }
    student.params = best_params;
    for (_, t) in student.named_params_mut() {
        t.zero_grad();
    }
    Ok((student, history))
}

fn train_step(
    student: &mut Seq2SeqModel,
    data: &PairDataset,
    batch: &[usize],
    recipe: &DistillRecipe,
    kd: Option<&KdContext>,
    step: u64,
) -> Result<(), TrainError> {
    let mut tape = Tape::new();
    let bound = student.bind(&mut tape);
    let mut batch_loss: Option<NodeId> = None;
    let mut token_count = 0usize;
    for &idx in batch {
        let rec = &data.records[idx];
        let tgt = eos_extended(&rec.target);
        token_count += non_pad_tokens(&tgt);
        let trace = student.forward_nodes(&mut tape, &bound, &rec.source, &tgt)?;
        let loss = match kd {
            None => loss_data_node(&mut tape, trace.logits, &tgt, PAD_ID)?,
            Some(ctx) => {
                let teacher_trace = if ctx.share_encoder {
                    let enc_out = tape.value(trace.encoder_output).clone();
                    let dec_input = crate::seq2seq::bos_shift(&tgt);
                    let (decoder_states, logits) =
                        ctx.teacher
                            .decoder_trace_plain(&enc_out, &rec.source, &dec_input)?;
                    HiddenTrace {
                        encoder_states: Vec::new(),
                        decoder_states,
                        logits,
                    }
                } else {
                    ctx.teacher.forward_teacher_forced(&rec.source, &tgt)?
                };
                loss_kd_node(
                    &mut tape,
                    trace.logits,
                    &trace.decoder_states,
                    &teacher_trace,
                    &tgt,
                    &recipe.weights,
                    &ctx.phi,
                    PAD_ID,
                )?
            }
        };
        batch_loss = Some(match batch_loss {
            None => loss,
            Some(acc) => tape.add(acc, loss)?,
        });
    }
    let batch_loss = batch_loss.expect("batch is non-empty");
    // Per-token mean keeps gradient scale comparable across batch lengths.
    let scaled = tape.scale(batch_loss, 1.0 / token_count.max(1) as f64);
    if !tape.value(scaled).item().is_finite() {
        return Err(TrainError::NonFiniteLoss { step });
    }
    tape.backward(scaled)?;
    let grads: Vec<Option<Vec<f64>>> = bound
        .named()
        .iter()
        .map(|(_, &node)| tape.grad(node).map(|g| g.to_vec()))
        .collect();
    for ((_, t), grad) in student.named_params_mut().into_iter().zip(grads) {
        if t.requires_grad {
            // A parameter untouched by this batch's graph still needs a
            // zero gradient for the optimizer step.
            t.grad = Some(grad.unwrap_or_else(|| vec![0.0; t.numel()]));
        }
    }
    Ok(())
}

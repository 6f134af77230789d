//! Encoder–decoder transformer with residual connections.
//!
//! Pre-layer-norm variant. The per-layer hidden states exposed in
//! [`HiddenTrace`] are each layer's final residual-stream output (after
//! the layer's last residual addition, before the stack's final norm).
//! Forward passes for training and inference share one graph builder;
//! inference binds parameters as constants so the tape records no
//! backward closures.

mod checkpoint;
mod decode;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use decode::{beam_search, greedy_decode, BeamParams};

use crate::tensor::{NodeId, Tape, Tensor, TensorError};
use crate::{BOS_ID, PAD_ID};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const LN_EPS: f64 = 1e-5;
/// BART-style learned positions: table has `max_positions + 2` rows and
/// position `t` reads row `t + 2`.
const POS_OFFSET: usize = 2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("token id {id} out of range for vocab size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("sequence of length {len} exceeds max_positions {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty {0} sequence")]
    EmptySequence(&'static str),
    #[error("beam_size must be >= 1")]
    BeamSizeInvalid,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub max_positions: usize,
    pub tie_output_embedding: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.vocab_size < 4 {
            return Err(ModelError::InvalidConfig(
                "vocab_size must cover the reserved PAD/BOS/EOS/UNK ids".into(),
            ));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.ffn_dim == 0 || self.max_positions == 0 {
            return Err(ModelError::InvalidConfig(
                "dimensions must be positive".into(),
            ));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    fn attn_param_count(&self) -> u64 {
        let d = self.d_model as u64;
        4 * d * d + 4 * d
    }

    fn ln_param_count(&self) -> u64 {
        2 * self.d_model as u64
    }

    fn ffn_param_count(&self) -> u64 {
        let d = self.d_model as u64;
        let f = self.ffn_dim as u64;
        d * f + f + f * d + d
    }

    /// Parameters in one encoder layer.
    pub fn encoder_layer_param_count(&self) -> u64 {
        self.attn_param_count() + self.ffn_param_count() + 2 * self.ln_param_count()
    }

    /// Parameters in one decoder layer (self-attention, cross-attention,
    /// feed-forward, three norms).
    pub fn decoder_layer_param_count(&self) -> u64 {
        2 * self.attn_param_count() + self.ffn_param_count() + 3 * self.ln_param_count()
    }
}

/// Exact parameter count for a config: embeddings, all layer weights and
/// biases, layer norms, final stack norms, and the output projection
/// (counted once when tied to the token embedding).
pub fn count_params(config: &ModelConfig) -> u64 {
    let d = config.d_model as u64;
    let v = config.vocab_size as u64;
    let embeddings = v * d + (config.max_positions as u64 + POS_OFFSET as u64) * d;
    let stacks = config.enc_layers as u64 * config.encoder_layer_param_count()
        + config.dec_layers as u64 * config.decoder_layer_param_count();
    let final_norms = 2 * config.ln_param_count();
    let head = if config.tie_output_embedding { 0 } else { d * v };
    embeddings + stacks + final_norms + head
}

// ── Parameter containers ────────────────────────────────────────────
//
// Generic over the payload so the same structure can hold tensors
// (the model) or tape node ids (one bound forward pass).

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams<T> {
    pub gain: T,
    pub bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    pub wq: T,
    pub bq: T,
    pub wk: T,
    pub bk: T,
    pub wv: T,
    pub bv: T,
    pub wo: T,
    pub bo: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams<T> {
    pub w1: T,
    pub b1: T,
    pub w2: T,
    pub b2: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams<T> {
    pub ln1: LayerNormParams<T>,
    pub self_attn: AttentionParams<T>,
    pub ln2: LayerNormParams<T>,
    pub ffn: FfnParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayerParams<T> {
    pub ln1: LayerNormParams<T>,
    pub self_attn: AttentionParams<T>,
    pub ln2: LayerNormParams<T>,
    pub cross_attn: AttentionParams<T>,
    pub ln3: LayerNormParams<T>,
    pub ffn: FfnParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub token_embedding: T,
    pub positional_embedding: T,
    pub encoder: Vec<EncoderLayerParams<T>>,
    pub decoder: Vec<DecoderLayerParams<T>>,
    pub encoder_final_ln: LayerNormParams<T>,
    pub decoder_final_ln: LayerNormParams<T>,
    /// Present only when the output head is untied.
    pub output_projection: Option<T>,
}

impl<T> LayerNormParams<T> {
    pub(crate) fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> LayerNormParams<U> {
        LayerNormParams {
            gain: f(&self.gain),
            bias: f(&self.bias),
        }
    }
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a T)>) {
        out.push((format!("{prefix}.gain"), &self.gain));
        out.push((format!("{prefix}.bias"), &self.bias));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut T)>) {
        out.push((format!("{prefix}.gain"), &mut self.gain));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }
}

impl<T> AttentionParams<T> {
    pub(crate) fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> AttentionParams<U> {
        AttentionParams {
            wq: f(&self.wq),
            bq: f(&self.bq),
            wk: f(&self.wk),
            bk: f(&self.bk),
            wv: f(&self.wv),
            bv: f(&self.bv),
            wo: f(&self.wo),
            bo: f(&self.bo),
        }
    }
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a T)>) {
        for (name, t) in [
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
        ] {
            out.push((format!("{prefix}.{name}"), t));
        }
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut T)>) {
        for (name, t) in [
            ("wq", &mut self.wq),
            ("bq", &mut self.bq),
            ("wk", &mut self.wk),
            ("bk", &mut self.bk),
            ("wv", &mut self.wv),
            ("bv", &mut self.bv),
            ("wo", &mut self.wo),
            ("bo", &mut self.bo),
        ] {
            out.push((format!("{prefix}.{name}"), t));
        }
    }
}

impl<T> FfnParams<T> {
    pub(crate) fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> FfnParams<U> {
        FfnParams {
            w1: f(&self.w1),
            b1: f(&self.b1),
            w2: f(&self.w2),
            b2: f(&self.b2),
        }
    }
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a T)>) {
        for (name, t) in [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ] {
            out.push((format!("{prefix}.{name}"), t));
        }
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut T)>) {
        for (name, t) in [
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ] {
            out.push((format!("{prefix}.{name}"), t));
        }
    }
}

impl<T> EncoderLayerParams<T> {
    pub(crate) fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> EncoderLayerParams<U> {
        EncoderLayerParams {
            ln1: self.ln1.map(f),
            self_attn: self.self_attn.map(f),
            ln2: self.ln2.map(f),
            ffn: self.ffn.map(f),
        }
    }
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a T)>) {
        self.ln1.visit(&format!("{prefix}.ln1"), out);
        self.self_attn.visit(&format!("{prefix}.self_attn"), out);
        self.ln2.visit(&format!("{prefix}.ln2"), out);
        self.ffn.visit(&format!("{prefix}.ffn"), out);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut T)>) {
        self.ln1.visit_mut(&format!("{prefix}.ln1"), out);
        self.self_attn.visit_mut(&format!("{prefix}.self_attn"), out);
        self.ln2.visit_mut(&format!("{prefix}.ln2"), out);
        self.ffn.visit_mut(&format!("{prefix}.ffn"), out);
    }
}

impl<T> DecoderLayerParams<T> {
    pub(crate) fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> DecoderLayerParams<U> {
        DecoderLayerParams {
            ln1: self.ln1.map(f),
            self_attn: self.self_attn.map(f),
            ln2: self.ln2.map(f),
            cross_attn: self.cross_attn.map(f),
            ln3: self.ln3.map(f),
            ffn: self.ffn.map(f),
        }
    }
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a T)>) {
        self.ln1.visit(&format!("{prefix}.ln1"), out);
        self.self_attn.visit(&format!("{prefix}.self_attn"), out);
        self.ln2.visit(&format!("{prefix}.ln2"), out);
        self.cross_attn.visit(&format!("{prefix}.cross_attn"), out);
        self.ln3.visit(&format!("{prefix}.ln3"), out);
        self.ffn.visit(&format!("{prefix}.ffn"), out);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut T)>) {
        self.ln1.visit_mut(&format!("{prefix}.ln1"), out);
        self.self_attn.visit_mut(&format!("{prefix}.self_attn"), out);
        self.ln2.visit_mut(&format!("{prefix}.ln2"), out);
        self.cross_attn.visit_mut(&format!("{prefix}.cross_attn"), out);
        self.ln3.visit_mut(&format!("{prefix}.ln3"), out);
        self.ffn.visit_mut(&format!("{prefix}.ffn"), out);
    }
}

impl<T> ModelParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> ModelParams<U> {
        ModelParams {
            token_embedding: f(&self.token_embedding),
            positional_embedding: f(&self.positional_embedding),
            encoder: self.encoder.iter().map(|l| l.map(f)).collect(),
            decoder: self.decoder.iter().map(|l| l.map(f)).collect(),
            encoder_final_ln: self.encoder_final_ln.map(f),
            decoder_final_ln: self.decoder_final_ln.map(f),
            output_projection: self.output_projection.as_ref().map(|t| f(t)),
        }
    }

    /// Canonical (name, value) listing; the visit order defines the
    /// checkpoint layout and the optimizer's parameter order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        out.push(("token_embedding".to_string(), &self.token_embedding));
        out.push((
            "positional_embedding".to_string(),
            &self.positional_embedding,
        ));
        for (i, layer) in self.encoder.iter().enumerate() {
            layer.visit(&format!("encoder.{i}"), &mut out);
        }
        for (i, layer) in self.decoder.iter().enumerate() {
            layer.visit(&format!("decoder.{i}"), &mut out);
        }
        self.encoder_final_ln.visit("encoder_final_ln", &mut out);
        self.decoder_final_ln.visit("decoder_final_ln", &mut out);
        if let Some(proj) = &self.output_projection {
            out.push(("output_projection".to_string(), proj));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut T)> {
        let mut out = Vec::new();
        out.push(("token_embedding".to_string(), &mut self.token_embedding));
        out.push((
            "positional_embedding".to_string(),
            &mut self.positional_embedding,
        ));
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            layer.visit_mut(&format!("encoder.{i}"), &mut out);
        }
        for (i, layer) in self.decoder.iter_mut().enumerate() {
            layer.visit_mut(&format!("decoder.{i}"), &mut out);
        }
        self.encoder_final_ln
            .visit_mut("encoder_final_ln", &mut out);
        self.decoder_final_ln
            .visit_mut("decoder_final_ln", &mut out);
        if let Some(proj) = &mut self.output_projection {
            out.push(("output_projection".to_string(), proj));
        }
        out
    }
}

// ── Model ───────────────────────────────────────────────────────────

/// Per-layer hidden states and output logits from one teacher-forced
/// forward pass. `decoder_states[l]` is the residual-stream output of
/// decoder layer `l`.
#[derive(Debug, Clone)]
pub struct HiddenTrace {
    pub encoder_states: Vec<Tensor>,
    pub decoder_states: Vec<Tensor>,
    /// `[target_len, vocab_size]`
    pub logits: Tensor,
}

/// Tape-node view of a forward pass, for building losses on top.
pub struct TraceNodes {
    pub encoder_states: Vec<NodeId>,
    pub encoder_output: NodeId,
    pub decoder_states: Vec<NodeId>,
    pub logits: NodeId,
}

#[derive(Debug, Clone)]
pub struct Seq2SeqModel {
    pub config: ModelConfig,
    pub params: ModelParams<Tensor>,
}

fn param(shape: Vec<usize>, std: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(shape, std, rng).requires_grad(true)
}

fn ln_params(d: usize) -> LayerNormParams<Tensor> {
    LayerNormParams {
        gain: Tensor::filled(vec![d], 1.0).requires_grad(true),
        bias: Tensor::zeros(vec![d]).requires_grad(true),
    }
}

fn attn_params(d: usize, rng: &mut ChaCha8Rng) -> AttentionParams<Tensor> {
    // Fan-in scaled init; at desk widths the BART-style 0.02 leaves the
    // attention logits too small to bootstrap.
    let std = (d as f64).powf(-0.5);
    AttentionParams {
        wq: param(vec![d, d], std, rng),
        bq: Tensor::zeros(vec![d]).requires_grad(true),
        wk: param(vec![d, d], std, rng),
        bk: Tensor::zeros(vec![d]).requires_grad(true),
        wv: param(vec![d, d], std, rng),
        bv: Tensor::zeros(vec![d]).requires_grad(true),
        wo: param(vec![d, d], std, rng),
        bo: Tensor::zeros(vec![d]).requires_grad(true),
    }
}

fn ffn_params(d: usize, f: usize, rng: &mut ChaCha8Rng) -> FfnParams<Tensor> {
    FfnParams {
        w1: param(vec![d, f], (d as f64).powf(-0.5), rng),
        b1: Tensor::zeros(vec![f]).requires_grad(true),
        w2: param(vec![f, d], (f as f64).powf(-0.5), rng),
        b2: Tensor::zeros(vec![d]).requires_grad(true),
    }
}

pub(crate) fn random_encoder_layer(config: &ModelConfig, rng: &mut ChaCha8Rng) -> EncoderLayerParams<Tensor> {
    EncoderLayerParams {
        ln1: ln_params(config.d_model),
        self_attn: attn_params(config.d_model, rng),
        ln2: ln_params(config.d_model),
        ffn: ffn_params(config.d_model, config.ffn_dim, rng),
    }
}

pub(crate) fn random_decoder_layer(config: &ModelConfig, rng: &mut ChaCha8Rng) -> DecoderLayerParams<Tensor> {
    DecoderLayerParams {
        ln1: ln_params(config.d_model),
        self_attn: attn_params(config.d_model, rng),
        ln2: ln_params(config.d_model),
        cross_attn: attn_params(config.d_model, rng),
        ln3: ln_params(config.d_model),
        ffn: ffn_params(config.d_model, config.ffn_dim, rng),
    }
}

impl Seq2SeqModel {
    pub fn new_random(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let params = ModelParams {
            token_embedding: param(vec![config.vocab_size, d], (d as f64).powf(-0.5), &mut rng),
            positional_embedding: param(
                vec![config.max_positions + POS_OFFSET, d],
                (d as f64).powf(-0.5),
                &mut rng,
            ),
            encoder: (0..config.enc_layers)
                .map(|_| random_encoder_layer(&config, &mut rng))
                .collect(),
            decoder: (0..config.dec_layers)
                .map(|_| random_decoder_layer(&config, &mut rng))
                .collect(),
            encoder_final_ln: ln_params(d),
            decoder_final_ln: ln_params(d),
            output_projection: if config.tie_output_embedding {
                None
            } else {
                Some(param(vec![d, config.vocab_size], (d as f64).powf(-0.5), &mut rng))
            },
        };
        Ok(Seq2SeqModel { config, params })
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.params.named()
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.params.named_mut()
    }

    /// Total parameter elements actually held by this model.
    pub fn param_elements(&self) -> u64 {
        self.params
            .named()
            .iter()
            .map(|(_, t)| t.numel() as u64)
            .sum()
    }

    /// Bind parameters as differentiable leaves for a training forward.
    pub fn bind(&self, tape: &mut Tape) -> ModelParams<NodeId> {
        self.params.map(&mut |t: &Tensor| tape.leaf(t))
    }

    /// Bind parameters as constants: no backward bookkeeping at all.
    pub fn bind_frozen(&self, tape: &mut Tape) -> ModelParams<NodeId> {
        self.params
            .map(&mut |t: &Tensor| tape.constant(t.clone()))
    }

    fn check_tokens(&self, seq: &[u32], what: &'static str) -> Result<(), ModelError> {
        if seq.is_empty() {
            return Err(ModelError::EmptySequence(what));
        }
        if seq.len() > self.config.max_positions {
            return Err(ModelError::SequenceTooLong {
                len: seq.len(),
                max: self.config.max_positions,
            });
        }
        for &id in seq {
            if id as usize >= self.config.vocab_size {
                return Err(ModelError::TokenOutOfRange {
                    id,
                    vocab: self.config.vocab_size,
                });
            }
        }
        Ok(())
    }

    fn embed(
        &self,
        tape: &mut Tape,
        p: &ModelParams<NodeId>,
        tokens: &[u32],
    ) -> Result<NodeId, ModelError> {
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let tok = tape.embedding_rows(p.token_embedding, &ids)?;
        let pos_ids: Vec<usize> = (0..tokens.len()).map(|t| t + POS_OFFSET).collect();
        let pos = tape.embedding_rows(p.positional_embedding, &pos_ids)?;
        Ok(tape.add(tok, pos)?)
    }

    /// Multi-head attention block. `mask` is row-major `[rows(q), rows(kv)]`,
    /// true where attention is allowed.
    fn attention(
        &self,
        tape: &mut Tape,
        q_in: NodeId,
        kv_in: NodeId,
        attn: &AttentionParams<NodeId>,
        mask: &[bool],
    ) -> Result<NodeId, ModelError> {
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dk = d / heads;
        let q_proj = tape.matmul(q_in, attn.wq)?;
        let q = tape.add_row(q_proj, attn.bq)?;
        let k_proj = tape.matmul(kv_in, attn.wk)?;
        let k = tape.add_row(k_proj, attn.bk)?;
        let v_proj = tape.matmul(kv_in, attn.wv)?;
        let v = tape.add_row(v_proj, attn.bv)?;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut head_outputs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q, h * dk, dk)?;
            let kh = tape.slice_cols(k, h * dk, dk)?;
            let vh = tape.slice_cols(v, h * dk, dk)?;
            let kht = tape.transpose(kh);
            let scores = tape.matmul(qh, kht)?;
            let scaled = tape.scale(scores, scale);
            let probs = tape.masked_softmax_rows(scaled, mask)?;
            head_outputs.push(tape.matmul(probs, vh)?);
        }
        let merged = tape.concat_cols(&head_outputs)?;
        let out = tape.matmul(merged, attn.wo)?;
        Ok(tape.add_row(out, attn.bo)?)
    }

    fn ffn(
        &self,
        tape: &mut Tape,
        x: NodeId,
        ffn: &FfnParams<NodeId>,
    ) -> Result<NodeId, ModelError> {
        let h_proj = tape.matmul(x, ffn.w1)?;
        let h = tape.add_row(h_proj, ffn.b1)?;
        let act = tape.gelu(h);
        let out = tape.matmul(act, ffn.w2)?;
        Ok(tape.add_row(out, ffn.b2)?)
    }

    fn layer_norm(
        &self,
        tape: &mut Tape,
        x: NodeId,
        ln: &LayerNormParams<NodeId>,
    ) -> Result<NodeId, ModelError> {
        Ok(tape.layer_norm_rows(x, ln.gain, ln.bias, LN_EPS)?)
    }

    /// Encoder stack. Returns the per-layer residual-stream states and the
    /// final-norm output that the decoder cross-attends to.
    pub fn encode_nodes(
        &self,
        tape: &mut Tape,
        p: &ModelParams<NodeId>,
        source: &[u32],
    ) -> Result<(Vec<NodeId>, NodeId), ModelError> {
        self.check_tokens(source, "source")?;
        let s = source.len();
        let key_ok: Vec<bool> = source.iter().map(|&t| t != PAD_ID).collect();
        let mut mask = vec![false; s * s];
        for i in 0..s {
            for j in 0..s {
                mask[i * s + j] = key_ok[j];
            }
        }
        let mut x = self.embed(tape, p, source)?;
        let mut states = Vec::with_capacity(self.config.enc_layers);
        for layer in &p.encoder {
            let normed = self.layer_norm(tape, x, &layer.ln1)?;
            let attn = self.attention(tape, normed, normed, &layer.self_attn, &mask)?;
            let x1 = tape.add(x, attn)?;
            let normed2 = self.layer_norm(tape, x1, &layer.ln2)?;
            let ff = self.ffn(tape, normed2, &layer.ffn)?;
            x = tape.add(x1, ff)?;
            states.push(x);
        }
        let out = self.layer_norm(tape, x, &p.encoder_final_ln)?;
        Ok((states, out))
    }

    /// Decoder stack over an already-encoded source. `dec_input` is the
    /// BOS-shifted sequence fed to the decoder.
    pub fn decode_nodes(
        &self,
        tape: &mut Tape,
        p: &ModelParams<NodeId>,
        enc_out: NodeId,
        source: &[u32],
        dec_input: &[u32],
    ) -> Result<(Vec<NodeId>, NodeId), ModelError> {
        self.check_tokens(dec_input, "decoder input")?;
        let t = dec_input.len();
        let s = source.len();
        // Causal self-attention mask; PAD keys are masked as well so
        // non-PAD rows never read padding content.
        let mut self_mask = vec![false; t * t];
        for row in 0..t {
            for col in 0..=row {
                self_mask[row * t + col] = dec_input[col] != PAD_ID;
            }
        }
        let mut cross_mask = vec![false; t * s];
        for row in 0..t {
            for (col, &tok) in source.iter().enumerate() {
                cross_mask[row * s + col] = tok != PAD_ID;
            }
        }
        let mut x = self.embed(tape, p, dec_input)?;
        let mut states = Vec::with_capacity(self.config.dec_layers);
        for layer in &p.decoder {
            let normed = self.layer_norm(tape, x, &layer.ln1)?;
            let self_attn = self.attention(tape, normed, normed, &layer.self_attn, &self_mask)?;
            let x1 = tape.add(x, self_attn)?;
            let normed2 = self.layer_norm(tape, x1, &layer.ln2)?;
            let cross = self.attention(tape, normed2, enc_out, &layer.cross_attn, &cross_mask)?;
            let x2 = tape.add(x1, cross)?;
            let normed3 = self.layer_norm(tape, x2, &layer.ln3)?;
            let ff = self.ffn(tape, normed3, &layer.ffn)?;
            x = tape.add(x2, ff)?;
            states.push(x);
        }
        let final_out = self.layer_norm(tape, x, &p.decoder_final_ln)?;
        let logits = match p.output_projection {
            Some(proj) => tape.matmul(final_out, proj)?,
            None => {
                let emb_t = tape.transpose(p.token_embedding);
                tape.matmul(final_out, emb_t)?
            }
        };
        Ok((states, logits))
    }

    /// Full teacher-forced forward on an existing tape. The decoder input
    /// is the BOS-shifted target, so logits row `t` predicts `target[t]`
    /// from the source and `target[0..t]`.
    pub fn forward_nodes(
        &self,
        tape: &mut Tape,
        p: &ModelParams<NodeId>,
        source: &[u32],
        target: &[u32],
    ) -> Result<TraceNodes, ModelError> {
        if target.is_empty() {
            return Err(ModelError::EmptySequence("target"));
        }
        let (encoder_states, encoder_output) = self.encode_nodes(tape, p, source)?;
        let dec_input = bos_shift(target);
        self.check_tokens(&dec_input, "decoder input")?;
        let (decoder_states, logits) =
            self.decode_nodes(tape, p, encoder_output, source, &dec_input)?;
        Ok(TraceNodes {
            encoder_states,
            encoder_output,
            decoder_states,
            logits,
        })
    }

    /// Teacher-forced forward returning plain per-layer states and logits.
    pub fn forward_teacher_forced(
        &self,
        source: &[u32],
        target: &[u32],
    ) -> Result<HiddenTrace, ModelError> {
        let mut tape = Tape::new();
        let p = self.bind_frozen(&mut tape);
        let trace = self.forward_nodes(&mut tape, &p, source, target)?;
        Ok(HiddenTrace {
            encoder_states: trace
                .encoder_states
                .iter()
                .map(|&id| tape.value(id).clone())
                .collect(),
            decoder_states: trace
                .decoder_states
                .iter()
                .map(|&id| tape.value(id).clone())
                .collect(),
            logits: tape.value(trace.logits).clone(),
        })
    }

    /// Encode a source once for repeated decoding; returns the final
    /// encoder output `[src_len, d_model]`.
    pub fn encode_plain(&self, source: &[u32]) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let p = self.bind_frozen(&mut tape);
        let (_, out) = self.encode_nodes(&mut tape, &p, source)?;
        Ok(tape.value(out).clone())
    }

    /// Decoder states and logits over a cached encoder output. `dec_input`
    /// must start with BOS.
    pub fn decoder_trace_plain(
        &self,
        enc_out: &Tensor,
        source: &[u32],
        dec_input: &[u32],
    ) -> Result<(Vec<Tensor>, Tensor), ModelError> {
        let mut tape = Tape::new();
        let p = self.bind_frozen(&mut tape);
        let enc_node = tape.constant(enc_out.clone());
        let (states, logits) = self.decode_nodes(&mut tape, &p, enc_node, source, dec_input)?;
        Ok((
            states.iter().map(|&id| tape.value(id).clone()).collect(),
            tape.value(logits).clone(),
        ))
    }

    /// Decoder logits over a cached encoder output.
    pub fn decoder_logits_plain(
        &self,
        enc_out: &Tensor,
        source: &[u32],
        dec_input: &[u32],
    ) -> Result<Tensor, ModelError> {
        Ok(self.decoder_trace_plain(enc_out, source, dec_input)?.1)
    }
}

/// `[BOS, target[0], …, target[T-2]]` — the decoder input whose row `t`
/// predicts `target[t]`.
pub fn bos_shift(target: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(target.len());
    out.push(BOS_ID);
    out.extend_from_slice(&target[..target.len().saturating_sub(1)]);
    out
}

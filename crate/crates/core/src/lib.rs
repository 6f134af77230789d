//! Desk-scale sequence-to-sequence distillation toolkit.
//!
//! Everything runs on a small `f64` tensor kernel with reverse-mode
//! differentiation: an encoder–decoder transformer, three compression
//! recipes (shrink-and-fine-tune, direct knowledge distillation,
//! pseudo-labeling), a fine-tuning loop with early stopping, ROUGE
//! scoring, and synthetic extractive/abstractive corpora to run the
//! comparisons on.

pub mod corpus;
pub mod distill;
pub mod metrics;
pub mod seq2seq;
pub mod tensor;
pub mod trainer;

pub use seq2seq::{ModelConfig, Seq2SeqModel};
pub use tensor::Tensor;

// Reserved token ids, shared by every vocabulary and model.
pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;

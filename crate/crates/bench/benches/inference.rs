//! Criterion benchmarks for the two timed operations. The spec-facing
//! timing protocol lives in the library (`time_model`); these exist for
//! interactive profiling with `cargo bench`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use s2s_bench::{HARNESS_HEADS, HARNESS_MAX_POSITIONS, HARNESS_VOCAB};
use s2s_core::seq2seq::{beam_search, ModelConfig};
use s2s_core::Seq2SeqModel;

fn model(enc: usize, dec: usize) -> Seq2SeqModel {
    Seq2SeqModel::new_random(
        ModelConfig {
            vocab_size: HARNESS_VOCAB,
            d_model: 32,
            n_heads: HARNESS_HEADS,
            ffn_dim: 64,
            enc_layers: enc,
            dec_layers: dec,
            max_positions: HARNESS_MAX_POSITIONS,
            tie_output_embedding: true,
        },
        7,
    )
    .unwrap()
}

fn source() -> Vec<u32> {
    (0..16).map(|t| 4 + (t * 3) % 60).collect()
}

fn target() -> Vec<u32> {
    (0..8).map(|t| 4 + (t * 11) % 60).collect()
}

fn bench_forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("teacher_forced_forward");
    for (enc, dec) in [(2, 2), (2, 4), (4, 2)] {
        let m = model(enc, dec);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{enc}-{dec}")),
            &m,
            |b, m| b.iter(|| m.forward_teacher_forced(&source(), &target()).unwrap()),
        );
    }
    group.finish();
}

fn bench_beam(c: &mut Criterion) {
    let mut group = c.benchmark_group("beam_search");
    group.sample_size(20);
    for (enc, dec) in [(2, 2), (2, 4)] {
        let m = model(enc, dec);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{enc}-{dec}")),
            &m,
            |b, m| b.iter(|| beam_search(m, &source(), 4, 8, 1.0).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_forward, bench_beam);
criterion_main!(benches);

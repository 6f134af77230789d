//! Real-clock behavior of the timing harness. Kept small: ordering
//! assertions only, absolute numbers are machine-specific.

use s2s_bench::{time_model, Mode, HARNESS_HEADS, HARNESS_MAX_POSITIONS, HARNESS_VOCAB};
use s2s_core::seq2seq::ModelConfig;

fn config(enc: usize, dec: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: HARNESS_VOCAB,
        d_model: 32,
        n_heads: HARNESS_HEADS,
        ffn_dim: 64,
        enc_layers: enc,
        dec_layers: dec,
        max_positions: HARNESS_MAX_POSITIONS,
        tie_output_embedding: true,
    }
}

#[test]
fn doubling_decoder_layers_increases_median_time() {
    let small = time_model(&config(2, 2), 1, 5, Mode::Forward).unwrap();
    let big = time_model(&config(2, 4), 1, 5, Mode::Forward).unwrap();
    assert!(
        big.median_ms > small.median_ms,
        "2 dec layers {:.3}ms vs 4 dec layers {:.3}ms",
        small.median_ms,
        big.median_ms
    );
}

#[test]
fn forward_is_faster_than_beam_generation() {
    let fwd = time_model(&config(2, 2), 1, 5, Mode::Forward).unwrap();
    let beam = time_model(&config(2, 2), 1, 5, Mode::Beam).unwrap();
    assert!(
        fwd.median_ms < beam.median_ms,
        "forward {:.3}ms vs beam {:.3}ms",
        fwd.median_ms,
        beam.median_ms
    );
}

#[test]
fn repeated_measurement_is_stable() {
    // Median absolute deviation across repeated medians under 20% of the
    // central value.
    let medians: Vec<f64> = (0..5)
        .map(|_| {
            time_model(&config(2, 2), 2, 5, Mode::Forward)
                .unwrap()
                .median_ms
        })
        .collect();
    let mut sorted = medians.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let center = sorted[2];
    let mut deviations: Vec<f64> = medians.iter().map(|m| (m - center).abs()).collect();
    deviations.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mad = deviations[2];
    assert!(
        mad < 0.2 * center,
        "median {center:.3}ms, MAD {mad:.3}ms exceeds 20%"
    );
}

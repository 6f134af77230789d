//! Brute-force verification of the layer-selection and supervision
//! mapping rules, and the bit-copy semantics of student initialization.

use s2s_core::distill::{
    build_phi, init_student, select_copy_layers, InitStrategy, InitVariant, LayerMap,
};
use s2s_core::seq2seq::ModelConfig;
use s2s_core::Seq2SeqModel;

/// Every k-subset of 0..l that contains 0 and l-1, visited through a
/// plain recursive enumeration.
fn subsets_with_endpoints(l: usize, k: usize) -> Vec<Vec<usize>> {
    fn recurse(start: usize, end: usize, need: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if need == 0 {
            out.push(acc.clone());
            return;
        }
        for i in start..=end.saturating_sub(need) {
            acc.push(i);
            recurse(i + 1, end, need - 1, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    if k == 1 {
        return (0..l).map(|i| vec![i]).collect();
    }
    if k > l {
        return out;
    }
    let mut acc = vec![0];
    if k == 2 {
        return vec![vec![0, l - 1]];
    }
    let mut inner = Vec::new();
    recurse(1, l - 1, k - 2, &mut Vec::new(), &mut inner);
    for mid in inner {
        let mut s = acc.clone();
        s.extend(mid);
        s.push(l - 1);
        out.push(s);
    }
    let _ = &mut acc;
    out
}

fn min_gap(indices: &[usize]) -> usize {
    indices
        .windows(2)
        .map(|w| w[1] - w[0])
        .min()
        .unwrap_or(usize::MAX)
}

#[test]
fn copy_layers_maximize_minimum_gap_for_all_small_depths() {
    for l in 1..=16 {
        for lp in 1..=l {
            let chosen = select_copy_layers(l, lp).unwrap();
            assert_eq!(chosen.len(), lp);
            assert!(chosen.windows(2).all(|w| w[0] < w[1]), "strictly increasing");
            assert!(chosen.iter().all(|&i| i < l));
            if lp >= 2 {
                assert_eq!(chosen[0], 0, "first layer always copied");
                assert_eq!(*chosen.last().unwrap(), l - 1, "last layer always copied");
                let best = subsets_with_endpoints(l, lp)
                    .iter()
                    .map(|s| min_gap(s))
                    .max()
                    .unwrap();
                assert_eq!(
                    min_gap(&chosen),
                    best,
                    "L={l} L'={lp}: {chosen:?} is not a maximizer of the minimum gap"
                );
            } else {
                assert_eq!(chosen, vec![0], "single-layer student copies layer 0");
            }
        }
    }
}

#[test]
fn phi_blocks_partition_the_teacher_for_all_small_depths() {
    for l in 1..=16 {
        for lp in 1..=l {
            let phi = build_phi(l, lp).unwrap();
            assert_eq!(phi.len(), lp);
            assert_eq!(*phi.last().unwrap(), l - 1);
            // Student layer i covers teacher layers (phi[i-1], phi[i]];
            // together the blocks must cover each teacher layer once.
            let mut covered = vec![0usize; l];
            let mut prev: i64 = -1;
            for &p in &phi {
                assert!((p as i64) > prev, "phi strictly increasing over blocks");
                for t in (prev + 1) as usize..=p {
                    covered[t] += 1;
                }
                prev = p as i64;
            }
            assert!(covered.iter().all(|&c| c == 1), "L={l} L'={lp}: {covered:?}");
            // Near-equal block sizes: differ by at most one.
            let mut sizes = Vec::new();
            let mut prev: i64 = -1;
            for &p in &phi {
                sizes.push(p as i64 - prev);
                prev = p as i64;
            }
            let max = sizes.iter().max().unwrap();
            let min = sizes.iter().min().unwrap();
            assert!(max - min <= 1, "L={l} L'={lp}: block sizes {sizes:?}");
        }
    }
}

#[test]
fn layer_map_bundles_both_rules() {
    let map = LayerMap::maximally_spaced(12, 3).unwrap();
    assert_eq!(map.copy_indices, vec![0, 6, 11]);
    assert_eq!(map.phi, vec![3, 7, 11]);
}

// ── init_student copy semantics ─────────────────────────────────────

fn donor() -> Seq2SeqModel {
    Seq2SeqModel::new_random(
        ModelConfig {
            vocab_size: 20,
            d_model: 8,
            n_heads: 2,
            ffn_dim: 12,
            enc_layers: 4,
            dec_layers: 12,
            max_positions: 10,
            tie_output_embedding: true,
        },
        31,
    )
    .unwrap()
}

fn student_config(donor: &Seq2SeqModel, enc: usize, dec: usize) -> ModelConfig {
    ModelConfig {
        enc_layers: enc,
        dec_layers: dec,
        ..donor.config.clone()
    }
}

fn layer_bit_eq(
    a: &s2s_core::seq2seq::DecoderLayerParams<s2s_core::Tensor>,
    b: &s2s_core::seq2seq::DecoderLayerParams<s2s_core::Tensor>,
) -> bool {
    a.self_attn.wq.bit_eq(&b.self_attn.wq)
        && a.cross_attn.wq.bit_eq(&b.cross_attn.wq)
        && a.ffn.w1.bit_eq(&b.ffn.w1)
        && a.ln1.gain.bit_eq(&b.ln1.gain)
        && a.ln3.bias.bit_eq(&b.ln3.bias)
}

#[test]
fn max_spaced_copies_the_stated_layers_bit_exactly() {
    let donor = donor();
    let cfg = student_config(&donor, 4, 3);
    let student = init_student(&donor, cfg, &InitStrategy::max_spaced(), true).unwrap();
    // 12 -> 3 copies donor decoder layers 0, 6, 11.
    for (s_idx, d_idx) in [(0usize, 0usize), (1, 6), (2, 11)] {
        assert!(
            layer_bit_eq(&student.params.decoder[s_idx], &donor.params.decoder[d_idx]),
            "student layer {s_idx} != donor layer {d_idx}"
        );
    }
    assert!(student
        .params
        .token_embedding
        .bit_eq(&donor.params.token_embedding));
    assert!(student
        .params
        .positional_embedding
        .bit_eq(&donor.params.positional_embedding));
    for (s, d) in student.params.encoder.iter().zip(&donor.params.encoder) {
        assert!(s.self_attn.wq.bit_eq(&d.self_attn.wq));
    }
}

#[test]
fn repeat_zero_fills_every_slot_with_layer_zero() {
    let donor = donor();
    let cfg = student_config(&donor, 4, 3);
    let strategy = InitStrategy::with_variant(InitVariant::Repeat { layer: 0 });
    let student = init_student(&donor, cfg, &strategy, true).unwrap();
    for l in 0..3 {
        assert!(
            layer_bit_eq(&student.params.decoder[l], &donor.params.decoder[0]),
            "student layer {l} should equal donor layer 0"
        );
    }
}

#[test]
fn random_decoder_matches_no_donor_layer() {
    let donor = donor();
    let cfg = student_config(&donor, 4, 3);
    let strategy = InitStrategy::with_variant(InitVariant::Random { seed: 1234 });
    let student = init_student(&donor, cfg, &strategy, true).unwrap();
    for s_layer in &student.params.decoder {
        for d_layer in &donor.params.decoder {
            assert!(!layer_bit_eq(s_layer, d_layer));
        }
    }
    // Encoder and embeddings are still copied.
    assert!(student
        .params
        .token_embedding
        .bit_eq(&donor.params.token_embedding));
    assert!(student.params.encoder[0]
        .self_attn
        .wq
        .bit_eq(&donor.params.encoder[0].self_attn.wq));
}

#[test]
fn contiguous_and_explicit_variants() {
    let donor = donor();
    let cfg = student_config(&donor, 4, 3);
    let back = init_student(
        &donor,
        cfg.clone(),
        &InitStrategy::with_variant(InitVariant::Contiguous { start: 9 }),
        true,
    )
    .unwrap();
    for (s_idx, d_idx) in [(0usize, 9usize), (1, 10), (2, 11)] {
        assert!(layer_bit_eq(&back.params.decoder[s_idx], &donor.params.decoder[d_idx]));
    }
    let explicit = init_student(
        &donor,
        cfg.clone(),
        &InitStrategy::with_variant(InitVariant::Explicit(vec![2, 5, 7])),
        true,
    )
    .unwrap();
    for (s_idx, d_idx) in [(0usize, 2usize), (1, 5), (2, 7)] {
        assert!(layer_bit_eq(&explicit.params.decoder[s_idx], &donor.params.decoder[d_idx]));
    }
    assert!(init_student(
        &donor,
        cfg.clone(),
        &InitStrategy::with_variant(InitVariant::Explicit(vec![2, 5])),
        true,
    )
    .is_err());
    assert!(init_student(
        &donor,
        cfg,
        &InitStrategy::with_variant(InitVariant::Explicit(vec![2, 5, 12])),
        true,
    )
    .is_err());
}

#[test]
fn smaller_encoder_uses_max_spaced_selection() {
    let donor = donor();
    let cfg = student_config(&donor, 2, 3);
    let student = init_student(&donor, cfg, &InitStrategy::max_spaced(), false).unwrap();
    // 4 -> 2 encoder: layers 0 and 3.
    assert!(student.params.encoder[0]
        .self_attn
        .wq
        .bit_eq(&donor.params.encoder[0].self_attn.wq));
    assert!(student.params.encoder[1]
        .self_attn
        .wq
        .bit_eq(&donor.params.encoder[3].self_attn.wq));
}

#[test]
fn dimension_mismatches_are_rejected() {
    let donor = donor();
    let mut cfg = student_config(&donor, 4, 3);
    cfg.d_model = 16;
    cfg.n_heads = 4;
    assert!(init_student(&donor, cfg, &InitStrategy::max_spaced(), true).is_err());
    let mut deeper = student_config(&donor, 4, 13);
    assert!(init_student(&donor, deeper.clone(), &InitStrategy::max_spaced(), true).is_err());
    deeper.dec_layers = 3;
    deeper.enc_layers = 5;
    assert!(init_student(&donor, deeper, &InitStrategy::max_spaced(), true).is_err());
    // copy_full_encoder with a smaller student encoder is contradictory.
    let small_enc = student_config(&donor, 2, 3);
    assert!(init_student(&donor, small_enc, &InitStrategy::max_spaced(), true).is_err());
}

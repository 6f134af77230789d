//! End-to-end behavior of the fine-tuning loop at desk scale.

use s2s_core::corpus::{generate_toy_corpus, PairDataset, ToyTask};
use s2s_core::distill::{
    build_phi, init_student, loss_data_node, loss_kd_node, DistillMethod, DistillRecipe,
    InitStrategy, LossWeights,
};
use s2s_core::seq2seq::ModelConfig;
use s2s_core::tensor::Tape;
use s2s_core::trainer::{
    apply_freezes, eos_extended, fine_tune, validation_loss, StopMetric, TrainingSchedule,
};
use s2s_core::{Seq2SeqModel, PAD_ID};

fn leadk_data() -> (PairDataset, PairDataset) {
    let ds = generate_toy_corpus(ToyTask::LeadK(3), 340, (6, 10), 40, 7).unwrap();
    let (train, val, _) = ds.split3(300, 40);
    (train, val)
}

fn toy_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 40,
        d_model: 32,
        n_heads: 4,
        ffn_dim: 64,
        enc_layers: 2,
        dec_layers: 2,
        max_positions: 16,
        tie_output_embedding: true,
    }
}

fn quick_schedule(seed: u64) -> TrainingSchedule {
    TrainingSchedule {
        max_epochs: 1,
        patience_evals: 4,
        evals_per_epoch: 4,
        lr: 1e-2,
        batch_size: 5,
        freeze_encoder: false,
        freeze_embeddings: false,
        seed,
        stop_metric: StopMetric::ValLoss,
        warmup_frac: 0.05,
    }
}

#[test]
fn sft_on_leadk_halves_validation_loss_within_one_epoch() {
    // The SFT flow: converge a teacher, extract a shallower student, and
    // fine-tune. One epoch must recover more than half of the loss the
    // layer removal introduced.
    let (train, val) = leadk_data();
    let teacher_schedule = TrainingSchedule {
        max_epochs: 8,
        patience_evals: 6,
        evals_per_epoch: 2,
        ..quick_schedule(1)
    };
    let model = Seq2SeqModel::new_random(toy_config(), 3).unwrap();
    let (teacher, _) = fine_tune(
        model,
        &train,
        &val,
        &teacher_schedule,
        &DistillRecipe::sft(),
        None,
    )
    .unwrap();
    let student_cfg = ModelConfig {
        dec_layers: 1,
        ..toy_config()
    };
    let student = init_student(&teacher, student_cfg, &InitStrategy::max_spaced(), true).unwrap();
    let initial = validation_loss(&student, &val).unwrap();
    let sft_schedule = TrainingSchedule {
        freeze_encoder: true,
        freeze_embeddings: true,
        ..quick_schedule(2)
    };
    let (trained, history) = fine_tune(
        student,
        &train,
        &val,
        &sft_schedule,
        &DistillRecipe::sft(),
        None,
    )
    .unwrap();
    let final_loss = validation_loss(&trained, &val).unwrap();
    assert!(
        final_loss < 0.5 * initial,
        "expected >50% reduction: initial {initial}, final {final_loss}"
    );
    assert!(!history.evals.is_empty());
}

#[test]
fn frozen_buffers_are_bit_identical_after_training() {
    let (train, val) = leadk_data();
    let model = Seq2SeqModel::new_random(toy_config(), 5).unwrap();
    let decoder_wq_before = model.params.decoder[0].self_attn.wq.clone();
    let frozen_before: Vec<_> = model
        .named_params()
        .into_iter()
        .filter(|(name, _)| {
            name.starts_with("encoder")
                || name.contains("embedding")
        })
        .map(|(name, t)| (name, t.clone()))
        .collect();
    let schedule = TrainingSchedule {
        freeze_encoder: true,
        freeze_embeddings: true,
        ..quick_schedule(2)
    };
    let (trained, _) = fine_tune(model, &train, &val, &schedule, &DistillRecipe::sft(), None).unwrap();
    for (name, before) in frozen_before {
        let after = trained
            .named_params()
            .into_iter()
            .find(|(n, _)| *n == name)
            .unwrap()
            .1
            .clone();
        assert!(before.bit_eq(&after), "{name} changed despite freeze");
    }
    // Decoder weights did change: only they (and the head, were it
    // untied) carry updates.
    assert!(!trained.params.decoder[0]
        .self_attn
        .wq
        .bit_eq(&decoder_wq_before));
}

#[test]
fn same_seed_gives_bit_identical_parameters() {
    let (train, val) = leadk_data();
    let run = || {
        let model = Seq2SeqModel::new_random(toy_config(), 11).unwrap();
        fine_tune(model, &train, &val, &quick_schedule(9), &DistillRecipe::sft(), None)
            .unwrap()
            .0
    };
    let a = run();
    let b = run();
    for ((name, ta), (_, tb)) in a.named_params().iter().zip(b.named_params().iter()) {
        assert!(ta.bit_eq(tb), "{name} differs between identical runs");
    }
}

#[test]
fn returned_model_is_the_best_validation_checkpoint() {
    let (train, val) = leadk_data();
    let model = Seq2SeqModel::new_random(toy_config(), 13).unwrap();
    let schedule = TrainingSchedule {
        max_epochs: 2,
        evals_per_epoch: 5,
        ..quick_schedule(4)
    };
    let (trained, history) = fine_tune(model, &train, &val, &schedule, &DistillRecipe::sft(), None).unwrap();
    let returned_loss = validation_loss(&trained, &val).unwrap();
    let min_recorded = history.min_val_loss().unwrap();
    assert!(
        (returned_loss - min_recorded).abs() < 1e-9,
        "returned checkpoint loss {returned_loss} != recorded min {min_recorded}"
    );
}

#[test]
fn without_freezes_every_parameter_gets_gradient_except_key_biases() {
    // Key biases are the one mathematical exception: they shift every
    // attention score in a row uniformly, which softmax cancels, so
    // their gradient is identically zero in any transformer.
    let (train, _) = leadk_data();
    let model = Seq2SeqModel::new_random(toy_config(), 15).unwrap();
    let mut tape = s2s_core::tensor::Tape::new();
    let bound = model.bind(&mut tape);
    let mut total: Option<s2s_core::tensor::NodeId> = None;
    for rec in train.records.iter().take(4) {
        let tgt = eos_extended(&rec.target);
        let trace = model.forward_nodes(&mut tape, &bound, &rec.source, &tgt).unwrap();
        let loss = loss_data_node(&mut tape, trace.logits, &tgt, s2s_core::PAD_ID).unwrap();
        total = Some(match total {
            None => loss,
            Some(acc) => tape.add(acc, loss).unwrap(),
        });
    }
    tape.backward(total.unwrap()).unwrap();
    for ((name, _), (_, &node)) in model.named_params().iter().zip(bound.named().iter()) {
        let grad = tape.grad(node);
        let is_key_bias = name.ends_with(".bk");
        match grad {
            Some(g) => {
                let nonzero = g.iter().any(|&x| x != 0.0);
                if is_key_bias {
                    assert!(!nonzero, "{name}: key bias gradient must vanish");
                } else {
                    assert!(nonzero, "{name}: expected a nonzero gradient");
                }
            }
            None => panic!("{name}: no gradient accumulated"),
        }
    }
}

#[test]
fn overfit_model_greedy_decodes_the_forced_sequence() {
    // A model driven to probability ~1 on one pair reproduces it.
    use s2s_core::seq2seq::greedy_decode;
    use s2s_core::tensor::{adam_step, AdamState};
    let mut model = Seq2SeqModel::new_random(toy_config(), 17).unwrap();
    let source = [10u32, 20, 30, 7];
    let target = [10u32, 20, 30];
    let tgt = eos_extended(&target);
    let mut adam = {
        let named = model.named_params();
        let refs: Vec<&s2s_core::Tensor> = named.iter().map(|(_, t)| *t).collect();
        AdamState::new(&refs, 1e-2)
    };
    for _ in 0..150 {
        let mut tape = s2s_core::tensor::Tape::new();
        let bound = model.bind(&mut tape);
        let trace = model.forward_nodes(&mut tape, &bound, &source, &tgt).unwrap();
        let loss = loss_data_node(&mut tape, trace.logits, &tgt, s2s_core::PAD_ID).unwrap();
        tape.backward(loss).unwrap();
        let grads: Vec<Option<Vec<f64>>> = bound
            .named()
            .iter()
            .map(|(_, &n)| tape.grad(n).map(|g| g.to_vec()))
            .collect();
        for ((_, t), g) in model.named_params_mut().into_iter().zip(grads) {
            t.grad = Some(g.unwrap_or_else(|| vec![0.0; t.numel()]));
        }
        let mut named = model.named_params_mut();
        let mut refs: Vec<&mut s2s_core::Tensor> =
            named.iter_mut().map(|(_, t)| &mut **t).collect();
        adam_step(&mut refs, &mut adam).unwrap();
    }
    assert_eq!(greedy_decode(&model, &source, 8).unwrap(), target.to_vec());
}

#[test]
fn kd_without_teacher_is_an_error() {
    let (train, val) = leadk_data();
    let model = Seq2SeqModel::new_random(toy_config(), 1).unwrap();
    let recipe = DistillRecipe {
        method: DistillMethod::Kd,
        weights: LossWeights::default(),
        beam: Default::default(),
    };
    assert!(fine_tune(model, &train, &val, &quick_schedule(0), &recipe, None).is_err());
}

#[test]
fn empty_dataset_is_an_error() {
    let (train, val) = leadk_data();
    let empty = PairDataset {
        records: vec![],
        vocab: train.vocab.clone(),
    };
    let model = Seq2SeqModel::new_random(toy_config(), 1).unwrap();
    assert!(fine_tune(
        model.clone(),
        &empty,
        &val,
        &quick_schedule(0),
        &DistillRecipe::sft(),
        None
    )
    .is_err());
    assert!(fine_tune(
        model,
        &train,
        &empty,
        &quick_schedule(0),
        &DistillRecipe::sft(),
        None
    )
    .is_err());
}

#[test]
fn teacher_buffers_untouched_by_student_kd_training() {
    let (train, val) = leadk_data();
    let teacher = Seq2SeqModel::new_random(toy_config(), 21).unwrap();
    let teacher_snapshot = teacher.clone();
    let student_cfg = ModelConfig {
        dec_layers: 1,
        ..toy_config()
    };
    let student = init_student(&teacher, student_cfg, &InitStrategy::max_spaced(), true).unwrap();
    let recipe = DistillRecipe {
        method: DistillMethod::Kd,
        weights: LossWeights::default(),
        beam: Default::default(),
    };
    let schedule = TrainingSchedule {
        freeze_encoder: true,
        freeze_embeddings: true,
        ..quick_schedule(3)
    };
    let _ = fine_tune(student, &train, &val, &schedule, &recipe, Some(&teacher)).unwrap();
    for ((name, before), (_, after)) in teacher_snapshot
        .named_params()
        .iter()
        .zip(teacher.named_params().iter())
    {
        assert!(before.bit_eq(after), "teacher {name} mutated");
    }
}

#[test]
fn kd_first_step_gradient_on_exact_copy_reduces_to_data_term() {
    // Student initialized as an exact copy of the teacher: the logits and
    // hidden terms sit at their minima, so the KD gradient equals the
    // gradient of alpha_data * L_Data alone.
    let teacher = Seq2SeqModel::new_random(toy_config(), 33).unwrap();
    let student = init_student(
        &teacher,
        toy_config(),
        &InitStrategy::max_spaced(),
        true,
    )
    .unwrap();
    let source = [4u32, 5, 6, 7];
    let target = eos_extended(&[8, 9, 10]);
    let teacher_trace = teacher.forward_teacher_forced(&source, &target).unwrap();
    let phi = build_phi(2, 2).unwrap();
    let weights = LossWeights::default();

    let kd_grads = {
        let mut tape = Tape::new();
        let bound = student.bind(&mut tape);
        let trace = student
            .forward_nodes(&mut tape, &bound, &source, &target)
            .unwrap();
        let loss = loss_kd_node(
            &mut tape,
            trace.logits,
            &trace.decoder_states,
            &teacher_trace,
            &target,
            &weights,
            &phi,
            PAD_ID,
        )
        .unwrap();
        tape.backward(loss).unwrap();
        bound
            .named()
            .iter()
            .map(|(_, &n)| tape.grad(n).map(|g| g.to_vec()))
            .collect::<Vec<_>>()
    };
    let data_grads = {
        let mut tape = Tape::new();
        let bound = student.bind(&mut tape);
        let trace = student
            .forward_nodes(&mut tape, &bound, &source, &target)
            .unwrap();
        let loss = loss_data_node(&mut tape, trace.logits, &target, PAD_ID).unwrap();
        let scaled = tape.scale(loss, weights.alpha_data);
        tape.backward(scaled).unwrap();
        bound
            .named()
            .iter()
            .map(|(_, &n)| tape.grad(n).map(|g| g.to_vec()))
            .collect::<Vec<_>>()
    };
    for (i, (kd, data)) in kd_grads.iter().zip(&data_grads).enumerate() {
        match (kd, data) {
            (Some(kd), Some(data)) => {
                for (a, b) in kd.iter().zip(data) {
                    assert!(
                        (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0),
                        "param {i}: kd grad {a} vs data grad {b}"
                    );
                }
            }
            (None, None) => {}
            other => panic!("gradient presence differs for param {i}: {other:?}"),
        }
    }
}

#[test]
fn shared_encoder_kd_matches_unshared_kd() {
    // Sharing the frozen encoder forward is an optimization; it must not
    // change the trained result.
    let (train, val) = leadk_data();
    let teacher = Seq2SeqModel::new_random(toy_config(), 41).unwrap();
    let student_cfg = ModelConfig {
        dec_layers: 1,
        ..toy_config()
    };
    let recipe = DistillRecipe {
        method: DistillMethod::Kd,
        weights: LossWeights::default(),
        beam: Default::default(),
    };
    // Shared path: frozen identical encoder side.
    let shared_schedule = TrainingSchedule {
        freeze_encoder: true,
        freeze_embeddings: true,
        max_epochs: 1,
        evals_per_epoch: 2,
        ..quick_schedule(6)
    };
    let student_a = init_student(
        &teacher,
        student_cfg.clone(),
        &InitStrategy::max_spaced(),
        true,
    )
    .unwrap();
    let (a, _) = fine_tune(student_a, &train, &val, &shared_schedule, &recipe, Some(&teacher)).unwrap();
    // Disable sharing by perturbing one encoder weight of the student
    // after init; encoder stays frozen (at the perturbed value) but is no
    // longer bit-identical, so the teacher runs its own encoder. To keep
    // results comparable we revert the perturbation before training...
    // that would reintroduce sharing, so instead check value equality of
    // a single KD batch gradient computed through both paths.
    let student_b = init_student(&teacher, student_cfg, &InitStrategy::max_spaced(), true).unwrap();
    let source = &train.records[0].source;
    let target = eos_extended(&train.records[0].target);
    let phi = build_phi(2, 1).unwrap();
    let grads_via = |share: bool| -> Vec<Option<Vec<f64>>> {
        let mut tape = Tape::new();
        let bound = student_b.bind(&mut tape);
        let trace = student_b
            .forward_nodes(&mut tape, &bound, source, &target)
            .unwrap();
        let teacher_trace = if share {
            let enc_out = tape.value(trace.encoder_output).clone();
            let dec_input = s2s_core::seq2seq::bos_shift(&target);
            let (decoder_states, logits) = teacher
                .decoder_trace_plain(&enc_out, source, &dec_input)
                .unwrap();
            s2s_core::seq2seq::HiddenTrace {
                encoder_states: vec![],
                decoder_states,
                logits,
            }
        } else {
            teacher.forward_teacher_forced(source, &target).unwrap()
        };
        let loss = loss_kd_node(
            &mut tape,
            trace.logits,
            &trace.decoder_states,
            &teacher_trace,
            &target,
            &LossWeights::default(),
            &phi,
            PAD_ID,
        )
        .unwrap();
        tape.backward(loss).unwrap();
        bound
            .named()
            .iter()
            .map(|(_, &n)| tape.grad(n).map(|g| g.to_vec()))
            .collect()
    };
    let shared = grads_via(true);
    let unshared = grads_via(false);
    for (a_g, b_g) in shared.iter().zip(&unshared) {
        match (a_g, b_g) {
            (Some(x), Some(y)) => {
                for (p, q) in x.iter().zip(y) {
                    assert!((p - q).abs() < 1e-12, "shared {p} vs unshared {q}");
                }
            }
            (None, None) => {}
            other => panic!("presence mismatch {other:?}"),
        }
    }
    // And the full shared-path training run produced a usable model.
    assert!(validation_loss(&a, &val).unwrap().is_finite());
}

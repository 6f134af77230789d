//! Command implementations. Each command resolves its config, runs the
//! pipeline, and writes its artifacts into the output directory; partial
//! outputs go to temporary names and are renamed only on success.

use crate::config::Config;
use anyhow::{anyhow, bail, Context, Result};
use s2s_bench::{
    fit_ols, fit_ols_log, sample_configs, save_csv, time_model, DimensionRanges, Mode,
};
use s2s_core::corpus::{
    generate_toy_corpus, load_jsonl_with_vocab, save_jsonl, PairDataset, ToyTask, Vocabulary,
};
use s2s_core::distill::{
    combine_datasets, generate_pseudolabels, init_student, load_pseudolabels, save_pseudolabels,
    CombineMode, DistillMethod, DistillRecipe, InitStrategy, InitVariant, LossWeights,
    PseudoLabelSet,
};
use s2s_core::metrics::{score_corpus, RougeReport};
use s2s_core::seq2seq::{load_checkpoint, save_checkpoint, BeamParams, ModelConfig};
use s2s_core::trainer::{fine_tune, save_history, StopMetric, TrainHistory, TrainingSchedule};
use s2s_core::Seq2SeqModel;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("txt.tmp");
    {
        let mut f = fs::File::create(&tmp)
            .with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn prepare_out(cfg: &Config, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(&out.join("config.txt"), &cfg.echo())
}

fn parse_size(spec: &str) -> Result<(usize, usize)> {
    let (e, d) = spec
        .split_once('-')
        .ok_or_else(|| anyhow!("student_size must look like \"12-3\", got {spec:?}"))?;
    Ok((
        e.trim().parse().context("encoder layer count")?,
        d.trim().parse().context("decoder layer count")?,
    ))
}

fn schedule_from(cfg: &Config, default_freeze: bool) -> Result<TrainingSchedule> {
    let defaults = TrainingSchedule::default();
    let stop_metric = match cfg.get("stop_metric") {
        None | Some("loss") => StopMetric::ValLoss,
        Some("rouge2") => StopMetric::ValRouge2,
        Some(other) => bail!("stop_metric must be loss or rouge2, got {other:?}"),
    };
    Ok(TrainingSchedule {
        max_epochs: cfg.get_usize("max_epochs", defaults.max_epochs)?,
        patience_evals: cfg.get_usize("patience", defaults.patience_evals)?,
        evals_per_epoch: cfg.get_usize("evals_per_epoch", defaults.evals_per_epoch)?,
        lr: cfg.get_f64("lr", defaults.lr)?,
        batch_size: cfg.get_usize("batch_size", defaults.batch_size)?,
        freeze_encoder: cfg.get_bool("freeze_encoder", default_freeze)?,
        freeze_embeddings: cfg.get_bool("freeze_embeddings", default_freeze)?,
        seed: cfg.get_u64("seed", 0)?,
        stop_metric,
        warmup_frac: cfg.get_f64("warmup_frac", defaults.warmup_frac)?,
    })
}

fn beam_from(cfg: &Config) -> Result<BeamParams> {
    let defaults = BeamParams::default();
    Ok(BeamParams {
        beam_size: cfg.get_usize("beam_size", defaults.beam_size)?,
        max_len: cfg.get_usize("max_len", defaults.max_len)?,
        length_penalty: cfg.get_f64("length_penalty", defaults.length_penalty)?,
    })
}

fn load_split(cfg: &Config, key: &str, vocab: &Vocabulary) -> Result<PairDataset> {
    let path = PathBuf::from(cfg.require(key)?);
    load_jsonl_with_vocab(&path, vocab)
        .with_context(|| format!("loading {key} dataset {}", path.display()))
}

fn load_teacher(cfg: &Config, key: &str) -> Result<(Seq2SeqModel, Vocabulary, String)> {
    let path = PathBuf::from(cfg.require(key)?);
    let (model, vocab) = load_checkpoint(&path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?;
    let vocab = vocab.ok_or_else(|| {
        anyhow!(
            "checkpoint {} carries no vocabulary; it was not produced by train-teacher",
            path.display()
        )
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "teacher".to_string());
    Ok((model, vocab, id))
}

/// Longest sequence the model must fit: source or EOS-extended decoder
/// input, plus slack for generation.
fn needed_positions(datasets: &[&PairDataset]) -> usize {
    let mut need = 8;
    for ds in datasets {
        for rec in &ds.records {
            need = need.max(rec.source.len()).max(rec.target.len() + 2);
        }
    }
    need
}

pub struct TrainTeacherOut {
    pub checkpoint: PathBuf,
    pub history: TrainHistory,
    pub final_val_loss: f64,
}

pub fn cmd_train_teacher(cfg: &Config, out: &Path) -> Result<TrainTeacherOut> {
    prepare_out(cfg, out)?;
    let train_path = PathBuf::from(cfg.require("train")?);
    let train = s2s_core::corpus::load_jsonl(&train_path)
        .with_context(|| format!("loading train dataset {}", train_path.display()))?;
    let vocab = train.vocab.clone();
    let val = load_split(cfg, "val", &vocab)?;

    let max_positions = cfg.get_usize("max_positions", needed_positions(&[&train, &val]) + 4)?;
    let config = ModelConfig {
        vocab_size: vocab.size(),
        d_model: cfg.get_usize("d_model", 32)?,
        n_heads: cfg.get_usize("n_heads", 4)?,
        ffn_dim: cfg.get_usize("ffn_dim", 64)?,
        enc_layers: cfg.get_usize("enc_layers", 2)?,
        dec_layers: cfg.get_usize("dec_layers", 2)?,
        max_positions,
        tie_output_embedding: cfg.get_bool("tie_output_embedding", true)?,
    };
    let seed = cfg.get_u64("seed", 0)?;
    let model = Seq2SeqModel::new_random(config, seed)?;
    // A teacher trains from scratch; freezing only applies to students
    // that inherit a fully copied encoder.
    let schedule = schedule_from(cfg, false)?;
    let (teacher, history) = fine_tune(model, &train, &val, &schedule, &DistillRecipe::sft(), None)?;
    let final_val_loss = s2s_core::trainer::validation_loss(&teacher, &val)?;

    let checkpoint = out.join("teacher.ckpt");
    save_checkpoint(&teacher, Some(&vocab), &checkpoint)?;
    save_history(&history, &out.join("history.tsv"))?;
    Ok(TrainTeacherOut {
        checkpoint,
        history,
        final_val_loss,
    })
}

fn parse_init(cfg: &Config, seed: u64) -> Result<InitStrategy> {
    let raw = cfg.get("init").unwrap_or("max_spaced");
    let variant = if raw == "max_spaced" {
        InitVariant::MaxSpaced
    } else if raw == "random" {
        InitVariant::Random { seed }
    } else if let Some(start) = raw.strip_prefix("contiguous:") {
        InitVariant::Contiguous {
            start: start.parse().context("contiguous start index")?,
        }
    } else if let Some(layer) = raw.strip_prefix("repeat:") {
        InitVariant::Repeat {
            layer: layer.parse().context("repeat layer index")?,
        }
    } else if let Some(list) = raw.strip_prefix("explicit:") {
        InitVariant::Explicit(
            list.split(',')
                .map(|f| f.trim().parse().context("explicit index"))
                .collect::<Result<Vec<usize>>>()?,
        )
    } else {
        bail!("unrecognized init strategy {raw:?}");
    };
    Ok(InitStrategy {
        variant,
        donor: cfg.get("teacher").unwrap_or("teacher").to_string(),
    })
}

fn weights_from(cfg: &Config) -> Result<LossWeights> {
    let defaults = LossWeights::default();
    Ok(LossWeights {
        alpha_logits: cfg.get_f64("alpha_logits", defaults.alpha_logits)?,
        alpha_data: cfg.get_f64("alpha_data", defaults.alpha_data)?,
        alpha_hidn: cfg.get_f64("alpha_hidn", defaults.alpha_hidn)?,
    })
}

fn pseudo_sets(
    cfg: &Config,
    teacher: &Seq2SeqModel,
    teacher_id: &str,
    train: &PairDataset,
    beam: &BeamParams,
) -> Result<Vec<PseudoLabelSet>> {
    match cfg.get("pl_files") {
        Some(paths) => paths
            .split(',')
            .map(|p| {
                load_pseudolabels(Path::new(p.trim()), &train.vocab)
                    .with_context(|| format!("loading pseudo-label file {p}"))
            })
            .collect(),
        None => Ok(vec![generate_pseudolabels(teacher, train, beam, teacher_id)?]),
    }
}

pub struct DistillOut {
    pub checkpoint: PathBuf,
    pub report: RougeReport,
    pub history: TrainHistory,
    pub result_row: String,
}

pub fn cmd_distill(cfg: &Config, out: &Path) -> Result<DistillOut> {
    prepare_out(cfg, out)?;
    let (teacher, vocab, teacher_id) = load_teacher(cfg, "teacher")?;
    let train = load_split(cfg, "train", &vocab)?;
    let val = load_split(cfg, "val", &vocab)?;
    let method = DistillMethod::parse(cfg.require("method")?)
        .ok_or_else(|| anyhow!("method must be sft, kd, or pl"))?;
    let size = cfg.require("student_size")?;
    let (enc_layers, dec_layers) = parse_size(size)?;
    if enc_layers > teacher.config.enc_layers || dec_layers > teacher.config.dec_layers {
        bail!(
            "student size {size} exceeds teacher {}-{}",
            teacher.config.enc_layers,
            teacher.config.dec_layers
        );
    }
    let student_config = ModelConfig {
        enc_layers,
        dec_layers,
        ..teacher.config.clone()
    };
    let seed = cfg.get_u64("seed", 0)?;
    let strategy = parse_init(cfg, seed)?;
    let copy_full_encoder = enc_layers == teacher.config.enc_layers;
    let student = init_student(&teacher, student_config, &strategy, copy_full_encoder)?;

    let schedule = schedule_from(cfg, copy_full_encoder)?;
    let beam = beam_from(cfg)?;
    let recipe = DistillRecipe {
        method,
        weights: weights_from(cfg)?,
        beam: beam.clone(),
    };

    let (trained, history) = match method {
        DistillMethod::Sft => fine_tune(student, &train, &val, &schedule, &recipe, None)?,
        DistillMethod::Kd => fine_tune(student, &train, &val, &schedule, &recipe, Some(&teacher))?,
        DistillMethod::Pl => {
            let sets = pseudo_sets(cfg, &teacher, &teacher_id, &train, &beam)?;
            let mode = match cfg.get("pl_mode") {
                None => CombineMode::Pl,
                Some(raw) => CombineMode::parse(raw)
                    .ok_or_else(|| anyhow!("pl_mode must be orig, pl, orig_pl, or orig_all_pl"))?,
            };
            let combined = combine_datasets(&train, &sets, mode)?;
            fine_tune(student, &combined, &val, &schedule, &recipe, None)?
        }
    };

    let eval_data = match cfg.get("test") {
        Some(_) => load_split(cfg, "test", &vocab)?,
        None => val.clone(),
    };
    let report = score_corpus(&trained, &eval_data, &beam)?;

    let checkpoint = out.join("student.ckpt");
    save_checkpoint(&trained, Some(&vocab), &checkpoint)?;
    save_history(&history, &out.join("history.tsv"))?;
    write_atomic(&out.join("eval.txt"), &format!("{}\n", report.report_line()))?;
    let result_row = format!(
        "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
        method.name(),
        size,
        report.rouge1.f1,
        report.rouge2.f1,
        report.rouge_l.f1,
        history.min_val_loss().unwrap_or(f64::NAN),
    );
    write_atomic(&out.join("result_row.tsv"), &result_row)?;
    Ok(DistillOut {
        checkpoint,
        report,
        history,
        result_row,
    })
}

pub struct PseudoOut {
    pub file: PathBuf,
    pub n_records: usize,
}

pub fn cmd_pseudo(cfg: &Config, out: &Path) -> Result<PseudoOut> {
    prepare_out(cfg, out)?;
    let (teacher, vocab, teacher_id) = load_teacher(cfg, "teacher")?;
    let train = load_split(cfg, "train", &vocab)?;
    let beam = beam_from(cfg)?;
    let set = generate_pseudolabels(&teacher, &train, &beam, &teacher_id)?;
    let file = out.join("pseudo.jsonl");
    save_pseudolabels(&set, &vocab, &file)?;
    Ok(PseudoOut {
        file,
        n_records: set.len(),
    })
}

pub struct EvalOut {
    pub report: RougeReport,
    pub report_line: String,
}

pub fn cmd_eval(cfg: &Config, out: &Path) -> Result<EvalOut> {
    prepare_out(cfg, out)?;
    let (model, vocab, _) = load_teacher(cfg, "model")?;
    let key = ["test", "val", "train"]
        .into_iter()
        .find(|k| cfg.get(k).is_some())
        .ok_or_else(|| anyhow!("eval needs one of test/val/train dataset paths"))?;
    let data = load_split(cfg, key, &vocab)?;
    let beam = beam_from(cfg)?;
    let report = score_corpus(&model, &data, &beam)?;
    let report_line = report.report_line();
    write_atomic(&out.join("eval.txt"), &format!("{report_line}\n"))?;
    Ok(EvalOut {
        report,
        report_line,
    })
}

pub struct BenchOut {
    pub csv: PathBuf,
    pub regression: PathBuf,
    pub raw_fit: s2s_bench::RegressionFit,
    pub log_fit: s2s_bench::RegressionFit,
}

pub fn cmd_bench(cfg: &Config, out: &Path) -> Result<BenchOut> {
    prepare_out(cfg, out)?;
    let ranges = DimensionRanges {
        enc_layers: cfg.get_usize_list("enc_layers_range", &[1, 2, 3, 4])?,
        dec_layers: cfg.get_usize_list("dec_layers_range", &[1, 2, 3, 4])?,
        d_model: cfg.get_usize_list("d_model_range", &[16, 32])?,
        ffn_dim: cfg.get_usize_list("ffn_dim_range", &[32, 64])?,
    };
    let count = cfg.get_usize("count", 50)?;
    let seed = cfg.get_u64("seed", 0)?;
    let mode = match cfg.get("mode") {
        None => Mode::Forward,
        Some(raw) => Mode::parse(raw).ok_or_else(|| anyhow!("mode must be forward or beam"))?,
    };
    let batch = cfg.get_usize("batch", 1)?;
    let reps = cfg.get_usize("reps", 5)?;

    let configs = sample_configs(&ranges, count, seed)?;
    let mut records = Vec::with_capacity(configs.len());
    for config in &configs {
        records.push(time_model(config, batch, reps, mode)?);
    }
    let csv = out.join("bench.csv");
    save_csv(&records, &csv)?;

    let raw_fit = fit_ols(&records)?;
    let log_fit = fit_ols_log(&records)?;
    let mut report = String::new();
    report.push_str(&format!(
        "mode={}\nbatch={batch}\nreps={reps}\ncount={count}\n",
        mode.name()
    ));
    report.push_str(&raw_fit.report("raw_ms"));
    report.push_str(&log_fit.report("log_ms"));
    let regression = out.join("regression.txt");
    write_atomic(&regression, &report)?;
    Ok(BenchOut {
        csv,
        regression,
        raw_fit,
        log_fit,
    })
}

pub struct GenDataOut {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
}

pub fn cmd_gen_data(cfg: &Config, out: &Path) -> Result<GenDataOut> {
    prepare_out(cfg, out)?;
    let task = match cfg.get("task") {
        None | Some("leadk") => ToyTask::LeadK(cfg.get_usize("k", 3)?),
        Some("keyterm") => ToyTask::KeyTerm,
        Some(other) => bail!("task must be leadk or keyterm, got {other:?}"),
    };
    let n_train = cfg.get_usize("n_train", 300)?;
    let n_val = cfg.get_usize("n_val", 40)?;
    let n_test = cfg.get_usize("n_test", 40)?;
    let doc_len = (
        cfg.get_usize("doc_len_min", 6)?,
        cfg.get_usize("doc_len_max", 10)?,
    );
    let vocab_size = cfg.get_usize("vocab_size", 40)?;
    let seed = cfg.get_u64("seed", 0)?;
    let dataset = generate_toy_corpus(task, n_train + n_val + n_test, doc_len, vocab_size, seed)?;
    let (train, val, test) = dataset.split3(n_train, n_val);
    let paths = GenDataOut {
        train: out.join("train.jsonl"),
        val: out.join("val.jsonl"),
        test: out.join("test.jsonl"),
    };
    save_jsonl(&train, &paths.train)?;
    save_jsonl(&val, &paths.val)?;
    save_jsonl(&test, &paths.test)?;
    Ok(paths)
}

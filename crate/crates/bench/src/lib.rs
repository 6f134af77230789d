//! Inference-cost harness: sample random architectures, time forward
//! passes and beam-search generation, and fit an ordinary-least-squares
//! model of wall-clock time against architecture dimensions.
//!
//! Timing protocol: median over `reps >= 3` repetitions after two warmup
//! runs, single-threaded. Regression: normal equations on standardized
//! predictors, coefficients reported in raw units (ms per added unit).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2s_core::seq2seq::{beam_search, count_params, ModelConfig};
use s2s_core::Seq2SeqModel;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("empty range for dimension {0}")]
    EmptyRange(&'static str),
    #[error("count must be >= 1")]
    ZeroCount,
    #[error("reps must be >= 3, got {0}")]
    TooFewReps(usize),
    #[error("config needs ~{need_mb} MB of parameters, over the {budget_mb} MB harness budget")]
    ResourceBudget { need_mb: u64, budget_mb: u64 },
    #[error("d_model {0} not divisible by the harness head count {1}")]
    BadWidth(usize, usize),
    #[error("need at least {need} records for {predictors} predictors, got {got}")]
    TooFewRecords { need: usize, predictors: usize, got: usize },
    #[error("rank-deficient design matrix; collinear or constant column(s): {0}")]
    RankDeficient(String),
    #[error("baseline and comparison records differ in {0}")]
    MismatchedRecords(&'static str),
    #[error("malformed csv line {line}: {message}")]
    MalformedCsv { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] s2s_core::seq2seq::ModelError),
}

/// Fixed harness parameters; only the four studied dimensions vary.
pub const HARNESS_VOCAB: usize = 64;
pub const HARNESS_HEADS: usize = 4;
pub const HARNESS_MAX_POSITIONS: usize = 32;
pub const HARNESS_SOURCE_LEN: usize = 16;
pub const HARNESS_TARGET_LEN: usize = 8;
pub const HARNESS_BEAM_SIZE: usize = 4;
pub const HARNESS_GEN_LEN: usize = 8;
/// Parameter-memory budget for a single timed model.
const BUDGET_BYTES: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Forward,
    Beam,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Forward => "forward",
            Mode::Beam => "beam",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "forward" => Some(Mode::Forward),
            "beam" => Some(Mode::Beam),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub d_model: usize,
    pub ffn_dim: usize,
    pub mode: Mode,
    pub batch: usize,
    pub median_ms: f64,
}

/// Candidate values per studied dimension; draws are uniform and
/// independent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionRanges {
    pub enc_layers: Vec<usize>,
    pub dec_layers: Vec<usize>,
    pub d_model: Vec<usize>,
    pub ffn_dim: Vec<usize>,
}

impl DimensionRanges {
    fn validate(&self) -> Result<(), BenchError> {
        for (name, list) in [
            ("enc_layers", &self.enc_layers),
            ("dec_layers", &self.dec_layers),
            ("d_model", &self.d_model),
            ("ffn_dim", &self.ffn_dim),
        ] {
            if list.is_empty() {
                return Err(BenchError::EmptyRange(name));
            }
        }
        for &d in &self.d_model {
            if d % HARNESS_HEADS != 0 {
                return Err(BenchError::BadWidth(d, HARNESS_HEADS));
            }
        }
        Ok(())
    }
}

/// Uniform independent draws per dimension; deterministic per seed.
pub fn sample_configs(
    ranges: &DimensionRanges,
    count: usize,
    seed: u64,
) -> Result<Vec<ModelConfig>, BenchError> {
    ranges.validate()?;
    if count == 0 {
        return Err(BenchError::ZeroCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, list: &[usize]| list[rng.gen_range(0..list.len())];
    Ok((0..count)
        .map(|_| ModelConfig {
            vocab_size: HARNESS_VOCAB,
            d_model: pick(&mut rng, &ranges.d_model),
            n_heads: HARNESS_HEADS,
            ffn_dim: pick(&mut rng, &ranges.ffn_dim),
            enc_layers: pick(&mut rng, &ranges.enc_layers),
            dec_layers: pick(&mut rng, &ranges.dec_layers),
            max_positions: HARNESS_MAX_POSITIONS,
            tie_output_embedding: true,
        })
        .collect())
}

fn fixed_source(i: usize) -> Vec<u32> {
    (0..HARNESS_SOURCE_LEN)
        .map(|t| (4 + (i * 7 + t * 3) % (HARNESS_VOCAB - 4)) as u32)
        .collect()
}

fn fixed_target(i: usize) -> Vec<u32> {
    (0..HARNESS_TARGET_LEN)
        .map(|t| (4 + (i * 5 + t * 11) % (HARNESS_VOCAB - 4)) as u32)
        .collect()
}

/// Time one configuration: two untimed warmup runs, then the median of
/// `reps` timed runs. One run processes `batch` examples sequentially.
pub fn time_model(
    config: &ModelConfig,
    batch: usize,
    reps: usize,
    mode: Mode,
) -> Result<TimingRecord, BenchError> {
    if reps < 3 {
        return Err(BenchError::TooFewReps(reps));
    }
    let need = count_params(config) * 8;
    if need > BUDGET_BYTES {
        return Err(BenchError::ResourceBudget {
            need_mb: need >> 20,
            budget_mb: BUDGET_BYTES >> 20,
        });
    }
    let model = Seq2SeqModel::new_random(config.clone(), 0xBE47)?;
    let run = || -> Result<(), BenchError> {
        for i in 0..batch {
            match mode {
                Mode::Forward => {
                    model.forward_teacher_forced(&fixed_source(i), &fixed_target(i))?;
                }
                Mode::Beam => {
                    beam_search(
                        &model,
                        &fixed_source(i),
                        HARNESS_BEAM_SIZE,
                        HARNESS_GEN_LEN,
                        1.0,
                    )?;
                }
            }
        }
        Ok(())
    };
    for _ in 0..2 {
        run()?;
    }
    let mut times_ms: Vec<f64> = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        run()?;
        times_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_ms = if reps % 2 == 1 {
        times_ms[reps / 2]
    } else {
        0.5 * (times_ms[reps / 2 - 1] + times_ms[reps / 2])
    };
    Ok(TimingRecord {
        enc_layers: config.enc_layers,
        dec_layers: config.dec_layers,
        d_model: config.d_model,
        ffn_dim: config.ffn_dim,
        mode,
        batch,
        median_ms,
    })
}

// ── OLS regression ──────────────────────────────────────────────────

const PREDICTOR_NAMES: [&str; 4] = ["enc_layers", "dec_layers", "d_model", "ffn_dim"];

/// Intercept plus one raw-unit coefficient per architecture dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub intercept: f64,
    pub coef_enc_layers: f64,
    pub coef_dec_layers: f64,
    pub coef_d_model: f64,
    pub coef_ffn_dim: f64,
    pub r_squared: f64,
}

impl RegressionFit {
    /// Key/value report, one line per field.
    pub fn report(&self, label: &str) -> String {
        format!(
            "{label}.intercept={:.9}\n{label}.coef_enc_layers={:.9}\n{label}.coef_dec_layers={:.9}\n{label}.coef_d_model={:.9}\n{label}.coef_ffn_dim={:.9}\n{label}.r_squared={:.6}\n",
            self.intercept,
            self.coef_enc_layers,
            self.coef_dec_layers,
            self.coef_d_model,
            self.coef_ffn_dim,
            self.r_squared
        )
    }
}

fn predictors_of(r: &TimingRecord) -> [f64; 4] {
    [
        r.enc_layers as f64,
        r.dec_layers as f64,
        r.d_model as f64,
        r.ffn_dim as f64,
    ]
}

/// Gaussian elimination with partial pivoting; a vanishing pivot names
/// the offending column.
fn solve_normal_equations(
    mut a: Vec<Vec<f64>>,
    mut b: Vec<f64>,
    col_names: &[String],
) -> Result<Vec<f64>, BenchError> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot_row][col].abs() < 1e-10 {
            return Err(BenchError::RankDeficient(col_names[col].clone()));
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    Ok((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn fit_ols_internal(
    records: &[TimingRecord],
    response: impl Fn(&TimingRecord) -> f64,
) -> Result<RegressionFit, BenchError> {
    let n = records.len();
    let predictors = PREDICTOR_NAMES.len();
    if n < predictors + 2 {
        return Err(BenchError::TooFewRecords {
            need: predictors + 2,
            predictors,
            got: n,
        });
    }
    let raw: Vec<[f64; 4]> = records.iter().map(predictors_of).collect();
    let y: Vec<f64> = records.iter().map(&response).collect();

    // Standardize each predictor; a zero-variance column is degenerate
    // before the solver ever sees it.
    let mut means = [0.0; 4];
    let mut stds = [0.0; 4];
    let mut constant_cols = Vec::new();
    for j in 0..4 {
        means[j] = raw.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = raw.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n as f64;
        stds[j] = var.sqrt();
        if stds[j] < 1e-12 {
            constant_cols.push(PREDICTOR_NAMES[j]);
        }
    }
    if !constant_cols.is_empty() {
        return Err(BenchError::RankDeficient(constant_cols.join(", ")));
    }
    let x: Vec<[f64; 5]> = raw
        .iter()
        .map(|r| {
            let mut row = [1.0; 5];
            for j in 0..4 {
                row[j + 1] = (r[j] - means[j]) / stds[j];
            }
            row
        })
        .collect();

    // Normal equations XᵀX β = Xᵀy.
    let mut xtx = vec![vec![0.0; 5]; 5];
    let mut xty = vec![0.0; 5];
    for (row, &yi) in x.iter().zip(&y) {
        for i in 0..5 {
            xty[i] += row[i] * yi;
            for j in 0..5 {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    let col_names: Vec<String> = std::iter::once("intercept".to_string())
        .chain(PREDICTOR_NAMES.iter().map(|s| s.to_string()))
        .collect();
    let beta = solve_normal_equations(xtx, xty, &col_names)?;

    // R² and residual diagnostics on the standardized fit.
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (row, &yi) in x.iter().zip(&y) {
        let pred: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
        ss_res += (yi - pred) * (yi - pred);
        ss_tot += (yi - y_mean) * (yi - y_mean);
    }
    let r_squared = if ss_tot <= f64::EPSILON * n as f64 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };

    // Back to raw units: coef_raw = coef_std / std; intercept shifts by
    // the mean offsets.
    let coefs_raw: Vec<f64> = (0..4).map(|j| beta[j + 1] / stds[j]).collect();
    let intercept = beta[0] - (0..4).map(|j| coefs_raw[j] * means[j]).sum::<f64>();
    Ok(RegressionFit {
        intercept,
        coef_enc_layers: coefs_raw[0],
        coef_dec_layers: coefs_raw[1],
        coef_d_model: coefs_raw[2],
        coef_ffn_dim: coefs_raw[3],
        r_squared,
    })
}

/// OLS of `median_ms` on the four architecture dimensions.
pub fn fit_ols(records: &[TimingRecord]) -> Result<RegressionFit, BenchError> {
    fit_ols_internal(records, |r| r.median_ms)
}

/// OLS of `ln(median_ms)` on the same predictors: the multiplicative
/// (per-layer percentage) reading of the cost model.
pub fn fit_ols_log(records: &[TimingRecord]) -> Result<RegressionFit, BenchError> {
    fit_ols_internal(records, |r| r.median_ms.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRow {
    pub record: TimingRecord,
    /// baseline.median_ms / record.median_ms
    pub speedup: f64,
}

/// Speedups of each record against a baseline measured in the same mode
/// and batch size.
pub fn speedup_report(
    baseline: &TimingRecord,
    others: &[TimingRecord],
) -> Result<Vec<SpeedupRow>, BenchError> {
    for other in others {
        if other.mode != baseline.mode {
            return Err(BenchError::MismatchedRecords("mode"));
        }
        if other.batch != baseline.batch {
            return Err(BenchError::MismatchedRecords("batch"));
        }
    }
    Ok(others
        .iter()
        .map(|r| SpeedupRow {
            record: r.clone(),
            speedup: baseline.median_ms / r.median_ms,
        })
        .collect())
}

// ── CSV table ───────────────────────────────────────────────────────

pub const CSV_HEADER: &str = "enc_layers,dec_layers,d_model,ffn_dim,mode,batch,median_ms";

pub fn records_to_csv(records: &[TimingRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6}\n",
            r.enc_layers, r.dec_layers, r.d_model, r.ffn_dim, r.mode.name(), r.batch, r.median_ms
        ));
    }
    out
}

pub fn records_from_csv(content: &str) -> Result<Vec<TimingRecord>, BenchError> {
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == CSV_HEADER => {}
        other => {
            return Err(BenchError::MalformedCsv {
                line: 1,
                message: format!("expected header {CSV_HEADER:?}, got {other:?}"),
            })
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(BenchError::MalformedCsv {
                line: i + 1,
                message: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let bad = |message: String| BenchError::MalformedCsv {
            line: i + 1,
            message,
        };
        records.push(TimingRecord {
            enc_layers: fields[0].parse().map_err(|e| bad(format!("enc_layers: {e}")))?,
            dec_layers: fields[1].parse().map_err(|e| bad(format!("dec_layers: {e}")))?,
            d_model: fields[2].parse().map_err(|e| bad(format!("d_model: {e}")))?,
            ffn_dim: fields[3].parse().map_err(|e| bad(format!("ffn_dim: {e}")))?,
            mode: Mode::parse(fields[4]).ok_or_else(|| bad(format!("mode: {:?}", fields[4])))?,
            batch: fields[5].parse().map_err(|e| bad(format!("batch: {e}")))?,
            median_ms: fields[6].parse().map_err(|e| bad(format!("median_ms: {e}")))?,
        });
    }
    Ok(records)
}

pub fn save_csv(records: &[TimingRecord], path: &Path) -> Result<(), BenchError> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(records_to_csv(records).as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<Vec<TimingRecord>, BenchError> {
    records_from_csv(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted_records() -> Vec<TimingRecord> {
        // t = 3 + 2*dec + 1*enc exactly; d_model and ffn vary but carry
        // zero weight.
        let mut out = Vec::new();
        for enc in [1usize, 2, 4, 6] {
            for dec in [1usize, 3, 5] {
                for (d, f) in [(32usize, 64usize), (32, 128), (64, 64), (64, 128)] {
                    out.push(TimingRecord {
                        enc_layers: enc,
                        dec_layers: dec,
                        d_model: d,
                        ffn_dim: f,
                        mode: Mode::Forward,
                        batch: 1,
                        median_ms: 3.0 + 2.0 * dec as f64 + enc as f64,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn planted_model_is_recovered_exactly() {
        let fit = fit_ols(&planted_records()).unwrap();
        assert!((fit.intercept - 3.0).abs() < 1e-9, "intercept {}", fit.intercept);
        assert!((fit.coef_dec_layers - 2.0).abs() < 1e-9);
        assert!((fit.coef_enc_layers - 1.0).abs() < 1e-9);
        assert!(fit.coef_d_model.abs() < 1e-9);
        assert!(fit.coef_ffn_dim.abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_response_gives_zero_slopes() {
        let records: Vec<TimingRecord> = planted_records()
            .into_iter()
            .map(|mut r| {
                r.median_ms = 7.25;
                r
            })
            .collect();
        let fit = fit_ols(&records).unwrap();
        assert!(fit.coef_enc_layers.abs() < 1e-9);
        assert!(fit.coef_dec_layers.abs() < 1e-9);
        assert!(fit.coef_d_model.abs() < 1e-9);
        assert!(fit.coef_ffn_dim.abs() < 1e-9);
        assert!((fit.intercept - 7.25).abs() < 1e-9);
    }

    #[test]
    fn residuals_are_orthogonal_to_predictors() {
        // Noisy but deterministic response.
        let records: Vec<TimingRecord> = planted_records()
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.median_ms += ((i * 2654435761) % 97) as f64 / 97.0;
                r
            })
            .collect();
        let fit = fit_ols(&records).unwrap();
        let n = records.len() as f64;
        for j in 0..4 {
            let col: Vec<f64> = records.iter().map(|r| predictors_of(r)[j]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let std = (col.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
            let dot: f64 = records
                .iter()
                .zip(&col)
                .map(|(r, &c)| {
                    let p = fit.intercept
                        + fit.coef_enc_layers * r.enc_layers as f64
                        + fit.coef_dec_layers * r.dec_layers as f64
                        + fit.coef_d_model * r.d_model as f64
                        + fit.coef_ffn_dim * r.ffn_dim as f64;
                    (r.median_ms - p) * ((c - mean) / std)
                })
                .sum();
            assert!(dot.abs() < 1e-6, "column {j}: residual dot {dot}");
        }
    }

    #[test]
    fn constant_predictor_column_is_named_in_error() {
        let records: Vec<TimingRecord> = planted_records()
            .into_iter()
            .map(|mut r| {
                r.d_model = 32;
                r.ffn_dim = 64;
                r
            })
            .collect();
        match fit_ols(&records) {
            Err(BenchError::RankDeficient(cols)) => {
                assert!(cols.contains("d_model") && cols.contains("ffn_dim"), "{cols}");
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn too_few_records_is_an_error() {
        let records = planted_records().into_iter().take(4).collect::<Vec<_>>();
        assert!(matches!(
            fit_ols(&records),
            Err(BenchError::TooFewRecords { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_respects_singletons() {
        let ranges = DimensionRanges {
            enc_layers: vec![3],
            dec_layers: vec![5],
            d_model: vec![32],
            ffn_dim: vec![48],
        };
        let configs = sample_configs(&ranges, 1, 9).unwrap();
        assert_eq!(configs.len(), 1);
        assert_eq!(
            (configs[0].enc_layers, configs[0].dec_layers, configs[0].d_model, configs[0].ffn_dim),
            (3, 5, 32, 48)
        );
        let wide = DimensionRanges {
            enc_layers: vec![1, 2, 3, 4],
            dec_layers: vec![1, 2, 3, 4],
            d_model: vec![16, 32],
            ffn_dim: vec![32, 64],
        };
        let a = sample_configs(&wide, 50, 7).unwrap();
        let b = sample_configs(&wide, 50, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_marginal_is_roughly_uniform() {
        // Chi-square sanity on the enc_layers marginal over 1000 draws:
        // 4 cells, expected 250 each; dof 3, the 0.999 quantile is ~16.3.
        let ranges = DimensionRanges {
            enc_layers: vec![1, 2, 3, 4],
            dec_layers: vec![1],
            d_model: vec![16],
            ffn_dim: vec![32],
        };
        let configs = sample_configs(&ranges, 1000, 4).unwrap();
        let mut counts = [0usize; 4];
        for c in &configs {
            counts[c.enc_layers - 1] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - 250.0).powi(2) / 250.0)
            .sum();
        assert!(chi2 < 16.3, "chi2 {chi2} counts {counts:?}");
    }

    #[test]
    fn empty_range_is_rejected() {
        let ranges = DimensionRanges {
            enc_layers: vec![],
            dec_layers: vec![1],
            d_model: vec![16],
            ffn_dim: vec![32],
        };
        assert!(matches!(
            sample_configs(&ranges, 5, 0),
            Err(BenchError::EmptyRange("enc_layers"))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let records = planted_records();
        let csv = records_to_csv(&records);
        assert!(csv.starts_with(CSV_HEADER));
        let parsed = records_from_csv(&csv).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let bad = format!("{CSV_HEADER}\n1,2,16,32,warp,1,0.5\n");
        assert!(matches!(
            records_from_csv(&bad),
            Err(BenchError::MalformedCsv { line: 2, .. })
        ));
        assert!(records_from_csv("nope\n").is_err());
    }

    #[test]
    fn speedup_of_baseline_against_itself_is_one() {
        let records = planted_records();
        let rows = speedup_report(&records[0], &records[0..1]).unwrap();
        assert_eq!(rows[0].speedup, 1.0);
    }

    #[test]
    fn speedup_rejects_mode_mismatch() {
        let records = planted_records();
        let mut other = records[1].clone();
        other.mode = Mode::Beam;
        assert!(matches!(
            speedup_report(&records[0], &[other]),
            Err(BenchError::MismatchedRecords("mode"))
        ));
    }

    #[test]
    fn too_few_reps_is_rejected() {
        let config = ModelConfig {
            vocab_size: HARNESS_VOCAB,
            d_model: 16,
            n_heads: HARNESS_HEADS,
            ffn_dim: 32,
            enc_layers: 1,
            dec_layers: 1,
            max_positions: HARNESS_MAX_POSITIONS,
            tie_output_embedding: true,
        };
        assert!(matches!(
            time_model(&config, 1, 2, Mode::Forward),
            Err(BenchError::TooFewReps(2))
        ));
    }

    #[test]
    fn over_budget_config_is_rejected() {
        let config = ModelConfig {
            vocab_size: HARNESS_VOCAB,
            d_model: 4096,
            n_heads: HARNESS_HEADS,
            ffn_dim: 16384,
            enc_layers: 48,
            dec_layers: 48,
            max_positions: HARNESS_MAX_POSITIONS,
            tie_output_embedding: true,
        };
        assert!(matches!(
            time_model(&config, 1, 3, Mode::Forward),
            Err(BenchError::ResourceBudget { .. })
        ));
    }
}

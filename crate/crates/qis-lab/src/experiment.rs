//! Training, evaluation, embedding-rate and sample-length sweeps, ablations
//! and report emission.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::codebook::SplitVqModel;
use crate::error::{Error, Result};
use crate::hrn::{init_params, make_variant, predict, train_step, HrnConfig, HrnParams};
use crate::nn::adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::stego::{derive_seed, gen_cover, gen_stego, Label, LatentSourceConfig, QisMatrix};
use crate::threads::ordered_map;

/// Training hyperparameters. Desk defaults keep single-core runs short; the
/// full-scale settings (batch 256, 200 epochs) remain selectable.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Epochs without validation-accuracy improvement before stopping.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 20,
            lr: 1e-3,
            seed: 0,
            early_stop_patience: 5,
        }
    }
}

/// One epoch of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

/// Accuracy plus the 2x2 confusion table; `confusion[truth][prediction]`
/// with cover = 0, stego = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n_correct: usize,
    pub n_total: usize,
    pub confusion: [[usize; 2]; 2],
}

/// A labeled in-memory dataset.
pub type LabeledSet = Vec<(QisMatrix, Label)>;

fn class_index(label: Label) -> usize {
    match label {
        Label::Cover => 0,
        Label::Stego => 1,
    }
}

/// Mini-batch training with per-epoch seeded shuffling, Adam updates and
/// early stopping on validation accuracy. Returns the best-validation
/// parameters and the per-epoch history.
pub fn train(
    cfg: &HrnConfig,
    tc: &TrainConfig,
    train_set: &[(QisMatrix, Label)],
    val_set: &[(QisMatrix, Label)],
) -> Result<(HrnParams, Vec<EpochStats>)> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    if tc.batch_size < 2 {
        return Err(Error::invalid("batch size must be >= 2"));
    }
    if tc.max_epochs < 1 {
        return Err(Error::invalid("max_epochs must be >= 1"));
    }

    let mut params = init_params(cfg, tc.seed)?;
    let mut adam: Vec<AdamState> = params
        .param_slices()
        .iter()
        .map(|s| AdamState::new(s.len()))
        .collect();

    let mut history = Vec::new();
    let mut best_params = params.clone();
    let mut best_val = f64::NEG_INFINITY;
    let mut epochs_since_best = 0usize;
    let mut step: u64 = 0;

    for epoch in 0..tc.max_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(tc.seed, epoch as u64));
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<(&QisMatrix, Label)> =
                chunk.iter().map(|&i| (&train_set[i].0, train_set[i].1)).collect();
            step += 1;
            let dropout_seed = derive_seed(tc.seed ^ 0x5eed_d40b, step);
            let (loss, n_corr, grads) = train_step(&mut params, cfg, &batch, dropout_seed)?;
            loss_sum += loss * batch.len() as f64;
            correct += n_corr;
            for ((p, g), st) in params
                .param_slices_mut()
                .into_iter()
                .zip(grads.grad_slices())
                .zip(adam.iter_mut())
            {
                adam_step(p, g, st, step, tc.lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
            }
        }

        let val = evaluate(&params, cfg, val_set)?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_acc: val.accuracy,
        });

        if val.accuracy > best_val {
            best_val = val.accuracy;
            best_params = params.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= tc.early_stop_patience {
                break;
            }
        }
    }

    Ok((best_params, history))
}

/// Deterministic test-set accuracy with confusion counts.
pub fn evaluate(
    params: &HrnParams,
    cfg: &HrnConfig,
    test_set: &[(QisMatrix, Label)],
) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::invalid("evaluation set must be non-empty"));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (qis, label) in test_set {
        let pred = predict(params, cfg, qis)?;
        confusion[class_index(*label)][class_index(pred)] += 1;
    }
    let n_correct = confusion[0][0] + confusion[1][1];
    let n_total = test_set.len();
    Ok(EvalReport {
        accuracy: n_correct as f64 / n_total as f64,
        n_correct,
        n_total,
        confusion,
    })
}

/// In-memory balanced dataset: `n_per_class` covers and stego samples with
/// disjoint derived seeds.
pub fn synth_dataset(
    model: &SplitVqModel,
    n_per_class: usize,
    t: usize,
    rate: f64,
    master_seed: u64,
) -> Result<LabeledSet> {
    let mut set = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class as u64 {
        let cover_cfg =
            LatentSourceConfig::default_for(model, derive_seed(master_seed, 2 * i));
        set.push((gen_cover(model, &cover_cfg, t)?, Label::Cover));
        let stego_seed = derive_seed(master_seed, 2 * i + 1);
        let stego_cfg = LatentSourceConfig::default_for(model, stego_seed);
        let sample =
            gen_stego(model, &stego_cfg, t, rate, derive_seed(stego_seed, 1), &[0, 1, 2])?;
        set.push((sample.qis, Label::Stego));
    }
    Ok(set)
}

/// Per-class sample counts for the train/val/test splits of a sweep cell.
#[derive(Debug, Clone, Copy)]
pub struct DataSizes {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

/// One-axis experiment grid (embedding rate or sample length).
#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub axis_name: String,
    pub axis_values: Vec<String>,
    pub accuracies: Vec<f64>,
    pub seeds: Vec<u64>,
    pub wall_secs: Vec<f64>,
}

fn run_cell(
    model: &SplitVqModel,
    hrn: &HrnConfig,
    tc: &TrainConfig,
    sizes: &DataSizes,
    t: usize,
    rate: f64,
    data_seed: u64,
) -> Result<(f64, f64)> {
    let start = Instant::now();
    let train_set = synth_dataset(model, sizes.n_train, t, rate, derive_seed(data_seed, 0))?;
    let val_set = synth_dataset(model, sizes.n_val, t, rate, derive_seed(data_seed, 1))?;
    let test_set = synth_dataset(model, sizes.n_test, t, rate, derive_seed(data_seed, 2))?;
    let (params, _) = train(hrn, tc, &train_set, &val_set)?;
    let report = evaluate(&params, hrn, &test_set)?;
    Ok((report.accuracy, start.elapsed().as_secs_f64()))
}

/// Train and evaluate once per embedding rate at a fixed duration; each cell
/// gets a fresh dataset.
pub fn run_rate_grid(
    model: &SplitVqModel,
    hrn: &HrnConfig,
    tc: &TrainConfig,
    sizes: &DataSizes,
    rates: &[f64],
    duration_frames: usize,
    data_seed: u64,
) -> Result<ExperimentGrid> {
    let jobs: Vec<(usize, f64)> = rates.iter().copied().enumerate().collect();
    let results = ordered_map(jobs, |(i, rate)| {
        run_cell(model, hrn, tc, sizes, duration_frames, rate, derive_seed(data_seed, i as u64))
    });
    let mut grid = ExperimentGrid {
        axis_name: "rate".into(),
        axis_values: rates.iter().map(|r| format!("{r}")).collect(),
        accuracies: Vec::new(),
        seeds: rates.iter().enumerate().map(|(i, _)| derive_seed(data_seed, i as u64)).collect(),
        wall_secs: Vec::new(),
    };
    for r in results {
        let (acc, secs) = r?;
        grid.accuracies.push(acc);
        grid.wall_secs.push(secs);
    }
    Ok(grid)
}

/// Train and evaluate once per sample length at a fixed embedding rate.
pub fn run_length_grid(
    model: &SplitVqModel,
    hrn: &HrnConfig,
    tc: &TrainConfig,
    sizes: &DataSizes,
    durations: &[usize],
    rate: f64,
    data_seed: u64,
) -> Result<ExperimentGrid> {
    let jobs: Vec<(usize, usize)> = durations.iter().copied().enumerate().collect();
    let results = ordered_map(jobs, |(i, t)| {
        run_cell(model, hrn, tc, sizes, t, rate, derive_seed(data_seed, i as u64))
    });
    let mut grid = ExperimentGrid {
        axis_name: "duration_frames".into(),
        axis_values: durations.iter().map(|t| format!("{t}")).collect(),
        accuracies: Vec::new(),
        seeds: durations
            .iter()
            .enumerate()
            .map(|(i, _)| derive_seed(data_seed, i as u64))
            .collect(),
        wall_secs: Vec::new(),
    };
    for r in results {
        let (acc, secs) = r?;
        grid.accuracies.push(acc);
        grid.wall_secs.push(secs);
    }
    Ok(grid)
}

/// One ablation result row.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: u8,
    pub description: &'static str,
    pub accuracy: f64,
    pub fusion_dim: usize,
}

pub const VARIANT_DESCRIPTIONS: [&str; 7] = [
    "full model",
    "remove path 1",
    "remove path 2",
    "remove paths 1 and 2",
    "replace attention with max pooling",
    "reduce convolution blocks to 2",
    "add convolution block to 4",
];

/// Train all seven variants on the identical dataset and seeds.
pub fn run_ablation(
    model: &SplitVqModel,
    base: &HrnConfig,
    tc: &TrainConfig,
    sizes: &DataSizes,
    duration_frames: usize,
    rate: f64,
    data_seed: u64,
) -> Result<Vec<AblationRow>> {
    let train_set = synth_dataset(model, sizes.n_train, duration_frames, rate, derive_seed(data_seed, 0))?;
    let val_set = synth_dataset(model, sizes.n_val, duration_frames, rate, derive_seed(data_seed, 1))?;
    let test_set = synth_dataset(model, sizes.n_test, duration_frames, rate, derive_seed(data_seed, 2))?;

    let jobs: Vec<u8> = (0..=6).collect();
    let results = ordered_map(jobs, |variant| -> Result<AblationRow> {
        let cfg = make_variant(base, variant)?;
        let (params, _) = train(&cfg, tc, &train_set, &val_set)?;
        let report = evaluate(&params, &cfg, &test_set)?;
        Ok(AblationRow {
            variant,
            description: VARIANT_DESCRIPTIONS[variant as usize],
            accuracy: report.accuracy,
            fusion_dim: cfg.fusion_dim(),
        })
    });
    results.into_iter().collect()
}

/// Report output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::invalid(format!("unknown report format '{other}'"))),
        }
    }
}

fn percent(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Render a grid: axis values as columns, accuracies as 2-decimal percents.
pub fn grid_to_string(grid: &ExperimentGrid, format: ReportFormat) -> String {
    let header: Vec<String> = std::iter::once(grid.axis_name.clone())
        .chain(grid.axis_values.iter().cloned())
        .collect();
    let row: Vec<String> = std::iter::once("accuracy".to_string())
        .chain(grid.accuracies.iter().map(|&a| percent(a)))
        .collect();
    match format {
        ReportFormat::Csv => format!("{}\n{}\n", header.join(","), row.join(",")),
        ReportFormat::Markdown => {
            let sep: Vec<&str> = header.iter().map(|_| "---").collect();
            format!(
                "| {} |\n| {} |\n| {} |\n",
                header.join(" | "),
                sep.join(" | "),
                row.join(" | ")
            )
        }
    }
}

/// Render the ablation table.
pub fn ablation_to_string(rows: &[AblationRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut s = String::from("variant,description,accuracy\n");
            for r in rows {
                s.push_str(&format!("#{},{},{}\n", r.variant, r.description, percent(r.accuracy)));
            }
            s
        }
        ReportFormat::Markdown => {
            let mut s = String::from("| variant | description | accuracy |\n| --- | --- | --- |\n");
            for r in rows {
                s.push_str(&format!(
                    "| #{} | {} | {} |\n",
                    r.variant,
                    r.description,
                    percent(r.accuracy)
                ));
            }
            s
        }
    }
}

/// Write a rendered report to disk.
pub fn emit_report(content: &str, path: &Path) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parse a markdown grid row back into percents; used to verify emission.
pub fn parse_markdown_grid(text: &str) -> Result<Vec<f64>> {
    let line = text
        .lines()
        .nth(2)
        .ok_or_else(|| Error::Format { line: 3, msg: "missing data row".into() })?;
    line.split('|')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .skip(1)
        .map(|c| {
            c.parse::<f64>()
                .map(|v| v / 100.0)
                .map_err(|_| Error::Format { line: 3, msg: format!("bad cell '{c}'") })
        })
        .collect()
}

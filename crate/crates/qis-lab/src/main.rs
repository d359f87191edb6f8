//! Command-line entry point: dataset generation, training, evaluation,
//! sweeps, ablation, streaming detection, benchmarking and verification.
//!
//! Exit codes: 0 on success, 1 on a domain error, 2 on a usage error. All
//! randomness is controlled by `--seed`. The environment variable
//! `QIS_LAB_THREADS` caps internal worker threads.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qis_lab::codebook::{verify_partition, PartitionMode, SplitVqModel};
use qis_lab::error::{Error, Result};
use qis_lab::experiment::{
    ablation_to_string, evaluate, grid_to_string, run_ablation, run_length_grid, run_rate_grid,
    synth_dataset, train, DataSizes, ReportFormat, TrainConfig,
};
use qis_lab::hrn::{
    init_params, load_params, make_variant, save_params, train_step, HrnConfig, HrnParams,
};
use qis_lab::stego::{
    gen_dataset, load_manifest, parse_qis, Label, LatentSourceConfig, QisMatrix,
};
use qis_lab::stream::{
    bench_latency, detect_stream, latency_to_string, simulate_frame_stream, verdicts_to_csv,
    WindowSpec,
};

#[derive(Parser)]
#[command(
    name = "qis-lab",
    version,
    about = "QIM steganography simulation and detection over quantization-index streams",
    after_help = "QIS_LAB_THREADS caps the number of worker threads used by sweeps."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every training-based subcommand.
#[derive(Args)]
struct TrainFlags {
    /// Training samples per class
    #[arg(long, default_value_t = 200)]
    n_train: usize,
    /// Validation samples per class
    #[arg(long, default_value_t = 50)]
    n_val: usize,
    /// Test samples per class
    #[arg(long, default_value_t = 100)]
    n_test: usize,
    /// Mini-batch size
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Maximum training epochs
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Early-stopping patience in epochs
    #[arg(long, default_value_t = 5)]
    patience: usize,
    /// Use the full-scale preset (256 filters, batch 256, 200 epochs)
    #[arg(long)]
    paper_scale: bool,
}

impl TrainFlags {
    fn hrn_config(&self, vocab: [usize; 3]) -> HrnConfig {
        if self.paper_scale {
            HrnConfig::paper_scale(vocab)
        } else {
            HrnConfig::desk_default(vocab)
        }
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        if self.paper_scale {
            TrainConfig {
                batch_size: 256,
                max_epochs: 200,
                lr: self.lr,
                seed,
                early_stop_patience: self.patience,
            }
        } else {
            TrainConfig {
                batch_size: self.batch_size,
                max_epochs: self.epochs,
                lr: self.lr,
                seed,
                early_stop_patience: self.patience,
            }
        }
    }

    fn sizes(&self) -> DataSizes {
        DataSizes { n_train: self.n_train, n_val: self.n_val, n_test: self.n_test }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a labeled cover/stego dataset on disk
    GenData {
        /// Samples per class
        #[arg(long)]
        n: usize,
        /// Frames per sample
        #[arg(long, default_value_t = 100)]
        frames: usize,
        /// Embedding rate for the stego class
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Sub-codebook partition mode
        #[arg(long, default_value = "neighbor-aware")]
        mode: String,
    },
    /// Train a detector on synthetic data and save its parameters
    Train {
        /// Frames per sample
        #[arg(long, default_value_t = 100)]
        frames: usize,
        /// Embedding rate for the stego class
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output parameter file
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Evaluate a saved model on a dataset directory or fresh synthetic data
    Eval {
        /// Saved parameter file
        #[arg(long)]
        model: PathBuf,
        /// Dataset directory with a manifest; omit to synthesize a test set
        #[arg(long)]
        data: Option<PathBuf>,
        /// Synthetic test samples per class (when --data is omitted)
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Accuracy sweep over embedding rates
    RateGrid {
        /// Comma-separated embedding rates
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1.0")]
        rates: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output report path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Accuracy sweep over sample lengths
    LengthGrid {
        /// Comma-separated sample lengths in frames
        #[arg(long, value_delimiter = ',', default_value = "10,50,100")]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Train all seven architecture variants on identical data
    Ablate {
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Sliding-window detection over a QIS file or a simulated stream
    Stream {
        /// Saved parameter file
        #[arg(long)]
        model: PathBuf,
        /// QIS file to replay; omit to simulate via --schedule
        #[arg(long)]
        input: Option<PathBuf>,
        /// Simulated schedule as comma-separated frames:rate segments,
        /// e.g. 100:0,100:1
        #[arg(long)]
        schedule: Option<String>,
        /// Window length in frames
        #[arg(long, default_value_t = 100)]
        window: usize,
        /// Window stride in frames; defaults to half the window
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time single-window inference across window lengths
    Bench {
        /// Saved parameter file; omit to benchmark a fresh default model
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',',
              default_value = "10,20,30,40,50,60,70,80,90,100,200")]
        durations: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify analytic gradients against finite differences
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check sub-codebook partition invariants for a synthetic model
    VerifyPartition {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "128,32,32")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10,5,5")]
        dims: Vec<usize>,
        #[arg(long, default_value = "neighbor-aware")]
        mode: String,
    },
}

fn parse_mode(s: &str) -> Result<PartitionMode> {
    match s {
        "balanced-random" | "balanced" => Ok(PartitionMode::BalancedRandom),
        "neighbor-aware" | "neighbor" => Ok(PartitionMode::NeighborAware),
        other => Err(Error::invalid(format!("unknown partition mode '{other}'"))),
    }
}

fn emit(content: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn parse_schedule(s: &str) -> Result<Vec<(usize, f64)>> {
    s.split(',')
        .map(|seg| {
            let (frames, rate) = seg
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("bad schedule segment '{seg}'")))?;
            let frames = frames
                .parse()
                .map_err(|_| Error::invalid(format!("bad frame count '{frames}'")))?;
            let rate = rate
                .parse()
                .map_err(|_| Error::invalid(format!("bad rate '{rate}'")))?;
            Ok((frames, rate))
        })
        .collect()
}

fn toy_gradcheck_config() -> HrnConfig {
    HrnConfig {
        vocab_sizes: [6, 5, 4],
        embed_dim: 2,
        block_filters: 4,
        fc_dim: 8,
        dropout_rate: 0.0,
        ..HrnConfig::desk_default([6, 5, 4])
    }
}

/// Human-readable name for each parameter group, in declared order.
fn group_names(cfg: &HrnConfig) -> Vec<String> {
    let mut names: Vec<String> = (0..3).map(|i| format!("embed{i}")).collect();
    for b in 0..cfg.n_blocks() {
        for part in ["kernels", "bias", "gamma", "beta"] {
            names.push(format!("block{b}.{part}"));
        }
    }
    for p in 0..cfg.enabled_paths.len() {
        names.push(format!("attn_w{p}"));
    }
    names.push("attn_b".into());
    names.push("fc1_w".into());
    names.push("fc1_b".into());
    names.push("fc2_w".into());
    names.push("fc2_b".into());
    names
}

fn run_gradcheck(seed: u64) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    const TOL: f64 = 1e-4;
    const STEP: f64 = 1e-5;
    const MAX_COORDS: usize = 6;

    println!("{:<8} {:<16} {:>12}  {}", "variant", "group", "max_rel_err", "status");
    let mut failures = 0usize;
    for variant in [0u8, 4, 5, 6] {
        let cfg = make_variant(&toy_gradcheck_config(), variant)?;
        let t = cfg.min_frames() + 6;
        let make_qis = |rng: &mut rand_chacha::ChaCha12Rng| QisMatrix {
            frames: (0..t)
                .map(|_| {
                    [
                        rng.gen_range(0..cfg.vocab_sizes[0]),
                        rng.gen_range(0..cfg.vocab_sizes[1]),
                        rng.gen_range(0..cfg.vocab_sizes[2]),
                    ]
                })
                .collect(),
            vocab: cfg.vocab_sizes,
            frame_rate: 100,
        };
        let a = make_qis(&mut rng);
        let b = make_qis(&mut rng);
        let samples = [(&a, Label::Cover), (&b, Label::Stego)];

        // a fresh init can land with every fc1 unit inactive, which zeroes
        // all gradients and makes the comparison vacuous; redraw until the
        // classifier input actually carries signal
        let mut attempt = 0u64;
        let (params, grads) = loop {
            let params = init_params(&cfg, seed ^ (variant as u64 + 1) ^ (attempt << 32))?;
            let (_, _, grads) = {
                let mut p = params.clone();
                train_step(&mut p, &cfg, &samples, 0)?
            };
            let live = grads.grad_slices().iter().any(|g| {
                g.iter().any(|&v| v.abs() > 1e-6)
            });
            if live || attempt >= 9 {
                break (params, grads);
            }
            attempt += 1;
        };
        let analytic = grads.grad_slices();
        let names = group_names(&cfg);

        for (g, name) in names.iter().enumerate() {
            let group_len = analytic[g].len();
            let n_coords = group_len.min(MAX_COORDS);
            let mut max_rel = 0.0f64;
            for c in 0..n_coords {
                let idx = c * group_len / n_coords;
                let numeric = {
                    let eval = |delta: f64| -> Result<f64> {
                        let mut p = params.clone();
                        p.param_slices_mut()[g][idx] += delta;
                        let (loss, _, _) = train_step(&mut p, &cfg, &samples, 0)?;
                        Ok(loss)
                    };
                    (eval(STEP)? - eval(-STEP)?) / (2.0 * STEP)
                };
                let a = analytic[g][idx];
                let scale = a.abs().max(numeric.abs());
                if scale >= 1e-8 {
                    max_rel = max_rel.max((a - numeric).abs() / scale);
                }
            }
            let pass = max_rel < TOL;
            if !pass {
                failures += 1;
            }
            println!(
                "#{:<7} {:<16} {:>12.3e}  {}",
                variant,
                name,
                max_rel,
                if pass { "pass" } else { "FAIL" }
            );
        }
    }
    if failures > 0 {
        return Err(Error::invalid(format!("{failures} gradient group(s) failed")));
    }
    Ok(())
}

fn load_model_or_default(path: Option<&PathBuf>, seed: u64) -> Result<(HrnParams, HrnConfig)> {
    match path {
        Some(p) => load_params(p),
        None => {
            let cfg = HrnConfig::desk_default([128, 32, 32]);
            let params = init_params(&cfg, seed)?;
            Ok((params, cfg))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData { n, frames, rate, seed, out, mode } => {
            let model = SplitVqModel::synthetic(
                &[128, 32, 32],
                &[10, 5, 5],
                parse_mode(&mode)?,
                seed,
            )?;
            let latent = LatentSourceConfig::default_for(&model, seed);
            let manifest = gen_dataset(&model, &latent, n, frames, rate, &out, seed)?;
            println!(
                "wrote {} cover + {} stego samples to {}",
                manifest.n_cover,
                manifest.n_stego,
                out.display()
            );
        }
        Cmd::Train { frames, rate, seed, out, flags } => {
            let model = SplitVqModel::default_from_seed(seed);
            let cfg = flags.hrn_config(model.sizes());
            let tc = flags.train_config(seed);
            let train_set = synth_dataset(&model, flags.n_train, frames, rate, seed ^ 1)?;
            let val_set = synth_dataset(&model, flags.n_val, frames, rate, seed ^ 2)?;
            let (params, history) = train(&cfg, &tc, &train_set, &val_set)?;
            for h in &history {
                println!(
                    "epoch {:>3}  loss {:.4}  train_acc {:.4}  val_acc {:.4}",
                    h.epoch, h.train_loss, h.train_acc, h.val_acc
                );
            }
            save_params(&params, &cfg, &out)?;
            println!("saved model to {}", out.display());
        }
        Cmd::Eval { model, data, n, frames, rate, seed } => {
            let (params, cfg) = load_params(&model)?;
            let test_set = match data {
                Some(dir) => {
                    let manifest = load_manifest(&dir.join("manifest.json"))?;
                    let mut set = Vec::with_capacity(manifest.files.len());
                    for entry in &manifest.files {
                        set.push((parse_qis(&dir.join(&entry.file))?, entry.label));
                    }
                    set
                }
                None => {
                    let vq = SplitVqModel::default_from_seed(seed);
                    synth_dataset(&vq, n, frames, rate, seed ^ 3)?
                }
            };
            let rep = evaluate(&params, &cfg, &test_set)?;
            println!("accuracy {:.4} ({}/{})", rep.accuracy, rep.n_correct, rep.n_total);
            println!(
                "confusion  cover->cover {}  cover->stego {}  stego->cover {}  stego->stego {}",
                rep.confusion[0][0], rep.confusion[0][1], rep.confusion[1][0], rep.confusion[1][1]
            );
        }
        Cmd::RateGrid { rates, frames, seed, out, format, flags } => {
            let model = SplitVqModel::default_from_seed(seed);
            let cfg = flags.hrn_config(model.sizes());
            let grid = run_rate_grid(
                &model,
                &cfg,
                &flags.train_config(seed),
                &flags.sizes(),
                &rates,
                frames,
                seed,
            )?;
            emit(&grid_to_string(&grid, format.parse::<ReportFormat>()?), out.as_ref())?;
        }
        Cmd::LengthGrid { lengths, rate, seed, out, format, flags } => {
            let model = SplitVqModel::default_from_seed(seed);
            let cfg = flags.hrn_config(model.sizes());
            let grid = run_length_grid(
                &model,
                &cfg,
                &flags.train_config(seed),
                &flags.sizes(),
                &lengths,
                rate,
                seed,
            )?;
            emit(&grid_to_string(&grid, format.parse::<ReportFormat>()?), out.as_ref())?;
        }
        Cmd::Ablate { frames, rate, seed, out, format, flags } => {
            let model = SplitVqModel::default_from_seed(seed);
            let cfg = flags.hrn_config(model.sizes());
            let rows = run_ablation(
                &model,
                &cfg,
                &flags.train_config(seed),
                &flags.sizes(),
                frames,
                rate,
                seed,
            )?;
            emit(&ablation_to_string(&rows, format.parse::<ReportFormat>()?), out.as_ref())?;
        }
        Cmd::Stream { model, input, schedule, window, stride, seed, out } => {
            let (params, cfg) = load_params(&model)?;
            let qis = match (input, schedule) {
                (Some(path), None) => parse_qis(&path)?,
                (None, Some(spec)) => {
                    let vq = SplitVqModel::default_from_seed(seed);
                    let latent = LatentSourceConfig::default_for(&vq, seed);
                    simulate_frame_stream(&vq, &latent, &parse_schedule(&spec)?, seed ^ 4)?.qis
                }
                _ => {
                    return Err(Error::invalid(
                        "provide exactly one of --input or --schedule",
                    ))
                }
            };
            let spec = match stride {
                Some(s) => WindowSpec { window_frames: window, stride_frames: s },
                None => WindowSpec::with_default_stride(window),
            };
            let verdicts = detect_stream(&params, &cfg, spec, &qis)?;
            emit(&verdicts_to_csv(&verdicts), out.as_ref())?;
        }
        Cmd::Bench { model, durations, trials, seed, format, out } => {
            let (params, cfg) = load_model_or_default(model.as_ref(), seed)?;
            let report = bench_latency(&params, &cfg, &durations, trials, seed)?;
            let markdown = format.parse::<ReportFormat>()? == ReportFormat::Markdown;
            emit(&latency_to_string(&report, markdown), out.as_ref())?;
        }
        Cmd::Gradcheck { seed } => run_gradcheck(seed)?,
        Cmd::VerifyPartition { seed, sizes, dims, mode } => {
            let sizes: [usize; 3] = sizes
                .try_into()
                .map_err(|_| Error::invalid("--sizes needs exactly 3 values"))?;
            let dims: [usize; 3] = dims
                .try_into()
                .map_err(|_| Error::invalid("--dims needs exactly 3 values"))?;
            let model = SplitVqModel::synthetic(&sizes, &dims, parse_mode(&mode)?, seed)?;
            let mut failed = false;
            for (part, cb) in model.partitions.iter().zip(&model.codebooks) {
                let report = verify_partition(part, cb);
                println!(
                    "track {}  size {}  classes {}/{}  {}",
                    cb.id,
                    cb.size,
                    report.class_counts.0,
                    report.class_counts.1,
                    if report.pass() { "pass" } else { "FAIL" }
                );
                for f in &report.failures {
                    println!("  {f:?}");
                    failed = true;
                }
            }
            if failed {
                return Err(Error::invalid("partition verification failed"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

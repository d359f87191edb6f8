//! Online sliding-window detection over a frame stream, stream simulation
//! with mid-stream rate changes, and inference-latency benchmarking.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::codebook::{qim_embed_index, quantize_full, SplitVqModel};
use crate::error::{Error, Result};
use crate::hrn::{forward, HrnConfig, HrnParams};
use crate::nn::Mode;
use crate::stego::{gen_latent_trajectory, Label, LatentSourceConfig, QisMatrix};

/// Sliding-window geometry. The default stride is half the window, which
/// balances decision latency against coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub window_frames: usize,
    pub stride_frames: usize,
}

impl WindowSpec {
    pub fn with_default_stride(window_frames: usize) -> Self {
        WindowSpec { window_frames, stride_frames: (window_frames / 2).max(1) }
    }

    fn validate(&self, cfg: &HrnConfig) -> Result<()> {
        if self.window_frames < cfg.min_frames() {
            return Err(Error::invalid(format!(
                "window of {} frames is below the model minimum of {}",
                self.window_frames,
                cfg.min_frames()
            )));
        }
        if self.stride_frames == 0 {
            return Err(Error::invalid("stride must be >= 1"));
        }
        Ok(())
    }
}

/// One per-window decision.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowVerdict {
    pub window_start: usize,
    pub prob_stego: f64,
    pub label: Label,
}

/// Sequential detector over one stream. Holds a ring buffer of the most
/// recent `window_frames` frames; parameters are shared read-only, so many
/// detectors can run concurrently against one model.
pub struct StreamDetector<'a> {
    params: &'a HrnParams,
    cfg: &'a HrnConfig,
    spec: WindowSpec,
    frame_rate: u32,
    ring: Vec<[usize; 3]>,
    n_seen: usize,
    next_start: usize,
}

impl<'a> StreamDetector<'a> {
    pub fn new(
        params: &'a HrnParams,
        cfg: &'a HrnConfig,
        spec: WindowSpec,
        frame_rate: u32,
    ) -> Result<Self> {
        spec.validate(cfg)?;
        Ok(StreamDetector {
            params,
            cfg,
            spec,
            frame_rate,
            ring: vec![[0; 3]; spec.window_frames],
            n_seen: 0,
            next_start: 0,
        })
    }

    /// Ingest one frame; returns a verdict when a full window has arrived at
    /// the current stride boundary.
    pub fn push_frame(&mut self, frame: [usize; 3]) -> Result<Option<WindowVerdict>> {
        for (j, &idx) in frame.iter().enumerate() {
            if idx >= self.cfg.vocab_sizes[j] {
                return Err(Error::Stream {
                    ordinal: self.n_seen,
                    msg: format!(
                        "track {j} index {idx} out of range 0..{}",
                        self.cfg.vocab_sizes[j]
                    ),
                });
            }
        }
        let n = self.spec.window_frames;
        self.ring[self.n_seen % n] = frame;
        self.n_seen += 1;

        if self.n_seen < self.next_start + n {
            return Ok(None);
        }
        let start = self.next_start;
        self.next_start += self.spec.stride_frames;

        let qis = QisMatrix {
            frames: (0..n).map(|k| self.ring[(start + k) % n]).collect(),
            vocab: self.cfg.vocab_sizes,
            frame_rate: self.frame_rate,
        };
        let out = forward(self.params, self.cfg, &qis, Mode::Infer, 0)?;
        let label = if out.probs[1] > out.probs[0] { Label::Stego } else { Label::Cover };
        Ok(Some(WindowVerdict { window_start: start, prob_stego: out.probs[1], label }))
    }

    /// Frames ingested so far.
    pub fn frames_seen(&self) -> usize {
        self.n_seen
    }
}

/// Replay a finite QIS matrix through a detector, collecting every verdict.
/// A stream of M frames yields floor((M - N) / s) + 1 verdicts when M >= N,
/// otherwise none.
pub fn detect_stream(
    params: &HrnParams,
    cfg: &HrnConfig,
    spec: WindowSpec,
    qis: &QisMatrix,
) -> Result<Vec<WindowVerdict>> {
    let mut det = StreamDetector::new(params, cfg, spec, qis.frame_rate)?;
    let mut verdicts = Vec::new();
    for frame in &qis.frames {
        if let Some(v) = det.push_frame(*frame)? {
            verdicts.push(v);
        }
    }
    Ok(verdicts)
}

/// Verdicts rendered as `window_start,prob_stego,label` CSV lines.
pub fn verdicts_to_csv(verdicts: &[WindowVerdict]) -> String {
    let mut s = String::from("window_start,prob_stego,label\n");
    for v in verdicts {
        let label = match v.label {
            Label::Cover => "cover",
            Label::Stego => "stego",
        };
        s.push_str(&format!("{},{},{}\n", v.window_start, v.prob_stego, label));
    }
    s
}

/// A simulated stream with per-segment embedding rates over one continuous
/// latent trajectory, so covert segments can start and stop mid-stream.
#[derive(Debug, Clone)]
pub struct StreamSim {
    pub qis: QisMatrix,
    /// (frame, track) slots that carry payload bits.
    pub positions: Vec<(usize, usize)>,
    pub payload: Vec<u8>,
}

/// Generate a stream following `schedule`, a list of (segment_frames, rate)
/// pairs. Embedding uses every track; the latent source runs uninterrupted
/// across segment boundaries.
pub fn simulate_frame_stream(
    model: &SplitVqModel,
    cfg: &LatentSourceConfig,
    schedule: &[(usize, f64)],
    payload_seed: u64,
) -> Result<StreamSim> {
    for &(_, rate) in schedule {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::invalid(format!("embedding rate must be in [0, 1], got {rate}")));
        }
    }
    let total: usize = schedule.iter().map(|&(t, _)| t).sum();
    let latent = gen_latent_trajectory(cfg, total)?;
    let mut embed_rng = ChaCha12Rng::seed_from_u64(payload_seed);

    let mut frames = Vec::with_capacity(total);
    let mut positions = Vec::new();
    let mut payload = Vec::new();
    let mut i = 0usize;
    for &(segment_frames, rate) in schedule {
        for _ in 0..segment_frames {
            let selected = embed_rng.gen::<f64>() < rate;
            let mut frame = [0usize; 3];
            for (j, cb) in model.codebooks.iter().enumerate() {
                let x = &latent[j][i * cb.dim..(i + 1) * cb.dim];
                if selected {
                    let bit = embed_rng.gen_range(0..2) as u8;
                    frame[j] = qim_embed_index(x, cb, &model.partitions[j], bit)?;
                    payload.push(bit);
                    positions.push((i, j));
                } else {
                    frame[j] = quantize_full(x, cb)?;
                }
            }
            frames.push(frame);
            i += 1;
        }
    }
    Ok(StreamSim {
        qis: QisMatrix { frames, vocab: model.sizes(), frame_rate: 100 },
        positions,
        payload,
    })
}

/// Latency statistics for one window length.
#[derive(Debug, Clone)]
pub struct LatencyRow {
    pub duration_frames: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub n_trials: usize,
}

/// Per-duration latency rows plus the raw per-trial timings they summarize.
#[derive(Debug, Clone)]
pub struct LatencyReport {
    pub machine: String,
    pub rows: Vec<LatencyRow>,
    pub raw_ms: Vec<Vec<f64>>,
}

const WARMUP_RUNS: usize = 3;

/// Time single-window inference per duration. Inputs are generated before
/// the clock starts and warm-up runs are discarded, so only the forward pass
/// is measured.
pub fn bench_latency(
    params: &HrnParams,
    cfg: &HrnConfig,
    durations: &[usize],
    n_trials: usize,
    seed: u64,
) -> Result<LatencyReport> {
    if n_trials < 30 {
        return Err(Error::invalid(format!("latency benchmark needs >= 30 trials, got {n_trials}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(durations.len());
    let mut raw_ms = Vec::with_capacity(durations.len());
    for &t in durations {
        if t < cfg.min_frames() {
            return Err(Error::invalid(format!(
                "duration {t} is below the model minimum of {}",
                cfg.min_frames()
            )));
        }
        let inputs: Vec<QisMatrix> = (0..WARMUP_RUNS + n_trials)
            .map(|_| QisMatrix {
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
            })
            .collect();
        let mut timings = Vec::with_capacity(n_trials);
        for (k, qis) in inputs.iter().enumerate() {
            let start = Instant::now();
            let out = forward(params, cfg, qis, Mode::Infer, 0)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            // keep the output live so the pass cannot be optimized away
            std::hint::black_box(&out.probs);
            if k >= WARMUP_RUNS {
                timings.push(elapsed);
            }
        }
        let mean = timings.iter().sum::<f64>() / n_trials as f64;
        let var = timings.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>()
            / (n_trials - 1) as f64;
        rows.push(LatencyRow {
            duration_frames: t,
            mean_ms: mean,
            std_ms: var.sqrt(),
            n_trials,
        });
        raw_ms.push(timings);
    }
    Ok(LatencyReport {
        machine: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
        rows,
        raw_ms,
    })
}

/// Render the latency table with the duration / mean / std column layout.
pub fn latency_to_string(report: &LatencyReport, markdown: bool) -> String {
    if markdown {
        let mut s = String::from(
            "| duration_frames | mean_ms | std_ms | n_trials |\n| --- | --- | --- | --- |\n",
        );
        for r in &report.rows {
            s.push_str(&format!(
                "| {} | {:.3} | {:.3} | {} |\n",
                r.duration_frames, r.mean_ms, r.std_ms, r.n_trials
            ));
        }
        s
    } else {
        let mut s = String::from("duration_frames,mean_ms,std_ms,n_trials\n");
        for r in &report.rows {
            s.push_str(&format!(
                "{},{:.3},{:.3},{}\n",
                r.duration_frames, r.mean_ms, r.std_ms, r.n_trials
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{qim_extract_bit, PartitionMode};
    use crate::hrn::{init_params, predict};
    use crate::stego::gen_cover;

    fn small_model(seed: u64) -> SplitVqModel {
        SplitVqModel::synthetic(&[16, 8, 8], &[4, 3, 3], PartitionMode::NeighborAware, seed)
            .unwrap()
    }

    fn small_hrn(model: &SplitVqModel) -> HrnConfig {
        HrnConfig {
            embed_dim: 4,
            block_filters: 8,
            fc_dim: 16,
            ..HrnConfig::desk_default(model.sizes())
        }
    }

    fn random_qis(vocab: [usize; 3], t: usize, seed: u64) -> QisMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        QisMatrix {
            frames: (0..t)
                .map(|_| {
                    [
                        rng.gen_range(0..vocab[0]),
                        rng.gen_range(0..vocab[1]),
                        rng.gen_range(0..vocab[2]),
                    ]
                })
                .collect(),
            vocab,
            frame_rate: 100,
        }
    }

    #[test]
    fn window_count_arithmetic() {
        let model = small_model(1);
        let cfg = small_hrn(&model);
        let params = init_params(&cfg, 2).unwrap();
        let spec = WindowSpec { window_frames: 100, stride_frames: 50 };

        let qis = random_qis(model.sizes(), 250, 3);
        let verdicts = detect_stream(&params, &cfg, spec, &qis).unwrap();
        let starts: Vec<usize> = verdicts.iter().map(|v| v.window_start).collect();
        assert_eq!(starts, vec![0, 50, 100, 150]);

        let short = random_qis(model.sizes(), 99, 4);
        assert!(detect_stream(&params, &cfg, spec, &short).unwrap().is_empty());
    }

    #[test]
    fn streaming_matches_offline_prediction_exactly() {
        let model = small_model(5);
        let cfg = small_hrn(&model);
        let params = init_params(&cfg, 6).unwrap();
        let spec = WindowSpec { window_frames: 20, stride_frames: 7 };
        let qis = random_qis(model.sizes(), 230, 7);

        let verdicts = detect_stream(&params, &cfg, spec, &qis).unwrap();
        assert_eq!(verdicts.len(), (230 - 20) / 7 + 1);
        for v in &verdicts {
            let window = QisMatrix {
                frames: qis.frames[v.window_start..v.window_start + 20].to_vec(),
                vocab: qis.vocab,
                frame_rate: qis.frame_rate,
            };
            let out = forward(&params, &cfg, &window, Mode::Infer, 0).unwrap();
            assert_eq!(v.prob_stego, out.probs[1]);
            assert_eq!(v.label, predict(&params, &cfg, &window).unwrap());
        }
    }

    #[test]
    fn malformed_frame_reports_its_ordinal() {
        let model = small_model(8);
        let cfg = small_hrn(&model);
        let params = init_params(&cfg, 9).unwrap();
        let spec = WindowSpec::with_default_stride(20);
        let mut det = StreamDetector::new(&params, &cfg, spec, 100).unwrap();
        det.push_frame([0, 0, 0]).unwrap();
        det.push_frame([1, 1, 1]).unwrap();
        match det.push_frame([16, 0, 0]) {
            Err(Error::Stream { ordinal, .. }) => assert_eq!(ordinal, 2),
            other => panic!("expected stream error, got {other:?}"),
        }
    }

    #[test]
    fn window_below_model_minimum_is_rejected() {
        let model = small_model(10);
        let cfg = small_hrn(&model);
        let params = init_params(&cfg, 11).unwrap();
        let spec = WindowSpec { window_frames: 5, stride_frames: 1 };
        assert!(StreamDetector::new(&params, &cfg, spec, 100).is_err());
    }

    #[test]
    fn pure_cover_schedule_equals_gen_cover() {
        let model = small_model(12);
        let cfg = LatentSourceConfig::default_for(&model, 13);
        let sim = simulate_frame_stream(&model, &cfg, &[(100, 0.0)], 14).unwrap();
        let cover = gen_cover(&model, &cfg, 100).unwrap();
        assert_eq!(sim.qis, cover);
        assert!(sim.positions.is_empty());
        assert!(sim.payload.is_empty());
    }

    #[test]
    fn embedding_is_confined_to_scheduled_segment() {
        let model = small_model(15);
        let cfg = LatentSourceConfig::default_for(&model, 16);
        let sim = simulate_frame_stream(&model, &cfg, &[(50, 0.0), (50, 1.0)], 17).unwrap();
        assert_eq!(sim.qis.frames.len(), 100);
        assert!(sim.positions.iter().all(|&(i, _)| (50..100).contains(&i)));
        assert_eq!(sim.positions.len(), 50 * 3);
        // payload bits are recoverable by membership
        for (&(i, j), &bit) in sim.positions.iter().zip(&sim.payload) {
            let got = qim_extract_bit(sim.qis.frames[i][j], &model.partitions[j]).unwrap();
            assert_eq!(got, bit);
        }
        // the cover segment matches a pure cover stream over the same latent
        let cover = gen_cover(&model, &cfg, 100).unwrap();
        assert_eq!(&sim.qis.frames[..50], &cover.frames[..50]);
    }

    #[test]
    fn latency_report_statistics_are_consistent() {
        let model = small_model(18);
        let cfg = small_hrn(&model);
        let params = init_params(&cfg, 19).unwrap();
        let report = bench_latency(&params, &cfg, &[10, 20], 30, 20).unwrap();
        assert_eq!(report.rows.len(), 2);
        for (row, raw) in report.rows.iter().zip(&report.raw_ms) {
            assert_eq!(raw.len(), 30);
            assert!(row.mean_ms > 0.0);
            assert!(row.std_ms >= 0.0);
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            let var = raw.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>()
                / (raw.len() - 1) as f64;
            assert!((row.mean_ms - mean).abs() < 1e-12);
            assert!((row.std_ms - var.sqrt()).abs() < 1e-12);
        }
        let csv = latency_to_string(&report, false);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("duration_frames,mean_ms,std_ms,n_trials\n"));

        assert!(bench_latency(&params, &cfg, &[10], 5, 0).is_err());
    }

    #[test]
    fn verdict_csv_layout() {
        let verdicts = vec![
            WindowVerdict { window_start: 0, prob_stego: 0.25, label: Label::Cover },
            WindowVerdict { window_start: 50, prob_stego: 0.75, label: Label::Stego },
        ];
        let csv = verdicts_to_csv(&verdicts);
        assert_eq!(csv, "window_start,prob_stego,label\n0,0.25,cover\n50,0.75,stego\n");
    }
}

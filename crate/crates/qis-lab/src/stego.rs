//! Cover/stego quantization-index stream generation and dataset files.
//!
//! Covers come from an AR(1) latent trajectory quantized per track with the
//! full codebooks; stego streams re-quantize a seeded subset of frames with
//! the sub-codebook matching each payload bit.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codebook::{qim_embed_index, quantize_full, SplitVqModel};
use crate::error::{Error, Result};

/// Default frames per second (10 ms frames).
pub const DEFAULT_FRAME_RATE: u32 = 100;

/// A quantization index sequence: T frames of 3 codeword indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QisMatrix {
    pub frames: Vec<[usize; 3]>,
    pub vocab: [usize; 3],
    pub frame_rate: u32,
}

impl QisMatrix {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Sample class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Cover,
    Stego,
}

/// AR(1) latent source driving the quantizers; a stand-in for the speech
/// signal feeding the codec.
#[derive(Debug, Clone)]
pub struct LatentSourceConfig {
    /// AR(1) coefficient per track, each in [0, 1).
    pub rho: [f64; 3],
    /// Innovation scale, > 0 (or 0 for the degenerate constant source).
    pub sigma: f64,
    /// Per-track mean vectors; `mean[j]` has the track's dimensionality.
    pub mean: Vec<Vec<f64>>,
    pub seed: u64,
}

impl LatentSourceConfig {
    /// Mid-hypercube means with mild correlation, matching a model's dims.
    pub fn default_for(model: &SplitVqModel, seed: u64) -> Self {
        LatentSourceConfig {
            rho: [0.7, 0.7, 0.7],
            sigma: 0.25,
            mean: model.codebooks.iter().map(|cb| vec![0.5; cb.dim]).collect(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rho.iter().any(|&r| !(0.0..1.0).contains(&r)) {
            return Err(Error::invalid("rho must be in [0, 1)"));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::invalid("sigma must be non-negative"));
        }
        Ok(())
    }
}

/// One labeled sample with the seeds and settings that produced it.
#[derive(Debug, Clone)]
pub struct StegoSample {
    pub qis: QisMatrix,
    pub label: Label,
    /// Recorded as 0 for covers.
    pub embedding_rate: f64,
    /// One bit per embedded codeword slot, in frame-then-track order.
    pub payload: Vec<u8>,
    /// (frame, track) of each embedded slot, aligned with `payload`.
    pub positions: Vec<(usize, usize)>,
    pub seed: u64,
    pub duration_frames: usize,
}

/// Manifest written next to a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub version: u32,
    pub codec_digest: String,
    pub n_cover: usize,
    pub n_stego: usize,
    pub duration_frames: usize,
    pub embedding_rate: f64,
    pub seeds: Vec<u64>,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub label: Label,
    pub seed: u64,
}

/// Gaussian via Box-Muller; two uniforms per draw keeps the stream simple.
fn gauss(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Per-track AR(1) trajectories: `x_t = mean + rho (x_{t-1} - mean) + sigma e_t`.
/// Returns one Vec per track, each `T x dim_j` row-major.
pub fn gen_latent_trajectory(cfg: &LatentSourceConfig, t: usize) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(3);
    for track in 0..3 {
        let dim = cfg.mean[track].len();
        let mut traj = Vec::with_capacity(t * dim);
        let mut prev: Vec<f64> = cfg.mean[track].clone();
        for _ in 0..t {
            for d in 0..dim {
                let m = cfg.mean[track][d];
                let x = m + cfg.rho[track] * (prev[d] - m) + cfg.sigma * gauss(&mut rng);
                prev[d] = x;
                traj.push(x);
            }
        }
        out.push(traj);
    }
    Ok(out)
}

/// Quantize a latent trajectory into a cover QIS.
pub fn gen_cover(model: &SplitVqModel, cfg: &LatentSourceConfig, t: usize) -> Result<QisMatrix> {
    let latent = gen_latent_trajectory(cfg, t)?;
    let mut frames = Vec::with_capacity(t);
    for i in 0..t {
        let mut frame = [0usize; 3];
        for (j, cb) in model.codebooks.iter().enumerate() {
            let x = &latent[j][i * cb.dim..(i + 1) * cb.dim];
            frame[j] = quantize_full(x, cb)?;
        }
        frames.push(frame);
    }
    Ok(QisMatrix {
        frames,
        vocab: model.sizes(),
        frame_rate: DEFAULT_FRAME_RATE,
    })
}

/// Embed a seeded uniform payload at the given rate. Each frame is selected
/// independently with probability `rate`; in selected frames every track in
/// `tracks` carries one payload bit via sub-codebook quantization.
pub fn gen_stego(
    model: &SplitVqModel,
    cfg: &LatentSourceConfig,
    t: usize,
    rate: f64,
    payload_seed: u64,
    tracks: &[usize],
) -> Result<StegoSample> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("embedding rate must be in [0, 1], got {rate}")));
    }
    if tracks.iter().any(|&tr| tr > 2) {
        return Err(Error::invalid("embedding tracks must be within {0, 1, 2}"));
    }
    let latent = gen_latent_trajectory(cfg, t)?;
    let mut embed_rng = ChaCha12Rng::seed_from_u64(payload_seed);
    let mut frames = Vec::with_capacity(t);
    let mut payload = Vec::new();
    let mut positions = Vec::new();
    for i in 0..t {
        let selected = embed_rng.gen::<f64>() < rate;
        let mut frame = [0usize; 3];
        for (j, cb) in model.codebooks.iter().enumerate() {
            let x = &latent[j][i * cb.dim..(i + 1) * cb.dim];
            if selected && tracks.contains(&j) {
                let bit = embed_rng.gen_range(0..2) as u8;
                frame[j] = qim_embed_index(x, cb, &model.partitions[j], bit)?;
                payload.push(bit);
                positions.push((i, j));
            } else {
                frame[j] = quantize_full(x, cb)?;
            }
        }
        frames.push(frame);
    }
    let label = if rate > 0.0 { Label::Stego } else { Label::Cover };
    Ok(StegoSample {
        qis: QisMatrix {
            frames,
            vocab: model.sizes(),
            frame_rate: DEFAULT_FRAME_RATE,
        },
        label,
        embedding_rate: if label == Label::Cover { 0.0 } else { rate },
        payload,
        positions,
        seed: cfg.seed,
        duration_frames: t,
    })
}

/// Digest of the split-VQ configuration (codebooks + partitions).
pub fn codec_digest(model: &SplitVqModel) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model.canonical_text().as_bytes());
    hex::encode(&hasher.finalize()[..16])
}

/// Per-sample seed derived from a master seed; disjoint across sample index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 over master + index
    let mut z = master
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Write `n_per_class` cover and stego QIS files plus a manifest to `out_dir`.
pub fn gen_dataset(
    model: &SplitVqModel,
    base_cfg: &LatentSourceConfig,
    n_per_class: usize,
    t: usize,
    rate: f64,
    out_dir: &Path,
    master_seed: u64,
) -> Result<DatasetManifest> {
    if n_per_class < 1 {
        return Err(Error::invalid("n_per_class must be >= 1"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut files = Vec::with_capacity(2 * n_per_class);
    let mut seeds = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        for (label, rate_i) in [(Label::Cover, 0.0), (Label::Stego, rate)] {
            let idx = files.len() as u64;
            let seed = derive_seed(master_seed, idx);
            let cfg = LatentSourceConfig { seed, ..base_cfg.clone() };
            let qis = match label {
                Label::Cover => gen_cover(model, &cfg, t)?,
                Label::Stego => {
                    gen_stego(model, &cfg, t, rate_i, derive_seed(seed, 1), &[0, 1, 2])?.qis
                }
            };
            let name = match label {
                Label::Cover => format!("cover_{i:05}.qis"),
                Label::Stego => format!("stego_{i:05}.qis"),
            };
            write_qis(&qis, &out_dir.join(&name))?;
            files.push(ManifestEntry { file: name, label, seed });
            seeds.push(seed);
        }
    }
    let manifest = DatasetManifest {
        version: 1,
        codec_digest: codec_digest(model),
        n_cover: n_per_class,
        n_stego: n_per_class,
        duration_frames: t,
        embedding_rate: rate,
        seeds,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::invalid(format!("manifest serialization: {e}")))?;
    let mpath = out_dir.join("manifest.json");
    std::fs::write(&mpath, json).map_err(|e| Error::io(mpath.display().to_string(), e))?;
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Format { line: e.line(), msg: e.to_string() })
}

// --- QIS file format ---------------------------------------------------------
//
// Line 1: `#qis v1 tracks=3 vocab=<v0>,<v1>,<v2> frame_rate=<fr>`
// then one frame per line as `c1,c2,c3` decimal integers.

pub fn qis_to_text(qis: &QisMatrix) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "#qis v1 tracks=3 vocab={},{},{} frame_rate={}",
        qis.vocab[0], qis.vocab[1], qis.vocab[2], qis.frame_rate
    );
    for f in &qis.frames {
        let _ = writeln!(s, "{},{},{}", f[0], f[1], f[2]);
    }
    s
}

pub fn write_qis(qis: &QisMatrix, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(qis_to_text(qis).as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn parse_qis_text(text: &str) -> Result<QisMatrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(Error::Format { line: 1, msg: "empty file".into() })?;
    if !header.starts_with("#qis v1 ") {
        return Err(Error::Format { line: 1, msg: "expected '#qis v1' header".into() });
    }
    let field = |key: &str| -> Result<String> {
        header
            .split_whitespace()
            .find_map(|tok| tok.strip_prefix(&format!("{key}=")))
            .map(str::to_string)
            .ok_or_else(|| Error::Format { line: 1, msg: format!("missing {key}= field") })
    };
    let vocab_s = field("vocab")?;
    let parts: Vec<usize> = vocab_s
        .split(',')
        .map(|v| {
            v.parse::<usize>()
                .map_err(|_| Error::Format { line: 1, msg: format!("bad vocab entry '{v}'") })
        })
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        return Err(Error::Format { line: 1, msg: "vocab must list 3 sizes".into() });
    }
    let vocab = [parts[0], parts[1], parts[2]];
    let frame_rate: u32 = field("frame_rate")?
        .parse()
        .map_err(|_| Error::Format { line: 1, msg: "bad frame_rate".into() })?;

    let mut frames = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != 3 {
            return Err(Error::Format {
                line: lineno,
                msg: format!("expected 3 comma-separated indices, got {}", toks.len()),
            });
        }
        let mut frame = [0usize; 3];
        for (j, tok) in toks.iter().enumerate() {
            let v: usize = tok.trim().parse().map_err(|_| Error::Format {
                line: lineno,
                msg: format!("non-integer token '{tok}'"),
            })?;
            if v >= vocab[j] {
                return Err(Error::Format {
                    line: lineno,
                    msg: format!("index {v} out of range for vocab {}", vocab[j]),
                });
            }
            frame[j] = v;
        }
        frames.push(frame);
    }
    Ok(QisMatrix { frames, vocab, frame_rate })
}

pub fn parse_qis(path: &Path) -> Result<QisMatrix> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut text = String::new();
    std::io::BufReader::new(f)
        .read_to_string(&mut text)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_qis_text(&text)
}

use std::io::Read as _;

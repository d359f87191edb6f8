//! Split-VQ codebooks, complementary sub-codebook partitions, nearest-neighbor
//! quantization and single-index QIM embed/extract.
//!
//! A codebook is a `K x dim` matrix of real entries. A partition splits the
//! entry indices into two disjoint, covering, non-empty classes `L1`/`L2`;
//! embedding a bit restricts the quantizer search to the class matching the
//! bit, and extraction recovers the bit from the chosen index's membership.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// One vector-quantization codebook of a split-VQ stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// Track index within the split (0..2).
    pub id: usize,
    /// Vector dimensionality.
    pub dim: usize,
    /// Number of entries K.
    pub size: usize,
    /// Row-major `size x dim` entry matrix.
    pub vectors: Vec<f64>,
}

impl Codebook {
    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

/// How to divide a codebook into the two complementary sub-codebooks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    /// Seeded shuffle into two equal halves. Requires even K.
    BalancedRandom,
    /// Balanced split that additionally tries to place each entry's nearest
    /// neighbor in the opposite class.
    NeighborAware,
}

/// Two-class membership over a codebook's entries. `membership[i] = 0` puts
/// entry `i` in `L1`, `1` in `L2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnvPartition {
    pub codebook_id: usize,
    pub membership: Vec<u8>,
}

impl CnvPartition {
    pub fn class_counts(&self) -> (usize, usize) {
        let ones = self.membership.iter().filter(|&&m| m == 1).count();
        (self.membership.len() - ones, ones)
    }
}

/// The full split-VQ stage: three codebooks with their partitions.
#[derive(Debug, Clone)]
pub struct SplitVqModel {
    pub codebooks: Vec<Codebook>,
    pub partitions: Vec<CnvPartition>,
}

/// Default entry counts per track, modeling a 3-stage split-VQ LSF quantizer.
pub const DEFAULT_SIZES: [usize; 3] = [128, 32, 32];
/// Default vector dimensionalities per track.
pub const DEFAULT_DIMS: [usize; 3] = [10, 5, 5];

impl SplitVqModel {
    /// Build a full synthetic model: three codebooks with the given sizes and
    /// dims, each partitioned with `mode`. Deterministic per seed.
    pub fn synthetic(
        sizes: &[usize; 3],
        dims: &[usize; 3],
        mode: PartitionMode,
        seed: u64,
    ) -> Result<Self> {
        let mut codebooks = Vec::with_capacity(3);
        let mut partitions = Vec::with_capacity(3);
        for track in 0..3 {
            let cb = build_synthetic_codebook(
                track,
                dims[track],
                sizes[track],
                seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(track as u64 + 1)),
            )?;
            let part = cnv_partition(&cb, mode, seed.wrapping_add(track as u64))?;
            codebooks.push(cb);
            partitions.push(part);
        }
        Ok(SplitVqModel { codebooks, partitions })
    }

    /// Default-scale model (sizes 128/32/32, dims 10/5/5, neighbor-aware).
    pub fn default_from_seed(seed: u64) -> Self {
        Self::synthetic(&DEFAULT_SIZES, &DEFAULT_DIMS, PartitionMode::NeighborAware, seed)
            .expect("default configuration is valid")
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.codebooks[0].size, self.codebooks[1].size, self.codebooks[2].size]
    }

    /// Canonical text rendering of the whole model, used for config digests.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        for cb in &self.codebooks {
            s.push_str(&codebook_to_text(cb));
        }
        for part in &self.partitions {
            s.push_str(&partition_to_text(part));
        }
        s
    }
}

/// Draw a `size x dim` codebook from the unit hypercube. Rows are guaranteed
/// distinct (colliding rows are re-drawn) and the result is deterministic for
/// a fixed seed.
pub fn build_synthetic_codebook(
    track: usize,
    dim: usize,
    size: usize,
    seed: u64,
) -> Result<Codebook> {
    if size < 2 {
        return Err(Error::invalid(format!("codebook size must be >= 2, got {size}")));
    }
    if dim < 1 {
        return Err(Error::invalid(format!("codebook dim must be >= 1, got {dim}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(size);
    while rows.len() < size {
        let cand: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        if rows.iter().any(|r| r == &cand) {
            continue;
        }
        rows.push(cand);
    }
    Ok(Codebook {
        id: track,
        dim,
        size,
        vectors: rows.into_iter().flatten().collect(),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest other entry for every entry (ties to lowest index).
fn nearest_neighbors(cb: &Codebook) -> Vec<usize> {
    (0..cb.size)
        .map(|i| {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for j in 0..cb.size {
                if j == i {
                    continue;
                }
                let d = sq_dist(cb.row(i), cb.row(j));
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Partition a codebook into the two complementary sub-codebooks.
///
/// `BalancedRandom` shuffles the indices and halves them; it rejects odd K.
/// `NeighborAware` walks the entries in a seeded random order and greedily
/// sends each entry's nearest neighbor to the opposite class whenever the
/// balance constraint still allows it.
pub fn cnv_partition(cb: &Codebook, mode: PartitionMode, seed: u64) -> Result<CnvPartition> {
    let k = cb.size;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let membership = match mode {
        PartitionMode::BalancedRandom => {
            if k % 2 != 0 {
                return Err(Error::invalid(format!(
                    "balanced-random partition requires even codebook size, got {k}"
                )));
            }
            let mut order: Vec<usize> = (0..k).collect();
            shuffle(&mut order, &mut rng);
            let mut m = vec![0u8; k];
            for &i in order.iter().skip(k / 2) {
                m[i] = 1;
            }
            m
        }
        PartitionMode::NeighborAware => {
            let nn = nearest_neighbors(cb);
            let mut cap = [k - k / 2, k / 2]; // remaining capacity per class
            let mut m = vec![u8::MAX; k];
            let mut order: Vec<usize> = (0..k).collect();
            shuffle(&mut order, &mut rng);
            for &i in &order {
                if m[i] != u8::MAX {
                    continue;
                }
                let c: usize = if cap[0] == cap[1] {
                    rng.gen_range(0..2)
                } else if cap[0] > cap[1] {
                    0
                } else {
                    1
                };
                m[i] = c as u8;
                cap[c] -= 1;
                let j = nn[i];
                if m[j] == u8::MAX && cap[1 - c] > 0 {
                    m[j] = (1 - c) as u8;
                    cap[1 - c] -= 1;
                }
            }
            m
        }
    };
    Ok(CnvPartition { codebook_id: cb.id, membership })
}

fn shuffle(xs: &mut [usize], rng: &mut ChaCha12Rng) {
    for i in (1..xs.len()).rev() {
        let j = rng.gen_range(0..=i);
        xs.swap(i, j);
    }
}

/// Nearest entry over the whole codebook (Euclidean; ties to lowest index).
pub fn quantize_full(x: &[f64], cb: &Codebook) -> Result<usize> {
    if x.len() != cb.dim {
        return Err(Error::invalid(format!(
            "query dim {} does not match codebook dim {}",
            x.len(),
            cb.dim
        )));
    }
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for i in 0..cb.size {
        let d = sq_dist(x, cb.row(i));
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(best)
}

/// Nearest entry restricted to the sub-codebook whose membership equals `bit`.
pub fn quantize_sub(x: &[f64], cb: &Codebook, part: &CnvPartition, bit: u8) -> Result<usize> {
    if x.len() != cb.dim {
        return Err(Error::invalid(format!(
            "query dim {} does not match codebook dim {}",
            x.len(),
            cb.dim
        )));
    }
    debug_assert_eq!(part.membership.len(), cb.size);
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    for i in 0..cb.size {
        if part.membership[i] != bit {
            continue;
        }
        let d = sq_dist(x, cb.row(i));
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    if best == usize::MAX {
        return Err(Error::invalid(format!("sub-codebook for bit {bit} is empty")));
    }
    Ok(best)
}

/// Embed one bit by restricting quantization to the matching sub-codebook.
pub fn qim_embed_index(x: &[f64], cb: &Codebook, part: &CnvPartition, bit: u8) -> Result<usize> {
    quantize_sub(x, cb, part, bit)
}

/// Recover a bit from a quantization index: the index's membership class.
pub fn qim_extract_bit(index: usize, part: &CnvPartition) -> Result<u8> {
    part.membership
        .get(index)
        .copied()
        .ok_or_else(|| {
            Error::invalid(format!(
                "index {index} out of range for partition of size {}",
                part.membership.len()
            ))
        })
}

/// One failure mode found by [`verify_partition`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionFailure {
    /// Membership length differs from the codebook size.
    Coverage { expected: usize, got: usize },
    /// A membership value other than 0 or 1.
    BadValue { index: usize, value: u8 },
    /// One class has no entries.
    EmptyClass { class: u8 },
}

impl PartitionFailure {
    /// Short stable code for reports.
    pub fn code(&self) -> &'static str {
        match self {
            PartitionFailure::Coverage { .. } => "coverage",
            PartitionFailure::BadValue { .. } => "bad-value",
            PartitionFailure::EmptyClass { .. } => "empty-class",
        }
    }
}

/// Result of checking a partition against its codebook.
#[derive(Debug, Clone)]
pub struct PartitionReport {
    pub class_counts: (usize, usize),
    pub failures: Vec<PartitionFailure>,
}

impl PartitionReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Check disjointness/coverage structure and class non-emptiness. Disjointness
/// and single membership are structural (one value per index); the report
/// records coverage mismatches, invalid values and empty classes.
pub fn verify_partition(part: &CnvPartition, cb: &Codebook) -> PartitionReport {
    let mut failures = Vec::new();
    if part.membership.len() != cb.size {
        failures.push(PartitionFailure::Coverage {
            expected: cb.size,
            got: part.membership.len(),
        });
    }
    for (i, &v) in part.membership.iter().enumerate() {
        if v > 1 {
            failures.push(PartitionFailure::BadValue { index: i, value: v });
        }
    }
    let counts = part.class_counts();
    if counts.0 == 0 {
        failures.push(PartitionFailure::EmptyClass { class: 0 });
    }
    if counts.1 == 0 {
        failures.push(PartitionFailure::EmptyClass { class: 1 });
    }
    PartitionReport { class_counts: counts, failures }
}

// --- text serialization -----------------------------------------------------
//
// Codebook: `#cbk v1 track=<t> dim=<d> size=<K>` then K lines of
// space-separated decimals. Partition: `#cnv v1 size=<K>` then K lines of
// `0|1`. Decimals use the shortest round-trip rendering, so write/parse is
// bit-exact.

pub fn codebook_to_text(cb: &Codebook) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "#cbk v1 track={} dim={} size={}", cb.id, cb.dim, cb.size);
    for i in 0..cb.size {
        let row: Vec<String> = cb.row(i).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

pub fn partition_to_text(part: &CnvPartition) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "#cnv v1 size={}", part.membership.len());
    for &m in &part.membership {
        let _ = writeln!(s, "{m}");
    }
    s
}

pub fn save_codebook(cb: &Codebook, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(codebook_to_text(cb).as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn save_partition(part: &CnvPartition, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(partition_to_text(part).as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn header_field(header: &str, key: &str, line: usize) -> Result<usize> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(&format!("{key}=")))
        .ok_or_else(|| Error::Format { line, msg: format!("missing {key}= field") })?
        .parse::<usize>()
        .map_err(|_| Error::Format { line, msg: format!("non-integer {key}= field") })
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = std::io::BufReader::new(f).lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(Error::Format { line: 1, msg: "empty file".into() })?;
    let header = header.map_err(|e| Error::io(path.display().to_string(), e))?;
    if !header.starts_with("#cbk v1 ") {
        return Err(Error::Format { line: 1, msg: "expected '#cbk v1' header".into() });
    }
    let track = header_field(&header, "track", 1)?;
    let dim = header_field(&header, "dim", 1)?;
    let size = header_field(&header, "size", 1)?;
    let mut vectors = Vec::with_capacity(size * dim);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Format {
                    line: lineno,
                    msg: format!("non-decimal token '{tok}'"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != dim {
            return Err(Error::Format {
                line: lineno,
                msg: format!("expected {dim} values, got {}", row.len()),
            });
        }
        vectors.extend(row);
    }
    if vectors.len() != size * dim {
        return Err(Error::Format {
            line: size + 1,
            msg: format!("expected {size} rows, got {}", vectors.len() / dim),
        });
    }
    Ok(Codebook { id: track, dim, size, vectors })
}

pub fn load_partition(path: &Path) -> Result<CnvPartition> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = std::io::BufReader::new(f).lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(Error::Format { line: 1, msg: "empty file".into() })?;
    let header = header.map_err(|e| Error::io(path.display().to_string(), e))?;
    if !header.starts_with("#cnv v1 ") {
        return Err(Error::Format { line: 1, msg: "expected '#cnv v1' header".into() });
    }
    let size = header_field(&header, "size", 1)?;
    let mut membership = Vec::with_capacity(size);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t {
            "0" => membership.push(0),
            "1" => membership.push(1),
            _ => {
                return Err(Error::Format {
                    line: lineno,
                    msg: format!("expected 0 or 1, got '{t}'"),
                })
            }
        }
    }
    if membership.len() != size {
        return Err(Error::Format {
            line: size + 1,
            msg: format!("expected {size} entries, got {}", membership.len()),
        });
    }
    Ok(CnvPartition { codebook_id: 0, membership })
}

//! Binary parameter file.
//!
//! Layout: magic `HRN1`, version byte, a field-tagged config block
//! (u16 field count, then `u8 tag` + `u32 LE value` pairs; list-valued fields
//! repeat their tag in order), then every parameter tensor in declared order
//! as a `u64 LE` element count followed by little-endian IEEE-754 f32 values.
//! Batch-norm running statistics are stored after each block's beta so a
//! loaded model is immediately usable for inference.

use std::path::Path;

use crate::error::{Error, Result};

use super::{init_params, HrnConfig, HrnParams, Pooling};

const MAGIC: &[u8; 4] = b"HRN1";
const VERSION: u8 = 1;

const TAG_VOCAB0: u8 = 1;
const TAG_VOCAB1: u8 = 2;
const TAG_VOCAB2: u8 = 3;
const TAG_EMBED_DIM: u8 = 4;
const TAG_FILTERS: u8 = 5;
const TAG_FC_DIM: u8 = 6;
const TAG_DROPOUT_PER_MILLE: u8 = 7;
const TAG_N_CLASSES: u8 = 8;
const TAG_POOLING: u8 = 9;
const TAG_KERNEL: u8 = 10;
const TAG_PATH: u8 = 11;

fn config_fields(cfg: &HrnConfig) -> Vec<(u8, u32)> {
    let mut fields = vec![
        (TAG_VOCAB0, cfg.vocab_sizes[0] as u32),
        (TAG_VOCAB1, cfg.vocab_sizes[1] as u32),
        (TAG_VOCAB2, cfg.vocab_sizes[2] as u32),
        (TAG_EMBED_DIM, cfg.embed_dim as u32),
        (TAG_FILTERS, cfg.block_filters as u32),
        (TAG_FC_DIM, cfg.fc_dim as u32),
        (TAG_DROPOUT_PER_MILLE, (cfg.dropout_rate * 1000.0).round() as u32),
        (TAG_N_CLASSES, cfg.n_classes as u32),
        (TAG_POOLING, matches!(cfg.pooling, Pooling::MaxPool) as u32),
    ];
    for &k in &cfg.kernel_sizes {
        fields.push((TAG_KERNEL, k as u32));
    }
    for &p in &super::sorted_paths(cfg) {
        fields.push((TAG_PATH, p as u32));
    }
    fields
}

/// Every tensor in file order, as (name, values).
fn tensor_list(params: &HrnParams) -> Vec<(&'static str, &[f64])> {
    let mut out: Vec<(&'static str, &[f64])> = Vec::new();
    for t in &params.embeds {
        out.push(("embed", &t.data));
    }
    for b in &params.blocks {
        out.push(("kernels", &b.kernels.data));
        out.push(("bias", &b.bias));
        out.push(("gamma", &b.gamma));
        out.push(("beta", &b.beta));
        out.push(("running_mean", &b.running.mean));
        out.push(("running_var", &b.running.var));
    }
    for w in &params.attn_w {
        out.push(("attn_w", w));
    }
    out.push(("attn_b", &params.attn_b));
    out.push(("fc1_w", &params.fc1_w.data));
    out.push(("fc1_b", &params.fc1_b));
    out.push(("fc2_w", &params.fc2_w.data));
    out.push(("fc2_b", &params.fc2_b));
    out
}

pub fn save_params(params: &HrnParams, cfg: &HrnConfig, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    let fields = config_fields(cfg);
    buf.extend_from_slice(&(fields.len() as u16).to_le_bytes());
    for (tag, value) in fields {
        buf.push(tag);
        buf.extend_from_slice(&value.to_le_bytes());
    }
    for (_, values) in tensor_list(params) {
        buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for &v in values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path.display().to_string(), e))
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Truncated(format!("while reading {what}")));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn load_params(path: &Path) -> Result<(HrnParams, HrnConfig)> {
    let data = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Reader { data: &data, pos: 0 };

    if r.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.take(1, "version")?[0];
    if version != VERSION {
        return Err(Error::VersionMismatch(version));
    }

    let n_fields = u16::from_le_bytes(r.take(2, "field count")?.try_into().unwrap());
    let mut scalars = std::collections::HashMap::new();
    let mut kernels = Vec::new();
    let mut paths = Vec::new();
    for _ in 0..n_fields {
        let tag = r.take(1, "field tag")?[0];
        let value = r.u32("field value")?;
        match tag {
            TAG_KERNEL => kernels.push(value as usize),
            TAG_PATH => paths.push(value as usize),
            _ => {
                scalars.insert(tag, value);
            }
        }
    }
    let get = |tag: u8, name: &str| -> Result<u32> {
        scalars
            .get(&tag)
            .copied()
            .ok_or_else(|| Error::ShapeMismatch(format!("config block missing {name}")))
    };
    let cfg = HrnConfig {
        vocab_sizes: [
            get(TAG_VOCAB0, "vocab0")? as usize,
            get(TAG_VOCAB1, "vocab1")? as usize,
            get(TAG_VOCAB2, "vocab2")? as usize,
        ],
        embed_dim: get(TAG_EMBED_DIM, "embed_dim")? as usize,
        block_filters: get(TAG_FILTERS, "block_filters")? as usize,
        kernel_sizes: kernels,
        fc_dim: get(TAG_FC_DIM, "fc_dim")? as usize,
        dropout_rate: get(TAG_DROPOUT_PER_MILLE, "dropout")? as f64 / 1000.0,
        n_classes: get(TAG_N_CLASSES, "n_classes")? as usize,
        pooling: if get(TAG_POOLING, "pooling")? == 1 {
            Pooling::MaxPool
        } else {
            Pooling::Attention
        },
        enabled_paths: paths,
    };
    cfg.validate()
        .map_err(|e| Error::ShapeMismatch(format!("config block invalid: {e}")))?;

    // shapes are fully determined by the config
    let mut params = init_params(&cfg, 0)?;
    {
        let mut targets: Vec<(&'static str, &mut [f64])> = Vec::new();
        for t in &mut params.embeds {
            targets.push(("embed", &mut t.data));
        }
        for b in &mut params.blocks {
            targets.push(("kernels", &mut b.kernels.data));
            targets.push(("bias", &mut b.bias));
            targets.push(("gamma", &mut b.gamma));
            targets.push(("beta", &mut b.beta));
            targets.push(("running_mean", &mut b.running.mean));
            targets.push(("running_var", &mut b.running.var));
        }
        for w in &mut params.attn_w {
            targets.push(("attn_w", w));
        }
        targets.push(("attn_b", &mut params.attn_b));
        targets.push(("fc1_w", &mut params.fc1_w.data));
        targets.push(("fc1_b", &mut params.fc1_b));
        targets.push(("fc2_w", &mut params.fc2_w.data));
        targets.push(("fc2_b", &mut params.fc2_b));

        for (name, target) in targets {
            let declared = r.u64(name)? as usize;
            if declared != target.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: file declares {declared} elements, config implies {}",
                    target.len()
                )));
            }
            let bytes = r.take(4 * declared, name)?;
            for (i, chunk) in bytes.chunks_exact(4).enumerate() {
                target[i] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
            }
        }
    }
    if r.pos != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} trailing bytes after parameter payload",
            data.len() - r.pos
        )));
    }
    Ok((params, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrn::{init_params, make_variant, HrnConfig};

    fn toy_cfg() -> HrnConfig {
        HrnConfig {
            vocab_sizes: [6, 5, 4],
            embed_dim: 2,
            block_filters: 4,
            kernel_sizes: vec![1, 3, 5],
            fc_dim: 8,
            dropout_rate: 0.6,
            n_classes: 2,
            pooling: super::Pooling::Attention,
            enabled_paths: vec![1, 2, 3],
        }
    }

    #[test]
    fn round_trip_is_bit_exact_after_f32_quantization() {
        let dir = tempfile::tempdir().unwrap();
        for variant in [0u8, 4, 5, 6] {
            let cfg = make_variant(&toy_cfg(), variant).unwrap();
            let params = init_params(&cfg, 100 + variant as u64).unwrap();
            let p1 = dir.path().join(format!("v{variant}.hrn"));
            save_params(&params, &cfg, &p1).unwrap();
            let (loaded, cfg_back) = load_params(&p1).unwrap();
            assert_eq!(cfg_back, cfg);
            // a second save of the loaded params is byte-identical
            let p2 = dir.path().join(format!("v{variant}_2.hrn"));
            save_params(&loaded, &cfg_back, &p2).unwrap();
            assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
            // f32 quantization error only
            for (a, b) in params.param_slices().iter().zip(loaded.param_slices()) {
                for (x, y) in a.iter().zip(b.iter()) {
                    assert!((x - y).abs() <= (x.abs() + 1.0) * 1e-6);
                }
            }
        }
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_cfg();
        let params = init_params(&cfg, 1).unwrap();
        let path = dir.path().join("m.hrn");
        save_params(&params, &cfg, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_params(&path), Err(Error::BadMagic)));
    }

    #[test]
    fn version_truncation_and_shape_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_cfg();
        let params = init_params(&cfg, 2).unwrap();
        let path = dir.path().join("p.hrn");
        save_params(&params, &cfg, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut v = bytes.clone();
        v[4] = 9;
        std::fs::write(&path, &v).unwrap();
        assert!(matches!(load_params(&path), Err(Error::VersionMismatch(9))));

        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_params(&path), Err(Error::Truncated(_))));

        let mut extended = bytes.clone();
        extended.extend_from_slice(&[0u8; 4]);
        std::fs::write(&path, &extended).unwrap();
        assert!(matches!(load_params(&path), Err(Error::ShapeMismatch(_))));
    }
}

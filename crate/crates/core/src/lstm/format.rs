//! Versioned binary weight file.
//!
//! ```text
//! magic        8 bytes   "F0LABLSM"
//! version      u32 LE    1
//! header_len   u32 LE
//! header       UTF-8, one `key=value` per line:
//!                init_kind=random|auto_associative
//!                stage=pretrain|detector
//!                input=<n>  hidden=<n>,<n>,...  output=<n>  feature_dim=<n>
//! block_count  u32 LE
//! blocks       name_len u32 LE, name, ndim u32 LE, ndim x u64 LE dims,
//!              prod(dims) x f64 LE values (row-major)
//! ```
//!
//! Blocks are `norm.mean`, `norm.std`, then per layer `layer<i>.w_x`,
//! `layer<i>.w_h`, `layer<i>.bias` (gate rows in input, forget, output,
//! candidate order), then `proj.w`, `proj.b`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::normalize::Normalizer;
use super::weights::{Arch, LstmWeights};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"F0LABLSM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Random,
    AutoAssociative,
}

impl InitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InitKind::Random => "random",
            InitKind::AutoAssociative => "auto_associative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Identity-task network (the auto-associative initializer).
    Pretrain,
    /// Noisy-to-clean network used for detection.
    Detector,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Detector => "detector",
        }
    }
}

/// Weights plus the feature standardization they were trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub weights: LstmWeights,
    pub normalizer: Normalizer,
    pub init_kind: InitKind,
    pub stage: Stage,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::WeightFormat("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = &self.weights.arch;
        let hidden: Vec<String> = arch.hidden.iter().map(|h| h.to_string()).collect();
        let header = format!(
            "init_kind={}\nstage={}\ninput={}\nhidden={}\noutput={}\nfeature_dim={}\n",
            self.init_kind.as_str(),
            self.stage.as_str(),
            arch.input,
            hidden.join(","),
            arch.output,
            self.normalizer.dim(),
        );
        let mut blocks: Vec<(String, Vec<usize>, &[f64])> = vec![
            (
                "norm.mean".into(),
                vec![self.normalizer.mean.len()],
                &self.normalizer.mean,
            ),
            (
                "norm.std".into(),
                vec![self.normalizer.std.len()],
                &self.normalizer.std,
            ),
        ];
        blocks.extend(
            self.weights
                .blocks()
                .into_iter()
                .map(|b| (b.name, b.shape, b.data)),
        );

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u32(&mut out, header.len() as u32);
        out.extend_from_slice(header.as_bytes());
        put_u32(&mut out, blocks.len() as u32);
        for (name, shape, data) in blocks {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, shape.len() as u32);
            for d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Model> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::WeightFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::WeightFormat(format!(
                "unsupported version {version}"
            )));
        }
        let header_len = r.u32()? as usize;
        let header = std::str::from_utf8(r.take(header_len)?)
            .map_err(|_| Error::WeightFormat("header is not UTF-8".into()))?;
        let mut keys = BTreeMap::new();
        for line in header.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::WeightFormat(format!("bad header line {line:?}")))?;
            keys.insert(k, v);
        }
        let get = |k: &str| {
            keys.get(k)
                .copied()
                .ok_or_else(|| Error::WeightFormat(format!("missing header key {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::WeightFormat(format!("bad value for {k}")))
        };
        let init_kind = match get("init_kind")? {
            "random" => InitKind::Random,
            "auto_associative" => InitKind::AutoAssociative,
            other => return Err(Error::WeightFormat(format!("unknown init_kind {other}"))),
        };
        let stage = match get("stage")? {
            "pretrain" => Stage::Pretrain,
            "detector" => Stage::Detector,
            other => return Err(Error::WeightFormat(format!("unknown stage {other}"))),
        };
        let hidden = get("hidden")?
            .split(',')
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::WeightFormat("bad hidden sizes".into()))?;
        let arch = Arch::new(num("input")?, hidden, num("output")?)
            .map_err(|e| Error::WeightFormat(e.to_string()))?;
        let feature_dim = num("feature_dim")?;

        let count = r.u32()? as usize;
        let mut blocks = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::WeightFormat("block name is not UTF-8".into()))?
                .to_string();
            let ndim = r.u32()? as usize;
            let dims = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::WeightFormat("block too large".into()))?,
            )?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            blocks.insert(name, (dims, data));
        }
        if r.pos != buf.len() {
            return Err(Error::WeightFormat("trailing bytes".into()));
        }
        let mut take = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let (dims, data) = blocks
                .remove(name)
                .ok_or_else(|| Error::WeightFormat(format!("missing block {name}")))?;
            if dims != shape {
                return Err(Error::WeightFormat(format!(
                    "block {name} has shape {dims:?}, expected {shape:?}"
                )));
            }
            Ok(data)
        };
        let normalizer = Normalizer {
            mean: take("norm.mean", &[feature_dim])?,
            std: take("norm.std", &[feature_dim])?,
        };
        let mut weights = LstmWeights::zeros(&arch)?;
        for (i, layer) in weights.layers.iter_mut().enumerate() {
            let (rows, cols) = layer.w_x.shape();
            layer.w_x =
                Matrix::from_vec(rows, cols, take(&format!("layer{i}.w_x"), &[rows, cols])?)?;
            let (rows, cols) = layer.w_h.shape();
            layer.w_h =
                Matrix::from_vec(rows, cols, take(&format!("layer{i}.w_h"), &[rows, cols])?)?;
            let n = layer.bias.len();
            layer.bias = take(&format!("layer{i}.bias"), &[n])?;
        }
        let (rows, cols) = weights.proj_w.shape();
        weights.proj_w = Matrix::from_vec(rows, cols, take("proj.w", &[rows, cols])?)?;
        weights.proj_b = take("proj.b", &[arch.output])?;
        if let Some(extra) = blocks.keys().next() {
            return Err(Error::WeightFormat(format!("unexpected block {extra}")));
        }
        if !weights.is_finite() {
            return Err(Error::WeightFormat("non-finite parameter".into()));
        }
        Ok(Model {
            weights,
            normalizer,
            init_kind,
            stage,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Model> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Model::from_bytes(&buf).map_err(|e| e.context(path.display().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::weights::init_random;

    fn model() -> Model {
        let arch = Arch::new(5, vec![4, 3], 5).unwrap();
        Model {
            weights: init_random(&arch, 2).unwrap(),
            normalizer: Normalizer {
                mean: vec![0.5, -1.0, 2.0, 0.0, 3.0],
                std: vec![1.0, 2.0, 0.5, 1.0, 4.0],
            },
            init_kind: InitKind::AutoAssociative,
            stage: Stage::Pretrain,
        }
    }

    #[test]
    fn round_trip() {
        let m = model();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(Model::from_bytes(&bytes).unwrap(), m);
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.contains("init_kind=auto_associative\n"));
        assert!(text.contains("hidden=4,3\n"));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = model().to_bytes();
        assert!(Model::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(Model::from_bytes(&bad_magic).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Model::from_bytes(&extra).is_err());
        let mut version = bytes;
        version[8] = 9;
        assert!(matches!(
            Model::from_bytes(&version),
            Err(Error::WeightFormat(_))
        ));
    }
}

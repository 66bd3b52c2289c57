//! Binary checkpoint format:
//!
//! ```text
//! "HYBFER01" | variant u8 | num_classes u8 | tensor count u64
//! per tensor: name length u64 | UTF-8 name | rank u64 | dims u64... | f32 values
//! CRC-64/XZ u64 over every preceding byte
//! ```
//!
//! All integers and reals are little-endian. Training metadata travels as
//! two extra tensors, `meta.epochs_completed` and `meta.seed`, each holding
//! a `u64` as four 16-bit limbs (low first) so every stored value is an
//! exactly representable float.

use std::fs;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sift::{Codebook, DESCRIPTOR_LEN};
use crate::tensor::Tensor;

use super::{build_model, Arch, FeatureNorm, ModelGraph, ModelVariant};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HYBFER01";

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);
const META_EPOCHS: &str = "meta.epochs_completed";
const META_SEED: &str = "meta.seed";
const FEATURE_MEAN: &str = "side.feature_mean";
const FEATURE_STD: &str = "side.feature_std";
const CODEBOOK: &str = "side.codebook";

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub variant: ModelVariant,
    pub num_classes: usize,
    /// Parameters and side-feature state, in a fixed order.
    pub tensors: Vec<(String, Tensor<f32>)>,
    pub epochs_completed: u64,
    pub seed: u64,
}

fn limbs(v: u64) -> Tensor<f32> {
    Tensor::from_fn(&[4], |i| ((v >> (16 * i)) & 0xffff) as f32)
}

fn from_limbs(t: &Tensor<f32>) -> Option<u64> {
    if t.shape() != [4] {
        return None;
    }
    let mut v = 0u64;
    for (i, &x) in t.data().iter().enumerate() {
        if !(0.0..65536.0).contains(&x) || x.fract() != 0.0 {
            return None;
        }
        v |= (x as u64) << (16 * i);
    }
    Some(v)
}

impl ModelCheckpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(self.variant.id());
        out.push(self.num_classes as u8);
        let meta = [(META_EPOCHS, limbs(self.epochs_completed)), (META_SEED, limbs(self.seed))];
        let all: Vec<(&str, &Tensor<f32>)> = self
            .tensors
            .iter()
            .map(|(n, t)| (n.as_str(), t))
            .chain(meta.iter().map(|(n, t)| (*n, t)))
            .collect();
        out.extend_from_slice(&(all.len() as u64).to_le_bytes());
        for (name, t) in all {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u64).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = CRC64.checksum(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..6] != b"HYBFER" {
            return Err(format_err(0, "bad checkpoint magic"));
        }
        if bytes.len() < 8 || &bytes[6..8] != b"01" {
            return Err(format_err(6, "unsupported checkpoint version"));
        }
        if bytes.len() < 8 + 2 + 8 + 8 {
            return Err(format_err(bytes.len() as u64, "truncated checkpoint header"));
        }
        let body_end = bytes.len() - 8;
        let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
        if CRC64.checksum(&bytes[..body_end]) != stored {
            return Err(format_err(body_end as u64, "checksum mismatch (truncated or corrupt file)"));
        }
        let mut r = Reader {
            bytes: &bytes[..body_end],
            pos: 8,
        };
        let variant_pos = r.pos;
        let variant = ModelVariant::from_id(r.u8()?).ok_or_else(|| format_err(variant_pos as u64, "unknown variant id"))?;
        let num_classes = r.u8()? as usize;
        let count = r.u64()?;
        let mut tensors = Vec::new();
        let mut epochs = None;
        let mut seed = None;
        for _ in 0..count {
            let at = r.pos as u64;
            let name_len = r.len()?;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| format_err(at, "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.len()?;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.len()?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| format_err(r.pos as u64, format!("tensor {name} runs past the end")))?;
            let data = r
                .take(n * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(&shape, data).map_err(|e| format_err(at, e.to_string()))?;
            if tensors.iter().any(|(n, _): &(String, _)| *n == name) {
                return Err(format_err(at, format!("duplicate tensor {name}")));
            }
            match name.as_str() {
                META_EPOCHS => epochs = Some(from_limbs(&t).ok_or_else(|| format_err(at, "bad epoch metadata"))?),
                META_SEED => seed = Some(from_limbs(&t).ok_or_else(|| format_err(at, "bad seed metadata"))?),
                _ => tensors.push((name, t)),
            }
        }
        if r.remaining() != 0 {
            return Err(format_err(r.pos as u64, "trailing bytes after the last tensor"));
        }
        Ok(ModelCheckpoint {
            variant,
            num_classes,
            tensors,
            epochs_completed: epochs.unwrap_or(0),
            seed: seed.unwrap_or(0),
        })
    }
}

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(format_err(self.pos as u64, "unexpected end of checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A u64 used as a length or dimension; anything larger than the file
    /// cannot be valid.
    fn len(&mut self) -> Result<usize> {
        let at = self.pos as u64;
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= self.bytes.len())
            .ok_or_else(|| format_err(at, format!("implausible length {v}")))
    }
}

pub fn save_checkpoint(checkpoint: &ModelCheckpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelCheckpoint::from_bytes(&bytes)
}

impl ModelGraph<f32> {
    pub fn to_checkpoint(&self, epochs_completed: u64, seed: u64) -> ModelCheckpoint {
        let mut tensors: Vec<(String, Tensor<f32>)> =
            self.params().into_iter().map(|(n, p)| (n, p.value.clone())).collect();
        let f32s = |v: &[f64]| Tensor::new(&[v.len()], v.iter().map(|&x| x as f32).collect()).unwrap();
        if let Some(norm) = &self.side_norm {
            tensors.push((FEATURE_MEAN.into(), f32s(&norm.mean)));
            tensors.push((FEATURE_STD.into(), f32s(&norm.std)));
        }
        if let Some(cb) = &self.codebook {
            let t = Tensor::new(&[cb.k(), cb.dim()], cb.centroids().iter().map(|&x| x as f32).collect()).unwrap();
            tensors.push((CODEBOOK.into(), t));
        }
        ModelCheckpoint {
            variant: self.variant,
            num_classes: self.num_classes,
            tensors,
            epochs_completed,
            seed,
        }
    }

    /// Rebuilds a model from a checkpoint. Layer sizes are inferred from the
    /// stored shapes; every parameter must be present with the expected shape.
    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        let bad = |m: String| format_err(0, m);
        let get = |name: &str| ckpt.tensor(name).ok_or_else(|| bad(format!("missing tensor {name}")));
        let dim = |name: &str, rank: usize| -> Result<Vec<usize>> {
            let t = get(name)?;
            if t.rank() != rank {
                return Err(bad(format!("{name} has rank {}, expected {rank}", t.rank())));
            }
            Ok(t.shape().to_vec())
        };
        let f1 = dim("conv1.weight", 4)?[3];
        let f2 = dim("conv3.weight", 4)?[3];
        let f3 = dim("conv5.weight", 4)?[3];
        let fc = dim("fc.weight", 2)?;
        let (flat, hidden) = (fc[0], fc[1]);
        let cells = flat / f3.max(1);
        let side_cells = (cells as f64).sqrt().round() as usize;
        if side_cells * side_cells * f3 != flat {
            return Err(bad(format!("fc input {flat} is not a square grid of {f3} channels")));
        }
        let mut arch = Arch {
            input_size: side_cells * 8,
            filters: [f1, f2, f3],
            hidden,
            ..Arch::default()
        };
        if ckpt.variant.is_hybrid() {
            let s = dim("side_fc.weight", 2)?;
            arch.side_in = s[0];
            arch.side_hidden = s[1];
        }
        let mut model: ModelGraph<f32> = build_model(ckpt.variant, ckpt.num_classes, arch, &mut Rng::new(0))
            .map_err(|e| bad(e.to_string()))?;
        let mut expected = 0;
        for (name, p) in model.params_mut() {
            let t = get(&name)?;
            if t.shape() != p.value.shape() {
                return Err(bad(format!("{name} has shape {:?}, expected {:?}", t.shape(), p.value.shape())));
            }
            p.value = t.clone();
            expected += 1;
        }
        let to_f64 = |t: &Tensor<f32>| t.data().iter().map(|&v| v as f64).collect::<Vec<_>>();
        match (ckpt.tensor(FEATURE_MEAN), ckpt.tensor(FEATURE_STD)) {
            (Some(m), Some(s)) => {
                model
                    .set_side_norm(Some(FeatureNorm {
                        mean: to_f64(m),
                        std: to_f64(s),
                    }))
                    .map_err(|e| bad(e.to_string()))?;
                expected += 2;
            }
            (None, None) => {}
            _ => return Err(bad("feature statistics are incomplete".into())),
        }
        if let Some(t) = ckpt.tensor(CODEBOOK) {
            if t.rank() != 2 || t.shape()[1] != DESCRIPTOR_LEN {
                return Err(bad(format!("codebook shape {:?}", t.shape())));
            }
            let cb = Codebook::new(t.shape()[0], DESCRIPTOR_LEN, to_f64(t)).map_err(|e| bad(e.to_string()))?;
            model.set_codebook(cb).map_err(|e| bad(e.to_string()))?;
            expected += 1;
        }
        if expected != ckpt.tensors.len() {
            return Err(bad(format!(
                "checkpoint has {} tensors, the {} model uses {expected}",
                ckpt.tensors.len(),
                ckpt.variant
            )));
        }
        Ok(model)
    }
}

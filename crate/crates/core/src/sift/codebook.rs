use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::SiftDescriptor;

pub const CODEBOOK_MAGIC: &[u8; 8] = b"BOVW0001";

/// `K x dim` matrix of cluster centroids.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    k: usize,
    dim: usize,
    centroids: Vec<f64>,
}

impl Codebook {
    pub fn new(k: usize, dim: usize, centroids: Vec<f64>) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::invalid("codebook needs K >= 1 and dim >= 1"));
        }
        if centroids.len() != k * dim {
            return Err(Error::shape(format!(
                "codebook {k}x{dim} needs {} values, got {}",
                k * dim,
                centroids.len()
            )));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("codebook centroids must be finite"));
        }
        Ok(Codebook { k, dim, centroids })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    /// Copy with every centroid rounded to `f32`, i.e. exactly what a
    /// save/load round trip produces.
    pub fn quantized(&self) -> Codebook {
        Codebook {
            k: self.k,
            dim: self.dim,
            centroids: self.centroids.iter().map(|&v| v as f32 as f64).collect(),
        }
    }

    /// Index of the closest centroid (Euclidean), lowest index on ties.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for j in 0..self.k {
            let d: f64 = self.centroid(j).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 4 * self.centroids.len());
        out.extend_from_slice(CODEBOOK_MAGIC);
        out.extend_from_slice(&(self.k as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for &v in &self.centroids {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, message: &str| Error::Format {
            offset: offset as u64,
            message: message.to_string(),
        };
        if bytes.len() < 8 || &bytes[..8] != CODEBOOK_MAGIC {
            return Err(fail(0, "bad codebook magic"));
        }
        if bytes.len() < 24 {
            return Err(fail(bytes.len(), "truncated codebook header"));
        }
        let k = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let dim = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let count = k
            .checked_mul(dim)
            .filter(|c| c.checked_mul(4).is_some_and(|b| b + 24 == bytes.len() as u64))
            .ok_or_else(|| fail(bytes.len(), "codebook body length does not match K x dim"))?;
        let centroids = bytes[24..]
            .chunks_exact(4)
            .take(count as usize)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Codebook::new(k as usize, dim as usize, centroids).map_err(|e| fail(24, &e.to_string()))
    }
}

pub fn save_codebook(codebook: &Codebook, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, codebook.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Codebook::from_bytes(&bytes)
}

/// Count of descriptors per nearest centroid (length K). An empty
/// descriptor list gives the zero vector.
pub fn bag_of_keypoints(descriptors: &[SiftDescriptor], codebook: &Codebook) -> Result<Tensor<f64>> {
    if codebook.dim() != super::DESCRIPTOR_LEN {
        return Err(Error::shape(format!(
            "codebook dimension {} is not the descriptor length",
            codebook.dim()
        )));
    }
    let mut hist = vec![0.0; codebook.k()];
    for d in descriptors {
        hist[codebook.nearest(&d.0)] += 1.0;
    }
    Tensor::new(&[codebook.k()], hist)
}

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::gemm;

use super::{Codebook, SiftDescriptor, DESCRIPTOR_LEN};

const MAX_ITERATIONS: usize = 100;
const REL_TOLERANCE: f64 = 1e-4;
const CHUNK: usize = 512;

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Sum of squared distances after each assignment step.
    pub objective_history: Vec<f64>,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per row, ties to the lowest index. Distances use the
/// expansion `|x|^2 - 2 x.c + |c|^2` with a blocked matrix product.
fn assign(data: &[f64], dim: usize, centroids: &[f64], k: usize, out: &mut [usize]) {
    let c_norms: Vec<f64> = centroids.chunks(dim).map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut dots = vec![0.0; CHUNK * k];
    for (chunk_idx, rows) in data.chunks(CHUNK * dim).enumerate() {
        let m = rows.len() / dim;
        gemm(false, true, m, dim, k, 1.0, rows, centroids, 0.0, &mut dots[..m * k]);
        for r in 0..m {
            let x = &rows[r * dim..(r + 1) * dim];
            let x_norm: f64 = x.iter().map(|v| v * v).sum();
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for j in 0..k {
                let d = x_norm - 2.0 * dots[r * k + j] + c_norms[j];
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            out[chunk_idx * CHUNK + r] = best;
        }
    }
}

fn plus_plus_init(data: &[f64], dim: usize, n: usize, k: usize, rng: &mut Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.index(n);
    centroids.extend_from_slice(&data[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(&data[i * dim..(i + 1) * dim], &centroids[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.index(n)
        };
        let c = data[pick * dim..(pick + 1) * dim].to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(&data[i * dim..(i + 1) * dim], &c));
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

/// Lloyd's algorithm on `n x dim` row-major data with k-means++ seeding.
///
/// Stops when the relative objective change drops below 1e-4 or after 100
/// iterations. A cluster left empty by an update is moved onto the point
/// farthest from its assigned centroid.
pub fn kmeans_fit_rows(data: &[f64], dim: usize, k: usize, rng: &mut Rng) -> Result<KMeansFit> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::shape(format!("data length {} is not a multiple of {dim}", data.len())));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let n = data.len() / dim;
    if n < k {
        return Err(Error::invalid(format!("{n} points cannot form {k} clusters")));
    }
    let mut centroids = plus_plus_init(data, dim, n, k, rng);
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    for iter in 0..MAX_ITERATIONS {
        assign(data, dim, &centroids, k, &mut labels);
        let objective: f64 = (0..n)
            .map(|i| sq_dist(&data[i * dim..(i + 1) * dim], &centroids[labels[i] * dim..(labels[i] + 1) * dim]))
            .sum();
        let converged = history
            .last()
            .map(|&prev: &f64| prev <= 0.0 || (prev - objective) / prev < REL_TOLERANCE)
            .unwrap_or(false);
        history.push(objective);
        if converged || iter + 1 == MAX_ITERATIONS {
            break;
        }

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(&data[i * dim..(i + 1) * dim]) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            for (c, s) in centroids[j * dim..(j + 1) * dim].iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                *c = s / counts[j] as f64;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| !taken[i])
                .map(|i| {
                    let l = labels[i];
                    (i, sq_dist(&data[i * dim..(i + 1) * dim], &centroids[l * dim..(l + 1) * dim]))
                })
                .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                .0;
            taken[far] = true;
            centroids[j * dim..(j + 1) * dim].copy_from_slice(&data[far * dim..(far + 1) * dim]);
        }
    }
    Ok(KMeansFit {
        codebook: Codebook::new(k, dim, centroids)?,
        objective_history: history,
    })
}

/// Clusters 128-d descriptors into a `K x 128` codebook.
pub fn kmeans_fit(descriptors: &[SiftDescriptor], k: usize, rng: &mut Rng) -> Result<KMeansFit> {
    if descriptors.len() < k {
        return Err(Error::invalid(format!(
            "{} descriptors are not enough for K = {k}",
            descriptors.len()
        )));
    }
    let data: Vec<f64> = descriptors.iter().flat_map(|d| d.0).collect();
    kmeans_fit_rows(&data, DESCRIPTOR_LEN, k, rng)
}

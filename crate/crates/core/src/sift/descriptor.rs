use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::gradient::{angle, GradientField};
use super::{Gray, SiftDescriptor, DESCRIPTOR_LEN};

/// Side of one Dense SIFT region (and the default descriptor window).
pub const REGION_SIZE: usize = 12;
/// Regions per side of the dense grid.
pub const DENSE_GRID: usize = 4;
/// Length of the concatenated Dense SIFT vector.
pub const DENSE_LEN: usize = DENSE_GRID * DENSE_GRID * DESCRIPTOR_LEN;

const CELLS: usize = 4;
const ORI_BINS: usize = 8;
/// Samples per window side; one per pixel for a 12-pixel window.
const SAMPLES: usize = 12;
const CLAMP: f64 = 0.2;

fn normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-12 {
        v.fill(0.0);
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

/// Core descriptor over a precomputed gradient field. `(cx, cy)` is the
/// window centre, `window` its side in pixels, `theta` the reference
/// orientation.
pub(crate) fn describe(field: &GradientField, cx: f64, cy: f64, window: f64, theta: f64) -> SiftDescriptor {
    let mut hist = [0.0f64; DESCRIPTOR_LEN];
    let (sin_t, cos_t) = theta.sin_cos();
    let spacing = window / SAMPLES as f64;
    let cell = window / CELLS as f64;
    let sigma = window / 2.0;
    for j in 0..SAMPLES {
        let v = (j as f64 + 0.5) * spacing - window / 2.0;
        for i in 0..SAMPLES {
            let u = (i as f64 + 0.5) * spacing - window / 2.0;
            let px = cx + cos_t * u - sin_t * v;
            let py = cy + sin_t * u + cos_t * v;
            let (gx, gy) = field.sample(px, py);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let weight = mag * (-(u * u + v * v) / (2.0 * sigma * sigma)).exp();
            let rel = (angle(gx, gy) - theta).rem_euclid(TAU);
            let ob = rel * ORI_BINS as f64 / TAU;
            let cu = (u + window / 2.0) / cell - 0.5;
            let cv = (v + window / 2.0) / cell - 0.5;
            let (c0, r0, o0) = (cu.floor(), cv.floor(), ob.floor());
            let (fc, fr, fo) = (cu - c0, cv - r0, ob - o0);
            for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
                let row = r0 as isize + dr;
                if !(0..CELLS as isize).contains(&row) || wr == 0.0 {
                    continue;
                }
                for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                    let col = c0 as isize + dc;
                    if !(0..CELLS as isize).contains(&col) || wc == 0.0 {
                        continue;
                    }
                    for (dob, wo) in [(0, 1.0 - fo), (1, fo)] {
                        if wo == 0.0 {
                            continue;
                        }
                        let bin = (o0 as usize + dob) % ORI_BINS;
                        let idx = (row as usize * CELLS + col as usize) * ORI_BINS + bin;
                        hist[idx] += weight * wr * wc * wo;
                    }
                }
            }
        }
    }
    if normalize(&mut hist) {
        hist.iter_mut().for_each(|x| *x = x.min(CLAMP));
        normalize(&mut hist);
    }
    SiftDescriptor(hist)
}

/// 128-d descriptor of a square window centred at `center = (x, y)`.
///
/// Gradients are taken relative to `orientation`, binned trilinearly into
/// 4x4 cells x 8 orientations with a Gaussian spatial weight of sigma =
/// half the window, then L2-normalized, clamped at 0.2 and renormalized.
/// Sample positions outside the image are clamped to the border.
pub fn sift_descriptor<T: Real>(
    image: &Tensor<T>,
    center: (f64, f64),
    window: f64,
    orientation: f64,
) -> Result<SiftDescriptor> {
    if window.is_nan() || window <= 0.0 {
        return Err(Error::invalid(format!("descriptor window {window} must be positive")));
    }
    let gray = Gray::from_tensor(image)?;
    let field = GradientField::compute(&gray)?;
    Ok(describe(&field, center.0, center.1, window, orientation))
}

/// Upright descriptors of the 4x4 grid of 12x12 regions of a 48x48 image,
/// concatenated in row-major region order (2048 values).
pub fn dense_sift<T: Real>(image: &Tensor<T>) -> Result<Tensor<f64>> {
    let side = DENSE_GRID * REGION_SIZE;
    let gray = Gray::from_tensor(image)?;
    if gray.w != side || gray.h != side {
        return Err(Error::shape(format!(
            "dense SIFT expects a {side}x{side} image, got {}x{}",
            gray.h, gray.w
        )));
    }
    let field = GradientField::compute(&gray)?;
    let half = REGION_SIZE as f64 / 2.0 - 0.5;
    let mut out = Vec::with_capacity(DENSE_LEN);
    for r in 0..DENSE_GRID {
        for c in 0..DENSE_GRID {
            let cx = (c * REGION_SIZE) as f64 + half;
            let cy = (r * REGION_SIZE) as f64 + half;
            out.extend_from_slice(&describe(&field, cx, cy, REGION_SIZE as f64, 0.0).0);
        }
    }
    Tensor::new(&[DENSE_LEN], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn step_edge(size: usize, at: usize) -> Tensor<f64> {
        Tensor::from_fn(&[size, size], |i| if i % size >= at { 1.0 } else { 0.0 })
    }

    fn assert_contract(d: &SiftDescriptor) {
        assert_eq!(d.0.len(), 128);
        assert!(d.0.iter().all(|&v| v >= 0.0));
        let n = d.norm();
        assert!(n == 0.0 || (n - 1.0).abs() <= 1e-6, "norm {n}");
    }

    #[test]
    fn flat_window_is_zero() {
        let img = Tensor::<f64>::full(&[12, 12], 0.7);
        let d = sift_descriptor(&img, (5.5, 5.5), 12.0, 0.0).unwrap();
        assert!(d.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_energy_in_horizontal_bins() {
        let img = step_edge(12, 6);
        let d = sift_descriptor(&img, (5.5, 5.5), 12.0, 0.0).unwrap();
        // Brute-force: every pixel gradient of this edge is (+dx, 0) or zero,
        // so all energy belongs to orientation bins 0 (0 rad) and 4 (pi).
        let field = GradientField::compute(&Gray::from_tensor(&img).unwrap()).unwrap();
        assert!(field.dy.iter().all(|&v| v == 0.0) && field.dx.iter().all(|&v| v >= 0.0));
        let total: f64 = d.0.iter().map(|v| v * v).sum();
        let horiz: f64 = d
            .0
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 8 == 0 || i % 8 == 4)
            .map(|(_, v)| v * v)
            .sum();
        assert!(total > 0.0);
        assert!(horiz / total >= 0.9, "fraction {}", horiz / total);
        assert_contract(&d);
    }

    #[test]
    fn dense_length_and_flat_image() {
        let flat = Tensor::<f32>::full(&[48, 48], 0.25);
        let v = dense_sift(&flat).unwrap();
        assert_eq!(v.len(), 2048);
        assert!(v.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dense_rejects_wrong_size() {
        assert!(matches!(dense_sift(&Tensor::<f32>::zeros(&[47, 48])), Err(Error::Shape(_))));
    }

    #[test]
    fn translation_by_one_region_shifts_block() {
        // Pattern confined to the interior of region (1, 1); shifting it 12 px
        // right must reproduce its block at region (1, 2).
        let mut rng = Rng::new(21);
        let pattern: Vec<f64> = (0..64).map(|_| rng.uniform()).collect();
        let make = |ox: usize| {
            let mut t = Tensor::<f64>::zeros(&[48, 48]);
            for y in 0..8 {
                for x in 0..8 {
                    let o = t.offset(&[14 + y, 14 + ox + x]);
                    t.data_mut()[o] = pattern[y * 8 + x];
                }
            }
            t
        };
        let a = dense_sift(&make(0)).unwrap();
        let b = dense_sift(&make(12)).unwrap();
        let block = |v: &Tensor<f64>, r: usize, c: usize| v.data()[(r * 4 + c) * 128..(r * 4 + c + 1) * 128].to_vec();
        let src = block(&a, 1, 1);
        let dst = block(&b, 1, 2);
        assert!(src.iter().any(|&v| v > 0.0));
        for (x, y) in src.iter().zip(&dst) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(block(&b, 1, 1).iter().all(|&v| v == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn descriptor_contract(seed in 0u64..10_000, theta in 0.0f64..TAU) {
            let mut rng = Rng::new(seed);
            let img = Tensor::<f64>::from_fn(&[24, 24], |_| rng.uniform());
            let d = sift_descriptor(&img, (11.5, 11.5), 12.0, theta).unwrap();
            prop_assert!(d.0.iter().all(|&v| v >= 0.0));
            let n = d.norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() <= 1e-6);
        }

        #[test]
        fn photometric_invariance(seed in 0u64..10_000, shift in -3.0f64..3.0, gain in 0.1f64..10.0) {
            let mut rng = Rng::new(seed);
            let img = Tensor::<f64>::from_fn(&[48, 48], |_| rng.uniform());
            let base = dense_sift(&img).unwrap();
            let shifted = dense_sift(&img.map(|v| v + shift)).unwrap();
            let scaled = dense_sift(&img.map(|v| v * gain)).unwrap();
            for ((a, b), c) in base.data().iter().zip(shifted.data()).zip(scaled.data()) {
                prop_assert!((a - b).abs() <= 1e-6);
                prop_assert!((a - c).abs() <= 1e-6);
            }
        }
    }
}

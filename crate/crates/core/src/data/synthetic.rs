//! Labelled stand-in images in the dataset's format, for smoke tests and
//! demos when the real data is unavailable. Each class is an oriented
//! grating with its own angle and frequency under a soft face-sized blob,
//! with random phase, contrast and pixel noise. Intensities sit on the
//! 1/255 grid so a CSV round trip is lossless.

use std::f64::consts::PI;

use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{LabeledSample, Split, IMAGE_SIZE};

pub fn synthetic_image(label: usize, num_classes: usize, rng: &mut Rng) -> Tensor<f32> {
    let theta = PI * label as f64 / num_classes as f64;
    let freq = 2.0 * PI * (3.0 + (label % 3) as f64) / IMAGE_SIZE as f64;
    let phase = rng.uniform_range(0.0, 2.0 * PI);
    let contrast = rng.uniform_range(0.25, 0.4);
    let c = (IMAGE_SIZE as f64 - 1.0) / 2.0;
    let (s, co) = theta.sin_cos();
    let mut noise = Vec::with_capacity(IMAGE_SIZE * IMAGE_SIZE);
    for _ in 0..IMAGE_SIZE * IMAGE_SIZE {
        noise.push(0.05 * rng.normal());
    }
    Tensor::from_fn(&[IMAGE_SIZE, IMAGE_SIZE], |i| {
        let (x, y) = ((i % IMAGE_SIZE) as f64 - c, (i / IMAGE_SIZE) as f64 - c);
        let blob = (-(x * x + y * y) / (2.0 * 14.0 * 14.0)).exp();
        let wave = (freq * (co * x + s * y) + phase).sin();
        let v = 0.5 + contrast * blob * wave + noise[i];
        ((v.clamp(0.0, 1.0) * 255.0).round() / 255.0) as f32
    })
}

/// `n` samples with labels cycling through `0..num_classes`.
pub fn synthetic_samples(n: usize, num_classes: usize, split: Split, rng: &mut Rng) -> Vec<LabeledSample> {
    (0..n)
        .map(|i| {
            let label = i % num_classes;
            LabeledSample {
                image: synthetic_image(label, num_classes, rng),
                label,
                split,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_cycle_and_values_quantized() {
        let s = synthetic_samples(9, 7, Split::Train, &mut Rng::new(0));
        assert_eq!(s.iter().map(|x| x.label).collect::<Vec<_>>(), [0, 1, 2, 3, 4, 5, 6, 0, 1]);
        for x in &s {
            assert_eq!(x.image.shape(), &[48, 48]);
            for &v in x.image.data() {
                assert!((0.0..=1.0).contains(&v));
                assert!(((v * 255.0).round() - v * 255.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = synthetic_samples(5, 6, Split::Train, &mut Rng::new(3));
        let b = synthetic_samples(5, 6, Split::Train, &mut Rng::new(3));
        assert_eq!(a, b);
    }
}

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// He initialization: zero-mean normal samples with variance `2 / fan_in`.
pub fn he_init<T: Real>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Result<Tensor<T>> {
    if fan_in == 0 {
        return Err(Error::invalid("he_init: fan_in must be positive"));
    }
    if shape.is_empty() {
        return Err(Error::invalid("he_init: shape must be nonempty"));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    Ok(Tensor::from_fn(shape, |_| T::from_f64_lossy(std * rng.normal())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_match_closed_form() {
        let mut rng = Rng::new(11);
        let t: Tensor<f64> = he_init(&[3, 3, 1, 64 * 20], 9, &mut rng).unwrap();
        let n = t.len() as f64;
        assert!(n >= 1e4);
        let mean = t.sum() / n;
        let var = t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() <= 0.02, "mean {mean}");
        let target = 2.0 / 9.0;
        assert!((var - target).abs() <= 0.1 * target, "var {var}");
    }

    #[test]
    fn fan_in_two_gives_unit_variance() {
        let mut rng = Rng::new(5);
        let t: Tensor<f64> = he_init(&[20000], 2, &mut rng).unwrap();
        let var = t.data().iter().map(|x| x * x).sum::<f64>() / t.len() as f64;
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn deterministic_under_seed() {
        let a: Tensor<f32> = he_init(&[4, 4], 4, &mut Rng::new(1)).unwrap();
        let b: Tensor<f32> = he_init(&[4, 4], 4, &mut Rng::new(1)).unwrap();
        let bits = |t: &Tensor<f32>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn zero_fan_in_rejected() {
        assert!(he_init::<f32>(&[2], 0, &mut Rng::new(0)).is_err());
    }
}

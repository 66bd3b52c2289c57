use crate::tensor::{Real, Tensor};

const STD_FLOOR: f64 = 1e-6;

/// Per-image standardization `(x - mean) / max(std, 1e-6)` using the
/// population standard deviation. Constant images map to zeros.
pub fn normalize_image<T: Real>(image: &Tensor<T>) -> Tensor<T> {
    let n = image.len().max(1) as f64;
    let vals: Vec<f64> = image.data().iter().map(|v| v.to_f64().unwrap_or(0.0)).collect();
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(STD_FLOOR);
    let data = vals.iter().map(|v| T::from_f64_lossy((v - mean) / std)).collect();
    Tensor::new(image.shape(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn moments(t: &Tensor<f64>) -> (f64, f64) {
        let n = t.len() as f64;
        let m = t.sum() / n;
        let v = t.data().iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        (m, v.sqrt())
    }

    #[test]
    fn constant_image_maps_to_zeros() {
        let t = normalize_image(&Tensor::<f32>::full(&[48, 48], 0.3));
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_level_image() {
        let t = Tensor::<f64>::from_fn(&[48, 48], |i| if i < 1152 { 0.0 } else { 1.0 });
        let n = normalize_image(&t);
        assert!(n.data()[..1152].iter().all(|&v| v == -1.0));
        assert!(n.data()[1152..].iter().all(|&v| v == 1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn standardized_and_affine_invariant(seed in 0u64..1000, a in 0.01f64..50.0, b in -10.0f64..10.0) {
            let mut rng = Rng::new(seed);
            let x = Tensor::<f64>::from_fn(&[48, 48], |_| rng.uniform());
            let nx = normalize_image(&x);
            let (m, s) = moments(&nx);
            prop_assert!(m.abs() <= 1e-6);
            prop_assert!((s - 1.0).abs() <= 1e-6);
            let ny = normalize_image(&x.map(|v| a * v + b));
            for (p, q) in nx.data().iter().zip(ny.data()) {
                prop_assert!((p - q).abs() <= 1e-6);
            }
            let nn = normalize_image(&nx);
            for (p, q) in nx.data().iter().zip(nn.data()) {
                prop_assert!((p - q).abs() <= 1e-6);
            }
        }
    }
}

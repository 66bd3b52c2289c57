use crate::error::{Error, Result};
use crate::tensor::{real, Real, Tensor};

const PROB_FLOOR: f64 = 1e-12;

fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Max-shifted exponential normalization of a logit vector.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let mut out = logits.clone();
    softmax_in_place(out.data_mut());
    out
}

/// Row-wise softmax of a `B x C` logit matrix.
pub fn softmax_rows<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let c = match *logits.shape() {
        [_, c] if c > 0 => c,
        ref s => return Err(Error::shape(format!("softmax_rows: expected B x C, got {s:?}"))),
    };
    let mut out = logits.clone();
    out.data_mut().chunks_mut(c).for_each(softmax_in_place);
    Ok(out)
}

/// `-ln p[label]` (with `p` floored at 1e-12) and the gradient with respect
/// to the logits that produced `probs` through softmax: `probs - onehot`.
pub fn cross_entropy<T: Real>(probs: &Tensor<T>, label: usize) -> Result<(T, Tensor<T>)> {
    let c = probs.len();
    if label >= c {
        return Err(Error::invalid(format!("label {label} out of range for {c} classes")));
    }
    let p = probs.data()[label].max(real(PROB_FLOOR));
    let loss = -p.ln();
    let mut grad = probs.clone();
    grad.data_mut()[label] -= T::one();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_on_zero_logits() {
        let p = softmax(&Tensor::<f64>::zeros(&[7]));
        for &v in p.data() {
            assert!((v - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_class_closed_form() {
        let p = softmax(&Tensor::<f64>::new(&[2], vec![2f64.ln(), 0.0]).unwrap());
        assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn shift_invariance() {
        let z = Tensor::<f64>::new(&[4], vec![0.3, -1.2, 2.0, 0.0]).unwrap();
        let a = softmax(&z);
        let b = softmax(&z.map(|v| v + 123.0));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn onehot_gives_zero_loss() {
        let p = Tensor::<f64>::new(&[3], vec![0.0, 1.0, 0.0]).unwrap();
        let (loss, _) = cross_entropy(&p, 1).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn uniform_loss_is_ln7() {
        let p = Tensor::<f64>::full(&[7], 1.0 / 7.0);
        let (loss, _) = cross_entropy(&p, 4).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-12);
        assert!((loss - 1.94591).abs() < 1e-5);
    }

    #[test]
    fn saturated_probability_is_floored() {
        let p = Tensor::<f64>::new(&[2], vec![1.0, 0.0]).unwrap();
        let (loss, _) = cross_entropy(&p, 1).unwrap();
        assert!((loss - (1e12f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn label_out_of_range() {
        let p = Tensor::<f64>::full(&[3], 1.0 / 3.0);
        assert!(matches!(cross_entropy(&p, 3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let z = Tensor::<f64>::new(&[5], vec![0.1, -0.7, 1.3, 0.0, 0.42]).unwrap();
        let label = 2;
        let (_, g) = cross_entropy(&softmax(&z), label).unwrap();
        let h = 1e-5;
        for i in 0..5 {
            let mut zp = z.clone();
            zp.data_mut()[i] += h;
            let mut zm = z.clone();
            zm.data_mut()[i] -= h;
            let lp = cross_entropy(&softmax(&zp), label).unwrap().0;
            let lm = cross_entropy(&softmax(&zm), label).unwrap().0;
            let num = (lp - lm) / (2.0 * h);
            let rel = (num - g.data()[i]).abs() / num.abs().max(g.data()[i].abs());
            assert!(rel <= 1e-6, "component {i}: rel {rel}");
        }
    }
}

use num_traits::Num;

use crate::error::{Error, Result};

/// Elementwise mean of `n >= 1` class distributions: the sum of the models'
/// probabilities divided by the number of models.
pub fn aggregate<T: Num + Copy, P: AsRef<[T]>>(probs: &[P]) -> Result<Vec<T>> {
    let first = probs.first().ok_or_else(|| Error::invalid("aggregate needs at least one distribution"))?;
    let c = first.as_ref().len();
    let mut sum = vec![T::zero(); c];
    let mut n = T::zero();
    for p in probs {
        let p = p.as_ref();
        if p.len() != c {
            return Err(Error::shape(format!("distribution lengths differ: {} vs {c}", p.len())));
        }
        sum.iter_mut().zip(p).for_each(|(s, &v)| *s = *s + v);
        n = n + T::one();
    }
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Index of the largest probability; the lowest index wins ties.
pub fn predict_label<T: PartialOrd>(prob: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in prob.iter().enumerate().skip(1) {
        if *v > prob[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Ratio<i64> {
        Ratio::new(n, d)
    }

    #[test]
    fn rational_mean_is_exact() {
        let out = aggregate(&[[q(3, 5), q(2, 5)], [q(1, 5), q(4, 5)], [q(2, 5), q(3, 5)]]).unwrap();
        assert_eq!(out, vec![q(2, 5), q(3, 5)]);
    }

    #[test]
    fn float_example() {
        let out: Vec<f64> = aggregate(&[[0.6, 0.4], [0.2, 0.8], [0.4, 0.6]]).unwrap();
        assert!((out[0] - 0.4).abs() < 1e-15 && (out[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn identical_inputs_are_returned() {
        let p = [q(1, 7), q(2, 7), q(4, 7)];
        assert_eq!(aggregate(&[p, p, p]).unwrap(), p.to_vec());
    }

    #[test]
    fn errors() {
        assert!(matches!(aggregate::<f64, Vec<f64>>(&[]), Err(Error::InvalidArgument(_))));
        assert!(matches!(aggregate(&[vec![0.5, 0.5], vec![1.0]]), Err(Error::Shape(_))));
    }

    #[test]
    fn argmax_and_ties() {
        assert_eq!(predict_label(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(predict_label(&[1.0 / 7.0; 7]), 0);
        assert_eq!(predict_label(&[0.2, 0.4, 0.4]), 1);
    }

    fn distribution(raw: Vec<f64>) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    }

    proptest! {
        #[test]
        fn mean_of_distributions_is_distribution(
            raw in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 7), 1..6)
        ) {
            let ps: Vec<Vec<f64>> = raw.into_iter().map(distribution).collect();
            let out = aggregate(&ps).unwrap();
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(out.iter().all(|&v| v >= 0.0));
            let mut rev = ps.clone();
            rev.reverse();
            let back = aggregate(&rev).unwrap();
            for (a, b) in out.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }

        #[test]
        fn argmax_invariances(raw in proptest::collection::vec(0.01f64..1.0, 7)) {
            let p = distribution(raw);
            let k = predict_label(&p);
            prop_assert_eq!(predict_label(&aggregate(&[&p, &p, &p]).unwrap()), k);
            let logs: Vec<f64> = p.iter().map(|v| v.ln()).collect();
            prop_assert_eq!(predict_label(&logs), k);
            let cubed: Vec<f64> = p.iter().map(|v| 3.0 * v.powi(3) + 1.0).collect();
            prop_assert_eq!(predict_label(&cubed), k);
        }
    }
}

use crate::data::LabeledSample;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::{aggregate, predict_label, ModelGraph};

/// Inference batch size for evaluation.
const EVAL_BATCH: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub total: usize,
}

/// Inference-mode class distributions, one row per sample.
pub fn predict_probs<T: Real>(model: &mut ModelGraph<T>, samples: &[LabeledSample]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let images: Vec<Tensor<f32>> = chunk.iter().map(|s| s.image.clone()).collect();
        out.extend(model.predict_batch(&images)?);
    }
    Ok(out)
}

/// Scores per-model probability rows against `labels`, averaging the
/// models' distributions first when there is more than one.
pub fn evaluate_probs(per_model: &[Vec<Vec<f64>>], labels: &[usize], num_classes: usize) -> Result<Metrics> {
    if labels.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    if per_model.is_empty() {
        return Err(Error::invalid("no models to evaluate"));
    }
    if per_model.iter().any(|rows| rows.len() != labels.len()) {
        return Err(Error::shape("prediction and label counts differ"));
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let rows: Vec<&[f64]> = per_model.iter().map(|m| m[i].as_slice()).collect();
        if rows.iter().any(|r| r.len() != num_classes) {
            return Err(Error::shape(format!("expected {num_classes} class probabilities")));
        }
        if label >= num_classes {
            return Err(Error::invalid(format!("label {label} out of range for {num_classes} classes")));
        }
        let pred = predict_label(&aggregate(&rows)?);
        confusion[label][pred] += 1;
        correct += usize::from(pred == label);
    }
    Ok(Metrics {
        accuracy: correct as f64 / labels.len() as f64,
        confusion,
        total: labels.len(),
    })
}

/// Accuracy and confusion matrix of one model or of the average of several.
pub fn evaluate<T: Real>(models: &mut [ModelGraph<T>], samples: &[LabeledSample]) -> Result<Metrics> {
    let c = models.first().ok_or_else(|| Error::invalid("no models to evaluate"))?.num_classes();
    if let Some(m) = models.iter().find(|m| m.num_classes() != c) {
        return Err(Error::invalid(format!(
            "models disagree on class count ({c} vs {})",
            m.num_classes()
        )));
    }
    if samples.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let per_model = models
        .iter_mut()
        .map(|m| predict_probs(m, samples))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    evaluate_probs(&per_model, &labels, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::model::{build_model, Arch, ModelVariant};
    use crate::rng::Rng;

    fn onehot(c: usize, k: usize) -> Vec<f64> {
        (0..c).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn perfect_model_is_diagonal() {
        let labels = [0, 3, 3, 6, 1];
        let rows: Vec<Vec<f64>> = labels.iter().map(|&l| onehot(7, l)).collect();
        let m = evaluate_probs(&[rows], &labels, 7).unwrap();
        assert_eq!(m.accuracy, 1.0);
        for (i, row) in m.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(v, 0);
                }
            }
        }
        assert_eq!(m.confusion.iter().flatten().sum::<u64>(), 5);
    }

    #[test]
    fn aggregated_models_vote_by_mean() {
        let labels = [0, 1];
        let a = vec![vec![0.6, 0.4], vec![0.6, 0.4]];
        let b = vec![vec![0.1, 0.9], vec![0.1, 0.9]];
        let m = evaluate_probs(&[a.clone(), b], &labels, 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.confusion, vec![vec![0, 1], vec![0, 1]]);
        let m3 = evaluate_probs(&[a.clone(), a.clone(), a.clone()], &labels, 2).unwrap();
        assert_eq!(m3, evaluate_probs(&[a], &labels, 2).unwrap());
    }

    #[test]
    fn class_count_mismatch_is_rejected() {
        let mut rng = Rng::new(0);
        let a = build_model::<f64>(ModelVariant::CnnOnly, 7, Arch::shrunken(), &mut rng).unwrap();
        let b = build_model::<f64>(ModelVariant::CnnOnly, 6, Arch::shrunken(), &mut rng).unwrap();
        let samples = vec![LabeledSample {
            image: Tensor::zeros(&[8, 8]),
            label: 0,
            split: Split::Train,
        }];
        assert!(matches!(evaluate(&mut [a, b], &samples), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn identical_models_match_single() {
        let m = build_model::<f64>(ModelVariant::CnnOnly, 7, Arch::shrunken(), &mut Rng::new(1)).unwrap();
        let mut rng = Rng::new(2);
        let samples: Vec<LabeledSample> = (0..20)
            .map(|i| LabeledSample {
                image: Tensor::from_fn(&[8, 8], |_| rng.uniform() as f32),
                label: i % 7,
                split: Split::PrivateTest,
            })
            .collect();
        let one = evaluate(&mut [m.clone()], &samples).unwrap();
        let three = evaluate(&mut [m.clone(), m.clone(), m], &samples).unwrap();
        assert_eq!(one, three);
        assert_eq!(one.total, 20);
    }
}

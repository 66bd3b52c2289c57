use rayon::prelude::*;

use crate::data::{augment_one, DatasetSplits, LabeledSample, AUGMENT_COUNT};
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, AdamState, Mode};
use crate::rng::Rng;
use crate::sift::{Codebook, DESCRIPTOR_LEN};
use crate::tensor::Tensor;

use super::{evaluate, predict_label, FeatureNorm, ModelCheckpoint, ModelGraph, ModelVariant};

/// Where hybrid side features come from.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureSource {
    None,
    SiftBag(Codebook),
    DenseSift,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Train on each image plus its ten augmented variants.
    pub augment: bool,
    pub features: FeatureSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 128,
            lr: AdamConfig::default().lr,
            seed: 0,
            augment: true,
            features: FeatureSource::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean batch objective, penalty included.
    pub train_loss: f64,
    /// Accuracy of the training-mode predictions made during the epoch.
    pub train_acc: f64,
    /// Inference accuracy on the public test split, when it has samples.
    pub val_acc: Option<f64>,
}

// Stream ids under the run seed. Model initialization uses the unforked
// stream of the same seed.
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;
const AUGMENT_STREAM: u64 = 3;
const HEAD_STREAM: u64 = 4;

/// Epoch-at-a-time training loop. [`train`] runs it for `config.epochs`.
pub struct Trainer<'a> {
    model: ModelGraph<f32>,
    data: &'a DatasetSplits,
    config: TrainConfig,
    adam: Vec<AdamState<f32>>,
    /// `(sample index, variant)`; variant 0 is the untouched image.
    items: Vec<(usize, usize)>,
    shuffle_rng: Rng,
    dropout_rng: Rng,
    augment_seed: u64,
    history: Vec<EpochRecord>,
}

fn check_source(model: &mut ModelGraph<f32>, source: &FeatureSource) -> Result<()> {
    match (model.variant(), source) {
        (ModelVariant::CnnOnly, FeatureSource::None) => Ok(()),
        (ModelVariant::CnnDsift, FeatureSource::DenseSift | FeatureSource::None) => Ok(()),
        (ModelVariant::CnnSift, FeatureSource::SiftBag(cb)) => {
            if cb.dim() != DESCRIPTOR_LEN {
                return Err(Error::invalid(format!("codebook dimension {} is not {DESCRIPTOR_LEN}", cb.dim())));
            }
            // training sees exactly what a saved checkpoint will hold
            model.set_codebook(cb.quantized())
        }
        (ModelVariant::CnnSift, FeatureSource::None) if model.codebook().is_some() => Ok(()),
        (ModelVariant::CnnSift, FeatureSource::None) => {
            Err(Error::invalid("cnn_sift training needs a codebook"))
        }
        (v, s) => Err(Error::invalid(format!("feature source {s:?} does not fit {v}"))),
    }
}

impl<'a> Trainer<'a> {
    pub fn new(mut model: ModelGraph<f32>, data: &'a DatasetSplits, config: TrainConfig) -> Result<Self> {
        if config.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if config.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(config.lr > 0.0 && config.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", config.lr)));
        }
        if data.train.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let c = model.num_classes();
        if let Some(s) = data.all().find(|s| s.label >= c) {
            return Err(Error::invalid(format!("label {} out of range for {c} classes", s.label)));
        }
        check_source(&mut model, &config.features)?;
        if model.variant().is_hybrid() && model.side_norm().is_none() {
            let feats = data
                .train
                .par_iter()
                .map(|s| model.side_feature(&s.image).map(|f| f.expect("hybrid feature")))
                .collect::<Result<Vec<Tensor<f64>>>>()?;
            model.set_side_norm(Some(FeatureNorm::fit(&feats)?))?;
        }
        let adam = model.params().iter().map(|(_, p)| AdamState::new(p.value.shape())).collect();
        let variants = if config.augment { AUGMENT_COUNT + 1 } else { 1 };
        let items = (0..data.train.len())
            .flat_map(|i| (0..variants).map(move |v| (i, v)))
            .collect();
        let root = Rng::new(config.seed);
        Ok(Trainer {
            model,
            data,
            adam,
            items,
            shuffle_rng: root.fork(SHUFFLE_STREAM),
            dropout_rng: root.fork(DROPOUT_STREAM),
            augment_seed: root.fork(AUGMENT_STREAM).next_u64(),
            history: Vec::new(),
            config,
        })
    }

    pub fn model(&self) -> &ModelGraph<f32> {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut ModelGraph<f32> {
        &mut self.model
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn epochs_completed(&self) -> usize {
        self.history.len()
    }

    /// Training image for an item. Each sample's augmentation stream depends
    /// only on the run seed and the sample index, so the augmented set is
    /// the same in every epoch.
    fn item_image(&self, sample: &LabeledSample, index: usize, variant: usize) -> Result<Tensor<f32>> {
        if variant == 0 {
            return Ok(sample.image.clone());
        }
        let mut rng = Rng::new(self.augment_seed).fork(index as u64);
        augment_one(&sample.image, &mut rng, variant - 1)
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.history.len() + 1;
        self.shuffle_rng.shuffle(&mut self.items);
        let adam_cfg = AdamConfig {
            lr: self.config.lr,
            ..AdamConfig::default()
        };
        let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
        let items = std::mem::take(&mut self.items);
        for batch in items.chunks(self.config.batch_size) {
            let prepared = batch
                .par_iter()
                .map(|&(i, v)| {
                    let s = &self.data.train[i];
                    let img = self.item_image(s, i, v)?;
                    let side = self.model.side_feature(&img)?;
                    Ok((img, side))
                })
                .collect::<Result<Vec<_>>>();
            let prepared = match prepared {
                Ok(p) => p,
                Err(e) => {
                    self.items = items;
                    return Err(e);
                }
            };
            let (images, sides): (Vec<_>, Vec<_>) = prepared.into_iter().unzip();
            let labels: Vec<usize> = batch.iter().map(|&(i, _)| self.data.train[i].label).collect();
            let (x, side) = self.model.batch_inputs(&images, &sides)?;
            let (loss, probs) = self
                .model
                .loss_and_grad(x, side, &labels, &mut Mode::Train(&mut self.dropout_rng))?;
            if !loss.is_finite() {
                self.items = items;
                return Err(Error::Divergence { epoch });
            }
            for ((_, p), state) in self.model.params_mut().into_iter().zip(&mut self.adam) {
                adam_step(&mut p.value, &p.grad, state, &adam_cfg)?;
            }
            let c = self.model.num_classes();
            for (row, &label) in probs.data().chunks(c).zip(&labels) {
                correct += usize::from(predict_label(row) == label);
            }
            loss_sum += loss as f64 * batch.len() as f64;
            seen += batch.len();
        }
        self.items = items;
        let val_acc = if self.data.public_test.is_empty() {
            None
        } else {
            Some(evaluate(std::slice::from_mut(&mut self.model), &self.data.public_test)?.accuracy)
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_acc,
        };
        self.history.push(record.clone());
        Ok(record)
    }

    pub fn checkpoint(&self) -> ModelCheckpoint {
        self.model.to_checkpoint(self.history.len() as u64, self.config.seed)
    }

    pub fn into_parts(self) -> (ModelGraph<f32>, Vec<EpochRecord>) {
        (self.model, self.history)
    }
}

/// Runs `config.epochs` epochs of mini-batch Adam on the joint objective.
pub fn train(
    model: ModelGraph<f32>,
    data: &DatasetSplits,
    config: &TrainConfig,
) -> Result<(ModelCheckpoint, Vec<EpochRecord>)> {
    let mut t = Trainer::new(model, data, config.clone())?;
    for _ in 0..config.epochs {
        t.run_epoch()?;
    }
    let ckpt = t.checkpoint();
    Ok((ckpt, t.into_parts().1))
}

/// Source model with its classification layer replaced by a freshly
/// initialized `num_classes`-way layer; everything else is copied.
pub fn prepare_fine_tune(source: &ModelCheckpoint, num_classes: usize, seed: u64) -> Result<ModelGraph<f32>> {
    let mut model = ModelGraph::from_checkpoint(source)?;
    model.reset_head(num_classes, &mut Rng::new(seed).fork(HEAD_STREAM))?;
    Ok(model)
}

/// Continues training a pretrained checkpoint on six-class data. Side
/// features keep the source's codebook and standardization.
pub fn fine_tune(
    source: &ModelCheckpoint,
    data: &DatasetSplits,
    config: &TrainConfig,
) -> Result<(ModelCheckpoint, Vec<EpochRecord>)> {
    if config.epochs == 0 {
        return Err(Error::invalid("fine-tuning needs at least 1 epoch"));
    }
    let model = prepare_fine_tune(source, 6, config.seed)?;
    train(model, data, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::model::{build_model, Arch};

    fn tiny_data(n: usize, seed: u64) -> DatasetSplits {
        let mut rng = Rng::new(seed);
        let train = (0..n)
            .map(|i| LabeledSample {
                image: Tensor::from_fn(&[8, 8], |_| rng.uniform() as f32),
                label: i % 7,
                split: Split::Train,
            })
            .collect();
        DatasetSplits {
            train,
            ..Default::default()
        }
    }

    fn small(variant: ModelVariant, seed: u64) -> ModelGraph<f32> {
        build_model(variant, 7, Arch::shrunken(), &mut Rng::new(seed)).unwrap()
    }

    fn quick(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 4,
            lr: 1e-2,
            seed,
            augment: false,
            features: FeatureSource::None,
        }
    }

    #[test]
    fn rejects_zero_epochs_and_empty_data() {
        let d = tiny_data(4, 0);
        let cfg = TrainConfig { epochs: 0, ..quick(0) };
        assert!(matches!(train(small(ModelVariant::CnnOnly, 0), &d, &cfg), Err(Error::InvalidArgument(_))));
        let empty = DatasetSplits::default();
        assert!(matches!(train(small(ModelVariant::CnnOnly, 0), &empty, &quick(0)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn history_is_indexed_and_reproducible() {
        let d = tiny_data(10, 1);
        let (c1, h1) = train(small(ModelVariant::CnnOnly, 2), &d, &quick(3)).unwrap();
        let (c2, h2) = train(small(ModelVariant::CnnOnly, 2), &d, &quick(3)).unwrap();
        assert_eq!(h1.iter().map(|r| r.epoch).collect::<Vec<_>>(), [1, 2]);
        assert_eq!(h1, h2);
        assert_eq!(c1.to_bytes(), c2.to_bytes());
        assert_eq!(c1.epochs_completed, 2);
        let (c3, _) = train(small(ModelVariant::CnnOnly, 2), &d, &quick(4)).unwrap();
        assert_ne!(c1.to_bytes(), c3.to_bytes());
    }

    #[test]
    fn training_changes_parameters() {
        let d = tiny_data(8, 5);
        let m = small(ModelVariant::CnnOnly, 6);
        let before = m.to_checkpoint(0, 0);
        let (after, _) = train(m, &d, &quick(0)).unwrap();
        assert_ne!(before.tensor("head.weight"), after.tensor("head.weight"));
    }

    #[test]
    fn augmented_items_multiply_by_eleven() {
        let d = tiny_data(3, 7);
        let cfg = TrainConfig { augment: true, ..quick(0) };
        let t = Trainer::new(small(ModelVariant::CnnOnly, 0), &d, cfg).unwrap();
        assert_eq!(t.items.len(), 33);
    }

    #[test]
    fn source_must_match_variant() {
        let d = tiny_data(4, 8);
        let cfg = TrainConfig {
            features: FeatureSource::DenseSift,
            ..quick(0)
        };
        assert!(matches!(Trainer::new(small(ModelVariant::CnnOnly, 0), &d, cfg), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            Trainer::new(small(ModelVariant::CnnSift, 0), &d, quick(0)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn out_of_range_label_rejected() {
        let mut d = tiny_data(4, 9);
        d.train[0].label = 7;
        assert!(Trainer::new(small(ModelVariant::CnnOnly, 0), &d, quick(0)).is_err());
    }

    #[test]
    fn fine_tune_copies_all_but_head() {
        let source = small(ModelVariant::CnnOnly, 10).to_checkpoint(5, 10);
        let tuned = prepare_fine_tune(&source, 6, 11).unwrap();
        assert_eq!(tuned.num_classes(), 6);
        assert_eq!(tuned.param("head.weight").unwrap().value.shape(), &[16, 6]);
        for (name, p) in tuned.params() {
            if !name.starts_with("head.") {
                assert_eq!(Some(&p.value), source.tensor(&name), "{name}");
            }
        }
        let mut d = tiny_data(6, 12);
        d.train.iter_mut().for_each(|s| s.label %= 6);
        let (ckpt, h) = fine_tune(&source, &d, &quick(0)).unwrap();
        assert_eq!(ckpt.num_classes, 6);
        assert_eq!(h.len(), 2);
        assert!(matches!(
            fine_tune(&source, &d, &TrainConfig { epochs: 0, ..quick(0) }),
            Err(Error::InvalidArgument(_))
        ));
    }
}

//! The network: a convolutional trunk shared by all variants, an optional
//! side branch for SIFT-derived features, and a softmax classification layer
//! over their concatenation.

use rayon::prelude::*;

use crate::data::normalize_image;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, softmax_rows, Layer, LayerStack, Mode, Param};
use crate::rng::Rng;
use crate::sift::{bag_of_keypoints, dense_sift, keypoint_descriptors, Codebook, DENSE_LEN};
use crate::tensor::{real, Real, Tensor};

use super::{Arch, ModelVariant};

/// Coefficient of the squared-weight penalty on the side branch.
pub const SIDE_L2: f64 = 0.01;

const HEAD: &str = "head";
/// The classification layer starts as a He draw times this factor. Plain He
/// init there gives logits with RMS around 3 and confident random outputs.
pub const HEAD_INIT_SCALE: f64 = 0.01;
pub(crate) const SIDE_WEIGHT: &str = "side_fc.weight";

/// Per-dimension standardization of side features, fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNorm {
    /// Population statistics; dimensions with std below 1e-6 get std 1.
    /// Values are rounded to `f32` so a checkpoint reproduces them exactly.
    pub fn fit(features: &[Tensor<f64>]) -> Result<Self> {
        let first = features.first().ok_or_else(|| Error::invalid("no features to fit"))?;
        let d = first.len();
        let n = features.len() as f64;
        let mut mean = vec![0.0; d];
        for f in features {
            if f.len() != d {
                return Err(Error::shape(format!("feature length {} != {d}", f.len())));
            }
            mean.iter_mut().zip(f.data()).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for f in features {
            var.iter_mut()
                .zip(f.data().iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < 1e-6 {
                    1.0
                } else {
                    sd as f32 as f64
                }
            })
            .collect();
        let mean = mean.iter().map(|&m| m as f32 as f64).collect();
        Ok(FeatureNorm { mean, std })
    }

    pub fn apply(&self, feature: &[f64]) -> Vec<f64> {
        feature
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ModelGraph<T = f32> {
    pub(crate) variant: ModelVariant,
    pub(crate) num_classes: usize,
    pub(crate) arch: Arch,
    pub(crate) trunk: LayerStack<T>,
    pub(crate) side: Option<LayerStack<T>>,
    pub(crate) head: Layer<T>,
    pub(crate) side_norm: Option<FeatureNorm>,
    pub(crate) codebook: Option<Codebook>,
}

fn head<T: Real>(arch: &Arch, variant: ModelVariant, num_classes: usize, rng: &mut Rng) -> Result<Layer<T>> {
    let mut layer = Layer::dense(HEAD, arch.head_in(variant), num_classes, rng)?;
    if let Layer::Dense { weight, .. } = &mut layer {
        let k = real::<T>(HEAD_INIT_SCALE);
        weight.value.data_mut().iter_mut().for_each(|w| *w *= k);
    }
    Ok(layer)
}

fn trunk<T: Real>(arch: &Arch, rng: &mut Rng) -> Result<LayerStack<T>> {
    let mut layers = Vec::new();
    let mut cin = 1;
    for (block, &f) in arch.filters.iter().enumerate() {
        for j in 0..2 {
            let idx = block * 2 + j + 1;
            layers.push(Layer::conv(&format!("conv{idx}"), cin, f, idx > 1, rng)?);
            layers.push(Layer::leaky_relu());
            cin = f;
        }
        layers.push(Layer::max_pool());
        layers.push(Layer::dropout(arch.conv_dropout));
    }
    layers.push(Layer::flatten());
    layers.push(Layer::dense("fc", arch.flat_len(), arch.hidden, rng)?);
    layers.push(Layer::leaky_relu());
    layers.push(Layer::dropout(arch.dense_dropout));
    Ok(LayerStack::new(layers))
}

/// He-initialized model (the classification layer scaled by
/// [`HEAD_INIT_SCALE`]). Parameters are drawn in a fixed order (trunk, side
/// branch, head), so equal seeds give equal models.
pub fn build_model<T: Real>(variant: ModelVariant, num_classes: usize, arch: Arch, rng: &mut Rng) -> Result<ModelGraph<T>> {
    arch.validate()?;
    if !(6..=7).contains(&num_classes) {
        return Err(Error::invalid(format!("num_classes must be 6 or 7, got {num_classes}")));
    }
    // toy sizes feed synthetic side features, so only 48x48 pins the length
    if variant == ModelVariant::CnnDsift && arch.input_size == 48 && arch.side_in != DENSE_LEN {
        return Err(Error::invalid(format!("Dense SIFT features have {DENSE_LEN} values")));
    }
    let trunk = trunk(&arch, rng)?;
    let side = if variant.is_hybrid() {
        Some(LayerStack::new(vec![
            Layer::dense("side_fc", arch.side_in, arch.side_hidden, rng)?,
            Layer::leaky_relu(),
            Layer::dropout(arch.dense_dropout),
        ]))
    } else {
        None
    };
    let head = head(&arch, variant, num_classes, rng)?;
    Ok(ModelGraph {
        variant,
        num_classes,
        arch,
        trunk,
        side,
        head,
        side_norm: None,
        codebook: None,
    })
}

impl<T: Real> ModelGraph<T> {
    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn side_norm(&self) -> Option<&FeatureNorm> {
        self.side_norm.as_ref()
    }

    pub fn set_side_norm(&mut self, norm: Option<FeatureNorm>) -> Result<()> {
        if let Some(n) = &norm {
            if n.mean.len() != self.arch.side_in || n.std.len() != self.arch.side_in {
                return Err(Error::shape("feature statistics do not match the side input"));
            }
        }
        self.side_norm = norm;
        Ok(())
    }

    pub fn codebook(&self) -> Option<&Codebook> {
        self.codebook.as_ref()
    }

    pub fn set_codebook(&mut self, codebook: Codebook) -> Result<()> {
        if self.variant != ModelVariant::CnnSift {
            return Err(Error::invalid(format!("{} does not use a codebook", self.variant)));
        }
        if codebook.k() != self.arch.side_in {
            return Err(Error::shape(format!(
                "codebook K = {} but the side branch expects {}",
                codebook.k(),
                self.arch.side_in
            )));
        }
        self.codebook = Some(codebook);
        Ok(())
    }

    /// Named parameters in construction order.
    pub fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = self.trunk.params();
        if let Some(s) = &self.side {
            out.extend(s.params());
        }
        out.extend(self.head.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = self.trunk.params_mut();
        if let Some(s) = &mut self.side {
            out.extend(s.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params().into_iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    /// Replaces the classification layer with a freshly initialized one.
    pub fn reset_head(&mut self, num_classes: usize, rng: &mut Rng) -> Result<()> {
        if !(6..=7).contains(&num_classes) {
            return Err(Error::invalid(format!("num_classes must be 6 or 7, got {num_classes}")));
        }
        self.head = head(&self.arch, self.variant, num_classes, rng)?;
        self.num_classes = num_classes;
        Ok(())
    }

    /// Logits `B x C` for network-ready inputs: standardized images
    /// `B x S x S x 1` and, for hybrid variants, standardized side features
    /// `B x side_in`.
    pub fn forward_logits(&mut self, images: Tensor<T>, side: Option<Tensor<T>>, mode: &mut Mode<'_>) -> Result<Tensor<T>> {
        let s = self.arch.input_size;
        let batch = match *images.shape() {
            [b, h, w, 1] | [b, h, w] if h == s && w == s => b,
            ref sh => return Err(Error::shape(format!("expected B x {s} x {s} x 1 images, got {sh:?}"))),
        };
        let images = images.reshape(&[batch, s, s, 1])?;
        let h = self.trunk.forward(images, mode)?;
        let z = match (&mut self.side, side) {
            (None, None) => h,
            (Some(stack), Some(side)) => {
                if side.shape() != [batch, self.arch.side_in] {
                    return Err(Error::shape(format!(
                        "side feature {:?}, expected [{batch}, {}]",
                        side.shape(),
                        self.arch.side_in
                    )));
                }
                let g = stack.forward(side, mode)?;
                concat_rows(&h, &g)?
            }
            (None, Some(_)) => return Err(Error::invalid("cnn_only takes no side feature")),
            (Some(_), None) => return Err(Error::invalid(format!("{} needs a side feature", self.variant))),
        };
        self.head.forward(z, mode)
    }

    /// Backpropagates `dlogits` from the last training-mode forward pass,
    /// accumulating into every parameter gradient.
    pub fn backward(&mut self, dlogits: Tensor<T>) -> Result<()> {
        let dz = self.head.backward(dlogits)?;
        match &mut self.side {
            None => {
                self.trunk.backward(dz)?;
            }
            Some(stack) => {
                let (dh, dg) = split_rows(&dz, self.arch.hidden)?;
                self.trunk.backward(dh)?;
                stack.backward(dg)?;
            }
        }
        Ok(())
    }

    /// `SIDE_L2 * sum(w^2)` over the side branch weight; zero for cnn_only.
    pub fn l2_penalty(&self) -> T {
        match self.param(SIDE_WEIGHT) {
            Some(p) => real::<T>(SIDE_L2) * p.value.data().iter().map(|&w| w * w).sum::<T>(),
            None => T::zero(),
        }
    }

    fn add_l2_grad(&mut self) {
        let c = real::<T>(2.0 * SIDE_L2);
        if let Some((_, p)) = self.params_mut().into_iter().find(|(n, _)| n == SIDE_WEIGHT) {
            let Param { value, grad } = p;
            grad.data_mut().iter_mut().zip(value.data()).for_each(|(g, &w)| *g += c * w);
        }
    }

    /// Full objective for one batch: mean cross-entropy plus the side-branch
    /// penalty. Gradients are recomputed from zero. Returns the loss and the
    /// `B x C` probabilities.
    pub fn loss_and_grad(
        &mut self,
        images: Tensor<T>,
        side: Option<Tensor<T>>,
        labels: &[usize],
        mode: &mut Mode<'_>,
    ) -> Result<(T, Tensor<T>)> {
        self.zero_grad();
        let logits = self.forward_logits(images, side, mode)?;
        let batch = logits.shape()[0];
        if labels.len() != batch {
            return Err(Error::shape(format!("{} labels for a batch of {batch}", labels.len())));
        }
        let probs = softmax_rows(&logits)?;
        let c = self.num_classes;
        let inv_b = real::<T>(1.0 / batch as f64);
        let mut loss = T::zero();
        let mut dlogits = Vec::with_capacity(batch * c);
        for (r, &label) in labels.iter().enumerate() {
            let row = Tensor::new(&[c], probs.data()[r * c..(r + 1) * c].to_vec())?;
            let (l, g) = cross_entropy(&row, label)?;
            loss += l;
            dlogits.extend(g.data().iter().map(|&v| v * inv_b));
        }
        let loss = loss * inv_b + self.l2_penalty();
        self.backward(Tensor::new(&[batch, c], dlogits)?)?;
        self.add_l2_grad();
        Ok((loss, probs))
    }

    /// The raw side feature of a `[0, 1]` image: the bag-of-keypoints
    /// histogram or the Dense SIFT vector. `None` for cnn_only.
    pub fn side_feature(&self, image: &Tensor<f32>) -> Result<Option<Tensor<f64>>> {
        match self.variant {
            ModelVariant::CnnOnly => Ok(None),
            ModelVariant::CnnDsift => dense_sift(image).map(Some),
            ModelVariant::CnnSift => {
                let cb = self
                    .codebook
                    .as_ref()
                    .ok_or_else(|| Error::State("cnn_sift model has no codebook".into()))?;
                bag_of_keypoints(&keypoint_descriptors(image)?, cb).map(Some)
            }
        }
    }

    /// Standardizes a raw side feature with the stored statistics.
    pub fn prepare_side(&self, feature: &Tensor<f64>) -> Result<Vec<T>> {
        if feature.len() != self.arch.side_in {
            return Err(Error::shape(format!(
                "side feature has {} values, expected {}",
                feature.len(),
                self.arch.side_in
            )));
        }
        let v = match &self.side_norm {
            Some(n) => n.apply(feature.data()),
            None => feature.data().to_vec(),
        };
        Ok(v.into_iter().map(T::from_f64_lossy).collect())
    }

    /// Stacks raw images and side features into network inputs.
    pub(crate) fn batch_inputs(
        &self,
        images: &[Tensor<f32>],
        sides: &[Option<Tensor<f64>>],
    ) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
        let s = self.arch.input_size;
        let mut pixels = Vec::with_capacity(images.len() * s * s);
        for img in images {
            if img.shape() != [s, s] {
                return Err(Error::shape(format!("expected a {s}x{s} image, got {:?}", img.shape())));
            }
            pixels.extend(normalize_image(img).data().iter().map(|&v| T::from_f64_lossy(v as f64)));
        }
        let x = Tensor::new(&[images.len(), s, s, 1], pixels)?;
        let side = if self.variant.is_hybrid() {
            let mut v = Vec::with_capacity(images.len() * self.arch.side_in);
            for f in sides {
                let f = f.as_ref().ok_or_else(|| Error::invalid(format!("{} needs a side feature", self.variant)))?;
                v.extend(self.prepare_side(f)?);
            }
            Some(Tensor::new(&[images.len(), self.arch.side_in], v)?)
        } else {
            if sides.iter().any(Option::is_some) {
                return Err(Error::invalid("cnn_only takes no side feature"));
            }
            None
        };
        Ok((x, side))
    }

    /// Class distribution for one `[0, 1]` image and its raw side feature.
    pub fn forward_probs(&mut self, image: &Tensor<f32>, side_feature: Option<&Tensor<f64>>, mode: &mut Mode<'_>) -> Result<Tensor<T>> {
        let (x, side) = self.batch_inputs(std::slice::from_ref(image), &[side_feature.cloned()])?;
        let logits = self.forward_logits(x, side, mode)?;
        let c = self.num_classes;
        softmax_rows(&logits)?.reshape(&[c])
    }

    /// Inference-mode distributions for a list of `[0, 1]` images, with side
    /// features extracted in parallel. One row per image.
    pub fn predict_batch(&mut self, images: &[Tensor<f32>]) -> Result<Vec<Vec<f64>>> {
        let sides: Vec<Option<Tensor<f64>>> = images
            .par_iter()
            .map(|img| self.side_feature(img))
            .collect::<Result<_>>()?;
        let (x, side) = self.batch_inputs(images, &sides)?;
        let probs = softmax_rows(&self.forward_logits(x, side, &mut Mode::Inference)?)?;
        Ok(probs
            .data()
            .chunks(self.num_classes)
            .map(|r| r.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
            .collect())
    }
}

fn concat_rows<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ca, cb) = match (a.shape(), b.shape()) {
        ([n, ca], [m, cb]) if n == m => (*n, *ca, *cb),
        (sa, sb) => return Err(Error::shape(format!("cannot concatenate {sa:?} and {sb:?}"))),
    };
    let mut out = Vec::with_capacity(n * (ca + cb));
    for r in 0..n {
        out.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
        out.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
    }
    Tensor::new(&[n, ca + cb], out)
}

fn split_rows<T: Real>(x: &Tensor<T>, left: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c) = match *x.shape() {
        [n, c] if c >= left => (n, c),
        ref s => return Err(Error::shape(format!("cannot split {s:?} at column {left}"))),
    };
    let mut a = Vec::with_capacity(n * left);
    let mut b = Vec::with_capacity(n * (c - left));
    for row in x.data().chunks(c) {
        a.extend_from_slice(&row[..left]);
        b.extend_from_slice(&row[left..]);
    }
    Ok((Tensor::new(&[n, left], a)?, Tensor::new(&[n, c - left], b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(variant: ModelVariant, seed: u64) -> ModelGraph<f64> {
        build_model(variant, 7, Arch::shrunken(), &mut Rng::new(seed)).unwrap()
    }

    fn inputs(batch: usize, rng: &mut Rng) -> (Tensor<f64>, Tensor<f64>) {
        (
            Tensor::from_fn(&[batch, 8, 8, 1], |_| rng.normal()),
            Tensor::from_fn(&[batch, 8], |_| rng.normal()),
        )
    }

    #[test]
    fn standard_shapes() {
        let m: ModelGraph<f32> = build_model(ModelVariant::CnnOnly, 7, Arch::default(), &mut Rng::new(0)).unwrap();
        assert_eq!(m.param("head.weight").unwrap().value.shape(), &[2048, 7]);
        assert_eq!(m.param("fc.weight").unwrap().value.shape(), &[9216, 2048]);
        assert_eq!(m.param("conv1.weight").unwrap().value.shape(), &[3, 3, 1, 64]);
        assert_eq!(m.param("conv6.weight").unwrap().value.shape(), &[3, 3, 256, 256]);
        assert!(m.param("side_fc.weight").is_none());
        let d: ModelGraph<f32> = build_model(ModelVariant::CnnDsift, 6, Arch::default(), &mut Rng::new(0)).unwrap();
        assert_eq!(d.param("side_fc.weight").unwrap().value.shape(), &[2048, 4096]);
        assert_eq!(d.param("head.weight").unwrap().value.shape(), &[6144, 6]);
        // the trunk is identical across variants for one seed
        assert_eq!(m.param("fc.weight").unwrap().value, d.param("fc.weight").unwrap().value);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = small(ModelVariant::CnnSift, 3);
        let b = small(ModelVariant::CnnSift, 3);
        for ((na, pa), (nb, pb)) in a.params().into_iter().zip(b.params()) {
            assert_eq!(na, nb);
            assert_eq!(pa.value, pb.value);
        }
        assert_eq!(a.param_count(), b.param_count());
    }

    #[test]
    fn rejects_bad_class_count() {
        assert!(build_model::<f64>(ModelVariant::CnnOnly, 5, Arch::shrunken(), &mut Rng::new(0)).is_err());
    }

    #[test]
    fn side_feature_presence_is_checked() {
        let mut rng = Rng::new(1);
        let (x, s) = inputs(2, &mut rng);
        let mut plain = small(ModelVariant::CnnOnly, 0);
        let err = plain.forward_logits(x.clone(), Some(s.clone()), &mut Mode::Inference);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let mut hybrid = small(ModelVariant::CnnDsift, 0);
        let err = hybrid.forward_logits(x, None, &mut Mode::Inference);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn inference_is_repeatable_and_normalized() {
        let mut m = small(ModelVariant::CnnDsift, 2);
        let mut rng = Rng::new(4);
        let (x, s) = inputs(3, &mut rng);
        let a = softmax_rows(&m.forward_logits(x.clone(), Some(s.clone()), &mut Mode::Inference).unwrap()).unwrap();
        let b = softmax_rows(&m.forward_logits(x, Some(s), &mut Mode::Inference).unwrap()).unwrap();
        assert_eq!(a, b);
        for row in a.data().chunks(7) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn zeroed_side_branch_ignores_feature() {
        let mut m = small(ModelVariant::CnnSift, 5);
        for (name, p) in m.params_mut() {
            if name.starts_with("side_fc.") {
                p.value.fill(0.0);
            }
        }
        let mut rng = Rng::new(6);
        let (x, s1) = inputs(2, &mut rng);
        let s2 = Tensor::from_fn(&[2, 8], |_| 10.0 * rng.normal());
        let a = m.forward_logits(x.clone(), Some(s1), &mut Mode::Inference).unwrap();
        let b = m.forward_logits(x, Some(s2), &mut Mode::Inference).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn l2_term_counts_side_weights_only() {
        let m = small(ModelVariant::CnnDsift, 7);
        let w = &m.param("side_fc.weight").unwrap().value;
        let expected = 0.01 * w.data().iter().map(|v| v * v).sum::<f64>();
        assert!((m.l2_penalty() - expected).abs() < 1e-15);
        assert_eq!(small(ModelVariant::CnnOnly, 7).l2_penalty(), 0.0);
    }

    #[test]
    fn concat_then_split_round_trips() {
        let a = Tensor::<f64>::from_fn(&[3, 2], |i| i as f64);
        let b = Tensor::<f64>::from_fn(&[3, 4], |i| -(i as f64));
        let c = concat_rows(&a, &b).unwrap();
        assert_eq!(c.shape(), &[3, 6]);
        assert_eq!(&c.data()[..6], &[0.0, 1.0, -0.0, -1.0, -2.0, -3.0]);
        let (x, y) = split_rows(&c, 2).unwrap();
        assert_eq!((x, y), (a, b));
    }

    #[test]
    fn feature_norm_standardizes() {
        let fs: Vec<Tensor<f64>> = (0..4).map(|i| Tensor::new(&[2], vec![i as f64, 5.0]).unwrap()).collect();
        let n = FeatureNorm::fit(&fs).unwrap();
        assert_eq!(n.mean, vec![1.5, 5.0]);
        assert_eq!(n.std[1], 1.0);
        let out: Vec<Vec<f64>> = fs.iter().map(|f| n.apply(f.data())).collect();
        let m: f64 = out.iter().map(|v| v[0]).sum::<f64>() / 4.0;
        let var: f64 = out.iter().map(|v| v[0] * v[0]).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
        assert!(out.iter().all(|v| v[1] == 0.0));
    }
}

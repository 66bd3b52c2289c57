use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// Inverted dropout. Returns the output and the per-element scale mask
/// (`0` for dropped elements, `1 / (1 - rate)` for survivors). Inference mode
/// is the identity with an all-ones mask and draws nothing from `rng`.
pub fn dropout_forward<T: Real>(
    input: &Tensor<T>,
    rate: f64,
    rng: &mut Rng,
    training: bool,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} must be in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), Tensor::full(input.shape(), T::one())));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mask = Tensor::from_fn(input.shape(), |_| if rng.bernoulli(rate) { T::zero() } else { keep });
    let out = dropout_backward(&mask, input)?;
    Ok((out, mask))
}

pub fn dropout_backward<T: Real>(mask: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if mask.len() != grad_out.len() {
        return Err(Error::shape("dropout: mask and tensor differ in size"));
    }
    let data = mask.data().iter().zip(grad_out.data()).map(|(&m, &g)| m * g).collect();
    Tensor::new(grad_out.shape(), data)
}

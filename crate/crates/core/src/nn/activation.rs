use crate::tensor::{real, Real, Tensor};

/// Negative-side slope: `f(x) = max(x, x / 20)`.
pub const LEAKY_SLOPE: f64 = 1.0 / 20.0;

pub fn leaky_relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let slope: T = real(LEAKY_SLOPE);
    input.map(|x| x.max(x * slope))
}

/// Input gradient; the derivative at exactly 0 is taken as 1.
pub fn leaky_relu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let slope: T = real(LEAKY_SLOPE);
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x >= T::zero() { g } else { g * slope })
        .collect();
    Tensor::new(input.shape(), data).expect("same shape")
}

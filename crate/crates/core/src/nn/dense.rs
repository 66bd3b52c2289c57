use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor};

pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn rows<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (n_in, n_out) = match *weights.shape() {
        [i, o] => (i, o),
        ref s => return Err(Error::shape(format!("dense: weights must be 2-d, got {s:?}"))),
    };
    if bias.shape() != [n_out] {
        return Err(Error::shape(format!("dense: bias {:?} vs {n_out} outputs", bias.shape())));
    }
    let batch = match *input.shape() {
        [i] if i == n_in => 1,
        [b, i] if i == n_in => b,
        ref s => {
            return Err(Error::shape(format!(
                "dense: input {s:?} does not match {n_in} weight rows"
            )))
        }
    };
    Ok((batch, n_in, n_out))
}

/// Affine map `x . W + b` for a vector (`N`) or a batch of rows (`B x N`).
pub fn dense_forward<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, n_in, n_out) = rows(input, weights, bias)?;
    let mut out = Vec::with_capacity(batch * n_out);
    for _ in 0..batch {
        out.extend_from_slice(bias.data());
    }
    gemm(false, false, batch, n_in, n_out, T::one(), input.data(), weights.data(), T::one(), &mut out);
    let shape: Vec<usize> = if input.rank() == 1 { vec![n_out] } else { vec![batch, n_out] };
    Tensor::new(&shape, out)
}

pub fn dense_backward<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, grad_out: &Tensor<T>) -> Result<DenseGrads<T>> {
    let n_out = weights.shape().get(1).copied().unwrap_or(0);
    let (batch, n_in, n_out) = rows(input, weights, &Tensor::zeros(&[n_out]))?;
    if grad_out.len() != batch * n_out {
        return Err(Error::shape("dense backward: upstream size mismatch"));
    }
    let mut dw = vec![T::zero(); n_in * n_out];
    gemm(true, false, n_in, batch, n_out, T::one(), input.data(), grad_out.data(), T::zero(), &mut dw);
    let mut db = vec![T::zero(); n_out];
    for row in grad_out.data().chunks(n_out) {
        for (b, &g) in db.iter_mut().zip(row) {
            *b += g;
        }
    }
    let mut dx = vec![T::zero(); batch * n_in];
    gemm(false, true, batch, n_out, n_in, T::one(), grad_out.data(), weights.data(), T::zero(), &mut dx);
    Ok(DenseGrads {
        input: Tensor::new(input.shape(), dx)?,
        weights: Tensor::new(weights.shape(), dw)?,
        bias: Tensor::new(&[n_out], db)?,
    })
}

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Flat input offsets of each pooled maximum, in output order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices(pub Vec<usize>);

/// Non-overlapping 2x2 max pooling over `H x W x C` or `N x H x W x C`.
/// Ties resolve to the first window position in row-major order.
pub fn maxpool_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let (n, h, w, c) = match *input.shape() {
        [h, w, c] => (1, h, w, c),
        [n, h, w, c] => (n, h, w, c),
        ref s => return Err(Error::shape(format!("maxpool: bad input shape {s:?}"))),
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("maxpool: spatial size {h}x{w} must be even")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut idx = Vec::with_capacity(n * oh * ow * c);
    for s in 0..n {
        let base = s * h * w * c;
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = base + ((2 * oy) * w + 2 * ox) * c + ch;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                    out.push(x[best]);
                    idx.push(best);
                }
            }
        }
    }
    let mut shape = input.shape().to_vec();
    let r = shape.len();
    shape[r - 3] = oh;
    shape[r - 2] = ow;
    Ok((Tensor::new(&shape, out)?, PoolIndices(idx)))
}

/// Routes each upstream value to the input position that won its window.
pub fn maxpool_backward<T: Real>(
    input_shape: &[usize],
    indices: &PoolIndices,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if indices.0.len() != grad_out.len() {
        return Err(Error::shape("maxpool backward: upstream does not match recorded indices"));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in indices.0.iter().zip(grad_out.data()) {
        d[i] += g;
    }
    Ok(dx)
}

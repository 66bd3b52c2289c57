//! 3x3 "same" convolution (cross-correlation, stride 1, one pixel of zero
//! padding) via im2col and a matrix product.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor};

const K: usize = 3;

pub struct ConvGrads<T> {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

struct Dims {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
}

fn check_dims<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Dims> {
    let (n, h, w, cin) = match *input.shape() {
        [h, w, c] => (1, h, w, c),
        [n, h, w, c] => (n, h, w, c),
        ref s => return Err(Error::shape(format!("conv2d: input must be HxWxC or NxHxWxC, got {s:?}"))),
    };
    let ws = weights.shape();
    if ws.len() != 4 || ws[0] != K || ws[1] != K {
        return Err(Error::shape(format!("conv2d: weights must be 3x3xCinxCout, got {ws:?}")));
    }
    if ws[2] != cin {
        return Err(Error::shape(format!(
            "conv2d: input has {cin} channels but weights expect {}",
            ws[2]
        )));
    }
    let cout = ws[3];
    if bias.shape() != [cout] {
        return Err(Error::shape(format!(
            "conv2d: bias shape {:?} does not match {cout} filters",
            bias.shape()
        )));
    }
    Ok(Dims { n, h, w, cin, cout })
}

/// Unrolls every 3x3xC neighbourhood into a row of `cols` (`h*w` rows of
/// `9*c` values, ordered ky, kx, channel to match the weight layout).
fn im2col<T: Real>(x: &[T], h: usize, w: usize, c: usize, cols: &mut [T]) {
    let row_len = K * K * c;
    for y in 0..h {
        for xx in 0..w {
            let row = &mut cols[(y * w + xx) * row_len..(y * w + xx + 1) * row_len];
            for ky in 0..K {
                let sy = y as isize + ky as isize - 1;
                for kx in 0..K {
                    let sx = xx as isize + kx as isize - 1;
                    let dst = &mut row[(ky * K + kx) * c..(ky * K + kx + 1) * c];
                    if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                        dst.fill(T::zero());
                    } else {
                        let src = (sy as usize * w + sx as usize) * c;
                        dst.copy_from_slice(&x[src..src + c]);
                    }
                }
            }
        }
    }
}

/// Scatter-adds unrolled rows back onto the image; adjoint of [`im2col`].
fn col2im<T: Real>(cols: &[T], h: usize, w: usize, c: usize, dx: &mut [T]) {
    let row_len = K * K * c;
    for y in 0..h {
        for xx in 0..w {
            let row = &cols[(y * w + xx) * row_len..(y * w + xx + 1) * row_len];
            for ky in 0..K {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..K {
                    let sx = xx as isize + kx as isize - 1;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let dst = (sy as usize * w + sx as usize) * c;
                    let src = &row[(ky * K + kx) * c..(ky * K + kx + 1) * c];
                    for (d, &s) in dx[dst..dst + c].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Output has the input's spatial size and `Cout` channels. Accepts a single
/// image (`H x W x Cin`) or a batch (`N x H x W x Cin`).
pub fn conv2d_forward<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let d = check_dims(input, weights, bias)?;
    let hw = d.h * d.w;
    let in_len = hw * d.cin;
    let out_len = hw * d.cout;
    let mut out = vec![T::zero(); d.n * out_len];
    if out_len > 0 {
        out.par_chunks_mut(out_len)
            .zip(input.data().par_chunks(in_len.max(1)))
            .for_each_init(
                || vec![T::zero(); hw * K * K * d.cin],
                |cols, (o, x)| {
                    im2col(x, d.h, d.w, d.cin, cols);
                    for px in o.chunks_mut(d.cout) {
                        px.copy_from_slice(bias.data());
                    }
                    gemm(false, false, hw, K * K * d.cin, d.cout, T::one(), cols, weights.data(), T::one(), o);
                },
            );
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = d.cout;
    Tensor::new(&shape, out)
}

/// Reverse-mode rule: weight gradient `cols^T . dout`, bias gradient the
/// per-channel sum, input gradient the adjoint unrolling of `dout . W^T`.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let cout = weights.shape().get(3).copied().unwrap_or(0);
    let bias_like = Tensor::zeros(&[cout]);
    let d = check_dims(input, weights, &bias_like)?;
    let mut out_shape = input.shape().to_vec();
    *out_shape.last_mut().unwrap() = d.cout;
    if grad_out.shape() != out_shape.as_slice() {
        return Err(Error::shape(format!(
            "conv2d backward: upstream {:?}, expected {:?}",
            grad_out.shape(),
            out_shape
        )));
    }
    let hw = d.h * d.w;
    let row_len = K * K * d.cin;
    let in_len = hw * d.cin;
    let out_len = hw * d.cout;

    let mut dw = vec![T::zero(); weights.len()];
    let mut db = vec![T::zero(); d.cout];
    let mut dx = if need_input_grad {
        Some(vec![T::zero(); input.len()])
    } else {
        None
    };
    let mut cols = vec![T::zero(); hw * row_len];
    let mut dcols = vec![T::zero(); if need_input_grad { hw * row_len } else { 0 }];

    // Samples are accumulated in order so the result does not depend on
    // thread scheduling.
    for s in 0..d.n {
        let x = &input.data()[s * in_len..(s + 1) * in_len];
        let go = &grad_out.data()[s * out_len..(s + 1) * out_len];
        im2col(x, d.h, d.w, d.cin, &mut cols);
        gemm(true, false, row_len, hw, d.cout, T::one(), &cols, go, T::one(), &mut dw);
        for px in go.chunks(d.cout) {
            for (b, &g) in db.iter_mut().zip(px) {
                *b += g;
            }
        }
        if let Some(dx) = dx.as_mut() {
            gemm(false, true, hw, d.cout, row_len, T::one(), go, weights.data(), T::zero(), &mut dcols);
            col2im(&dcols, d.h, d.w, d.cin, &mut dx[s * in_len..(s + 1) * in_len]);
        }
    }

    Ok(ConvGrads {
        input: dx.map(|v| Tensor::new(input.shape(), v)).transpose()?,
        weights: Tensor::new(weights.shape(), dw)?,
        bias: Tensor::new(&[d.cout], db)?,
    })
}
